//! The five GP methods and their default training parameters.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{GpError, Result};
use crate::kernels::{KernelConfig, KernelFamily, MaternNu};
use crate::optim::{AdamConfig, BatchSize};

/// Initial lengthscale and outputscale (softplus(0), the usual GP-library default).
pub const INIT_LENGTHSCALE: f64 = LN_2;
pub const INIT_OUTPUTSCALE: f64 = LN_2;
pub const INIT_ALPHA: f64 = 1.0;
/// Initial homoscedastic noise variance, normalized units.
pub const INIT_NOISE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodId {
    Tomita,
    Hayner,
    Torroba,
    OursExact,
    OursVariational,
}

impl MethodId {
    pub const ALL: [MethodId; 5] = [
        MethodId::Tomita,
        MethodId::Hayner,
        MethodId::Torroba,
        MethodId::OursExact,
        MethodId::OursVariational,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Tomita => "tomita",
            MethodId::Hayner => "hayner",
            MethodId::Torroba => "torroba",
            MethodId::OursExact => "ours-exact",
            MethodId::OursVariational => "ours-variational",
        }
    }

    /// Two-stage methods that need an uncertainty map.
    pub fn is_heteroscedastic(self) -> bool {
        matches!(self, MethodId::OursExact | MethodId::OursVariational)
    }

    pub fn is_variational(self) -> bool {
        matches!(self, MethodId::Torroba | MethodId::OursVariational)
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            MethodId::Tomita => 0,
            MethodId::Hayner => 1,
            MethodId::Torroba => 2,
            MethodId::OursExact => 3,
            MethodId::OursVariational => 4,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Option<Self> {
        MethodId::ALL.into_iter().find(|m| m.tag() == t)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = GpError;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                GpError::InvalidConfig(format!(
                    "unknown method `{s}` (expected one of tomita, hayner, torroba, ours-exact, ours-variational)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodConfig {
    pub id: MethodId,
    pub kernel: KernelFamily,
    pub adam: AdamConfig,
    /// Inducing point count; only read by the variational methods.
    pub num_inducing: usize,
    pub seed: u64,
}

impl MethodConfig {
    /// Training parameters per method:
    ///
    /// | method           | kernel  | lr   | epochs | batch | inducing |
    /// |------------------|---------|------|--------|-------|----------|
    /// | tomita           | AbsExp  | 0.1  | 40     | full  | -        |
    /// | hayner           | RBF     | 0.1  | 50     | full  | -        |
    /// | torroba          | Matérn  | 0.1  | 75     | 256   | 1024     |
    /// | ours-exact       | RQ      | 0.1  | 30     | full  | -        |
    /// | ours-variational | RQ      | 0.05 | 40     | 256   | 1024     |
    pub fn defaults(id: MethodId, seed: u64) -> Self {
        let (kernel, lr, epochs, batch, inducing) = match id {
            MethodId::Tomita => (KernelFamily::AbsoluteExponential, 0.1, 40, BatchSize::Full, 0),
            MethodId::Hayner => (KernelFamily::Rbf, 0.1, 50, BatchSize::Full, 0),
            MethodId::Torroba => (KernelFamily::Matern(MaternNu::FiveHalves), 0.1, 75, BatchSize::Fixed(256), 1024),
            MethodId::OursExact => (KernelFamily::RationalQuadratic, 0.1, 30, BatchSize::Full, 0),
            MethodId::OursVariational => (KernelFamily::RationalQuadratic, 0.05, 40, BatchSize::Fixed(256), 1024),
        };
        MethodConfig {
            id,
            kernel,
            adam: AdamConfig::new(lr, epochs, batch),
            num_inducing: inducing,
            seed,
        }
    }

    pub fn initial_kernel(&self) -> KernelConfig {
        KernelConfig::with_alpha(self.kernel, INIT_LENGTHSCALE, INIT_OUTPUTSCALE, INIT_ALPHA)
            .expect("default hyperparameters are positive")
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.id.is_variational() && self.num_inducing == 0 {
            return Err(GpError::InvalidConfig("variational methods need at least one inducing point".into()));
        }
        Ok(())
    }
}
