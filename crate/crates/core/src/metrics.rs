//! Accuracy and calibration metrics: RMSE, NLPD, sparsification curves, AUSE.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{GpError, Result};

/// Number of removal fractions α_j = j / 50, j = 0..49.
pub const AUSE_STEPS: usize = 50;

fn check_lengths(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(GpError::ShapeMismatch {
            expected: format!("{a} {what}"),
            actual: format!("{b}"),
        });
    }
    if a == 0 {
        return Err(GpError::EmptyDataset(format!("no {what} to evaluate")));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths("predictions", pred.len(), truth.len())?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Mean Gaussian negative log predictive density.
pub fn nlpd(mean: &[f64], var: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths("predictions", mean.len(), truth.len())?;
    check_lengths("variances", mean.len(), var.len())?;
    if let Some(i) = var.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(GpError::InvalidInput(format!(
            "predictive variance at index {i} must be positive (got {})",
            var[i]
        )));
    }
    let total: f64 = mean
        .iter()
        .zip(var)
        .zip(truth)
        .map(|((m, v), t)| 0.5 * (2.0 * PI * v).ln() + (t - m) * (t - m) / (2.0 * v))
        .sum();
    Ok(total / mean.len() as f64)
}

/// α_j = j / 50 for j = 0..49.
pub fn ause_fractions() -> Vec<f64> {
    (0..AUSE_STEPS).map(|j| j as f64 / AUSE_STEPS as f64).collect()
}

/// Indices sorted by descending key, ties by ascending index.
fn removal_order(key: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&a, &b| match key[b].total_cmp(&key[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    idx
}

/// ⌊α·q⌋, snapping products within rounding of an integer (0.58 · 50 is
/// 28.999… in binary).
fn removal_count(alpha: f64, q: usize) -> usize {
    let t = alpha * q as f64;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        t.floor() as usize
    }
}

/// MAE of the points left after removing the ⌊α·q⌋ highest-ranked ones under
/// `key`, for each α. The remaining errors are summed in index order.
pub fn sparsification_curve(abs_err: &[f64], key: &[f64], fractions: &[f64]) -> Result<Vec<f64>> {
    check_lengths("errors", abs_err.len(), key.len())?;
    let q = abs_err.len();
    let order = removal_order(key);
    let mut removed = vec![false; q];
    let mut n_removed = 0;
    let mut curve = Vec::with_capacity(fractions.len());
    for &alpha in fractions {
        if !(0.0..1.0).contains(&alpha) {
            return Err(GpError::InvalidInput(format!("removal fraction {alpha} outside [0, 1)")));
        }
        let k = removal_count(alpha, q);
        // Fractions may come in any order; rebuild the mask when they shrink.
        if k < n_removed {
            removed.fill(false);
            n_removed = 0;
        }
        while n_removed < k {
            removed[order[n_removed]] = true;
            n_removed += 1;
        }
        let (sum, count) = abs_err
            .iter()
            .zip(&removed)
            .filter(|(_, r)| !**r)
            .fold((0.0, 0usize), |(s, c), (e, _)| (s + e, c + 1));
        curve.push(sum / count as f64);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sparsification {
    pub fractions: Vec<f64>,
    pub model: Vec<f64>,
    pub oracle: Vec<f64>,
}

impl Sparsification {
    /// Trapezoid-rule area between the model and oracle curves.
    pub fn ause(&self) -> f64 {
        let d: Vec<f64> = self.model.iter().zip(&self.oracle).map(|(m, o)| m - o).collect();
        self.fractions
            .windows(2)
            .zip(d.windows(2))
            .map(|(a, y)| 0.5 * (y[0] + y[1]) * (a[1] - a[0]))
            .sum()
    }

    /// Both curves divided by the full-set MAE (the α = 0 value).
    pub fn normalized(&self) -> Sparsification {
        let base = self.oracle.first().copied().unwrap_or(0.0);
        let f = |v: &Vec<f64>| v.iter().map(|x| if base > 0.0 { x / base } else { 0.0 }).collect();
        Sparsification {
            fractions: self.fractions.clone(),
            model: f(&self.model),
            oracle: f(&self.oracle),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fraction,model,oracle\n");
        for i in 0..self.fractions.len() {
            writeln!(s, "{},{},{}", self.fractions[i], self.model[i], self.oracle[i]).unwrap();
        }
        s
    }
}

/// Model curve ranks by predicted standard deviation, oracle curve by the
/// true absolute error.
pub fn sparsification(abs_err: &[f64], std: &[f64]) -> Result<Sparsification> {
    let fractions = ause_fractions();
    Ok(Sparsification {
        model: sparsification_curve(abs_err, std, &fractions)?,
        oracle: sparsification_curve(abs_err, abs_err, &fractions)?,
        fractions,
    })
}

pub fn ause(abs_err: &[f64], std: &[f64]) -> Result<f64> {
    if abs_err.len() < 2 {
        return Err(GpError::InvalidInput(format!("AUSE needs at least 2 points (got {})", abs_err.len())));
    }
    Ok(sparsification(abs_err, std)?.ause())
}

/// Which variance feeds NLPD and the sparsification ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceKind {
    #[default]
    Predictive,
    Latent,
}

impl VarianceKind {
    pub fn name(self) -> &'static str {
        match self {
            VarianceKind::Predictive => "predictive",
            VarianceKind::Latent => "latent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub variance: VarianceKind,
    pub normalize_ause: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub nlpd: f64,
    pub ause: f64,
    pub n_test: usize,
    pub options: EvalOptions,
    /// NLPD under the other variance kind, when it is positive everywhere.
    pub nlpd_alt: Option<f64>,
    pub curves: Sparsification,
}

/// Score predictions against truth. `pred_var` and `latent_var` are both in m².
pub fn evaluate(
    mean: &[f64],
    predictive_var: &[f64],
    latent_var: &[f64],
    truth: &[f64],
    options: EvalOptions,
) -> Result<EvalReport> {
    check_lengths("latent variances", mean.len(), latent_var.len())?;
    let (var, alt) = match options.variance {
        VarianceKind::Predictive => (predictive_var, latent_var),
        VarianceKind::Latent => (latent_var, predictive_var),
    };
    let nlpd_v = nlpd(mean, var, truth)?;
    let abs_err: Vec<f64> = mean.iter().zip(truth).map(|(m, t)| (m - t).abs()).collect();
    let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let mut curves = sparsification(&abs_err, &std)?;
    if options.normalize_ause {
        curves = curves.normalized();
    }
    Ok(EvalReport {
        rmse: rmse(mean, truth)?,
        nlpd: nlpd_v,
        ause: curves.ause(),
        n_test: mean.len(),
        options,
        nlpd_alt: nlpd(mean, alt, truth).ok(),
        curves,
    })
}

impl EvalReport {
    /// `key=value` lines for rmse, nlpd, ause, n_test; extra detail goes on
    /// `#` comment lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# variance={}", self.options.variance.name()).unwrap();
        writeln!(s, "# ause_normalized={}", self.options.normalize_ause).unwrap();
        if let Some(v) = self.nlpd_alt {
            let other = match self.options.variance {
                VarianceKind::Predictive => VarianceKind::Latent,
                VarianceKind::Latent => VarianceKind::Predictive,
            };
            writeln!(s, "# nlpd_{}={}", other.name(), v).unwrap();
        }
        writeln!(s, "rmse={}", self.rmse).unwrap();
        writeln!(s, "nlpd={}", self.nlpd).unwrap();
        writeln!(s, "ause={}", self.ause).unwrap();
        writeln!(s, "n_test={}", self.n_test).unwrap();
        s
    }

    /// Parse the key lines back; comment lines are skipped.
    pub fn parse_text(text: &str) -> Result<(f64, f64, f64, usize)> {
        let mut vals = [None; 3];
        let mut n = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| GpError::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let f = || v.parse::<f64>().map_err(|_| bad("bad number"));
            match k {
                "rmse" => vals[0] = Some(f()?),
                "nlpd" => vals[1] = Some(f()?),
                "ause" => vals[2] = Some(f()?),
                "n_test" => n = Some(v.parse::<usize>().map_err(|_| bad("bad count"))?),
                _ => return Err(bad(&format!("unknown key `{k}`"))),
            }
        }
        match (vals, n) {
            ([Some(a), Some(b), Some(c)], Some(n)) => Ok((a, b, c, n)),
            _ => Err(GpError::Parse {
                line: 0,
                message: "missing one of rmse, nlpd, ause, n_test".into(),
            }),
        }
    }
}
