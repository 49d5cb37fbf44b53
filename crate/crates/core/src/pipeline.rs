//! End-to-end workflows over grids: fit any method, predict onto a raster,
//! score against a truth raster, and the inducing-point sweep.

use std::fmt::Write as _;
use std::time::Instant;

use log::info;

use crate::error::{GpError, Result};
use crate::exact::fit_exact;
use crate::metrics::{evaluate, EvalOptions, EvalReport};
use crate::method::{MethodConfig, MethodId};
use crate::model::{FittedModel, ModelBody, Prediction};
use crate::rng::{stream, STREAM_INIT};
use crate::svgp::fit_svgp;
use crate::terrain::{build_scene, grid_to_dataset, Dataset, DemGrid, NoiseMode, Scene, SynthParams};
use crate::two_stage::{fit_noise_gp, fit_terrain, terrain_mean, NoiseGpConfig, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// `noise` for stage 1 of the two-stage methods, `terrain` otherwise.
    pub stage: &'static str,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: FittedModel,
    pub losses: Vec<LossRecord>,
}

fn records(stage: &'static str, losses: &[f64]) -> Vec<LossRecord> {
    losses.iter().enumerate().map(|(epoch, &loss)| LossRecord { stage, epoch, loss }).collect()
}

pub fn losses_csv(losses: &[LossRecord]) -> String {
    let mut s = String::from("stage,epoch,loss\n");
    for r in losses {
        writeln!(s, "{},{},{}", r.stage, r.epoch, r.loss).unwrap();
    }
    s
}

/// Stage 1 of the two-stage methods.
pub fn fit_stage1(data: &Dataset, noise_cfg: &NoiseGpConfig, seed: u64) -> Result<(NoiseModel, Vec<f64>)> {
    let r = data
        .r
        .as_ref()
        .ok_or_else(|| GpError::InvalidConfig("two-stage methods need an uncertainty grid".into()))?;
    let t = fit_noise_gp(&data.x, r, noise_cfg, seed)?;
    Ok((t.model, t.losses))
}

/// Stage 2 only, against an already-fitted noise model.
pub fn fit_with_noise_model(
    method: &MethodConfig,
    data: &Dataset,
    noise: &NoiseModel,
    prior: Option<&DemGrid>,
) -> Result<FitOutcome> {
    let t = fit_terrain(data, noise, method, prior)?;
    Ok(FitOutcome {
        losses: records("terrain", &t.losses),
        model: FittedModel {
            method: method.id,
            stats: data.stats,
            body: ModelBody::TwoStage(t.model),
        },
    })
}

/// Fit `method` to a normalized dataset. The prior grid, when given, becomes
/// the mean function of the terrain GP for every method.
pub fn fit_dataset(
    method: &MethodConfig,
    data: &Dataset,
    prior: Option<&DemGrid>,
    noise_cfg: &NoiseGpConfig,
) -> Result<FitOutcome> {
    method.validate()?;
    info!("fitting {} on {} points", method.id, data.len());
    if method.id.is_heteroscedastic() {
        let (noise, stage1) = fit_stage1(data, noise_cfg, method.seed)?;
        let mut out = fit_with_noise_model(method, data, &noise, prior)?;
        let mut losses: Vec<LossRecord> = records("noise", &stage1);
        losses.append(&mut out.losses);
        out.losses = losses;
        return Ok(out);
    }
    let mean = terrain_mean(prior, data.stats)?;
    let (body, losses) = if method.id.is_variational() {
        let t = fit_svgp(data, method, mean, None)?;
        (ModelBody::Sparse(t.model), t.losses)
    } else {
        let t = fit_exact(data, method, mean, None)?;
        (ModelBody::Exact(t.model), t.losses)
    };
    Ok(FitOutcome {
        model: FittedModel {
            method: method.id,
            stats: data.stats,
            body,
        },
        losses: records("terrain", &losses),
    })
}

/// Build the dataset from rasters and fit. The uncertainty grid is required
/// by the two-stage methods and ignored by the others.
pub fn fit_grids(
    method: &MethodConfig,
    train: &DemGrid,
    uncertainty: Option<&DemGrid>,
    prior: Option<&DemGrid>,
    noise_cfg: &NoiseGpConfig,
) -> Result<FitOutcome> {
    let var = if method.id.is_heteroscedastic() {
        Some(uncertainty.ok_or_else(|| {
            GpError::InvalidConfig(format!("method {} needs an uncertainty grid", method.id))
        })?)
    } else {
        None
    };
    let data = grid_to_dataset(train, var)?;
    fit_dataset(method, &data, prior, noise_cfg)
}

#[derive(Debug, Clone)]
pub struct GridPrediction {
    pub mean: DemGrid,
    pub var: DemGrid,
    pub latent_var: DemGrid,
}

/// Predict at every cell center of `geometry`.
pub fn predict_grid(model: &FittedModel, geometry: &DemGrid) -> Result<GridPrediction> {
    let p = model.predict(&geometry.cell_centers())?;
    Ok(GridPrediction {
        mean: geometry.with_values(p.mean)?,
        var: geometry.with_values(p.predictive_var)?,
        latent_var: geometry.with_values(p.latent_var)?,
    })
}

/// Score prediction grids against a truth grid, skipping nodata cells in any
/// input. Without a latent grid the predictive variance stands in for it.
pub fn evaluate_grids(
    mean: &DemGrid,
    var: &DemGrid,
    latent: Option<&DemGrid>,
    truth: &DemGrid,
    options: EvalOptions,
) -> Result<EvalReport> {
    truth.ensure_same_geometry(mean, "mean grid")?;
    truth.ensure_same_geometry(var, "variance grid")?;
    if let Some(l) = latent {
        truth.ensure_same_geometry(l, "latent variance grid")?;
    }
    let latent = latent.unwrap_or(var);
    let mut p = Prediction {
        mean: Vec::new(),
        latent_var: Vec::new(),
        predictive_var: Vec::new(),
    };
    let mut t = Vec::new();
    for i in 0..truth.len() {
        let cells = [truth.values[i], mean.values[i], var.values[i], latent.values[i]];
        if truth.is_nodata(cells[0]) || mean.is_nodata(cells[1]) || var.is_nodata(cells[2]) || latent.is_nodata(cells[3]) {
            continue;
        }
        t.push(cells[0]);
        p.mean.push(cells[1]);
        p.predictive_var.push(cells[2]);
        p.latent_var.push(cells[3]);
    }
    evaluate_prediction(&p, &t, options)
}

pub fn evaluate_prediction(p: &Prediction, truth: &[f64], options: EvalOptions) -> Result<EvalReport> {
    evaluate(&p.mean, &p.predictive_var, &p.latent_var, truth, options)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub inducing: Vec<usize>,
    pub method: MethodId,
    pub seed: u64,
    /// Overrides the method's default epoch count.
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub m_inducing: usize,
    pub rmse: f64,
    pub wall_seconds: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("n,m_inducing,rmse,wall_seconds\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.n, r.m_inducing, r.rmse, r.wall_seconds).unwrap();
    }
    s
}

/// Standard synthetic scene for a training set of `n` points: the truth grid
/// is `2·⌈√n⌉` cells wide so its factor-2 training grid holds at least `n` cells.
pub fn sweep_scene(n: usize, seed: u64) -> Result<Scene> {
    let side = (n as f64).sqrt().ceil() as usize;
    build_scene(
        &SynthParams {
            size: 2 * side.max(2),
            seed,
            ..SynthParams::default()
        },
        NoiseMode::Shadow,
    )
}

/// `n` training points drawn without replacement from the scene's training
/// grid, in ascending cell order.
pub fn sweep_dataset(scene: &Scene, n: usize, seed: u64) -> Result<Dataset> {
    let full = grid_to_dataset(&scene.train, Some(&scene.uncertainty))?;
    if n > full.len() {
        return Err(GpError::InvalidConfig(format!("size {n} exceeds the {} training cells", full.len())));
    }
    let mut idx = rand::seq::index::sample(&mut stream(seed, STREAM_INIT), full.len(), n).into_vec();
    idx.sort_unstable();
    Ok(full.subset(&idx))
}

/// Cross product of sizes and inducing counts. Rows come out ordered by
/// (n, m). The wall time covers the terrain fit only; for the two-stage
/// methods the noise model is fitted once per size beforehand.
pub fn run_sweep(cfg: &SweepConfig, mut progress: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    if !cfg.method.is_variational() {
        return Err(GpError::InvalidConfig(format!(
            "sweep needs a variational method (got {})",
            cfg.method
        )));
    }
    let mut sizes = cfg.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut inducing = cfg.inducing.clone();
    inducing.sort_unstable();
    inducing.dedup();
    let mut rows = Vec::new();
    for &n in &sizes {
        if let Some(&m) = inducing.iter().find(|&&m| m == 0 || m > n) {
            return Err(GpError::InvalidConfig(format!("inducing count {m} must be in 1..={n}")));
        }
        let scene = sweep_scene(n, cfg.seed)?;
        let data = sweep_dataset(&scene, n, cfg.seed)?;
        let noise = if cfg.method.is_heteroscedastic() {
            Some(fit_stage1(&data, &NoiseGpConfig::default(), cfg.seed)?.0)
        } else {
            None
        };
        let queries = scene.truth.cell_centers();
        for &m in &inducing {
            let mut method = MethodConfig::defaults(cfg.method, cfg.seed);
            method.num_inducing = m;
            if let Some(e) = cfg.epochs {
                method.adam.max_epochs = e;
            }
            let start = Instant::now();
            let fit = match &noise {
                Some(nm) => fit_with_noise_model(&method, &data, nm, None)?,
                None => fit_dataset(&method, &data, None, &NoiseGpConfig::default())?,
            };
            let wall_seconds = start.elapsed().as_secs_f64();
            let p = fit.model.predict(&queries)?;
            let row = SweepRow {
                n,
                m_inducing: m,
                rmse: crate::metrics::rmse(&p.mean, &scene.truth.values)?,
                wall_seconds,
            };
            info!("sweep n={n} m={m}: rmse {:.4} in {:.2}s", row.rmse, row.wall_seconds);
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}
