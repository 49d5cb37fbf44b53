//! Command implementations behind the `hetgp` binary.

pub mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use thiserror::Error;

use hetgp_core::metrics::{EvalOptions, VarianceKind};
use hetgp_core::method::{MethodConfig, MethodId};
use hetgp_core::model_io::{load_model, save_model};
use hetgp_core::optim::BatchSize;
use hetgp_core::pipeline::{evaluate_grids, fit_grids, losses_csv, predict_grid, run_sweep, sweep_csv, SweepConfig};
use hetgp_core::terrain::{build_scene, hillshade, read_asc, write_asc, DemGrid, NoiseMode, SynthParams};
use hetgp_core::two_stage::NoiseGpConfig;
use hetgp_core::GpError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] GpError),
}

impl CliError {
    /// 2 usage/config, 3 data/parse, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                GpError::InvalidConfig(_) => 2,
                e if e.is_numerical() => 4,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hetgp", version, about = "Heteroscedastic GP terrain mapping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: truth, training, uncertainty, and prior grids.
    Synth(SynthArgs),
    /// Fit one of the five methods to a training grid.
    Fit(FitArgs),
    /// Predict mean and variance grids from a model file.
    Predict(PredictArgs),
    /// Score prediction grids against a truth grid.
    Eval(EvalArgs),
    /// Inducing-point count sweep over dataset sizes.
    Sweep(SweepArgs),
    /// Render a grid as an 8-bit grayscale PGM image.
    Heatmap(HeatmapArgs),
    /// Lambertian hillshade of a DEM.
    Hillshade(HillshadeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseModeArg {
    Shadow,
    Split,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub cellsize: f64,
    #[arg(long, default_value_t = 6)]
    pub craters: usize,
    /// Standard deviation of the fractal base, meters.
    #[arg(long, default_value_t = 2.0)]
    pub amplitude: f64,
    /// Spectral exponent of the fractal base.
    #[arg(long, default_value_t = 3.5)]
    pub roughness: f64,
    #[arg(long, default_value_t = 3.0)]
    pub radius_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub radius_max: f64,
    #[arg(long, default_value_t = 135.0)]
    pub sun_azimuth: f64,
    #[arg(long, default_value_t = 20.0)]
    pub sun_elevation: f64,
    /// Variance in fully shadowed cells, m².
    #[arg(long, default_value_t = 0.25)]
    pub var_dark: f64,
    /// Variance in fully lit cells, m².
    #[arg(long, default_value_t = 0.01)]
    pub var_lit: f64,
    #[arg(long, value_enum, default_value_t = NoiseModeArg::Shadow)]
    pub noise_mode: NoiseModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub method: MethodId,
    /// Training DEM (.asc).
    #[arg(long)]
    pub train: PathBuf,
    /// Per-cell noise variance grid, required by ours-exact and ours-variational.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Low-resolution prior DEM used as the mean function.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub inducing: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Model file to write.
    #[arg(long, default_value = "model.hgpm")]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to `<out>.losses.csv`.
    #[arg(long)]
    pub losses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Grid whose geometry (not values) defines the prediction cells.
    #[arg(long, conflicts_with_all = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize"])]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub ncols: Option<usize>,
    #[arg(long)]
    pub nrows: Option<usize>,
    #[arg(long)]
    pub xllcorner: Option<f64>,
    #[arg(long)]
    pub yllcorner: Option<f64>,
    #[arg(long)]
    pub cellsize: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub mean: PathBuf,
    /// Predictive (noise-inclusive) variance grid.
    #[arg(long)]
    pub var: PathBuf,
    #[arg(long)]
    pub latent_var: Option<PathBuf>,
    #[arg(long)]
    pub truth: PathBuf,
    /// Use the latent variance for NLPD and AUSE.
    #[arg(long, requires = "latent_var")]
    pub latent: bool,
    /// Divide both sparsification curves by the full-set MAE.
    #[arg(long)]
    pub ause_normalized: bool,
    #[arg(long, default_value = "report.txt")]
    pub out: PathBuf,
    #[arg(long, default_value = "sparsification.csv")]
    pub curves: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub inducing: Vec<usize>,
    #[arg(long, default_value = "ours-variational")]
    pub method: MethodId,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HillshadeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 135.0)]
    pub azimuth: f64,
    #[arg(long, default_value_t = 20.0)]
    pub elevation: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Core(GpError::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Core(GpError::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Heatmap(a) => cmd_heatmap(&a),
        Command::Hillshade(a) => cmd_hillshade(&a),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let params = SynthParams {
        size: a.size,
        cellsize: a.cellsize,
        roughness: a.roughness,
        amplitude: a.amplitude,
        craters: a.craters,
        radius_min: a.radius_min,
        radius_max: a.radius_max,
        sun_azimuth_deg: a.sun_azimuth,
        sun_elevation_deg: a.sun_elevation,
        var_dark: a.var_dark,
        var_lit: a.var_lit,
        seed: a.seed,
        ..SynthParams::default()
    };
    let mode = match a.noise_mode {
        NoiseModeArg::Shadow => NoiseMode::Shadow,
        NoiseModeArg::Split => NoiseMode::Split,
    };
    let scene = build_scene(&params, mode)?;
    ensure_dir(&a.out_dir)?;
    write_asc(&scene.truth, a.out_dir.join("truth.asc"))?;
    write_asc(&scene.clean_train, a.out_dir.join("dem.asc"))?;
    write_asc(&scene.train, a.out_dir.join("train.asc"))?;
    write_asc(&scene.uncertainty, a.out_dir.join("uncertainty.asc"))?;
    write_asc(&scene.prior, a.out_dir.join("prior.asc"))?;
    info!("wrote scene ({}x{} truth) to {}", a.size, a.size, a.out_dir.display());
    Ok(())
}

/// Method defaults with command-line overrides applied.
pub fn method_config(a: &FitArgs) -> CliResult<MethodConfig> {
    let mut m = MethodConfig::defaults(a.method, a.seed);
    if let Some(e) = a.epochs {
        m.adam.max_epochs = e;
    }
    if let Some(lr) = a.lr {
        m.adam.learning_rate = lr;
    }
    if let Some(k) = a.inducing {
        m.num_inducing = k;
    }
    if let Some(b) = a.batch_size {
        m.adam.batch_size = BatchSize::Fixed(b);
    }
    m.validate()?;
    Ok(m)
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let method = method_config(a)?;
    if method.id.is_heteroscedastic() && a.noise.is_none() {
        return Err(CliError::Core(GpError::InvalidConfig(format!(
            "method {} needs an uncertainty grid (--noise)",
            method.id
        ))));
    }
    let batch = match method.adam.batch_size {
        BatchSize::Full => "full".to_string(),
        BatchSize::Fixed(b) => b.to_string(),
    };
    let inducing = if method.id.is_variational() {
        method.num_inducing.to_string()
    } else {
        "-".to_string()
    };
    eprintln!(
        "method={} kernel={} lr={} epochs={} batch={} inducing={} seed={}",
        method.id,
        method.kernel.name(),
        method.adam.learning_rate,
        method.adam.max_epochs,
        batch,
        inducing,
        method.seed
    );
    let train = read_asc(&a.train)?;
    let noise = a.noise.as_ref().map(read_asc).transpose()?;
    let prior = a.prior.as_ref().map(read_asc).transpose()?;
    let out = fit_grids(&method, &train, noise.as_ref(), prior.as_ref(), &NoiseGpConfig::default())?;
    save_model(&out.model, &a.out)?;
    let losses = a.losses.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".losses.csv");
        PathBuf::from(p)
    });
    write_file(&losses, losses_csv(&out.losses))?;
    info!("wrote {} and {}", a.out.display(), losses.display());
    Ok(())
}

/// Target geometry from `--target` or from the five explicit flags.
pub fn target_geometry(a: &PredictArgs) -> CliResult<DemGrid> {
    if let Some(t) = &a.target {
        let g = read_asc(t)?;
        return Ok(g);
    }
    match (a.ncols, a.nrows, a.xllcorner, a.yllcorner, a.cellsize) {
        (Some(nc), Some(nr), Some(x), Some(y), Some(cs)) => {
            DemGrid::new(nc, nr, x, y, cs, hetgp_core::terrain::dem::DEFAULT_NODATA, vec![0.0; nc * nr])
                .map_err(|e| CliError::Usage(format!("inconsistent geometry flags: {e}")))
        }
        (None, None, None, None, None) => Err(CliError::Usage(
            "give --target or all of --ncols, --nrows, --xllcorner, --yllcorner, --cellsize".into(),
        )),
        _ => Err(CliError::Usage(
            "geometry flags must be given together: --ncols, --nrows, --xllcorner, --yllcorner, --cellsize".into(),
        )),
    }
}

pub fn cmd_predict(a: &PredictArgs) -> CliResult<()> {
    let geometry = target_geometry(a)?;
    let model = load_model(&a.model)?;
    let p = predict_grid(&model, &geometry)?;
    ensure_dir(&a.out_dir)?;
    write_asc(&p.mean, a.out_dir.join("mean.asc"))?;
    write_asc(&p.var, a.out_dir.join("var.asc"))?;
    write_asc(&p.latent_var, a.out_dir.join("latent_var.asc"))?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let mean = read_asc(&a.mean)?;
    let var = read_asc(&a.var)?;
    let latent = a.latent_var.as_ref().map(read_asc).transpose()?;
    let truth = read_asc(&a.truth)?;
    let options = EvalOptions {
        variance: if a.latent {
            VarianceKind::Latent
        } else {
            VarianceKind::Predictive
        },
        normalize_ause: a.ause_normalized,
    };
    let report = evaluate_grids(&mean, &var, latent.as_ref(), &truth, options)?;
    write_file(&a.out, report.to_text())?;
    write_file(&a.curves, report.curves.to_csv())?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    let cfg = SweepConfig {
        sizes: a.sizes.clone(),
        inducing: a.inducing.clone(),
        method: a.method,
        seed: a.seed,
        epochs: a.epochs,
    };
    let rows = run_sweep(&cfg, |r| {
        eprintln!("n={} m={} rmse={:.6} wall={:.3}s", r.n, r.m_inducing, r.rmse, r.wall_seconds)
    })?;
    write_file(&a.out, sweep_csv(&rows))
}

pub fn cmd_heatmap(a: &HeatmapArgs) -> CliResult<()> {
    let g = read_asc(&a.input)?;
    write_file(&a.out, pgm::encode(&g))
}

pub fn cmd_hillshade(a: &HillshadeArgs) -> CliResult<()> {
    let g = read_asc(&a.input)?;
    write_asc(&hillshade(&g, a.azimuth, a.elevation)?, &a.out)?;
    Ok(())
}
