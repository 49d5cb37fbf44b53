//! Acceptance suite. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line; exits non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,7` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hetgp_core::exact::{
    lml_gradients, log_marginal_likelihood, predict_exact, train_exact, ExactFitOptions, ExactGpModel, Noise,
};
use hetgp_core::kernels::{gram_matrix, kernel_gradients, KernelConfig, KernelFamily, MaternNu, Point2};
use hetgp_core::mean::MeanFunction;
use hetgp_core::method::{MethodConfig, MethodId};
use hetgp_core::metrics::{ause_fractions, evaluate, sparsification, sparsification_curve, EvalOptions};
use hetgp_core::model::{FittedModel, ModelBody};
use hetgp_core::model_io::{decode_model, encode_model};
use hetgp_core::optim::{AdamConfig, BatchSize};
use hetgp_core::pipeline::fit_grids;
use hetgp_core::svgp::{elbo_minibatch, elbo_minibatch_whitened, train_svgp, SvgpFitOptions, SvgpLikelihood, SvgpState};
use hetgp_core::terrain::{
    build_scene, grid_to_dataset, inject_noise, read_asc, split_noise_params, write_asc, DemGrid, NoiseMode,
    NormStats, SynthParams,
};
use hetgp_core::two_stage::{fit_noise_gp, terrain_mean, NoiseGpConfig};

const FAMILIES: [KernelFamily; 6] = [
    KernelFamily::Rbf,
    KernelFamily::RationalQuadratic,
    KernelFamily::AbsoluteExponential,
    KernelFamily::Matern(MaternNu::Half),
    KernelFamily::Matern(MaternNu::ThreeHalves),
    KernelFamily::Matern(MaternNu::FiveHalves),
];

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(usize, &str, Check); 9] = [
        (1, "exact posterior oracle", ac1_exact_oracle),
        (2, "gradient suite", ac2_gradients),
        (3, "ELBO bound", ac3_elbo_bound),
        (4, "two-stage homoscedastic collapse", ac4_collapse),
        (5, "split-noise ordering", ac5_ordering),
        (6, "noise-field recovery", ac6_noise_recovery),
        (7, "metrics oracle", ac7_metrics_oracle),
        (8, "inducing-point trade-off sweep", ac8_sweep),
        (9, "determinism and I/O", ac9_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    // quiet the default panic message; failures are reported on the result line
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("AC{id} PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("AC{id} FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<Point2> {
    (0..n)
        .map(|_| [rng.gen_range(-half_width..half_width), rng.gen_range(-half_width..half_width)])
        .collect()
}

fn random_kernel(rng: &mut ChaCha8Rng, family: KernelFamily) -> KernelConfig {
    KernelConfig::with_alpha(
        family,
        rng.gen_range(0.4..1.5),
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.5..3.0),
    )
    .unwrap()
}

/// Closed-form kernel, written independently of the library.
fn oracle_kernel(k: &KernelConfig, a: &Point2, b: &Point2) -> f64 {
    let r = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let (l, s, al) = (k.lengthscale(), k.outputscale(), k.alpha());
    s * match k.family {
        KernelFamily::Rbf => (-r * r / (2.0 * l * l)).exp(),
        KernelFamily::RationalQuadratic => (1.0 + r * r / (2.0 * al * l * l)).powf(-al),
        KernelFamily::AbsoluteExponential | KernelFamily::Matern(MaternNu::Half) => (-r / l).exp(),
        KernelFamily::Matern(MaternNu::ThreeHalves) => {
            let t = 3f64.sqrt() * r / l;
            (1.0 + t) * (-t).exp()
        }
        KernelFamily::Matern(MaternNu::FiveHalves) => {
            let t = 5f64.sqrt() * r / l;
            (1.0 + t + t * t / 3.0) * (-t).exp()
        }
    }
}

fn ac1_exact_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for p in 0..20 {
        let family = FAMILIES[p % FAMILIES.len()];
        let n = rng.gen_range(1..=15);
        let x = random_points(&mut rng, n, 2.0);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let kernel = random_kernel(&mut rng, family);
        let c = rng.gen_range(-1.0..1.0);
        let noise: Vec<f64> = if p % 2 == 0 {
            vec![rng.gen_range(0.01..0.5); n]
        } else {
            (0..n).map(|_| rng.gen_range(0.01..0.5)).collect()
        };
        let model_noise = if p % 2 == 0 {
            Noise::homoscedastic(noise[0])
        } else {
            Noise::PerPoint(noise.clone())
        };
        let model = ExactGpModel::new(x.clone(), y.clone(), kernel, MeanFunction::Constant(c), model_noise)
            .map_err(|e| e.to_string())?;
        let mut xs = random_points(&mut rng, 6, 3.0);
        xs.extend_from_slice(&x);
        let (mu, var) = predict_exact(&model, &xs).map_err(|e| e.to_string())?;

        let ky = DMatrix::from_fn(n, n, |i, j| oracle_kernel(&kernel, &x[i], &x[j]) + if i == j { noise[i] } else { 0.0 });
        let kinv = ky.try_inverse().ok_or("oracle inverse failed")?;
        let resid = DVector::from_fn(n, |i, _| y[i] - c);
        for (q, xq) in xs.iter().enumerate() {
            let ks = DVector::from_fn(n, |i, _| oracle_kernel(&kernel, &x[i], xq));
            let m = c + (ks.transpose() * &kinv * &resid)[(0, 0)];
            let v = oracle_kernel(&kernel, xq, xq) - (ks.transpose() * &kinv * &ks)[(0, 0)];
            worst = worst.max((mu[q] - m).abs()).max((var[q] - v.max(0.0)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-9, || format!("max |Δ| = {worst:.3e} ≥ 1e-9"))?;
    ensure(secs < 5.0, || format!("took {secs:.2}s ≥ 5s"))?;
    Ok(format!("20 problems, max |Δ| = {worst:.2e}"))
}

const FD_STEP: f64 = 1e-5;

/// |a − n| / max(|a|, |n|, floor). The floor keeps components that are zero
/// up to finite-difference rounding from dominating.
fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + FD_STEP;
    let up = f(&p);
    p[i] = x[i] - FD_STEP;
    let down = f(&p);
    (up - down) / (2.0 * FD_STEP)
}

const GRAD_FLOOR: f64 = 1e-6;

fn ac2_gradients() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut wk, mut wl, mut we) = (0.0f64, 0.0f64, 0.0f64);

    for p in 0..20 {
        let family = FAMILIES[p % FAMILIES.len()];
        let k = random_kernel(&mut rng, family);
        let a = random_points(&mut rng, 5, 1.5);
        let b = random_points(&mut rng, 4, 1.5);
        let grads = kernel_gradients(&k, &a, &b).map_err(|e| e.to_string())?;
        let theta = k.params();
        for (q, g) in grads.iter().enumerate() {
            for i in 0..a.len() {
                for j in 0..b.len() {
                    let mut f = |t: &[f64]| {
                        let mut kk = k;
                        kk.set_params(t);
                        gram_matrix(&kk, &a[i..=i], &b[j..=j]).unwrap()[(0, 0)]
                    };
                    let num = central_diff(&mut f, &theta, q);
                    wk = wk.max(rel_err(g[(i, j)], num, GRAD_FLOOR));
                }
            }
        }
    }

    for p in 0..20 {
        let family = FAMILIES[p % FAMILIES.len()];
        let k = random_kernel(&mut rng, family);
        let n = 12;
        let x = random_points(&mut rng, n, 1.5);
        let y: Vec<f64> = x.iter().map(|q| (2.0 * q[0]).sin() + rng.gen_range(-0.2..0.2)).collect();
        let mean = MeanFunction::Constant(rng.gen_range(-0.5..0.5));
        let noise = Noise::homoscedastic(rng.gen_range(0.05..0.5));
        let g = lml_gradients(&x, &y, &mean, &k, &noise).map_err(|e| e.to_string())?;
        let mut theta = k.params();
        theta.push(match mean {
            MeanFunction::Constant(c) => c,
            _ => unreachable!(),
        });
        theta.push(match noise {
            Noise::Homoscedastic { log_variance } => log_variance,
            _ => unreachable!(),
        });
        let nk = k.n_params();
        let mut f = |t: &[f64]| {
            let mut kk = k;
            kk.set_params(&t[..nk]);
            log_marginal_likelihood(
                &x,
                &y,
                &MeanFunction::Constant(t[nk]),
                &kk,
                &Noise::Homoscedastic { log_variance: t[nk + 1] },
            )
            .unwrap()
        };
        for (i, an) in g.flat().iter().enumerate() {
            let num = central_diff(&mut f, &theta, i);
            wl = wl.max(rel_err(*an, num, GRAD_FLOOR));
        }
    }

    for p in 0..20 {
        let family = FAMILIES[p % FAMILIES.len()];
        let k = random_kernel(&mut rng, family);
        let n = 10;
        let m = 4 + p % 3;
        let x = random_points(&mut rng, n, 1.5);
        let y: Vec<f64> = x.iter().map(|q| q[0].cos() + rng.gen_range(-0.2..0.2)).collect();
        let (lik, noise) = if p % 2 == 0 {
            (SvgpLikelihood::Gaussian { log_variance: rng.gen_range(-3.0f64..-0.5) }, None)
        } else {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.5)).collect();
            (SvgpLikelihood::Heteroscedastic, Some(v))
        };
        let mut s = SvgpState::new(random_points(&mut rng, m, 1.5), k, MeanFunction::Constant(0.1), lik).unwrap();
        for j in 0..m {
            s.mvec[j] = rng.gen_range(-1.0..1.0);
            s.l[(j, j)] = rng.gen_range(0.2..1.0);
            for i in (j + 1)..m {
                s.l[(i, j)] = rng.gen_range(-0.3..0.3);
            }
        }
        let n_total = 3 * n;
        let e = elbo_minibatch(&s, &x, &y, n_total, noise.as_deref()).map_err(|e| e.to_string())?;
        let theta = s.flatten();
        let mut probe = s.clone();
        let mut f = |t: &[f64]| {
            probe.unflatten(t);
            elbo_minibatch(&probe, &x, &y, n_total, noise.as_deref()).unwrap().value
        };
        for (i, an) in e.grad.iter().enumerate() {
            let num = central_diff(&mut f, &theta, i);
            we = we.max(rel_err(*an, num, GRAD_FLOOR));
        }
        // the same state read as whitened coordinates, as used in training
        let e = elbo_minibatch_whitened(&s, &x, &y, n_total, noise.as_deref()).map_err(|e| e.to_string())?;
        let mut f = |t: &[f64]| {
            probe.unflatten(t);
            elbo_minibatch_whitened(&probe, &x, &y, n_total, noise.as_deref()).unwrap().value
        };
        for (i, an) in e.grad.iter().enumerate() {
            let num = central_diff(&mut f, &theta, i);
            we = we.max(rel_err(*an, num, GRAD_FLOOR));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = wk.max(wl).max(we);
    ensure(worst < 1e-4, || format!("max rel err kernel {wk:.2e}, LML {wl:.2e}, ELBO {we:.2e}"))?;
    ensure(secs < 30.0, || format!("took {secs:.1}s ≥ 30s"))?;
    Ok(format!("max rel err kernel {wk:.2e}, LML {wl:.2e}, ELBO {we:.2e}"))
}

fn ac3_elbo_bound() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_excess = f64::NEG_INFINITY;
    for p in 0..20 {
        let family = FAMILIES[p % FAMILIES.len()];
        let k = random_kernel(&mut rng, family);
        let n = rng.gen_range(6..=15);
        let m = rng.gen_range(1..n);
        let x = random_points(&mut rng, n, 1.5);
        let y: Vec<f64> = x.iter().map(|q| q[1].sin() + rng.gen_range(-0.3..0.3)).collect();
        let mean = MeanFunction::Constant(rng.gen_range(-0.3..0.3));
        let (lik, noise, exact_noise) = if p % 2 == 0 {
            let v: f64 = rng.gen_range(0.05..0.5);
            (SvgpLikelihood::Gaussian { log_variance: v.ln() }, None, Noise::homoscedastic(v))
        } else {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.5)).collect();
            (SvgpLikelihood::Heteroscedastic, Some(v.clone()), Noise::PerPoint(v))
        };
        let mut s = SvgpState::new(random_points(&mut rng, m, 1.5), k, mean.clone(), lik).unwrap();
        for j in 0..m {
            s.mvec[j] = rng.gen_range(-1.0..1.0);
            s.l[(j, j)] = rng.gen_range(0.1..1.0);
        }
        let elbo = elbo_minibatch(&s, &x, &y, n, noise.as_deref()).map_err(|e| e.to_string())?.value;
        let lml = log_marginal_likelihood(&x, &y, &mean, &k, &exact_noise).map_err(|e| e.to_string())?;
        worst_excess = worst_excess.max(elbo - lml);
    }
    ensure(worst_excess <= 1e-6, || format!("ELBO exceeds LML by {worst_excess:.3e}"))?;

    let mut worst_gap = 0.0f64;
    for (p, family) in FAMILIES.iter().enumerate().take(5) {
        let k = random_kernel(&mut rng, *family);
        let n = 12;
        let x = random_points(&mut rng, n, 1.5);
        let y: Vec<f64> = x.iter().map(|q| q[0].sin() + rng.gen_range(-0.3..0.3)).collect();
        let v: f64 = rng.gen_range(0.05..0.3);
        let mean = MeanFunction::Constant(0.0);
        let s = SvgpState::new(x.clone(), k, mean.clone(), SvgpLikelihood::Gaussian { log_variance: v.ln() }).unwrap();
        let mut opts = SvgpFitOptions::new(AdamConfig::new(0.05, 500, BatchSize::Full));
        opts.optimize_inducing = false;
        opts.optimize_hyperparameters = false;
        let t = train_svgp(s, &x, &y, None, &opts, p as u64).map_err(|e| e.to_string())?;
        let elbo = elbo_minibatch(&t.model, &x, &y, n, None).map_err(|e| e.to_string())?.value;
        let lml = log_marginal_likelihood(&x, &y, &mean, &k, &Noise::homoscedastic(v)).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max(lml - elbo);
    }
    ensure(worst_gap < 1e-3, || format!("m = n gap {worst_gap:.3e} nats after 500 steps"))?;
    Ok(format!("max ELBO − LML = {worst_excess:.2e}; m = n gap {worst_gap:.2e} nats"))
}

fn ac4_collapse() -> Result<String, String> {
    const SIGMA2: f64 = 0.05;
    let scene = build_scene(&SynthParams { size: 64, seed: 4, ..SynthParams::default() }, NoiseMode::Shadow)
        .map_err(|e| e.to_string())?;
    let unc = scene.clean_train.with_values(vec![SIGMA2; scene.clean_train.len()]).unwrap();
    let train = inject_noise(&scene.clean_train, &unc, 4).map_err(|e| e.to_string())?;
    let method = MethodConfig::defaults(MethodId::OursExact, 0);
    let ours = fit_grids(&method, &train, Some(&unc), Some(&scene.prior), &NoiseGpConfig::default())
        .map_err(|e| e.to_string())?
        .model;

    let data = grid_to_dataset(&train, None).map_err(|e| e.to_string())?;
    let mean = terrain_mean(Some(&scene.prior), data.stats).map_err(|e| e.to_string())?;
    let noise = Noise::homoscedastic(SIGMA2 / data.stats.variance_scale());
    let opts = ExactFitOptions { adam: method.adam, learn_noise: false };
    let base = train_exact(data.x.clone(), data.y.clone(), method.initial_kernel(), mean, noise, &opts)
        .map_err(|e| e.to_string())?
        .model;
    let base = FittedModel { method: MethodId::Hayner, stats: data.stats, body: ModelBody::Exact(base) };

    let q = scene.truth.cell_centers();
    let a = ours.predict(&q).map_err(|e| e.to_string())?;
    let b = base.predict(&q).map_err(|e| e.to_string())?;
    let d = hetgp_core::metrics::rmse(&a.mean, &b.mean).map_err(|e| e.to_string())?;
    ensure(d < 1e-3, || format!("prediction RMSE between models {d:.3e} m"))?;
    Ok(format!("32x32 training grid, RMSE between predictions {d:.2e} m"))
}

/// Inducing count for the variational methods on the 1024-point split scene.
const AC5_INDUCING: usize = 512;

fn ac5_ordering() -> Result<String, String> {
    let start = Instant::now();
    let mut exact_wins = 0;
    let mut var_wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let scene = build_scene(&split_noise_params(seed), NoiseMode::Split).map_err(|e| e.to_string())?;
        let q = scene.truth.cell_centers();
        let score = |id: MethodId| -> Result<(f64, f64), String> {
            let mut m = MethodConfig::defaults(id, seed);
            if id.is_variational() {
                m.num_inducing = AC5_INDUCING;
            }
            let fit = fit_grids(&m, &scene.train, Some(&scene.uncertainty), Some(&scene.prior), &NoiseGpConfig::default())
                .map_err(|e| format!("{id}: {e}"))?;
            let p = fit.model.predict(&q).map_err(|e| e.to_string())?;
            let r = evaluate(&p.mean, &p.predictive_var, &p.latent_var, &scene.truth.values, EvalOptions::default())
                .map_err(|e| e.to_string())?;
            Ok((r.nlpd, r.ause))
        };
        let tomita = score(MethodId::Tomita)?;
        let hayner = score(MethodId::Hayner)?;
        let torroba = score(MethodId::Torroba)?;
        let ours_e = score(MethodId::OursExact)?;
        let ours_v = score(MethodId::OursVariational)?;
        let beats = |a: (f64, f64), b: (f64, f64)| a.0 < b.0 && a.1 < b.1;
        exact_wins += (beats(ours_e, tomita) && beats(ours_e, hayner)) as usize;
        var_wins += beats(ours_v, torroba) as usize;
        lines.push(format!(
            "seed {seed}: nlpd/ause tomita {:.3}/{:.3} hayner {:.3}/{:.3} ours-exact {:.3}/{:.3} torroba {:.3}/{:.3} ours-var {:.3}/{:.3}",
            tomita.0, tomita.1, hayner.0, hayner.1, ours_e.0, ours_e.1, torroba.0, torroba.1, ours_v.0, ours_v.1
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    for l in &lines {
        eprintln!("  AC5 {l}");
    }
    ensure(exact_wins >= 4 && var_wins >= 4, || {
        format!("ours-exact won {exact_wins}/5, ours-variational won {var_wins}/5")
    })?;
    ensure(secs < 600.0, || format!("took {secs:.0}s ≥ 600s"))?;
    Ok(format!("ours-exact won {exact_wins}/5, ours-variational won {var_wins}/5 (m = {AC5_INDUCING})"))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn ac6_noise_recovery() -> Result<String, String> {
    let field = |p: &Point2| -2.0 + 1.5 * (2.0 * PI * p[0] / 32.0).sin() * (2.0 * PI * p[1] / 32.0).cos();
    let grid = DemGrid::filled(32, 32, 1.0, 0.0).unwrap();
    let x = grid.cell_centers();
    let r: Vec<f64> = x.iter().map(|p| field(p).exp()).collect();
    let stats = NormStats::fit(&x, &vec![0.0; x.len()]);
    let xn: Vec<Point2> = x.iter().map(|p| stats.normalize_x(p)).collect();
    let nm = fit_noise_gp(&xn, &r, &NoiseGpConfig::default(), 0).map_err(|e| e.to_string())?.model;
    // score on a 2x finer grid so most queries fall between samples
    let fine = DemGrid::filled(64, 64, 0.5, 0.0).unwrap().cell_centers();
    let fine_n: Vec<Point2> = fine.iter().map(|p| stats.normalize_x(p)).collect();
    let mu = nm.log_variance(&fine_n).map_err(|e| e.to_string())?;
    let truth: Vec<f64> = fine.iter().map(field).collect();
    let rho = pearson(&mu, &truth);
    ensure(rho > 0.9, || format!("Pearson correlation {rho:.4}"))?;
    Ok(format!("Pearson correlation {rho:.4} on a 64x64 query grid"))
}

/// Remove `k` points one at a time, each time the remaining point with the
/// largest key (lowest index on ties), then average what is left.
fn brute_force_curve(err: &[f64], key: &[f64]) -> Vec<f64> {
    let q = err.len();
    (0..50)
        .map(|j| {
            let k = j * q / 50;
            let mut gone = vec![false; q];
            for _ in 0..k {
                let mut best: Option<usize> = None;
                for i in 0..q {
                    if !gone[i] && best.is_none_or(|b| key[i] > key[b]) {
                        best = Some(i);
                    }
                }
                gone[best.unwrap()] = true;
            }
            let kept: Vec<f64> = (0..q).filter(|&i| !gone[i]).map(|i| err[i]).collect();
            kept.iter().sum::<f64>() / kept.len() as f64
        })
        .collect()
}

fn brute_force_ause(err: &[f64], unc: &[f64]) -> f64 {
    let model = brute_force_curve(err, unc);
    let oracle = brute_force_curve(err, err);
    (0..49)
        .map(|j| 0.5 * ((model[j] - oracle[j]) + (model[j + 1] - oracle[j + 1])) / 50.0)
        .sum()
}

fn ac7_metrics_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let fractions = ause_fractions();
    let mut worst = 0.0f64;
    for t in 0..100 {
        let q = rng.gen_range(2..=50);
        let ties = t % 3 == 0;
        let draw = |rng: &mut ChaCha8Rng| {
            let v: f64 = rng.gen_range(0.0..2.0);
            if ties {
                (v * 4.0).round() / 4.0
            } else {
                v
            }
        };
        let err: Vec<f64> = (0..q).map(|_| draw(&mut rng)).collect();
        let unc: Vec<f64> = if t % 10 == 9 { vec![1.0; q] } else { (0..q).map(|_| draw(&mut rng)).collect() };
        let model = sparsification_curve(&err, &unc, &fractions).map_err(|e| e.to_string())?;
        let oracle = sparsification_curve(&err, &err, &fractions).map_err(|e| e.to_string())?;
        let bm = brute_force_curve(&err, &unc);
        let bo = brute_force_curve(&err, &err);
        for j in 0..50 {
            worst = worst.max((model[j] - bm[j]).abs()).max((oracle[j] - bo[j]).abs());
        }
        let a = sparsification(&err, &unc).map_err(|e| e.to_string())?.ause();
        worst = worst.max((a - brute_force_ause(&err, &unc)).abs());

        let perfect = sparsification(&err, &err).map_err(|e| e.to_string())?.ause();
        let scaled: Vec<f64> = err.iter().map(|e| 3.0 * e + 1.0).collect();
        let perfect_scaled = sparsification(&err, &scaled).map_err(|e| e.to_string())?.ause();
        ensure(perfect == 0.0 && perfect_scaled == 0.0, || {
            format!("perfect-ranking AUSE {perfect:e} / {perfect_scaled:e} on vector {t}")
        })?;
    }
    ensure(worst < 1e-12, || format!("max |Δ| vs brute force = {worst:.3e}"))?;
    Ok(format!("100 vectors, max |Δ| = {worst:.2e}, perfect ranking AUSE = 0"))
}

fn hetgp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hetgp"))
}

fn run_ok(cmd: &mut Command) -> Result<(), String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{:?} failed: {}", cmd.get_args().collect::<Vec<_>>(), String::from_utf8_lossy(&out.stderr))
    })
}

fn ac8_sweep() -> Result<String, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("sweep.csv");
    run_ok(hetgp().args(["sweep", "--sizes", "4000", "--inducing", "16,64,256,1024", "--seed", "0", "--out"]).arg(&out))?;
    let secs = start.elapsed().as_secs_f64();
    let text = fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    ensure(lines.next() == Some("n,m_inducing,rmse,wall_seconds"), || "bad header".into())?;
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    ensure(rows.len() == 4 && rows.iter().all(|r| r.len() == 4 && r.iter().all(|v| v.is_finite())), || {
        format!("malformed rows: {text}")
    })?;
    let ms: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    ensure(ms == [16.0, 64.0, 256.0, 1024.0] && rows.iter().all(|r| r[0] == 4000.0), || format!("unexpected cells: {text}"))?;
    let wall: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let rmse: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let summary = format!(
        "wall {:.1}/{:.1}/{:.1}/{:.1}s, rmse {:.4}/{:.4}/{:.4}/{:.4} m",
        wall[0], wall[1], wall[2], wall[3], rmse[0], rmse[1], rmse[2], rmse[3]
    );
    ensure(wall.windows(2).all(|w| w[1] > w[0]), || format!("wall time not increasing: {summary}"))?;
    ensure(rmse[2] <= rmse[0], || format!("RMSE(256) > RMSE(16): {summary}"))?;
    ensure(secs < 900.0, || format!("took {secs:.0}s ≥ 900s"))?;
    Ok(summary)
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for n in names {
        let x = fs::read(a.join(n)).map_err(|e| format!("{n}: {e}"))?;
        let y = fs::read(b.join(n)).map_err(|e| format!("{n}: {e}"))?;
        ensure(x == y, || format!("{n} differs between runs"))?;
    }
    Ok(())
}

fn ac9_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [dir.path().join("a"), dir.path().join("b")];
    for r in &runs {
        let s = r.to_str().unwrap();
        run_ok(hetgp().args(["synth", "--size", "32", "--craters", "3", "--seed", "9", "--out-dir", s]))?;
        for (method, extra) in [
            ("hayner", vec!["--epochs", "5"]),
            ("ours-exact", vec!["--epochs", "5"]),
            ("ours-variational", vec!["--epochs", "3", "--inducing", "40"]),
        ] {
            let model = format!("{s}/{method}.hgpm");
            run_ok(
                hetgp()
                    .args(["fit", "--method", method, "--seed", "3"])
                    .args(["--train", &format!("{s}/train.asc"), "--noise", &format!("{s}/uncertainty.asc")])
                    .args(["--prior", &format!("{s}/prior.asc"), "--out", &model])
                    .args(&extra),
            )?;
            let pdir = format!("{s}/{method}");
            run_ok(hetgp().args(["predict", "--model", &model, "--target", &format!("{s}/truth.asc"), "--out-dir", &pdir]))?;
            run_ok(
                hetgp()
                    .args(["eval", "--mean", &format!("{pdir}/mean.asc"), "--var", &format!("{pdir}/var.asc")])
                    .args(["--latent-var", &format!("{pdir}/latent_var.asc"), "--truth", &format!("{s}/truth.asc")])
                    .args(["--out", &format!("{pdir}/report.txt"), "--curves", &format!("{pdir}/curves.csv")]),
            )?;
        }
        run_ok(hetgp().args(["hillshade", "--input", &format!("{s}/truth.asc"), "--out", &format!("{s}/shade.asc")]))?;
        run_ok(hetgp().args(["heatmap", "--input", &format!("{s}/truth.asc"), "--out", &format!("{s}/truth.pgm")]))?;
        run_ok(
            hetgp()
                .args(["sweep", "--sizes", "200", "--inducing", "8,16", "--method", "torroba", "--epochs", "2", "--seed", "5"])
                .args(["--out", &format!("{s}/sweep.csv")]),
        )?;
    }
    let (a, b) = (&runs[0], &runs[1]);
    same_files(a, b, &["truth.asc", "dem.asc", "train.asc", "uncertainty.asc", "prior.asc", "shade.asc", "truth.pgm"])?;
    let mut compared = 7;
    for method in ["hayner", "ours-exact", "ours-variational"] {
        let files = [
            format!("{method}.hgpm"),
            format!("{method}.hgpm.losses.csv"),
            format!("{method}/mean.asc"),
            format!("{method}/var.asc"),
            format!("{method}/latent_var.asc"),
            format!("{method}/report.txt"),
            format!("{method}/curves.csv"),
        ];
        same_files(a, b, &files.iter().map(String::as_str).collect::<Vec<_>>())?;
        compared += files.len();
    }
    // wall time is the one column that may legitimately differ
    let strip = |p: &Path| -> Result<Vec<String>, String> {
        Ok(fs::read_to_string(p.join("sweep.csv"))
            .map_err(|e| e.to_string())?
            .lines()
            .map(|l| l.rsplit_once(',').map(|(h, _)| h.to_string()).unwrap_or_default())
            .collect())
    };
    ensure(strip(a)? == strip(b)?, || "sweep rows differ between runs".into())?;

    // .asc roundtrip, including nodata, signed zero, and extreme magnitudes
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for t in 0..20 {
        let (nc, nr) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let mut vals: Vec<f64> = (0..nc * nr).map(|_| rng.gen_range(-1e4..1e4) * 10f64.powi(rng.gen_range(-300..300))).collect();
        vals[0] = if t % 2 == 0 { -9999.0 } else { -0.0 };
        let g = DemGrid::new(nc, nr, rng.gen_range(-1e6..1e6), rng.gen_range(-1e6..1e6), rng.gen_range(0.01..100.0), -9999.0, vals)
            .unwrap();
        let p = dir.path().join(format!("g{t}.asc"));
        write_asc(&g, &p).map_err(|e| e.to_string())?;
        let back = read_asc(&p).map_err(|e| e.to_string())?;
        let bits = |g: &DemGrid| g.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(back == g && bits(&back) == bits(&g), || format!("asc roundtrip mismatch on grid {t}"))?;
    }

    // model files: decode(encode(m)) re-encodes to the same bytes and predicts identically
    for method in ["hayner", "ours-exact", "ours-variational"] {
        let bytes = fs::read(a.join(format!("{method}.hgpm"))).map_err(|e| e.to_string())?;
        let m = decode_model(&bytes).map_err(|e| e.to_string())?;
        ensure(encode_model(&m) == bytes, || format!("{method} model re-encodes differently"))?;
        let truth = read_asc(a.join("truth.asc")).map_err(|e| e.to_string())?;
        let p = m.predict(&truth.cell_centers()).map_err(|e| e.to_string())?;
        let mean = read_asc(a.join(format!("{method}/mean.asc"))).map_err(|e| e.to_string())?;
        ensure(p.mean.iter().zip(&mean.values).all(|(x, y)| x.to_bits() == y.to_bits()), || {
            format!("{method} reloaded predictions differ from predict output")
        })?;
    }
    Ok(format!("{compared} artifacts bitwise identical across runs; asc and model roundtrips exact"))
}
