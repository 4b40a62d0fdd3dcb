//! Experiment orchestration: builds jobs from a config, runs them in parallel
//! and writes their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use plap_core::diagnostics::{extinction_report, gamma_estimate};
use plap_core::dual::{duality_residual, smooth_bump};
use plap_core::fields::{l2_norm, make_initial, weighted_sup_monitor, SineMode};
use plap_core::galerkin::{build_basis, integrate, project_field, reconstruct, GalerkinModel};
use plap_core::stepper::{run, EXTINCTION_THRESHOLD};
use plap_core::{Grid, InitialCondition, SimParams, Trajectory, VectorField};

use crate::config::{ExperimentConfig, ExperimentKind, FieldOutput, InitialKind};
use crate::output::{write_blob, write_error_marker, write_table, write_timeseries};

#[derive(Debug, Error)]
pub enum JobError {
    #[error(transparent)]
    Core(#[from] plap_core::Error),

    #[error("run failed at t = {time}: {error}")]
    Run { time: f64, error: plap_core::Error },

    #[error("i/o: {0}")]
    Io(#[from] io::Error),

    #[error("{0}")]
    Other(String),
}

/// What one job left on disk.
#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub error: Option<String>,
}

/// Result of [`run_experiment`]; `failed() == 0` iff every job succeeded.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub jobs: Vec<JobOutcome>,
}

impl ExperimentOutcome {
    pub fn failed(&self) -> usize {
        self.jobs.iter().filter(|j| j.error.is_some()).count()
    }
}

/// Initial datum described by the config; `random` draws from `seed`.
pub fn initial_field(cfg: &ExperimentConfig, grid: Grid) -> plap_core::Result<VectorField> {
    let d = grid.dim();
    let init = &cfg.initial;
    let amp = |c: usize| if init.amplitude.len() == 1 { init.amplitude[0] } else { init.amplitude[c] };
    let ic = match init.kind {
        InitialKind::Zero => InitialCondition::Zero,
        InitialKind::Sine => InitialCondition::Sine(
            (0..d)
                .map(|c| SineMode {
                    component: c,
                    wavenumbers: vec![init.wavenumber; d],
                    amplitude: amp(c),
                })
                .collect(),
        ),
        InitialKind::Indicator => InitialCondition::Indicator {
            lower: init.lower,
            upper: init.upper,
            amplitude: (0..d).map(amp).collect(),
        },
        InitialKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut modes = Vec::new();
            for c in 0..d {
                for k in 1..=init.wavenumber {
                    let wavenumbers: Vec<usize> = (0..d).map(|_| rng.gen_range(1..=k)).collect();
                    modes.push(SineMode {
                        component: c,
                        wavenumbers,
                        amplitude: amp(c) * rng.gen_range(-1.0..1.0) / k as f64,
                    });
                }
            }
            InitialCondition::Sine(modes)
        }
    };
    make_initial(&ic, grid)
}

fn write_fields(dir: &Path, traj: &Trajectory, mode: FieldOutput) -> io::Result<()> {
    let picks: Vec<usize> = match mode {
        FieldOutput::None => return Ok(()),
        FieldOutput::Ends if traj.len() > 1 => vec![0, traj.len() - 1],
        FieldOutput::Ends => vec![0],
        FieldOutput::All => (0..traj.len()).collect(),
    };
    let fields = dir.join("fields");
    fs::create_dir_all(&fields)?;
    for i in picks {
        write_blob(&fields.join(format!("state_{i:06}.plap")), &traj.states[i])?;
    }
    Ok(())
}

/// Runs the forward solver and writes the time series and blobs, also for a
/// partial trajectory.
fn forward_job(dir: &Path, cfg: &ExperimentConfig, params: &SimParams, scheme_stride: Option<usize>) -> Result<Trajectory, JobError> {
    fs::create_dir_all(dir)?;
    let grid = params.grid()?;
    let u0 = initial_field(cfg, grid)?;
    let mut scheme = cfg.scheme;
    if let Some(s) = scheme_stride {
        scheme.snapshot_stride = s;
    }
    match run(&u0, params, &scheme) {
        Ok(traj) => {
            write_timeseries(&dir.join("timeseries.csv"), &traj)?;
            write_fields(dir, &traj, cfg.write_fields)?;
            Ok(traj)
        }
        Err(failure) => {
            write_timeseries(&dir.join("timeseries.csv"), &failure.partial)?;
            write_fields(dir, &failure.partial, cfg.write_fields)?;
            Err(JobError::Run {
                time: failure.time,
                error: failure.error,
            })
        }
    }
}

fn finish(name: &str, dir: &Path, result: Result<(), JobError>) -> JobOutcome {
    let error = result.err().map(|e| {
        let message = e.to_string();
        warn!("job {name} failed: {message}");
        if let Err(io) = fs::create_dir_all(dir).and_then(|_| write_error_marker(dir, &message)) {
            warn!("could not write error marker in {}: {io}", dir.display());
        }
        message
    });
    JobOutcome {
        name: name.to_string(),
        dir: dir.to_path_buf(),
        error,
    }
}

fn run_summary(traj: &Trajectory) -> String {
    let mut s = String::new();
    let last = traj.diagnostics.last().expect("trajectory holds its initial record");
    let _ = writeln!(s, "termination = {:?}", traj.termination);
    let _ = writeln!(s, "final_time = {:e}", traj.final_time());
    let _ = writeln!(s, "snapshots = {}", traj.len());
    let _ = writeln!(s, "final_l2 = {:e}", last.l2_norm);
    let _ = writeln!(s, "final_linf = {:e}", last.linf_norm);
    let overshoot = traj.diagnostics.iter().map(|r| r.overshoot).fold(0.0, f64::max);
    let _ = writeln!(s, "max_overshoot = {overshoot:e}");
    let _ = writeln!(s, "max_energy_residual = {:e}", traj.max_step_residual());
    let ws = weighted_sup_monitor(traj, traj.params.alpha, traj.params.p);
    let _ = writeln!(s, "weighted_sup = {:e}", ws.value);
    let _ = writeln!(s, "weighted_sup_time = {:e}", ws.at_time);
    let _ = writeln!(s, "alpha_in_theory = {}", ws.in_theory);
    s
}

/// `(Σ_k (t_k − t_{k−1}) ‖a_k − b_k‖₂²)^½` over the samples both trajectories share.
pub fn space_time_distance(a: &Trajectory, b: &Trajectory) -> plap_core::Result<f64> {
    let n = a.len().min(b.len());
    let mut sum = 0.0;
    for k in 1..n {
        let gap = a.times[k] - a.times[k - 1];
        let diff = a.states[k].sub(&b.states[k])?;
        sum += gap * l2_norm(&diff).powi(2);
    }
    Ok(sum.sqrt())
}

fn echo(dir: &Path, cfg: &ExperimentConfig) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.echo"), cfg.to_text())
}

/// Config that reproduces a single sweep point as a `run` experiment in `dir`.
fn point_config(cfg: &ExperimentConfig, params: SimParams, dir: &Path) -> ExperimentConfig {
    let mut point = cfg.clone();
    point.kind = ExperimentKind::Run;
    point.params = params;
    point.output_dir = dir.to_path_buf();
    point.sweep = Default::default();
    point
}

fn label(name: &str, value: f64) -> String {
    format!("{name}_{value}")
}

pub fn run_experiment(cfg: &ExperimentConfig) -> io::Result<ExperimentOutcome> {
    let root = cfg.output_dir.clone();
    echo(&root, cfg)?;
    info!("{} experiment into {}", cfg.kind.name(), root.display());
    let jobs = match cfg.kind {
        ExperimentKind::Run => vec![single_run(cfg, &root)],
        ExperimentKind::Ladder => ladder(cfg, &root)?,
        ExperimentKind::ExtinctionSweep => extinction_sweep(cfg, &root)?,
        ExperimentKind::DualCheck => vec![dual_check(cfg, &root)],
        ExperimentKind::GalerkinCompare => vec![galerkin_compare(cfg, &root)],
        ExperimentKind::Gamma => vec![gamma(cfg, &root)],
    };
    Ok(ExperimentOutcome { output_dir: root, jobs })
}

fn single_run(cfg: &ExperimentConfig, root: &Path) -> JobOutcome {
    let result = forward_job(root, cfg, &cfg.params, None)
        .and_then(|traj| fs::write(root.join("summary.txt"), run_summary(&traj)).map_err(JobError::from));
    finish("run", root, result)
}

fn ladder(cfg: &ExperimentConfig, root: &Path) -> io::Result<Vec<JobOutcome>> {
    let mut points: Vec<(&str, f64, SimParams)> = Vec::new();
    for &nu in &cfg.sweep.nu {
        points.push(("nu", nu, SimParams { nu, ..cfg.params }));
    }
    let nu_floor = cfg.sweep.nu.last().copied().unwrap_or(cfg.params.nu);
    for &mu in &cfg.sweep.mu {
        points.push(("mu", mu, SimParams { mu, nu: nu_floor, ..cfg.params }));
    }
    let results: Vec<(JobOutcome, Option<Trajectory>)> = points
        .par_iter()
        .enumerate()
        .map(|(i, (axis, value, params))| {
            let name = format!("{i:02}_{}", label(axis, *value));
            let dir = root.join(&name);
            let traj = echo(&dir, &point_config(cfg, *params, &dir))
                .map_err(JobError::from)
                .and_then(|_| forward_job(&dir, cfg, params, None));
            match traj {
                Ok(t) => {
                    let written = fs::write(dir.join("summary.txt"), run_summary(&t)).map_err(JobError::from);
                    (finish(&name, &dir, written), Some(t))
                }
                Err(e) => (finish(&name, &dir, Err(e)), None),
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut summary = String::new();
    for axis in ["nu", "mu"] {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].0 == axis).collect();
        let mut distances = Vec::new();
        for w in idx.windows(2) {
            let (Some(a), Some(b)) = (&results[w[0]].1, &results[w[1]].1) else {
                continue;
            };
            let d = space_time_distance(a, b).map_err(|e| io::Error::other(e.to_string()))?;
            let axis_code = if axis == "nu" { 0.0 } else { 1.0 };
            rows.push(vec![axis_code, points[w[0]].1, points[w[1]].1, d]);
            let _ = writeln!(summary, "{axis} {} -> {}: distance = {d:e}", points[w[0]].1, points[w[1]].1);
            distances.push(d);
        }
        if distances.len() >= 2 {
            let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
            let _ = writeln!(summary, "{axis}_decreasing = {decreasing}");
        }
    }
    write_table(&root.join("ladder.csv"), &["axis", "from", "to", "distance"], &rows)?;
    let _ = writeln!(summary, "# axis column in ladder.csv: 0 = nu, 1 = mu");
    fs::write(root.join("summary.txt"), summary)?;
    Ok(results.into_iter().map(|(j, _)| j).collect())
}

fn extinction_sweep(cfg: &ExperimentConfig, root: &Path) -> io::Result<Vec<JobOutcome>> {
    let ps = if cfg.sweep.p.is_empty() { vec![cfg.params.p] } else { cfg.sweep.p.clone() };
    let deltas = if cfg.sweep.delta.is_empty() { vec![cfg.params.delta] } else { cfg.sweep.delta.clone() };
    let grid = cfg.params.grid().map_err(|e| io::Error::other(e.to_string()))?;
    let gammas: Vec<Result<f64, String>> = ps
        .par_iter()
        .map(|&p| gamma_estimate(grid, p, &cfg.gamma_seeds).map(|g| g.value).map_err(|e| e.to_string()))
        .collect();
    let points: Vec<(usize, f64)> = (0..ps.len()).flat_map(|i| deltas.iter().map(move |&d| (i, d))).collect();

    let results: Vec<(JobOutcome, Option<Vec<f64>>)> = points
        .par_iter()
        .map(|&(pi, delta)| {
            let p = ps[pi];
            let name = format!("{}_{}", label("p", p), label("delta", delta));
            let dir = root.join(&name);
            let params = SimParams {
                p,
                delta,
                alpha: if cfg.sweep.p.is_empty() { cfg.params.alpha } else { 1.1 * plap_core::fields::alpha_threshold(p) },
                ..cfg.params
            };
            let mut row = None;
            let result = (|| {
                let gamma = gammas[pi].clone().map_err(JobError::Other)?;
                echo(&dir, &point_config(cfg, params, &dir))?;
                let traj = forward_job(&dir, cfg, &params, None)?;
                let threshold = EXTINCTION_THRESHOLD * l2_norm(traj.initial()).max(1.0);
                let report = extinction_report(&traj, gamma, threshold);
                let mut s = run_summary(&traj);
                let _ = writeln!(s, "gamma_h = {:e}", report.gamma);
                let _ = writeln!(s, "hypothesis_lhs = {:e}", report.hypothesis_lhs);
                let _ = writeln!(s, "t_star_bound = {}", fmt_opt(report.t_star_bound));
                let _ = writeln!(s, "measured_extinction = {}", fmt_opt(report.measured_extinction));
                let _ = writeln!(s, "monotone_from = {}", fmt_opt(report.monotone_from));
                fs::write(dir.join("summary.txt"), s)?;
                row = Some(vec![
                    delta,
                    report.hypothesis_lhs,
                    report.gamma,
                    report.t_star_bound.unwrap_or(f64::NAN),
                    report.measured_extinction.unwrap_or(f64::NAN),
                    p,
                ]);
                Ok(())
            })();
            (finish(&name, &dir, result), row)
        })
        .collect();
    let rows: Vec<Vec<f64>> = results.iter().filter_map(|(_, r)| r.clone()).collect();
    write_table(
        &root.join("extinction.csv"),
        &["delta", "hypothesis_lhs", "gamma_h", "t_star_bound", "measured", "p"],
        &rows,
    )?;
    let mut summary = String::new();
    for row in &rows {
        let within = row[4].is_finite() && row[3].is_finite() && row[4] <= row[3];
        let _ = writeln!(
            summary,
            "p = {} delta = {}: measured {} vs bound {} (within = {within})",
            row[5], row[0], row[4], row[3]
        );
    }
    fs::write(root.join("summary.txt"), summary)?;
    Ok(results.into_iter().map(|(j, _)| j).collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:e}"))
}

fn dual_check(cfg: &ExperimentConfig, root: &Path) -> JobOutcome {
    let result = (|| {
        let traj = forward_job(root, cfg, &cfg.params, Some(1))?;
        let horizon = cfg.dual.horizon.unwrap_or(cfg.params.t_end);
        let nu_dual = cfg.dual.nu_dual.unwrap_or(cfg.params.nu);
        let grid = cfg.params.grid()?;
        let phi0 = smooth_bump(grid, &cfg.dual.center, cfg.dual.rho, 0)?;
        let rows: Vec<Vec<f64>> = cfg
            .dual
            .etas
            .par_iter()
            .map(|&eta| {
                duality_residual(&traj, horizon, &phi0, eta, nu_dual, cfg.params.dt).map(|r| {
                    vec![eta, r.forward_pairing, r.dual_pairing, r.residual, r.l1_growth]
                })
            })
            .collect::<plap_core::Result<_>>()?;
        write_table(
            &root.join("duality.csv"),
            &["eta", "forward_pairing", "dual_pairing", "residual", "l1_growth"],
            &rows,
        )?;
        let mut s = run_summary(&traj);
        let _ = writeln!(s, "horizon = {horizon:e}");
        let _ = writeln!(s, "nu_dual = {nu_dual:e}");
        for r in &rows {
            let _ = writeln!(s, "eta = {:e}: residual = {:e}, l1_growth = {:e}", r[0], r[3], r[4]);
        }
        fs::write(root.join("summary.txt"), s)?;
        Ok(())
    })();
    finish("dual_check", root, result)
}

fn galerkin_compare(cfg: &ExperimentConfig, root: &Path) -> JobOutcome {
    let result = (|| {
        let traj = forward_job(root, cfg, &cfg.params, None)?;
        let grid = cfg.params.grid()?;
        let basis = build_basis(cfg.params.dim, cfg.galerkin.modes, cfg.galerkin.quad_points)?;
        let c0 = project_field(&basis, traj.initial())?;
        let model = GalerkinModel::new(basis.clone(), cfg.params)?;
        let spectral = integrate(&model, &c0, cfg.galerkin.dt, traj.final_time(), usize::MAX)?;
        let field = reconstruct(&basis, spectral.last(), grid)?;
        let distance = l2_norm(&field.sub(traj.last())?);
        let scale = l2_norm(traj.initial());
        let fields = root.join("fields");
        fs::create_dir_all(&fields)?;
        write_blob(&fields.join("galerkin_final.plap"), &field)?;
        let mut s = run_summary(&traj);
        let _ = writeln!(s, "galerkin_modes = {}", cfg.galerkin.modes);
        let _ = writeln!(s, "galerkin_energy_defect = {:e}", spectral.energy_defect());
        let _ = writeln!(s, "final_distance = {distance:e}");
        let _ = writeln!(
            s,
            "relative_distance = {:e}",
            if scale > 0.0 { distance / scale } else { distance }
        );
        fs::write(root.join("summary.txt"), s)?;
        Ok(())
    })();
    finish("galerkin_compare", root, result)
}

fn gamma(cfg: &ExperimentConfig, root: &Path) -> JobOutcome {
    let result = (|| {
        let grid = cfg.params.grid()?;
        let ps = if cfg.sweep.p.is_empty() { vec![cfg.params.p] } else { cfg.sweep.p.clone() };
        let estimates = ps
            .par_iter()
            .map(|&p| gamma_estimate(grid, p, &cfg.gamma_seeds))
            .collect::<plap_core::Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = ps
            .iter()
            .zip(&estimates)
            .map(|(&p, g)| vec![p, g.value, f64::from(u8::from(g.converged))])
            .collect();
        write_table(&root.join("gamma.csv"), &["p", "gamma_h", "converged"], &rows)?;
        let mut s = String::new();
        for (p, g) in ps.iter().zip(&estimates) {
            let _ = writeln!(s, "p = {p}: gamma_h = {:e} (converged = {}, per seed {:?})", g.value, g.converged, g.per_seed);
        }
        fs::write(root.join("summary.txt"), s)?;
        Ok(())
    })();
    finish("gamma", root, result)
}
