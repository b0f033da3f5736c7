//! Dispatch of a `RunConfig` to the solvers, with every output written through
//! one writer per directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{basis_cache, basis_uncached, CacheOutcome, CacheStatus, CACHE_DIR_ENV};
use super::config::{CertifyMode, Command, RunConfig};
use super::trajectory::{fmt_f64, format_trajectory, TRAJECTORY_FORMAT_VERSION};
use crate::certificates::{
    certify_global, certify_hyperbolic, certify_local, initial_data_size, Certificate, Constants, ProbeSettings,
};
use crate::error::{Error, Result};
use crate::fixed_point::{picard_solve, xt_distance, PicardOptions, PredictedFactors};
use crate::galerkin::{
    hyperbolic_energy_report, parabolic_energy_report, solve_hyperbolic, solve_parabolic, EnergyReport, Kind,
    SolveConfig, Termination, Trajectory,
};
use crate::quench::{principal_eigenpair, verify_mass_inequality, MassReport};
use crate::spectrum::{build_grid, BoundaryCondition, Domain, Grid, SpectralBasis};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub artifact_version: String,
    pub trajectory_format_version: u32,
    pub config: RunConfig,
    pub basis_fingerprint: String,
    pub cache_status: CacheStatus,
    /// False when the basis came from the cache.
    pub eigensolve_performed: bool,
    pub wall_clock_seconds: f64,
    /// Output files relative to the output directory, in write order; the manifest itself excluded.
    pub outputs: Vec<String>,
}

/// The only path by which a run touches its output directory.
struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        self.text(name, &(s + "\n"))
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut s = header.join(",") + "\n";
        for r in rows {
            s += &r.join(",");
            s.push('\n');
        }
        self.text(name, &s)
    }
}

fn num(x: f64) -> String {
    fmt_f64(x)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn opt_bool(x: Option<bool>) -> String {
    x.map(|b| b.to_string()).unwrap_or_default()
}

/// Attach the step that failed to numerical errors; input errors pass through unchanged.
fn context<T>(r: Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| match e {
        Error::EigensolveFailure(m) => Error::EigensolveFailure(format!("{what}: {m}")),
        Error::NonFinite(m) => Error::NonFinite(format!("{what}: {m}")),
        Error::NotCertified(m) => Error::NotCertified(format!("{what}: {m}")),
        Error::InsufficientSamples(m) => Error::InsufficientSamples(format!("{what}: {m}")),
        other => other,
    })
}

pub fn grid_for(config: &RunConfig) -> Result<Grid> {
    let spec = config.operator;
    let grid = build_grid(spec.domain(), spec.dim_n(), config.numerics.n)?;
    Ok(match config.numerics.stencil {
        Some(s) => grid.with_stencil(s),
        None => grid,
    })
}

/// Cache directory from the config, else from the environment.
pub fn resolve_cache_dir(config: &RunConfig) -> Option<PathBuf> {
    config
        .cache_dir
        .clone()
        .or_else(|| std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

fn acquire_basis(config: &RunConfig, k: usize) -> Result<(SpectralBasis, CacheOutcome)> {
    let grid = grid_for(config)?;
    match resolve_cache_dir(config) {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            context(basis_cache(&config.operator, &grid, k, &dir), "basis")
        }
        None => context(basis_uncached(&config.operator, &grid, k), "basis"),
    }
}

fn solve_config(config: &RunConfig, kind: Kind) -> SolveConfig {
    let nm = &config.numerics;
    let mut c = SolveConfig::new(config.operator, config.initial.u0.clone(), nm.t_final, nm.dt);
    c.touch_eps = nm.touch_eps;
    c.sample_every = nm.sample_every;
    if kind == Kind::Hyperbolic {
        c = c.with_velocity(config.initial.u1.clone());
    }
    c
}

/// Run one configuration and write its outputs plus `manifest.json`.
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let mut w = Writer::new(&config.output_dir)?;
    let k = match config.command {
        Command::Convergence => 2 * config.sweep.k_values.iter().copied().max().unwrap_or(1),
        _ => config.numerics.k,
    };
    let (basis, outcome) = acquire_basis(config, k)?;
    match config.command {
        Command::Spectrum => spectrum(config, &basis, &mut w)?,
        Command::SolveParabolic => solve(config, &basis, Kind::Parabolic, &mut w)?,
        Command::SolveHyperbolic => solve(config, &basis, Kind::Hyperbolic, &mut w)?,
        Command::Picard => picard(config, &basis, &mut w)?,
        Command::Certify => {
            let cert = certify(config, &basis, &mut w)?;
            w.json("certificate.json", &cert)?;
        }
        Command::QuenchSweep => quench_sweep(config, &basis, &mut w)?,
        Command::Convergence => convergence(config, &basis, &mut w)?,
    }
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        trajectory_format_version: TRAJECTORY_FORMAT_VERSION,
        config: config.clone(),
        basis_fingerprint: outcome.fingerprint,
        cache_status: outcome.status,
        eigensolve_performed: outcome.eigensolve_performed,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: w.files.clone(),
    };
    let s = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(w.dir.join(MANIFEST_FILE), s + "\n")?;
    Ok(manifest)
}

#[derive(Serialize)]
struct SpectrumSummary {
    n: usize,
    k: usize,
    eigenvalues: Vec<f64>,
    orthonormality_defect: f64,
    energy_diagonality_defect: f64,
    embedding_constant: f64,
    basis_version: u32,
}

fn spectrum(config: &RunConfig, basis: &SpectralBasis, w: &mut Writer) -> Result<()> {
    let spec = config.operator;
    // Closed-form eigenvalues exist for pinned intervals.
    let reference = |j: usize| match (spec.domain(), spec.bc()) {
        (Domain::Interval { length }, BoundaryCondition::Navier) => {
            let q = j as f64 * std::f64::consts::PI / length;
            Some(spec.beta() * q.powi(4) + spec.tau() * q * q)
        }
        _ => None,
    };
    let rows: Vec<Vec<String>> = basis
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &l)| vec![(i + 1).to_string(), num(l), opt(reference(i + 1))])
        .collect();
    w.csv("eigenvalues.csv", &["k", "lambda_k", "reference"], &rows)?;
    let nodes = basis.grid().nodes();
    let rows: Vec<Vec<String>> = (0..nodes.len())
        .map(|i| {
            std::iter::once(num(nodes[i]))
                .chain(basis.eigenfunctions().iter().map(|f| num(f[i])))
                .collect()
        })
        .collect();
    let names: Vec<String> = (1..=basis.k()).map(|j| format!("omega_{j}")).collect();
    let header: Vec<&str> = std::iter::once("x").chain(names.iter().map(String::as_str)).collect();
    w.csv("eigenfunctions.csv", &header, &rows)?;
    w.json(
        "spectrum.json",
        &SpectrumSummary {
            n: config.numerics.n,
            k: basis.k(),
            eigenvalues: basis.eigenvalues().to_vec(),
            orthonormality_defect: basis.orthonormality_defect(),
            energy_diagonality_defect: basis.energy_diagonality_defect(),
            embedding_constant: basis.embedding_constant()?,
            basis_version: basis.version(),
        },
    )
}

fn series_rows(traj: &Trajectory) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let s = &traj.series;
    let mut header = vec!["t", "supnorm", "l2norm", "energy", "mass"];
    if s.velocity_norm.is_some() {
        header.push("velocity_norm");
    }
    let rows = traj
        .states
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let mut r = vec![num(st.t), num(s.supnorm[i]), num(s.l2norm[i]), num(s.energy[i]), num(s.mass[i])];
            if let Some(v) = &s.velocity_norm {
                r.push(num(v[i]));
            }
            r
        })
        .collect();
    (header, rows)
}

fn write_run(prefix: &str, traj: &Trajectory, basis: &SpectralBasis, w: &mut Writer) -> Result<()> {
    w.text(&format!("{prefix}trajectory.txt"), &format_trajectory(traj)?)?;
    let (header, rows) = series_rows(traj);
    w.csv(&format!("{prefix}series.csv"), &header, &rows)?;
    let u = basis.synthesize(&traj.last().coeffs)?;
    let rows: Vec<Vec<String>> = basis.grid().nodes().iter().zip(&u).map(|(&x, &v)| vec![num(x), num(v)]).collect();
    w.csv(&format!("{prefix}profile.csv"), &["x", "u"], &rows)
}

#[derive(Serialize)]
struct SolveSummary {
    kind: Kind,
    lambda: f64,
    termination: Termination,
    touch_time: Option<f64>,
    samples: usize,
    final_time: f64,
    energy: EnergyReport,
}

fn run_solver(basis: &SpectralBasis, cfg: &SolveConfig, kind: Kind) -> Result<Trajectory> {
    match kind {
        Kind::Parabolic => context(solve_parabolic(basis, cfg), "parabolic solve"),
        Kind::Hyperbolic => context(solve_hyperbolic(basis, cfg), "hyperbolic solve"),
    }
}

fn solve(config: &RunConfig, basis: &SpectralBasis, kind: Kind, w: &mut Writer) -> Result<()> {
    let cfg = solve_config(config, kind);
    let traj = run_solver(basis, &cfg, kind)?;
    write_run("", &traj, basis, w)?;
    let energy = match kind {
        Kind::Parabolic => parabolic_energy_report(&traj, &cfg.spec, basis),
        Kind::Hyperbolic => hyperbolic_energy_report(&traj, &cfg.spec, basis),
    };
    let summary = SolveSummary {
        kind,
        lambda: cfg.spec.lambda(),
        termination: traj.termination,
        touch_time: traj.touch_time,
        samples: traj.len(),
        final_time: traj.last().t,
        energy: context(energy, "energy report")?,
    };
    w.json("summary.json", &summary)
}

fn certify(config: &RunConfig, basis: &SpectralBasis, w: &mut Writer) -> Result<Certificate> {
    let c = config
        .certify
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("certify: section required".into()))?;
    let nm = &config.numerics;
    let kind = c.mode.kind();
    let mut settings = ProbeSettings::new(
        c.n_probes,
        c.probe_t_final.unwrap_or(nm.t_final),
        c.probe_dt.unwrap_or(nm.dt),
        config.seed,
    );
    settings.modes = c.probe_modes;
    let constants = context(Constants::measure(&config.operator, basis, kind, &settings), "linear constant")?;
    w.json("constants.json", &constants)?;
    let rho = match c.rho {
        Some(r) => r,
        None => initial_data_size(basis, &solve_config(config, kind), kind)?,
    };
    let spec = &config.operator;
    let cert = match c.mode {
        CertifyMode::Global => certify_global(spec, &constants, rho, c.r),
        CertifyMode::Local => certify_local(spec, &constants, rho, c.r),
        CertifyMode::Hyperbolic => certify_hyperbolic(spec, &constants, rho, c.r, c.horizon.unwrap_or(nm.t_final)),
    };
    context(cert, "certificate")
}

#[derive(Serialize)]
struct PicardSummary {
    kind: Kind,
    lambda: f64,
    certified: bool,
    iterates: usize,
    converged: bool,
    no_contraction: bool,
    tol: f64,
    distances: Vec<f64>,
    ratios: Vec<f64>,
    w_norm: f64,
    ball_distances: Vec<f64>,
    predicted: Option<PredictedFactors>,
    /// X_T distance between the fixed point and the direct nonlinear solve.
    direct_distance: Option<f64>,
    direct_termination: Termination,
}

fn picard(config: &RunConfig, basis: &SpectralBasis, w: &mut Writer) -> Result<()> {
    let kind = config.picard.kind;
    let mut options = if config.picard.certified {
        let cert = certify(config, basis, w)?;
        w.json("certificate.json", &cert)?;
        PicardOptions::certified(cert)
    } else {
        PicardOptions::forced()
    };
    options.tol = config.numerics.tol;
    options.max_iter = config.numerics.max_iter;
    let mut cfg = solve_config(config, kind);
    cfg.sample_every = 1;
    let rep = context(picard_solve(basis, &cfg, kind, &options), "picard")?;
    let direct = run_solver(basis, &cfg, kind)?;
    let direct_distance = if direct.termination == Termination::Completed {
        Some(xt_distance(&rep.fixed_point, &direct, basis, kind)?.value)
    } else {
        None
    };
    write_run("picard_", &rep.fixed_point, basis, w)?;
    w.json(
        "picard.json",
        &PicardSummary {
            kind,
            lambda: cfg.spec.lambda(),
            certified: rep.certified,
            iterates: rep.iterates,
            converged: rep.converged,
            no_contraction: rep.no_contraction,
            tol: rep.tol,
            distances: rep.distances.clone(),
            ratios: rep.ratios.clone(),
            w_norm: rep.w_norm,
            ball_distances: rep.ball_distances.clone(),
            predicted: rep.predicted.clone(),
            direct_distance,
            direct_termination: direct.termination,
        },
    )
}

fn quench_rows(config: &RunConfig, basis: &SpectralBasis, kind: Kind) -> Result<Vec<(f64, MassReport)>> {
    let pair = context(principal_eigenpair(basis), "principal eigenpair")?;
    let threshold = 4.0 * pair.lambda1 / 27.0;
    config
        .sweep
        .lambda_factors
        .par_iter()
        .map(|&f| {
            let lambda = f * threshold;
            let mut cfg = solve_config(config, kind);
            cfg.spec = cfg.spec.with_lambda(lambda)?;
            let traj = run_solver(basis, &cfg, kind)?;
            Ok((f, context(verify_mass_inequality(&traj, basis, &pair, lambda), "mass inequality")?))
        })
        .collect()
}

fn quench_sweep(config: &RunConfig, basis: &SpectralBasis, w: &mut Writer) -> Result<()> {
    let header = [
        "lambda",
        "c0",
        "t_bound",
        "touch_time",
        "bound_satisfied",
        "lambda_factor",
        "t_bound_first_order",
        "min_jensen_residual",
        "jensen_holds",
    ];
    let mut kinds = vec![(Kind::Parabolic, "quench.csv")];
    if config.sweep.hyperbolic {
        kinds.push((Kind::Hyperbolic, "quench_hyperbolic.csv"));
    }
    for (kind, name) in kinds {
        let rows: Vec<Vec<String>> = quench_rows(config, basis, kind)?
            .into_iter()
            .map(|(f, r)| {
                let parabolic = kind == Kind::Parabolic;
                vec![
                    num(r.bound.lambda),
                    num(r.bound.c0),
                    opt(r.t_bound),
                    opt(r.touch_time),
                    opt_bool(r.bound_satisfied),
                    num(f),
                    opt(r.bound.t_bound),
                    if parabolic { num(r.min_residual) } else { String::new() },
                    if parabolic { r.inequality_holds.to_string() } else { String::new() },
                ]
            })
            .collect();
        w.csv(name, &header, &rows)?;
    }
    Ok(())
}

fn convergence(config: &RunConfig, basis: &SpectralBasis, w: &mut Writer) -> Result<()> {
    let kind = if config.sweep.hyperbolic { Kind::Hyperbolic } else { Kind::Parabolic };
    let cfg = solve_config(config, kind);
    let lam = basis.eigenvalues();
    let rows = config
        .sweep
        .k_values
        .par_iter()
        .map(|&k| {
            let coarse = run_solver(&basis.truncated(k)?, &cfg, kind)?;
            let fine = run_solver(&basis.truncated(2 * k)?, &cfg, kind)?;
            let both = coarse.termination == Termination::Completed && fine.termination == Termination::Completed;
            let (mut l2, mut w42) = (0.0, 0.0);
            let (gc, gf) = (&coarse.last().coeffs, &fine.last().coeffs);
            for j in 0..2 * k {
                let d = gc.get(j).copied().unwrap_or(0.0) - gf[j];
                l2 += d * d;
                w42 += (1.0 + lam[j] * lam[j]) * d * d;
            }
            Ok(vec![
                k.to_string(),
                num(fine.last().t),
                if both { num(l2.sqrt()) } else { String::new() },
                if both { num(w42.sqrt()) } else { String::new() },
                opt(coarse.touch_time),
                opt(fine.touch_time),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    w.csv(
        "convergence.csv",
        &["k", "t_final", "l2_difference", "w42_difference", "touch_time_k", "touch_time_2k"],
        &rows,
    )
}
