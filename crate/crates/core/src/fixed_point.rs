//! The solution map F(u) = solution of the linear problem with source
//! lambda / (1 - u)^2, its Picard iteration, and the discrete X_T norms it
//! is measured in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificates::{Certificate, Regime};
use crate::error::{Error, Result};
use crate::galerkin::{
    integrate_hyperbolic, integrate_parabolic, time_derivative, trapezoid, GalerkinState, Kind, PrescribedSource,
    SolveConfig, Trajectory,
};
use crate::spectrum::SpectralBasis;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;
/// Consecutive expanding steps after which the iteration is abandoned.
const EXPANSION_LIMIT: usize = 3;

/// A named contribution to ||v||_{X_T}^2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XTTerm {
    pub name: String,
    pub value: f64,
}

/// Discrete X_T norm; `value^2` is the sum of the terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XTNorm {
    pub value: f64,
    pub breakdown: Vec<XTTerm>,
}

impl XTNorm {
    fn from_terms(terms: Vec<(&str, f64)>) -> Self {
        let sq: f64 = terms.iter().map(|t| t.1).sum();
        XTNorm {
            value: sq.sqrt(),
            breakdown: terms
                .into_iter()
                .map(|(n, v)| XTTerm {
                    name: n.to_string(),
                    value: v,
                })
                .collect(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.breakdown.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// Time derivative of each mode; secant for two samples.
fn rates(times: &[f64], rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = times.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "X_T norm needs at least 2 samples, got {n}"
        )));
    }
    let k = rows[0].len();
    if n == 2 {
        let d: Vec<f64> = (0..k).map(|j| (rows[1][j] - rows[0][j]) / (times[1] - times[0])).collect();
        return Ok(vec![d.clone(), d]);
    }
    let mut out = vec![vec![0.0; k]; n];
    for j in 0..k {
        let s: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        for (i, d) in time_derivative(times, &s)?.into_iter().enumerate() {
            out[i][j] = d;
        }
    }
    Ok(out)
}

fn weighted(row: &[f64], lam: &[f64], w: impl Fn(f64) -> f64) -> f64 {
    row.iter().zip(lam).map(|(g, &l)| w(l) * g * g).sum()
}

fn w22(l: f64) -> f64 {
    1.0 + l
}
fn w42(l: f64) -> f64 {
    1.0 + l * l
}
fn one(_: f64) -> f64 {
    1.0
}

/// X_T norm of sampled modal data.
///
/// Parabolic: int ||v_t||_{W22}^2 + int ||v||_{W22}^2 + max ||v||_{W42}^2 + max ||v_t||^2.
/// Hyperbolic: max ||v||_{W42}^2 + max ||v_t||_{W22}^2 + max ||v_tt||^2.
/// Velocities, when given, replace the differenced first derivative.
pub fn xt_norm_samples(
    times: &[f64],
    coeffs: &[Vec<f64>],
    velocity: Option<&[Vec<f64>]>,
    eigenvalues: &[f64],
    kind: Kind,
) -> Result<XTNorm> {
    if times.len() != coeffs.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: coeffs.len(),
        });
    }
    if coeffs.iter().any(|c| c.len() != eigenvalues.len()) {
        return Err(Error::LengthMismatch {
            expected: eigenvalues.len(),
            got: coeffs.iter().map(|c| c.len()).find(|&l| l != eigenvalues.len()).unwrap_or(0),
        });
    }
    let vt = match velocity {
        Some(v) => v.to_vec(),
        None => rates(times, coeffs)?,
    };
    let lam = eigenvalues;
    let max_of = |rows: &[Vec<f64>], w: fn(f64) -> f64| rows.iter().map(|r| weighted(r, lam, w)).fold(0.0, f64::max);
    let int_of = |rows: &[Vec<f64>], w: fn(f64) -> f64| {
        let s: Vec<f64> = rows.iter().map(|r| weighted(r, lam, w)).collect();
        trapezoid(times, &s)
    };
    Ok(match kind {
        Kind::Parabolic => XTNorm::from_terms(vec![
            ("int_rate_w22", int_of(&vt, w22)),
            ("int_w22", int_of(coeffs, w22)),
            ("max_w42", max_of(coeffs, w42)),
            ("max_rate_l2", max_of(&vt, one)),
        ]),
        Kind::Hyperbolic => {
            let vtt = rates(times, &vt)?;
            XTNorm::from_terms(vec![
                ("max_w42", max_of(coeffs, w42)),
                ("max_rate_w22", max_of(&vt, w22)),
                ("max_accel_l2", max_of(&vtt, one)),
            ])
        }
    })
}

fn velocities(traj: &Trajectory) -> Option<Vec<Vec<f64>>> {
    traj.states.iter().map(|s| s.velocity.clone()).collect()
}

/// X_T norm of a trajectory in the norm belonging to `kind`.
pub fn xt_norm(traj: &Trajectory, basis: &SpectralBasis, kind: Kind) -> Result<XTNorm> {
    let coeffs: Vec<Vec<f64>> = traj.states.iter().map(|s| s.coeffs.clone()).collect();
    let vel = velocities(traj);
    xt_norm_samples(&traj.times(), &coeffs, vel.as_deref(), basis.eigenvalues(), kind)
}

/// ||a - b||_{X_T} for trajectories sampled at the same times.
pub fn xt_distance(a: &Trajectory, b: &Trajectory, basis: &SpectralBasis, kind: Kind) -> Result<XTNorm> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let times = a.times();
    let scale = times.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    if times.iter().zip(b.times()).any(|(s, t)| (s - t).abs() > 1e-12 * scale) {
        return Err(Error::ConfigInvalid("trajectories are sampled at different times".into()));
    }
    let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
    let coeffs: Vec<Vec<f64>> = a.states.iter().zip(&b.states).map(|(s, t)| diff(&s.coeffs, &t.coeffs)).collect();
    let vel = match (velocities(a), velocities(b)) {
        (Some(va), Some(vb)) => Some(va.iter().zip(&vb).map(|(x, y)| diff(x, y)).collect::<Vec<_>>()),
        _ => None,
    };
    xt_norm_samples(&times, &coeffs, vel.as_deref(), basis.eigenvalues(), kind)
}

/// Galerkin loads of lambda / (1 - u)^2 at every sample of `traj`.
fn source_loads(traj: &Trajectory, basis: &SpectralBasis, lambda: f64, touch_eps: f64) -> Result<Vec<Vec<f64>>> {
    traj.states
        .iter()
        .map(|s| {
            if lambda == 0.0 {
                return Ok(vec![0.0; basis.k()]);
            }
            let u = basis.synthesize(&s.coeffs)?;
            let max_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(max_u < 1.0 - touch_eps) {
                return Err(Error::TouchdownImminent { max_u });
            }
            let f: Vec<f64> = u.iter().map(|x| lambda / ((1.0 - x) * (1.0 - x))).collect();
            basis.analyze(&f)
        })
        .collect()
}

/// Solve the linear problem driven by a prescribed load with the configured initial data.
pub fn solve_linear(basis: &SpectralBasis, config: &SolveConfig, source: &PrescribedSource, kind: Kind) -> Result<Trajectory> {
    match kind {
        Kind::Parabolic => integrate_parabolic(basis, config, source, config.spec.lambda(), false),
        Kind::Hyperbolic => integrate_hyperbolic(basis, config, source, config.spec.lambda(), false),
    }
}

/// F(u): the linear solution with source lambda / (1 - u(t))^2, interpolated linearly between samples of `u`.
pub fn apply_f(basis: &SpectralBasis, source_traj: &Trajectory, config: &SolveConfig, kind: Kind) -> Result<Trajectory> {
    let loads = source_loads(source_traj, basis, config.spec.lambda(), config.touch_eps)?;
    let src = if loads.len() == 1 {
        PrescribedSource::constant(loads.into_iter().next().unwrap())
    } else {
        PrescribedSource::new(source_traj.times(), loads)?
    };
    solve_linear(basis, config, &src, kind)
}

/// The homogeneous solution w with the configured initial data.
pub fn homogeneous_solution(basis: &SpectralBasis, config: &SolveConfig, kind: Kind) -> Result<Trajectory> {
    solve_linear(basis, config, &PrescribedSource::constant(vec![0.0; basis.k()]), kind)
}

/// Why a Picard run is allowed to start.
#[derive(Clone, Debug)]
pub enum Admission {
    Certified(Box<Certificate>),
    /// Run without a certificate, for sweeps near or past the threshold.
    Forced,
}

#[derive(Clone, Debug)]
pub struct PicardOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub admission: Admission,
}

impl PicardOptions {
    pub fn forced() -> Self {
        PicardOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            admission: Admission::Forced,
        }
    }

    pub fn certified(cert: Certificate) -> Self {
        PicardOptions {
            admission: Admission::Certified(Box::new(cert)),
            ..Self::forced()
        }
    }
}

/// Contraction factors predicted from a certificate's constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedFactors {
    /// 2 lambda C (r + k(r)).
    pub uniform: f64,
    /// 2 lambda T^{1/2} C (r + k(r)).
    pub sqrt_horizon: f64,
    pub r: f64,
}

#[derive(Clone, Debug)]
pub struct PicardReport {
    pub kind: Kind,
    pub iterates: usize,
    /// d_m = ||u^{m+1} - u^m||_{X_T}.
    pub distances: Vec<f64>,
    /// d_{m+1} / d_m.
    pub ratios: Vec<f64>,
    pub converged: bool,
    /// Set when the distances grew for several consecutive iterations.
    pub no_contraction: bool,
    pub tol: f64,
    /// ||w||_{X_T} of the homogeneous solution the iteration starts from.
    pub w_norm: f64,
    /// ||u^m - w||_{X_T} for every iterate.
    pub ball_distances: Vec<f64>,
    pub predicted: Option<PredictedFactors>,
    pub certified: bool,
    pub fixed_point: Trajectory,
}

impl PicardReport {
    pub fn max_ratio_from(&self, m: usize) -> f64 {
        self.ratios.iter().skip(m).copied().fold(0.0, f64::max)
    }
}

fn admit(options: &PicardOptions, config: &SolveConfig, kind: Kind) -> Result<Option<PredictedFactors>> {
    let cert = match &options.admission {
        Admission::Forced => return Ok(None),
        Admission::Certified(c) => c,
    };
    if cert.kind != kind {
        return Err(Error::NotCertified(format!("certificate was issued for {:?} runs", cert.kind)));
    }
    if cert.lambda != config.spec.lambda() {
        return Err(Error::NotCertified(format!(
            "certificate is for lambda = {}, run has {}",
            cert.lambda,
            config.spec.lambda()
        )));
    }
    let admitted = match cert.regime {
        Regime::Global => true,
        Regime::GlobalOnHorizon | Regime::Local => cert.horizon.is_some_and(|h| config.t_final <= h),
        Regime::Uncertified => false,
    };
    if !admitted {
        return Err(Error::NotCertified(format!(
            "regime {:?} does not cover T = {}",
            cert.regime, config.t_final
        )));
    }
    let base = 2.0 * cert.lambda * cert.c_lin * (cert.r + cert.k_r);
    Ok(Some(PredictedFactors {
        uniform: base,
        sqrt_horizon: base * config.t_final.sqrt(),
        r: cert.r,
    }))
}

/// Picard iteration u^{m+1} = F(u^m) started from the homogeneous solution.
pub fn picard_solve(basis: &SpectralBasis, config: &SolveConfig, kind: Kind, options: &PicardOptions) -> Result<PicardReport> {
    config.validate(basis)?;
    if options.max_iter == 0 || !(options.tol > 0.0) {
        return Err(Error::ConfigInvalid("max_iter must be >= 1 and tol > 0".into()));
    }
    let predicted = admit(options, config, kind)?;
    let mut cfg = config.clone();
    cfg.sample_every = 1;

    let w = homogeneous_solution(basis, &cfg, kind)?;
    let w_norm = xt_norm(&w, basis, kind)?.value;
    let mut current = w.clone();
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let mut ball = vec![0.0];
    let mut converged = false;
    let mut no_contraction = false;
    let mut expanding = 0;
    for _ in 0..options.max_iter {
        let next = apply_f(basis, &current, &cfg, kind)?;
        let d = xt_distance(&next, &current, basis, kind)?.value;
        ball.push(xt_distance(&next, &w, basis, kind)?.value);
        if let Some(&prev) = distances.last() {
            let q: f64 = d / prev;
            ratios.push(q);
            expanding = if q > 1.0 { expanding + 1 } else { 0 };
        }
        distances.push(d);
        current = next;
        if !d.is_finite() {
            no_contraction = true;
            break;
        }
        if d < options.tol {
            converged = true;
            break;
        }
        if expanding >= EXPANSION_LIMIT {
            no_contraction = true;
            break;
        }
    }
    Ok(PicardReport {
        kind,
        iterates: distances.len(),
        distances,
        ratios,
        converged,
        no_contraction,
        tol: options.tol,
        w_norm,
        ball_distances: ball,
        certified: predicted.is_some(),
        predicted,
        fixed_point: current,
    })
}

/// A smooth random modal history sum_j a_j cos(2 pi f_j t / T + p_j) omega_j and its time derivative.
///
/// Mode amplitudes decay like 1/j^2 over the first `modes` members; the
/// stream index makes probe i independent of how many probes run.
pub fn smooth_random_history(
    k: usize,
    modes: usize,
    times: &[f64],
    horizon: f64,
    seed: u64,
    stream: u64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let m = modes.min(k);
    let params: Vec<(f64, f64, f64)> = (0..m)
        .map(|j| {
            let a: f64 = rng.gen_range(-1.0..1.0) / ((j + 1) as f64).powi(2);
            let f: f64 = rng.gen_range(0.0..3.0);
            let p: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (a, std::f64::consts::TAU * f / horizon, p)
        })
        .collect();
    let mut vals = Vec::with_capacity(times.len());
    let mut ders = Vec::with_capacity(times.len());
    for &t in times {
        let mut v = vec![0.0; k];
        let mut d = vec![0.0; k];
        for (j, &(a, w, p)) in params.iter().enumerate() {
            v[j] = a * (w * t + p).cos();
            d[j] = -a * w * (w * t + p).sin();
        }
        vals.push(v);
        ders.push(d);
    }
    (vals, ders)
}

/// A random trajectory at distance `radius` from `center` in the X_T norm of `kind`.
pub fn random_ball_point(
    basis: &SpectralBasis,
    center: &Trajectory,
    kind: Kind,
    radius: f64,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    let times = center.times();
    let horizon = *times.last().unwrap_or(&1.0);
    let (vals, ders) = smooth_random_history(basis.k(), 6, &times, horizon.max(f64::MIN_POSITIVE), seed, stream);
    let dv = if kind == Kind::Hyperbolic { Some(ders.as_slice()) } else { None };
    let norm = xt_norm_samples(&times, &vals, dv, basis.eigenvalues(), kind)?.value;
    if norm == 0.0 {
        return Ok(center.clone());
    }
    let s = radius / norm;
    let mut out = center.clone();
    for (i, st) in out.states.iter_mut().enumerate() {
        st.coeffs.iter_mut().zip(&vals[i]).for_each(|(c, v)| *c += s * v);
        if let Some(vel) = st.velocity.as_mut() {
            vel.iter_mut().zip(&ders[i]).for_each(|(c, v)| *c += s * v);
        }
    }
    out.recompute_series(basis)?;
    Ok(out)
}

/// Builds a trajectory from raw samples, for tests and tooling.
pub fn trajectory_from_samples(
    basis: &SpectralBasis,
    kind: Kind,
    lambda: f64,
    times: &[f64],
    coeffs: Vec<Vec<f64>>,
    velocity: Option<Vec<Vec<f64>>>,
) -> Result<Trajectory> {
    let states = match velocity {
        Some(v) => times
            .iter()
            .zip(coeffs.into_iter().zip(v))
            .map(|(&t, (c, v))| GalerkinState {
                t,
                coeffs: c,
                velocity: Some(v),
            })
            .collect(),
        None => times
            .iter()
            .zip(coeffs)
            .map(|(&t, c)| GalerkinState {
                t,
                coeffs: c,
                velocity: None,
            })
            .collect(),
    };
    let mut traj = Trajectory {
        kind,
        lambda,
        dt: if times.len() > 1 { times[1] - times[0] } else { 0.0 },
        touch_eps: crate::galerkin::DEFAULT_TOUCH_EPS,
        states,
        series: Default::default(),
        termination: crate::galerkin::Termination::Completed,
        touch_time: None,
    };
    traj.recompute_series(basis)?;
    Ok(traj)
}
