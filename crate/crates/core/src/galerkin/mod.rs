//! Faedo-Galerkin integration in the truncated eigenbasis.
//!
//! With u = sum_k g_k(t) omega_k the parabolic problem becomes
//! g_k' + lambda_k g_k = <f(u), omega_k> and the hyperbolic one
//! g_k'' + lambda_k g_k = <f(u), omega_k>, with f(u) = lambda / (1 - u)^2
//! evaluated on the grid.

mod energy;
mod hyperbolic;
mod parabolic;
mod source;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{BoundaryCondition, Domain, OperatorSpec, SpectralBasis};

pub use energy::{
    hyperbolic_energy_report, hyperbolic_energy_report_with, parabolic_energy_report,
    parabolic_energy_report_with, BoundCheck, EnergyReport, GronwallCheck, WEAK_FORM_MODES,
};
pub use hyperbolic::{solve_hyperbolic, step_hyperbolic};
pub use parabolic::{solve_parabolic, step_parabolic};
pub use source::{nonlinear_source, NonlinearSource, PrescribedSource, Source};

pub(crate) use hyperbolic::integrate_hyperbolic;
pub(crate) use parabolic::integrate_parabolic;

pub const DEFAULT_TOUCH_EPS: f64 = 1e-4;

/// Which evolution equation a trajectory belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Parabolic,
    Hyperbolic,
}

/// Modal coefficients at one instant; the velocity is present for hyperbolic states only.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinState {
    pub t: f64,
    pub coeffs: Vec<f64>,
    pub velocity: Option<Vec<f64>>,
}

/// Initial datum: grid values, coefficients or a named closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    Zero,
    /// amplitude * omega_index, 1-based.
    Mode { index: usize, amplitude: f64 },
    /// amplitude times a quartic profile with peak 1 that satisfies the boundary conditions.
    Bump { amplitude: f64 },
    Coefficients { values: Vec<f64> },
    Grid { values: Vec<f64> },
}

impl InitialDatum {
    /// Nodal values of the closed-form bump.
    pub fn bump_profile(spec: &OperatorSpec, nodes: &[f64]) -> Vec<f64> {
        match spec.domain() {
            Domain::Interval { length } => nodes
                .iter()
                .map(|&x| {
                    let s = x / length;
                    match spec.bc() {
                        BoundaryCondition::Dirichlet => 16.0 * s * s * (1.0 - s) * (1.0 - s),
                        BoundaryCondition::Navier => 3.2 * (s.powi(4) - 2.0 * s.powi(3) + s),
                    }
                })
                .collect(),
            Domain::RadialBall => {
                let n = spec.dim_n() as f64;
                nodes
                    .iter()
                    .map(|&r| {
                        let q = 1.0 - r * r;
                        match spec.bc() {
                            BoundaryCondition::Dirichlet => q * q,
                            // Laplacian vanishes at r = 1 for this choice of the second root.
                            BoundaryCondition::Navier => q * ((n + 4.0) / n - r * r) * n / (n + 4.0),
                        }
                    })
                    .collect()
            }
        }
    }

    /// Galerkin coefficients of the projected datum.
    pub fn coefficients(&self, basis: &SpectralBasis) -> Result<Vec<f64>> {
        let k = basis.k();
        match self {
            InitialDatum::Zero => Ok(vec![0.0; k]),
            InitialDatum::Mode { index, amplitude } => {
                if *index == 0 || *index > k {
                    return Err(Error::ConfigInvalid(format!(
                        "mode index {index} outside 1..={k}"
                    )));
                }
                let mut c = vec![0.0; k];
                c[index - 1] = *amplitude;
                Ok(c)
            }
            InitialDatum::Bump { amplitude } => {
                let p = Self::bump_profile(basis.spec(), basis.grid().nodes());
                let u: Vec<f64> = p.iter().map(|v| amplitude * v).collect();
                basis.analyze(&u)
            }
            InitialDatum::Coefficients { values } => {
                if values.len() != k {
                    return Err(Error::LengthMismatch {
                        expected: k,
                        got: values.len(),
                    });
                }
                Ok(values.clone())
            }
            InitialDatum::Grid { values } => {
                let n = basis.grid().resolution();
                if values.len() != n + 1 {
                    return Err(Error::LengthMismatch {
                        expected: n + 1,
                        got: values.len(),
                    });
                }
                let peak = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                let mut pinned = vec![n];
                if matches!(basis.spec().domain(), Domain::Interval { .. }) {
                    pinned.push(0);
                }
                for i in pinned {
                    if values[i].abs() > 1e-12 * peak.max(1.0) {
                        return Err(Error::ConfigInvalid(format!(
                            "initial datum violates u = 0 at boundary node {i}"
                        )));
                    }
                }
                basis.analyze(values)
            }
        }
    }
}

/// Everything a single run needs besides the basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub spec: OperatorSpec,
    pub u0: InitialDatum,
    /// Initial velocity; only read by the hyperbolic solver.
    #[serde(default)]
    pub u1: Option<InitialDatum>,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_touch_eps")]
    pub touch_eps: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

fn default_touch_eps() -> f64 {
    DEFAULT_TOUCH_EPS
}
fn default_sample_every() -> usize {
    1
}

impl SolveConfig {
    pub fn new(spec: OperatorSpec, u0: InitialDatum, t_final: f64, dt: f64) -> Self {
        SolveConfig {
            spec,
            u0,
            u1: None,
            t_final,
            dt,
            touch_eps: DEFAULT_TOUCH_EPS,
            sample_every: 1,
        }
    }

    pub fn with_velocity(mut self, u1: InitialDatum) -> Self {
        self.u1 = Some(u1);
        self
    }

    pub fn validate(&self, basis: &SpectralBasis) -> Result<()> {
        if !basis.spec().same_operator(&self.spec) {
            return Err(Error::ConfigInvalid(
                "basis was computed for a different operator".into(),
            ));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "t_final must be > 0, got {}",
                self.t_final
            )));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_final) {
            return Err(Error::ConfigInvalid(format!(
                "dt must lie in (0, t_final], got {}",
                self.dt
            )));
        }
        if !(self.touch_eps > 0.0 && self.touch_eps < 0.1) {
            return Err(Error::ConfigInvalid(format!(
                "touch_eps must lie in (0, 0.1), got {}",
                self.touch_eps
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::ConfigInvalid("sample_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Uniform step count and step size covering [0, t_final].
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Touchdown,
    Diverged,
}

/// Per-sample diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    /// max |u|.
    pub supnorm: Vec<f64>,
    pub l2norm: Vec<f64>,
    /// a(u, u) for parabolic runs, ||u'||^2 + a(u, u) for hyperbolic ones.
    pub energy: Vec<f64>,
    /// <phi_1, u> with phi_1 = omega_1 / ||omega_1||_1.
    pub mass: Vec<f64>,
    pub velocity_norm: Option<Vec<f64>>,
}

/// Sampled solution of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: Kind,
    pub lambda: f64,
    pub dt: f64,
    pub touch_eps: f64,
    pub states: Vec<GalerkinState>,
    pub series: Series,
    pub termination: Termination,
    pub touch_time: Option<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
    pub fn touched(&self) -> bool {
        self.termination == Termination::Touchdown
    }
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn last(&self) -> &GalerkinState {
        self.states.last().expect("trajectories hold at least one state")
    }

    /// Rebuild every series from the stored states.
    pub fn recompute_series(&mut self, basis: &SpectralBasis) -> Result<()> {
        let mut s = Series {
            velocity_norm: if self.kind == Kind::Hyperbolic {
                Some(Vec::new())
            } else {
                None
            },
            ..Series::default()
        };
        let phi_scale = mass_scale(basis);
        for st in &self.states {
            push_series(&mut s, basis, st, phi_scale)?;
        }
        self.series = s;
        Ok(())
    }
}

/// 1 / ||omega_1||_1, so that M = g_1 * scale.
pub(crate) fn mass_scale(basis: &SpectralBasis) -> f64 {
    let w = basis.grid().weights();
    let l1: f64 = w
        .iter()
        .zip(basis.eigenfunction(0))
        .map(|(a, b)| a * b.abs())
        .sum();
    1.0 / l1
}

pub(crate) fn push_series(
    s: &mut Series,
    basis: &SpectralBasis,
    st: &GalerkinState,
    phi_scale: f64,
) -> Result<()> {
    let u = basis.synthesize(&st.coeffs)?;
    s.supnorm.push(u.iter().fold(0.0f64, |a, x| a.max(x.abs())));
    let l2 = st.coeffs.iter().map(|g| g * g).sum::<f64>();
    s.l2norm.push(l2.sqrt());
    let mut e: f64 = basis
        .eigenvalues()
        .iter()
        .zip(&st.coeffs)
        .map(|(l, g)| l * g * g)
        .sum();
    if let Some(v) = &st.velocity {
        let vv: f64 = v.iter().map(|x| x * x).sum();
        e += vv;
        if let Some(vn) = s.velocity_norm.as_mut() {
            vn.push(vv.sqrt());
        }
    }
    s.energy.push(e);
    s.mass.push(st.coeffs[0] * phi_scale);
    Ok(())
}

pub(crate) fn max_value(basis: &SpectralBasis, g: &[f64]) -> Result<f64> {
    Ok(basis
        .synthesize(g)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// One step of a modal integrator: advances (g, v) from t by h.
pub(crate) trait Stepper {
    fn step(&self, t: f64, g: &[f64], v: Option<&[f64]>, h: f64) -> Result<(Vec<f64>, Option<Vec<f64>>)>;
    /// First stage only, using the source at (t, g); used to place the crossing when the full step cannot be evaluated.
    fn predict(&self, t: f64, g: &[f64], v: Option<&[f64]>, h: f64) -> Result<(Vec<f64>, Option<Vec<f64>>)>;
}

fn finite(g: &[f64], v: &Option<Vec<f64>>) -> bool {
    g.iter().all(|x| x.is_finite()) && v.as_ref().is_none_or(|v| v.iter().all(|x| x.is_finite()))
}

/// Coefficients and optional velocity after a trial step.
type StagePair = (Vec<f64>, Option<Vec<f64>>);

/// Shared time loop with sampling, touchdown bisection and divergence handling.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_loop(
    basis: &SpectralBasis,
    cfg: &SolveConfig,
    kind: Kind,
    lambda: f64,
    detect_touchdown: bool,
    stepper: &dyn Stepper,
    g0: Vec<f64>,
    v0: Option<Vec<f64>>,
) -> Result<Trajectory> {
    cfg.validate(basis)?;
    let (n_steps, dt) = cfg.steps();
    let threshold = 1.0 - cfg.touch_eps;
    let phi_scale = mass_scale(basis);
    let mut traj = Trajectory {
        kind,
        lambda,
        dt,
        touch_eps: cfg.touch_eps,
        states: Vec::new(),
        series: Series {
            velocity_norm: if kind == Kind::Hyperbolic {
                Some(Vec::new())
            } else {
                None
            },
            ..Series::default()
        },
        termination: Termination::Completed,
        touch_time: None,
    };
    let record = |traj: &mut Trajectory, st: GalerkinState| -> Result<()> {
        push_series(&mut traj.series, basis, &st, phi_scale)?;
        traj.states.push(st);
        Ok(())
    };
    let crosses = |g: &[f64]| -> Result<bool> { Ok(max_value(basis, g)? >= threshold) };

    let mut g = g0;
    let mut v = v0;
    record(
        &mut traj,
        GalerkinState {
            t: 0.0,
            coeffs: g.clone(),
            velocity: v.clone(),
        },
    )?;
    if detect_touchdown && crosses(&g)? {
        traj.termination = Termination::Touchdown;
        traj.touch_time = Some(0.0);
        return Ok(traj);
    }
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let attempt = stepper.step(t, &g, v.as_deref(), dt);
        let crossed = match &attempt {
            Ok((gn, vn)) => {
                if !finite(gn, vn) {
                    traj.termination = Termination::Diverged;
                    return Ok(traj);
                }
                detect_touchdown && crosses(gn)?
            }
            Err(Error::TouchdownImminent { .. }) if detect_touchdown => true,
            Err(Error::NonFinite(_)) => {
                traj.termination = Termination::Diverged;
                return Ok(traj);
            }
            Err(_) => {
                return Err(attempt.err().unwrap());
            }
        };
        if crossed {
            // Smallest sub-step at which either stage reaches the threshold.
            let cross_at = |h: f64| -> Result<Option<StagePair>> {
                let (gp, vp) = stepper.predict(t, &g, v.as_deref(), h)?;
                if crosses(&gp)? {
                    return Ok(Some((gp, vp)));
                }
                match stepper.step(t, &g, v.as_deref(), h) {
                    Ok((gs, vs)) => Ok(if crosses(&gs)? { Some((gs, vs)) } else { None }),
                    Err(Error::TouchdownImminent { .. }) => Ok(Some((gp, vp))),
                    Err(e) => Err(e),
                }
            };
            let (mut lo, mut hi) = (0.0, dt);
            let mut hit = cross_at(hi)?;
            if hit.is_none() {
                // Only reachable through round-off; fall back to the predictor.
                hit = Some(stepper.predict(t, &g, v.as_deref(), hi)?);
            }
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                match cross_at(mid)? {
                    Some(s) => {
                        hi = mid;
                        hit = Some(s);
                    }
                    None => lo = mid,
                }
            }
            let (gh, vh) = hit.expect("crossing state");
            let tt = t + hi;
            record(
                &mut traj,
                GalerkinState {
                    t: tt,
                    coeffs: gh,
                    velocity: vh,
                },
            )?;
            traj.termination = Termination::Touchdown;
            traj.touch_time = Some(tt);
            return Ok(traj);
        }
        let (gn, vn) = attempt?;
        g = gn;
        v = vn;
        let last = n + 1 == n_steps;
        if (n + 1) % cfg.sample_every == 0 || last {
            let tn = if last { cfg.t_final } else { (n + 1) as f64 * dt };
            record(
                &mut traj,
                GalerkinState {
                    t: tn,
                    coeffs: g.clone(),
                    velocity: v.clone(),
                },
            )?;
        }
    }
    Ok(traj)
}

/// Second-order derivative estimates at every sample (one-sided at the ends).
pub fn time_derivative(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if n < 3 || values.len() != n {
        return Err(Error::InsufficientSamples(format!(
            "need at least 3 samples, got {n}"
        )));
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = three_point(times[i - 1], times[i], times[i + 1], values[i - 1], values[i], values[i + 1], 1);
    }
    d[0] = three_point(times[0], times[1], times[2], values[0], values[1], values[2], 0);
    d[n - 1] = three_point(
        times[n - 3],
        times[n - 2],
        times[n - 1],
        values[n - 3],
        values[n - 2],
        values[n - 1],
        2,
    );
    Ok(d)
}

/// Derivative at node `at` of the quadratic through three points.
fn three_point(t0: f64, t1: f64, t2: f64, y0: f64, y1: f64, y2: f64, at: usize) -> f64 {
    let x = [t0, t1, t2][at];
    let l0 = ((x - t1) + (x - t2)) / ((t0 - t1) * (t0 - t2));
    let l1 = ((x - t0) + (x - t2)) / ((t1 - t0) * (t1 - t2));
    let l2 = ((x - t0) + (x - t1)) / ((t2 - t0) * (t2 - t1));
    l0 * y0 + l1 * y1 + l2 * y2
}

/// Trapezoid rule over possibly nonuniform samples.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Running trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..times.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        out.push(acc);
    }
    out
}
