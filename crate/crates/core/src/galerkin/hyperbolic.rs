//! Trigonometric integrator for g'' + lambda_k g = F.
//!
//! Over a step h with a frozen force F each mode rotates exactly:
//!
//!   g(h)  = cos(w h) g + sin(w h)/w v + (1 - cos(w h))/w^2 F
//!   g'(h) = -w sin(w h) g + cos(w h) v + sin(w h)/w F,     w = sqrt(lambda_k).
//!
//! The force is frozen at the half-step predictor, which makes the scheme
//! second order and exact when F = 0.

use super::source::{NonlinearSource, Source};
use super::{run_loop, GalerkinState, Kind, SolveConfig, Stepper, Trajectory, DEFAULT_TOUCH_EPS};
use crate::error::{Error, Result};
use crate::spectrum::{OperatorSpec, SpectralBasis};

/// (cos x, h sinc x, h^2 (1 - cos x)/x^2) for x = w h.
fn rotation(w: f64, h: f64) -> (f64, f64, f64) {
    let x = w * h;
    if x.abs() < 1e-4 {
        let x2 = x * x;
        (
            1.0 - x2 / 2.0 + x2 * x2 / 24.0,
            h * (1.0 - x2 / 6.0 + x2 * x2 / 120.0),
            h * h * (0.5 - x2 / 24.0 + x2 * x2 / 720.0),
        )
    } else {
        let half = (0.5 * x).sin() / (0.5 * x);
        (x.cos(), h * x.sin() / x, 0.5 * h * h * half * half)
    }
}

struct Trig<'a> {
    freqs: Vec<f64>,
    source: &'a dyn Source,
}

impl Trig<'_> {
    fn rotate(&self, g: &[f64], v: &[f64], f: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
        let mut gn = Vec::with_capacity(g.len());
        let mut vn = Vec::with_capacity(g.len());
        for k in 0..g.len() {
            let w = self.freqs[k];
            let (c, s, q) = rotation(w, h);
            gn.push(c * g[k] + s * v[k] + q * f[k]);
            vn.push(-w * w * s * g[k] + c * v[k] + s * f[k]);
        }
        (gn, vn)
    }
}

impl Stepper for Trig<'_> {
    fn step(&self, t: f64, g: &[f64], v: Option<&[f64]>, h: f64) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let v = v.ok_or_else(|| Error::ConfigInvalid("hyperbolic state needs a velocity".into()))?;
        let f0 = self.source.load(t, g)?;
        let (gh, _) = self.rotate(g, v, &f0, 0.5 * h);
        let fh = self.source.load(t + 0.5 * h, &gh)?;
        let (gn, vn) = self.rotate(g, v, &fh, h);
        Ok((gn, Some(vn)))
    }

    fn predict(&self, t: f64, g: &[f64], v: Option<&[f64]>, h: f64) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let v = v.ok_or_else(|| Error::ConfigInvalid("hyperbolic state needs a velocity".into()))?;
        let f0 = self.source.load(t, g)?;
        let (gn, vn) = self.rotate(g, v, &f0, h);
        Ok((gn, Some(vn)))
    }
}

fn trig<'a>(basis: &SpectralBasis, source: &'a dyn Source) -> Trig<'a> {
    Trig {
        freqs: basis.eigenvalues().iter().map(|l| l.sqrt()).collect(),
        source,
    }
}

/// One step of the nonlinear wave problem; `dt` may be negative.
pub fn step_hyperbolic(
    state: &GalerkinState,
    dt: f64,
    spec: &OperatorSpec,
    basis: &SpectralBasis,
) -> Result<GalerkinState> {
    if state.coeffs.len() != basis.k() {
        return Err(Error::LengthMismatch {
            expected: basis.k(),
            got: state.coeffs.len(),
        });
    }
    let src = NonlinearSource::new(basis, spec.lambda(), DEFAULT_TOUCH_EPS);
    let (g, v) = trig(basis, &src).step(state.t, &state.coeffs, state.velocity.as_deref(), dt)?;
    Ok(GalerkinState {
        t: state.t + dt,
        coeffs: g,
        velocity: v,
    })
}

pub(crate) fn integrate_hyperbolic(
    basis: &SpectralBasis,
    cfg: &SolveConfig,
    source: &dyn Source,
    lambda: f64,
    detect_touchdown: bool,
) -> Result<Trajectory> {
    let g0 = cfg.u0.coefficients(basis)?;
    let v0 = match &cfg.u1 {
        Some(d) => d.coefficients(basis)?,
        None => {
            return Err(Error::ConfigInvalid(
                "the hyperbolic solver needs an initial velocity u1".into(),
            ))
        }
    };
    let stepper = trig(basis, source);
    run_loop(basis, cfg, Kind::Hyperbolic, lambda, detect_touchdown, &stepper, g0, Some(v0))
}

/// Hyperbolic Galerkin solve up to `t_final` or touchdown.
pub fn solve_hyperbolic(basis: &SpectralBasis, cfg: &SolveConfig) -> Result<Trajectory> {
    let lambda = cfg.spec.lambda();
    let src = NonlinearSource::new(basis, lambda, cfg.touch_eps);
    integrate_hyperbolic(basis, cfg, &src, lambda, lambda > 0.0)
}
