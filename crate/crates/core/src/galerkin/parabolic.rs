//! Second-order exponential Runge-Kutta (ETD2RK) per mode:
//!
//!   a      = e^{z} g_n + h phi_1(z) F(t_n, g_n)
//!   g_{n+1} = a + h phi_2(z) (F(t_n + h, a) - F(t_n, g_n)),   z = -lambda_k h,
//!
//! with phi_1(z) = (e^z - 1)/z and phi_2(z) = (e^z - 1 - z)/z^2.

use super::source::{NonlinearSource, Source};
use super::{run_loop, GalerkinState, Kind, SolveConfig, Stepper, Trajectory, DEFAULT_TOUCH_EPS};
use crate::error::{Error, Result};
use crate::spectrum::{OperatorSpec, SpectralBasis};

fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let mut term = 0.5;
        let mut sum = 0.0;
        // 1/2 + z/6 + z^2/24 + ...
        for k in 2..12 {
            sum += term;
            term *= z / (k as f64 + 1.0);
        }
        sum
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

struct Etd<'a> {
    eigenvalues: &'a [f64],
    source: &'a dyn Source,
}

impl Etd<'_> {
    fn factors(&self, h: f64) -> Vec<(f64, f64, f64)> {
        self.eigenvalues
            .iter()
            .map(|l| {
                let z = -l * h;
                (z.exp(), phi1(z), phi2(z))
            })
            .collect()
    }

    fn stage(&self, fac: &[(f64, f64, f64)], g: &[f64], f0: &[f64], h: f64) -> Vec<f64> {
        fac.iter()
            .zip(g.iter().zip(f0))
            .map(|(&(e, p1, _), (g, f))| e * g + h * p1 * f)
            .collect()
    }
}

impl Stepper for Etd<'_> {
    fn step(&self, t: f64, g: &[f64], _v: Option<&[f64]>, h: f64) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let fac = self.factors(h);
        let f0 = self.source.load(t, g)?;
        let a = self.stage(&fac, g, &f0, h);
        let f1 = self.source.load(t + h, &a)?;
        let out = fac
            .iter()
            .zip(a.iter().zip(f0.iter().zip(&f1)))
            .map(|(&(_, _, p2), (a, (f0, f1)))| a + h * p2 * (f1 - f0))
            .collect();
        Ok((out, None))
    }

    fn predict(&self, t: f64, g: &[f64], _v: Option<&[f64]>, h: f64) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let fac = self.factors(h);
        let f0 = self.source.load(t, g)?;
        Ok((self.stage(&fac, g, &f0, h), None))
    }
}

/// One ETD2RK step of the nonlinear problem.
pub fn step_parabolic(
    state: &GalerkinState,
    dt: f64,
    spec: &OperatorSpec,
    basis: &SpectralBasis,
) -> Result<GalerkinState> {
    if !(dt > 0.0) {
        return Err(Error::ConfigInvalid(format!("dt must be > 0, got {dt}")));
    }
    if state.coeffs.len() != basis.k() {
        return Err(Error::LengthMismatch {
            expected: basis.k(),
            got: state.coeffs.len(),
        });
    }
    let src = NonlinearSource::new(basis, spec.lambda(), DEFAULT_TOUCH_EPS);
    let etd = Etd {
        eigenvalues: basis.eigenvalues(),
        source: &src,
    };
    let (g, _) = etd.step(state.t, &state.coeffs, None, dt)?;
    Ok(GalerkinState {
        t: state.t + dt,
        coeffs: g,
        velocity: None,
    })
}

/// Integrate with an arbitrary source; touchdown detection only for the nonlinear one.
pub(crate) fn integrate_parabolic(
    basis: &SpectralBasis,
    cfg: &SolveConfig,
    source: &dyn Source,
    lambda: f64,
    detect_touchdown: bool,
) -> Result<Trajectory> {
    let g0 = cfg.u0.coefficients(basis)?;
    let etd = Etd {
        eigenvalues: basis.eigenvalues(),
        source,
    };
    run_loop(basis, cfg, Kind::Parabolic, lambda, detect_touchdown, &etd, g0, None)
}

/// Parabolic Galerkin solve up to `t_final` or touchdown.
pub fn solve_parabolic(basis: &SpectralBasis, cfg: &SolveConfig) -> Result<Trajectory> {
    let lambda = cfg.spec.lambda();
    let src = NonlinearSource::new(basis, lambda, cfg.touch_eps);
    integrate_parabolic(basis, cfg, &src, lambda, lambda > 0.0)
}
