//! Eigenfunction method for touchdown.
//!
//! With phi_1 >= 0, ||phi_1||_1 = 1 and M(t) = <phi_1, u(t)>, Jensen gives
//! M' >= g(M) := -lambda_1 M + lambda / (1 - M)^2. If g >= c0 > 0 then
//! M(t) >= M(0) + c0 t, and M <= 1 forces touchdown before (1 - M(0)) / c0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{time_derivative, Kind, Trajectory};
use crate::spectrum::{BoundaryCondition, Domain, SpectralBasis};

/// Relative tolerance on negative values of the normalized phi_1.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// lambda_1 with the nonnegative, unit-L^1 principal eigenfunction on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalEigenpair {
    pub lambda1: f64,
    pub phi1: Vec<f64>,
    /// M = coeffs[0] * mass_scale.
    pub mass_scale: f64,
}

fn admissible(basis: &SpectralBasis) -> Result<()> {
    let spec = basis.spec();
    match (spec.domain(), spec.bc()) {
        (_, BoundaryCondition::Navier) | (Domain::RadialBall, BoundaryCondition::Dirichlet) => Ok(()),
        (Domain::Interval { .. }, BoundaryCondition::Dirichlet) => Err(Error::DomainNotAdmissible(
            "clamped conditions need a ball: without a maximum principle the first eigenfunction \
             is only known to be positive on B"
                .into(),
        )),
    }
}

pub fn principal_eigenpair(basis: &SpectralBasis) -> Result<PrincipalEigenpair> {
    admissible(basis)?;
    let w = basis.grid().weights();
    let omega = basis.eigenfunction(0);
    let signed: f64 = w.iter().zip(omega).map(|(a, b)| a * b).sum();
    let sign = if signed < 0.0 { -1.0 } else { 1.0 };
    let l1: f64 = w.iter().zip(omega).map(|(a, b)| a * b.abs()).sum();
    let phi1: Vec<f64> = omega.iter().map(|x| sign * x / l1).collect();
    let peak = phi1.iter().fold(0.0f64, |a, &b| a.max(b));
    if let Some((index, &value)) = phi1
        .iter()
        .enumerate()
        .find(|(_, &v)| v < -POSITIVITY_TOL * peak.max(1.0))
    {
        return Err(Error::PositivityFailure { index, value });
    }
    Ok(PrincipalEigenpair {
        lambda1: basis.eigenvalues()[0],
        mass_scale: sign / l1,
        phi1,
    })
}

impl PrincipalEigenpair {
    /// M = <phi_1, u> for a coefficient vector.
    pub fn mass(&self, coeffs: &[f64]) -> f64 {
        coeffs[0] * self.mass_scale
    }
}

/// g(M) = -lambda_1 M + lambda / (1 - M)^2.
pub fn g_of_m(m: f64, lambda: f64, lambda1: f64) -> Result<f64> {
    if !(m < 1.0) {
        return Err(Error::MassAtTouchdown(m));
    }
    Ok(-lambda1 * m + lambda / ((1.0 - m) * (1.0 - m)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchConstants {
    /// 4 lambda_1 / 27.
    pub lambda_threshold: f64,
    /// inf of g over the mass range.
    pub c0: f64,
    /// Minimizer of g, or the boundary of the range when the minimizer lies outside it.
    pub m_star: f64,
}

/// c0 = inf over M < 1 of g(M).
///
/// With s = 1 - M, g = lambda_1 (s - 1) + lambda / s^2 is minimized at
/// s* = (2 lambda / lambda_1)^{1/3}, where g = 3/2 lambda_1 s* - lambda_1.
pub fn quench_constants(lambda: f64, lambda1: f64) -> QuenchConstants {
    quench_constants_on(lambda, lambda1, f64::NEG_INFINITY)
}

/// c0 = inf over M in [m_ref, 1) of g(M).
pub fn quench_constants_on(lambda: f64, lambda1: f64, m_ref: f64) -> QuenchConstants {
    let lambda_threshold = 4.0 * lambda1 / 27.0;
    let s_star = (2.0 * lambda / lambda1).cbrt();
    if s_star <= 1.0 - m_ref {
        let c0 = 1.5 * lambda1 * s_star - lambda1;
        QuenchConstants {
            lambda_threshold,
            // At the threshold the difference is pure rounding; report it as exactly zero.
            c0: if c0.abs() <= 8.0 * f64::EPSILON * lambda1 { 0.0 } else { c0 },
            m_star: 1.0 - s_star,
        }
    } else {
        QuenchConstants {
            lambda_threshold,
            c0: -lambda1 * m_ref + lambda / ((1.0 - m_ref) * (1.0 - m_ref)),
            m_star: m_ref,
        }
    }
}

/// (1 - M0) / c0.
pub fn touchdown_bound(m0: f64, c0: f64) -> Result<f64> {
    if !(m0 < 1.0) {
        return Err(Error::MassAtTouchdown(m0));
    }
    if !(c0 > 0.0) {
        return Err(Error::NotSupercritical(c0));
    }
    Ok((1.0 - m0) / c0)
}

/// Bound for M'' >= c0: the positive root of M0 + M1 T + c0 T^2 / 2 = 1.
pub fn second_order_touchdown_bound(m0: f64, m1: f64, c0: f64) -> Result<f64> {
    if !(m0 < 1.0) {
        return Err(Error::MassAtTouchdown(m0));
    }
    if !(c0 > 0.0) {
        return Err(Error::NotSupercritical(c0));
    }
    let gap = 1.0 - m0;
    // Rationalized root, stable when m1 is large and positive.
    Ok(2.0 * gap / (m1 + (m1 * m1 + 2.0 * c0 * gap).sqrt()))
}

/// Threshold, constants and bounds for one (basis, lambda, initial mass).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchBound {
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda_threshold: f64,
    /// inf of g over all M < 1.
    pub c0: f64,
    /// inf of g over M >= M0.
    pub c0_reachable: f64,
    pub m0: f64,
    /// (1 - M0) / c0 when c0 > 0.
    pub t_bound: Option<f64>,
    pub t_bound_reachable: Option<f64>,
    pub applicable: bool,
}

pub fn quench_bound(basis: &SpectralBasis, lambda: f64, m0: f64) -> Result<QuenchBound> {
    let applicable = admissible(basis).is_ok();
    let lambda1 = basis.eigenvalues()[0];
    let q = quench_constants(lambda, lambda1);
    let qr = quench_constants_on(lambda, lambda1, m0);
    Ok(QuenchBound {
        lambda,
        lambda1,
        lambda_threshold: q.lambda_threshold,
        c0: q.c0,
        c0_reachable: qr.c0,
        m0,
        t_bound: touchdown_bound(m0, q.c0).ok(),
        t_bound_reachable: touchdown_bound(m0, qr.c0).ok(),
        applicable,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub kind: Kind,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    /// dM/dt - g(M) per sample; empty for hyperbolic runs.
    pub residual: Vec<f64>,
    pub min_residual: f64,
    /// 1e-3 lambda.
    pub tol: f64,
    pub inequality_holds: bool,
    /// max M over samples strictly before touchdown.
    pub max_mass_before_touchdown: f64,
    pub touch_time: Option<f64>,
    pub bound: QuenchBound,
    /// First-order bound for parabolic runs, second-order bound (with M'(0)) for hyperbolic ones.
    pub t_bound: Option<f64>,
    /// touch_time <= t_bound (1 + 1e-2), when both exist.
    pub bound_satisfied: Option<bool>,
}

/// Mass functional along a trajectory, the differential inequality residual and the bound comparison.
pub fn verify_mass_inequality(
    traj: &Trajectory,
    basis: &SpectralBasis,
    pair: &PrincipalEigenpair,
    lambda: f64,
) -> Result<MassReport> {
    admissible(basis)?;
    let times = traj.times();
    let mass: Vec<f64> = traj.states.iter().map(|s| pair.mass(&s.coeffs)).collect();
    let m0 = mass[0];
    let tol = 1e-3 * lambda;
    let (residual, min_residual) = match traj.kind {
        Kind::Parabolic => {
            let dm = time_derivative(&times, &mass)?;
            let r = mass
                .iter()
                .zip(&dm)
                .map(|(&m, &d)| g_of_m(m, lambda, pair.lambda1).map(|g| d - g))
                .collect::<Result<Vec<f64>>>()?;
            let mn = r.iter().copied().fold(f64::INFINITY, f64::min);
            (r, mn)
        }
        Kind::Hyperbolic => (Vec::new(), f64::INFINITY),
    };
    let n_before = if traj.touched() { mass.len() - 1 } else { mass.len() };
    let max_before = mass[..n_before].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound = quench_bound(basis, lambda, m0)?;
    let t_bound = match traj.kind {
        Kind::Parabolic => bound.t_bound,
        Kind::Hyperbolic => {
            let m1 = traj.states[0].velocity.as_ref().map_or(0.0, |v| pair.mass(v));
            second_order_touchdown_bound(m0, m1, bound.c0).ok()
        }
    };
    let bound_satisfied = match (traj.touch_time, t_bound) {
        (Some(t), Some(b)) => Some(t <= b * 1.01),
        (None, Some(b)) if traj.last().t >= b * 1.01 => Some(false),
        _ => None,
    };
    Ok(MassReport {
        kind: traj.kind,
        times,
        mass,
        inequality_holds: min_residual >= -tol,
        residual,
        min_residual,
        tol,
        max_mass_before_touchdown: max_before,
        touch_time: traj.touch_time,
        bound,
        t_bound,
        bound_satisfied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::{solve_parabolic, InitialDatum, SolveConfig};
    use crate::spectrum::{build_grid, compute_spectrum, OperatorSpec};
    use std::f64::consts::PI;

    /// min of g over [-2, 1 - 1e-6] by direct scan with step 1e-6.
    fn scan_min(lambda: f64, lambda1: f64) -> f64 {
        let n = (3.0 / 1e-6) as usize;
        (0..n)
            .map(|i| -2.0 + i as f64 * 1e-6)
            .map(|m| -lambda1 * m + lambda / ((1.0 - m) * (1.0 - m)))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn g_values() {
        assert_eq!(g_of_m(0.0, 2.5, 7.0).unwrap(), 2.5);
        assert!((g_of_m(1.0 / 3.0, 4.0 / 27.0, 1.0).unwrap()).abs() < 1e-15);
        assert!(g_of_m(1.0 - 1e-9, 1.0, 1.0).unwrap() > 1e17);
        assert!(matches!(g_of_m(1.0, 1.0, 1.0), Err(Error::MassAtTouchdown(_))));
    }

    #[test]
    fn threshold_is_exact() {
        let q = quench_constants(4.0 / 27.0, 1.0);
        assert!(q.c0.abs() < 1e-15);
        assert!((q.m_star - 1.0 / 3.0).abs() < 1e-15);
        assert!(quench_constants(8.0 / 27.0, 1.0).c0 > 0.0);
        assert!(quench_constants(3.9 / 27.0, 1.0).c0 < 0.0);
    }

    #[test]
    fn closed_form_matches_scan() {
        let l1 = 3.0;
        for f in [0.5, 0.9, 1.0, 1.1, 2.0, 5.0] {
            let lam = f * 4.0 * l1 / 27.0;
            let q = quench_constants(lam, l1);
            let s = scan_min(lam, l1);
            assert!((q.c0 - s).abs() < 1e-5, "{f}: {} vs {s}", q.c0);
        }
    }

    #[test]
    fn reachable_range_uses_boundary() {
        // s* = 1 puts the minimizer at M = 0; starting at M = 0.5 the boundary value wins.
        let q = quench_constants_on(0.5, 1.0, 0.5);
        assert_eq!(q.m_star, 0.5);
        assert!((q.c0 - (-0.5 + 0.5 / 0.25)).abs() < 1e-15);
        let free = quench_constants(0.5, 1.0);
        assert!(q.c0 >= free.c0);
    }

    #[test]
    fn bounds() {
        assert_eq!(touchdown_bound(0.0, 0.5).unwrap(), 2.0);
        assert!(touchdown_bound(0.999999, 1.0).unwrap() < 1e-5);
        assert!(matches!(touchdown_bound(0.0, 0.0), Err(Error::NotSupercritical(_))));
        let t = second_order_touchdown_bound(0.0, 0.0, 2.0).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn navier_interval_eigenpair() {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.0, BoundaryCondition::Navier).unwrap();
        let g = build_grid(spec.domain(), 1, 512).unwrap();
        let b = compute_spectrum(&spec, &g, 4).unwrap();
        let p = principal_eigenpair(&b).unwrap();
        for (x, v) in g.nodes().iter().zip(&p.phi1) {
            assert!((v - PI / 2.0 * (PI * x).sin()).abs() < 1e-4);
        }
        assert!((p.lambda1 - PI.powi(4)).abs() < 1e-4 * PI.powi(4));
        let one: f64 = g.weights().iter().zip(&p.phi1).map(|(w, v)| w * v).sum();
        assert!((one - 1.0).abs() < 1e-10);
    }

    #[test]
    fn clamped_interval_rejected() {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.0, BoundaryCondition::Dirichlet).unwrap();
        let g = build_grid(spec.domain(), 1, 64).unwrap();
        let b = compute_spectrum(&spec, &g, 4).unwrap();
        assert!(matches!(principal_eigenpair(&b), Err(Error::DomainNotAdmissible(_))));
    }

    #[test]
    fn supercritical_run_obeys_inequality_and_bound() {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.0, BoundaryCondition::Navier).unwrap();
        let g = build_grid(spec.domain(), 1, 128).unwrap();
        let b = compute_spectrum(&spec, &g, 16).unwrap();
        let p = principal_eigenpair(&b).unwrap();
        let lam = 5.0 * 4.0 * p.lambda1 / 27.0;
        let cfg = SolveConfig::new(spec.with_lambda(lam).unwrap(), InitialDatum::Zero, 1.0, 1e-5);
        let tr = solve_parabolic(&b, &cfg).unwrap();
        let rep = verify_mass_inequality(&tr, &b, &p, lam).unwrap();
        assert!(tr.touched());
        assert!(rep.inequality_holds, "{}", rep.min_residual);
        assert_eq!(rep.bound_satisfied, Some(true));
        assert!(rep.max_mass_before_touchdown <= 1.0);
    }
}
