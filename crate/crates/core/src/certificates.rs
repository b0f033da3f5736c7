//! Smallness thresholds for the contraction argument, with the unknown
//! linear-estimate constant replaced by a measured one.
//!
//! These are empirical-constant certificates: C_lin is a maximum over random
//! probes and therefore a lower estimate of the true constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{smooth_random_history, solve_linear, xt_norm};
use crate::galerkin::{trapezoid, InitialDatum, Kind, PrescribedSource, SolveConfig};
use crate::spectrum::{OperatorSpec, SpectralBasis};

pub const LABEL: &str = "empirical-constant certificate";
/// R is placed just inside the embedding ball C_emb R < 1.
pub const OUTER_RADIUS_FACTOR: f64 = 0.999;
pub const MIN_PROBES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Parabolic, lambda <= lambda(r), any horizon.
    Global,
    /// Hyperbolic, lambda <= lambda(r, T) on [0, T].
    GlobalOnHorizon,
    /// Parabolic on [0, T_local].
    Local,
    Uncertified,
}

/// Probe settings for the linear-solve constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub n_probes: usize,
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    /// Number of leading modes carrying random load.
    pub modes: usize,
}

impl ProbeSettings {
    pub fn new(n_probes: usize, t_final: f64, dt: f64, seed: u64) -> Self {
        ProbeSettings {
            n_probes,
            t_final,
            dt,
            seed,
            modes: 6,
        }
    }
}

/// Measured constant of the linear map f -> v from W^{1,2}(0,T;L^2) to X_T.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstant {
    pub value: f64,
    pub kind: Kind,
    /// ||v||_{X_T} for each unit-norm probe, in probe order.
    pub ratios: Vec<f64>,
    pub settings: ProbeSettings,
    pub label: String,
}

/// ||v||_{X_T} / ||f||_{W^{1,2}(0,T;L^2)} for the linear problem with zero data and modal load `loads`.
pub fn linear_response_ratio(
    spec: &OperatorSpec,
    basis: &SpectralBasis,
    kind: Kind,
    times: &[f64],
    loads: Vec<Vec<f64>>,
    load_rates: &[Vec<f64>],
) -> Result<f64> {
    let t_final = *times.last().ok_or_else(|| Error::InsufficientSamples("no probe times".into()))?;
    let sq = |r: &Vec<f64>| r.iter().map(|x| x * x).sum::<f64>();
    let dens: Vec<f64> = loads.iter().zip(load_rates).map(|(f, d)| sq(f) + sq(d)).collect();
    let f_norm = trapezoid(times, &dens).sqrt();
    if f_norm == 0.0 {
        return Ok(0.0);
    }
    let mut cfg = SolveConfig::new(*spec, InitialDatum::Zero, t_final, t_final / (times.len() - 1) as f64);
    if kind == Kind::Hyperbolic {
        cfg = cfg.with_velocity(InitialDatum::Zero);
    }
    let src = PrescribedSource::new(times.to_vec(), loads)?;
    let v = solve_linear(basis, &cfg, &src, kind)?;
    Ok(xt_norm(&v, basis, kind)?.value / f_norm)
}

/// Maximum response over `n_probes` seeded random smooth sources; probes run in parallel.
pub fn estimate_linear_constant(
    spec: &OperatorSpec,
    basis: &SpectralBasis,
    kind: Kind,
    settings: &ProbeSettings,
) -> Result<LinearConstant> {
    if settings.n_probes < MIN_PROBES {
        return Err(Error::ConfigInvalid(format!(
            "n_probes must be >= {MIN_PROBES}, got {}",
            settings.n_probes
        )));
    }
    let probe = SolveConfig::new(*spec, InitialDatum::Zero, settings.t_final, settings.dt);
    probe.validate(basis)?;
    let (n, h) = probe.steps();
    let times: Vec<f64> = (0..=n).map(|i| if i == n { settings.t_final } else { i as f64 * h }).collect();
    let ratios = (0..settings.n_probes as u64)
        .into_par_iter()
        .map(|i| {
            let (f, d) = smooth_random_history(basis.k(), settings.modes, &times, settings.t_final, settings.seed, i);
            linear_response_ratio(spec, basis, kind, &times, f, &d)
        })
        .collect::<Result<Vec<f64>>>()?;
    let value = ratios.iter().copied().fold(0.0, f64::max);
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::NonFinite(format!("linear constant {value}")));
    }
    Ok(LinearConstant {
        value,
        kind,
        ratios,
        settings: settings.clone(),
        label: "empirical lower estimate".into(),
    })
}

/// rho: ||u0||_{W^{4,2}} for parabolic data, ||u0||_{W^{4,2}} + ||u1||_{W^{2,2}} for hyperbolic data.
pub fn initial_data_size(basis: &SpectralBasis, config: &SolveConfig, kind: Kind) -> Result<f64> {
    let lam = basis.eigenvalues();
    let norm = |g: &[f64], w: fn(f64) -> f64| g.iter().zip(lam).map(|(g, &l)| w(l) * g * g).sum::<f64>().sqrt();
    let mut rho = norm(&config.u0.coefficients(basis)?, |l| 1.0 + l * l);
    if kind == Kind::Hyperbolic {
        if let Some(u1) = &config.u1 {
            rho += norm(&u1.coefficients(basis)?, |l| 1.0 + l);
        }
    }
    Ok(rho)
}

/// k(r) = (1 - C_emb r)^{-3}.
pub fn lipschitz_factor(r: f64, c_emb: f64) -> Result<f64> {
    if !(r >= 0.0) || !(c_emb > 0.0) {
        return Err(Error::ConfigInvalid(format!("need r >= 0 and C_emb > 0, got r = {r}, C_emb = {c_emb}")));
    }
    let s = c_emb * r;
    if s >= 1.0 {
        return Err(Error::BallTooLarge(s));
    }
    Ok((1.0 - s).powi(-3))
}

/// The two measured constants every certificate is built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c_emb: f64,
    pub c_lin: LinearConstant,
}

impl Constants {
    pub fn measure(spec: &OperatorSpec, basis: &SpectralBasis, kind: Kind, settings: &ProbeSettings) -> Result<Self> {
        Ok(Constants {
            c_emb: basis.embedding_constant()?,
            c_lin: estimate_linear_constant(spec, basis, kind, settings)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub label: String,
    pub kind: Kind,
    pub lambda: f64,
    pub c_emb: f64,
    pub c_lin: f64,
    pub r: f64,
    pub big_r: f64,
    pub rho: f64,
    pub rho_max: f64,
    pub k_r: f64,
    /// 1 / (4 C_lin (k_r + r)).
    pub lambda_global: f64,
    /// 1 / (4 C_lin (k_r + r) r), the parabolic threshold with the extra factor r of the hyperbolic one.
    pub lambda_global_r_weighted: f64,
    /// (1 / (2 C_lin lambda (k_r + r)))^2.
    pub t_local: Option<f64>,
    /// 1 / (4 T^{1/2} C_lin (k_r + r) r).
    pub lambda_t: Option<f64>,
    /// Horizon the regime covers; None means unbounded.
    pub horizon: Option<f64>,
    pub regime: Regime,
    pub formulas: Vec<String>,
    /// Notes on constants and conventions.
    pub notes: Vec<String>,
}

fn base(kind: Kind, spec: &OperatorSpec, c: &Constants, rho: f64, r: f64) -> Result<Certificate> {
    if c.c_lin.kind != kind {
        return Err(Error::ConfigInvalid(format!(
            "linear constant was measured for {:?}, certificate needs {:?}",
            c.c_lin.kind, kind
        )));
    }
    if !(r > 0.0) || !(rho >= 0.0) {
        return Err(Error::ConfigInvalid(format!("need r > 0 and rho >= 0, got r = {r}, rho = {rho}")));
    }
    let k_r = lipschitz_factor(r, c.c_emb)?;
    let big_r = OUTER_RADIUS_FACTOR / c.c_emb;
    if r >= big_r {
        return Err(Error::BallTooLarge(c.c_emb * r));
    }
    let c_lin = c.c_lin.value;
    let lhs = c_lin * rho + r / 2.0;
    if !(lhs < r) {
        return Err(Error::RhoTooLarge { lhs, r });
    }
    let mut cert = Certificate {
        label: LABEL.into(),
        kind,
        lambda: spec.lambda(),
        c_emb: c.c_emb,
        c_lin,
        r,
        big_r,
        rho,
        rho_max: r / (2.0 * c_lin),
        k_r,
        lambda_global: 0.0,
        lambda_global_r_weighted: 0.0,
        t_local: None,
        lambda_t: None,
        horizon: None,
        regime: Regime::Uncertified,
        formulas: vec![
            "k_r = (1 - C_emb r)^-3".into(),
            "R = 0.999 / C_emb".into(),
            "rho admissible iff C_lin rho + r/2 < r".into(),
            "lambda_global = 1 / (4 C_lin (k_r + r))".into(),
            "lambda_global_r_weighted = 1 / (4 C_lin (k_r + r) r)".into(),
        ],
        notes: vec![
            format!("C_lin is the maximum over {} random probes, a lower estimate", c.c_lin.ratios.len()),
            "the parabolic threshold carries no factor r while the hyperbolic one does; both parabolic forms are reported".into(),
        ],
    };
    fill_thresholds(&mut cert);
    Ok(cert)
}

/// Thresholds as pure functions of the stored fields.
fn fill_thresholds(c: &mut Certificate) {
    let kr = c.k_r + c.r;
    c.lambda_global = 1.0 / (4.0 * c.c_lin * kr);
    c.lambda_global_r_weighted = 1.0 / (4.0 * c.c_lin * kr * c.r);
    if c.t_local.is_some() {
        let s = 1.0 / (2.0 * c.c_lin * c.lambda * kr);
        c.t_local = Some(s * s);
    }
    if let (Some(_), Some(t)) = (c.lambda_t, c.horizon) {
        c.lambda_t = Some(1.0 / (4.0 * t.sqrt() * c.c_lin * kr * c.r));
    }
}

/// Parabolic global certificate: Global iff lambda <= lambda_global.
pub fn certify_global(spec: &OperatorSpec, constants: &Constants, rho: f64, r: f64) -> Result<Certificate> {
    let mut c = base(Kind::Parabolic, spec, constants, rho, r)?;
    if c.lambda <= c.lambda_global {
        c.regime = Regime::Global;
    }
    Ok(c)
}

/// Parabolic local certificate on [0, T_local].
pub fn certify_local(spec: &OperatorSpec, constants: &Constants, rho: f64, r: f64) -> Result<Certificate> {
    if spec.lambda() == 0.0 {
        return Err(Error::ConfigInvalid(
            "the local horizon is unbounded for lambda = 0; use the global certificate".into(),
        ));
    }
    let mut c = base(Kind::Parabolic, spec, constants, rho, r)?;
    c.t_local = Some(0.0);
    fill_thresholds(&mut c);
    c.horizon = c.t_local;
    c.regime = Regime::Local;
    c.formulas.push("T_local = (1 / (2 C_lin lambda (k_r + r)))^2".into());
    Ok(c)
}

/// Hyperbolic certificate on [0, T]: GlobalOnHorizon iff lambda <= lambda_T.
pub fn certify_hyperbolic(spec: &OperatorSpec, constants: &Constants, rho: f64, r: f64, t: f64) -> Result<Certificate> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::ConfigInvalid(format!("horizon T must be > 0, got {t}")));
    }
    let mut c = base(Kind::Hyperbolic, spec, constants, rho, r)?;
    c.horizon = Some(t);
    c.lambda_t = Some(0.0);
    fill_thresholds(&mut c);
    if c.lambda <= c.lambda_t.unwrap() {
        c.regime = Regime::GlobalOnHorizon;
    }
    c.formulas.push("lambda_T = 1 / (4 T^(1/2) C_lin (k_r + r) r)".into());
    Ok(c)
}

impl Certificate {
    /// Recompute k_r and every threshold from the stored inputs.
    pub fn recompute(&self) -> Result<Certificate> {
        let mut c = self.clone();
        c.k_r = lipschitz_factor(c.r, c.c_emb)?;
        c.big_r = OUTER_RADIUS_FACTOR / c.c_emb;
        c.rho_max = c.r / (2.0 * c.c_lin);
        fill_thresholds(&mut c);
        if c.regime == Regime::Local {
            c.horizon = c.t_local;
        }
        Ok(c)
    }

    /// True when recomputation reproduces every stored number bit for bit and the invariants hold.
    pub fn verify(&self) -> bool {
        let Ok(c) = self.recompute() else {
            return false;
        };
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
        let same_opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => same(x, y),
            (None, None) => true,
            _ => false,
        };
        same(c.k_r, self.k_r)
            && same(c.big_r, self.big_r)
            && same(c.rho_max, self.rho_max)
            && same(c.lambda_global, self.lambda_global)
            && same(c.lambda_global_r_weighted, self.lambda_global_r_weighted)
            && same_opt(c.t_local, self.t_local)
            && same_opt(c.lambda_t, self.lambda_t)
            && self.c_emb * self.big_r < 1.0
            && self.r > 0.0
            && self.r < self.big_r
            && self.k_r >= 1.0
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Certificate> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn admits(&self, t_final: f64) -> bool {
        match self.regime {
            Regime::Global => true,
            Regime::GlobalOnHorizon | Regime::Local => self.horizon.is_some_and(|h| t_final <= h),
            Regime::Uncertified => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{build_grid, compute_spectrum, BoundaryCondition};

    fn setup() -> (OperatorSpec, SpectralBasis) {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.0, BoundaryCondition::Navier).unwrap();
        let g = build_grid(spec.domain(), 1, 64).unwrap();
        (spec, compute_spectrum(&spec, &g, 8).unwrap())
    }

    fn fake(c_emb: f64, c_lin: f64) -> Constants {
        Constants {
            c_emb,
            c_lin: LinearConstant {
                value: c_lin,
                kind: Kind::Parabolic,
                ratios: vec![c_lin],
                settings: ProbeSettings::new(5, 1.0, 0.1, 0),
                label: String::new(),
            },
        }
    }

    #[test]
    fn lipschitz_factor_values() {
        assert_eq!(lipschitz_factor(0.0, 3.0).unwrap(), 1.0);
        assert_eq!(lipschitz_factor(0.25, 2.0).unwrap(), 8.0);
        assert!(matches!(lipschitz_factor(0.5, 2.0), Err(Error::BallTooLarge(_))));
        let mut prev = 0.0;
        for i in 0..50 {
            let k = lipschitz_factor(i as f64 * 0.01, 1.5).unwrap();
            assert!(k >= prev);
            prev = k;
        }
    }

    #[test]
    fn constant_source_matches_relaxation() {
        let (spec, b) = setup();
        let t_end = 0.05;
        let n = 2000;
        let times: Vec<f64> = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
        let mut load = vec![0.0; 8];
        load[0] = 1.0;
        let got = linear_response_ratio(&spec, &b, Kind::Parabolic, &times, vec![load; n + 1], &vec![vec![0.0; 8]; n + 1])
            .unwrap();
        let l = b.eigenvalues()[0];
        // g = (1 - e^{-l t}) / l, g' = e^{-l t}
        let e2 = (-2.0 * l * t_end).exp();
        let e1 = (-l * t_end).exp();
        let int_rate = (1.0 - e2) / (2.0 * l);
        let int_g2 = (t_end - 2.0 * (1.0 - e1) / l + (1.0 - e2) / (2.0 * l)) / (l * l);
        let g_end = (1.0 - e1) / l;
        let sq = (1.0 + l) * int_rate + (1.0 + l) * int_g2 + (1.0 + l * l) * g_end * g_end + 1.0;
        let want = sq.sqrt() / t_end.sqrt();
        assert!((got - want).abs() < 1e-5 * want, "{got} {want}");
    }

    #[test]
    fn more_probes_never_lower_the_constant() {
        let (spec, b) = setup();
        let s5 = ProbeSettings::new(5, 0.02, 1e-3, 11);
        let s10 = ProbeSettings { n_probes: 10, ..s5.clone() };
        let a = estimate_linear_constant(&spec, &b, Kind::Parabolic, &s5).unwrap();
        let c = estimate_linear_constant(&spec, &b, Kind::Parabolic, &s10).unwrap();
        assert_eq!(&c.ratios[..5], &a.ratios[..]);
        assert!(c.value >= a.value);
        assert!(estimate_linear_constant(&spec, &b, Kind::Parabolic, &ProbeSettings::new(4, 0.02, 1e-3, 1)).is_err());
    }

    #[test]
    fn formulas_and_regimes() {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.0, BoundaryCondition::Navier).unwrap();
        let c = fake(0.5, 2.0);
        let g = certify_global(&spec, &c, 0.01, 0.2).unwrap();
        assert_eq!(g.regime, Regime::Global);
        let kr = (1.0f64 - 0.1).powi(-3);
        assert_eq!(g.lambda_global, 1.0 / (4.0 * 2.0 * (kr + 0.2)));
        assert!(g.verify());

        let above = spec.with_lambda(2.0 * g.lambda_global).unwrap();
        assert_eq!(certify_global(&above, &c, 0.01, 0.2).unwrap().regime, Regime::Uncertified);
        let l1 = certify_local(&above, &c, 0.01, 0.2).unwrap();
        let l2 = certify_local(&spec.with_lambda(4.0 * g.lambda_global).unwrap(), &c, 0.01, 0.2).unwrap();
        assert!((l1.t_local.unwrap() / l2.t_local.unwrap() - 4.0).abs() < 1e-12);
        assert!(certify_local(&spec, &c, 0.01, 0.2).is_err());

        assert!(matches!(certify_global(&spec, &c, 0.1, 0.2), Err(Error::RhoTooLarge { .. })));
        assert!(matches!(certify_global(&spec, &c, 0.0, 2.5), Err(Error::BallTooLarge(_))));

        let mut prev = f64::INFINITY;
        for i in 1..30 {
            let x = certify_global(&spec, &c, 0.0, i as f64 * 0.05).unwrap().lambda_global;
            assert!(x <= prev);
            prev = x;
        }
    }

    #[test]
    fn hyperbolic_threshold_scaling_and_json() {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.01, BoundaryCondition::Navier).unwrap();
        let mut c = fake(0.5, 2.0);
        c.c_lin.kind = Kind::Hyperbolic;
        let a = certify_hyperbolic(&spec, &c, 0.0, 0.2, 1.0).unwrap();
        let b = certify_hyperbolic(&spec, &c, 0.0, 0.2, 4.0).unwrap();
        assert!((a.lambda_t.unwrap() / b.lambda_t.unwrap() - 2.0).abs() < 1e-12);
        let back = Certificate::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        assert!(back.verify());
        let mut bad = a.clone();
        bad.lambda_t = Some(a.lambda_t.unwrap() * (1.0 + 1e-15));
        assert!(!bad.verify());
    }
}
