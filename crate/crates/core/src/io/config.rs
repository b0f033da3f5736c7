//! TOML run configuration. One file fully determines a run; every default is
//! listed on the field it applies to.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certificates::MIN_PROBES;
use crate::error::{Error, Result};
use crate::galerkin::{InitialDatum, Kind, DEFAULT_TOUCH_EPS};
use crate::fixed_point::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::spectrum::{BoundaryCondition, Domain, LaplacianStencil, OperatorSpec, MIN_RESOLUTION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Spectrum,
    SolveParabolic,
    SolveHyperbolic,
    Picard,
    Certify,
    QuenchSweep,
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::SolveParabolic => "solve_parabolic",
            Command::SolveHyperbolic => "solve_hyperbolic",
            Command::Picard => "picard",
            Command::Certify => "certify",
            Command::QuenchSweep => "quench_sweep",
            Command::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Grid resolution N.
    pub n: usize,
    /// Truncation K, at most N/4.
    pub k: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Default 1e-4.
    #[serde(default = "default_touch_eps")]
    pub touch_eps: f64,
    /// Picard stopping tolerance, default 1e-8.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Default 50.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Keep every n-th step in the stored trajectory, default 1.
    #[serde(default = "one")]
    pub sample_every: usize,
    /// Default: corrected on intervals, standard on balls.
    #[serde(default)]
    pub stencil: Option<LaplacianStencil>,
}

fn default_touch_eps() -> f64 {
    DEFAULT_TOUCH_EPS
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    /// Default zero.
    #[serde(default = "zero")]
    pub u0: InitialDatum,
    /// Initial velocity for hyperbolic runs, default zero.
    #[serde(default = "zero")]
    pub u1: InitialDatum,
}

fn zero() -> InitialDatum {
    InitialDatum::Zero
}

impl Default for Initial {
    fn default() -> Self {
        Initial {
            u0: InitialDatum::Zero,
            u1: InitialDatum::Zero,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyMode {
    Global,
    Local,
    Hyperbolic,
}

impl CertifyMode {
    pub fn kind(self) -> Kind {
        match self {
            CertifyMode::Hyperbolic => Kind::Hyperbolic,
            _ => Kind::Parabolic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub mode: CertifyMode,
    /// Ball radius around the homogeneous solution.
    pub r: f64,
    /// Initial-data size; default is measured from [initial].
    #[serde(default)]
    pub rho: Option<f64>,
    /// Default 32.
    #[serde(default = "default_probes")]
    pub n_probes: usize,
    /// Probe horizon, default numerics.t_final.
    #[serde(default)]
    pub probe_t_final: Option<f64>,
    /// Probe step, default numerics.dt.
    #[serde(default)]
    pub probe_dt: Option<f64>,
    /// Modes carrying random load, default 6.
    #[serde(default = "default_probe_modes")]
    pub probe_modes: usize,
    /// Hyperbolic horizon T, default numerics.t_final.
    #[serde(default)]
    pub horizon: Option<f64>,
}

fn default_probes() -> usize {
    32
}
fn default_probe_modes() -> usize {
    6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    /// Default parabolic.
    #[serde(default = "parabolic")]
    pub kind: Kind,
    /// Measure constants and require a certificate before iterating; needs [certify]. Default false.
    #[serde(default)]
    pub certified: bool,
}

fn parabolic() -> Kind {
    Kind::Parabolic
}

impl Default for PicardSection {
    fn default() -> Self {
        PicardSection {
            kind: Kind::Parabolic,
            certified: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Quench sweep: lambda = factor * 4 lambda_1 / 27.
    #[serde(default)]
    pub lambda_factors: Vec<f64>,
    /// Convergence: truncations compared against 2K.
    #[serde(default)]
    pub k_values: Vec<usize>,
    /// Run the hyperbolic equation as well (quench sweep) or instead (convergence). Default false.
    #[serde(default)]
    pub hyperbolic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Seed for every randomized step, default 0.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Basis cache; falls back to $MEMS_CACHE_DIR, no caching when neither is set.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub operator: OperatorSpec,
    pub numerics: Numerics,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub picard: PicardSection,
    #[serde(default)]
    pub certify: Option<CertifySection>,
    #[serde(default)]
    pub sweep: SweepSection,
}

/// Command-line overrides applied on top of a file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parse and validate.
    pub fn from_toml_str(s: &str) -> Result<RunConfig> {
        let cfg = Self::parse_toml(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse only; for callers that adjust the config before validating it.
    pub fn parse_toml(s: &str) -> Result<RunConfig> {
        toml::from_str(s).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn read_unvalidated(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("cannot read '{}': {e}", path.display())))?;
        Self::parse_toml(&text)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let cfg = Self::read_unvalidated(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        let s = self.operator;
        if o.lambda.is_some() || o.beta.is_some() || o.tau.is_some() {
            self.operator = OperatorSpec::new(
                o.beta.unwrap_or(s.beta()),
                o.tau.unwrap_or(s.tau()),
                o.lambda.unwrap_or(s.lambda()),
                s.domain(),
                s.bc(),
                s.dim_n(),
            )
            .map_err(|e| Error::ConfigInvalid(format!("operator: {e}")))?;
        }
        if let Some(v) = o.n {
            self.numerics.n = v;
        }
        if let Some(v) = o.k {
            self.numerics.k = v;
        }
        if let Some(v) = o.dt {
            self.numerics.dt = v;
        }
        if let Some(v) = o.t_final {
            self.numerics.t_final = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &o.cache_dir {
            self.cache_dir = Some(v.clone());
        }
        self.validate()
    }

    /// Every precondition of the target module, each violation naming its field and bound.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        let nm = &self.numerics;
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if nm.n < MIN_RESOLUTION {
            errs.push(format!("numerics.n: N = {} is below the minimum {MIN_RESOLUTION}", nm.n));
        }
        if nm.k == 0 || nm.k > nm.n / 4 {
            errs.push(format!("numerics.k: K = {} must lie in [1, N/4 = {}]", nm.k, nm.n / 4));
        }
        if !pos(nm.t_final) {
            errs.push(format!("numerics.t_final: must be > 0, got {}", nm.t_final));
        }
        if !(pos(nm.dt) && nm.dt <= nm.t_final) {
            errs.push(format!("numerics.dt: must lie in (0, t_final = {}], got {}", nm.t_final, nm.dt));
        }
        if !(nm.touch_eps > 0.0 && nm.touch_eps < 0.1) {
            errs.push(format!("numerics.touch_eps: must lie in (0, 0.1), got {}", nm.touch_eps));
        }
        if !pos(nm.tol) {
            errs.push(format!("numerics.tol: must be > 0, got {}", nm.tol));
        }
        if nm.max_iter == 0 {
            errs.push("numerics.max_iter: must be >= 1".into());
        }
        if nm.sample_every == 0 {
            errs.push("numerics.sample_every: must be >= 1".into());
        }
        for (name, d) in [("initial.u0", &self.initial.u0), ("initial.u1", &self.initial.u1)] {
            match d {
                InitialDatum::Mode { index, amplitude } => {
                    if *index == 0 || *index > nm.k {
                        errs.push(format!("{name}: mode index {index} must lie in [1, K = {}]", nm.k));
                    }
                    if !amplitude.is_finite() {
                        errs.push(format!("{name}: amplitude must be finite"));
                    }
                }
                InitialDatum::Bump { amplitude } if !amplitude.is_finite() => {
                    errs.push(format!("{name}: amplitude must be finite"))
                }
                InitialDatum::Coefficients { values } if values.len() != nm.k => {
                    errs.push(format!("{name}: {} coefficients given, K = {}", values.len(), nm.k))
                }
                InitialDatum::Grid { values } if values.len() != nm.n + 1 => {
                    errs.push(format!("{name}: {} nodal values given, need N + 1 = {}", values.len(), nm.n + 1))
                }
                _ => {}
            }
        }
        match self.command {
            Command::Certify => match &self.certify {
                None => errs.push("certify: section required for the certify command".into()),
                Some(c) => self.check_certify(c, &mut errs),
            },
            Command::Picard => {
                if self.picard.certified {
                    match &self.certify {
                        None => errs.push("picard.certified: needs a [certify] section".into()),
                        Some(c) => {
                            self.check_certify(c, &mut errs);
                            if c.mode.kind() != self.picard.kind {
                                errs.push(format!(
                                    "certify.mode: {:?} does not match picard.kind = {:?}",
                                    c.mode, self.picard.kind
                                ));
                            }
                        }
                    }
                }
            }
            Command::QuenchSweep => {
                if self.sweep.lambda_factors.is_empty() {
                    errs.push("sweep.lambda_factors: at least one factor is required".into());
                }
                if let Some(f) = self.sweep.lambda_factors.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
                    errs.push(format!("sweep.lambda_factors: factors must be >= 0, got {f}"));
                }
                if let (Domain::Interval { .. }, BoundaryCondition::Dirichlet) = (self.operator.domain(), self.operator.bc()) {
                    errs.push(
                        "operator.bc: clamped conditions on an interval admit no positive principal eigenfunction; \
                         use navier or a radial_ball"
                            .into(),
                    );
                }
            }
            Command::Convergence => {
                if self.sweep.k_values.is_empty() {
                    errs.push("sweep.k_values: at least one K is required".into());
                }
                if let Some(&k) = self.sweep.k_values.iter().find(|&&k| k == 0 || 2 * k > nm.n / 4) {
                    errs.push(format!(
                        "sweep.k_values: K = {k} needs 1 <= K and 2K <= N/4 = {}",
                        nm.n / 4
                    ));
                }
            }
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(errs.join("; ")))
        }
    }

    fn check_certify(&self, c: &CertifySection, errs: &mut Vec<String>) {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(c.r) {
            errs.push(format!("certify.r: must be > 0, got {}", c.r));
        }
        if let Some(rho) = c.rho {
            if !(rho.is_finite() && rho >= 0.0) {
                errs.push(format!("certify.rho: must be >= 0, got {rho}"));
            }
        }
        if c.n_probes < MIN_PROBES {
            errs.push(format!("certify.n_probes: must be >= {MIN_PROBES}, got {}", c.n_probes));
        }
        if c.probe_modes == 0 {
            errs.push("certify.probe_modes: must be >= 1".into());
        }
        let pt = c.probe_t_final.unwrap_or(self.numerics.t_final);
        let pd = c.probe_dt.unwrap_or(self.numerics.dt);
        if !pos(pt) {
            errs.push(format!("certify.probe_t_final: must be > 0, got {pt}"));
        }
        if !(pos(pd) && pd <= pt) {
            errs.push(format!("certify.probe_dt: must lie in (0, probe_t_final], got {pd}"));
        }
        if let Some(h) = c.horizon {
            if !pos(h) {
                errs.push(format!("certify.horizon: must be > 0, got {h}"));
            }
        }
        if c.mode == CertifyMode::Local && self.operator.lambda() == 0.0 {
            errs.push("certify.mode: local certificates need lambda > 0".into());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
command = "spectrum"
output_dir = "out"

[operator]
beta = 1.0
tau = 0.0
lambda = 0.0
bc = "navier"
dim_n = 1
domain = { kind = "interval", length = 1.0 }

[numerics]
n = 64
k = 8
dt = 1e-3
t_final = 0.1
"#;

    #[test]
    fn minimal_file_parses_with_defaults() {
        let c = RunConfig::from_toml_str(BASE).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.numerics.touch_eps, DEFAULT_TOUCH_EPS);
        assert_eq!(c.initial.u0, InitialDatum::Zero);
        let back = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn dimension_eight_names_the_bound() {
        let text = BASE
            .replace("dim_n = 1", "dim_n = 8")
            .replace(r#"{ kind = "interval", length = 1.0 }"#, r#"{ kind = "radial_ball" }"#);
        let e = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(e, Error::ConfigInvalid(_)));
        assert!(e.to_string().contains("n <= 7"), "{e}");
    }

    #[test]
    fn unknown_field_rejected() {
        let e = RunConfig::from_toml_str(&BASE.replace("t_final = 0.1", "t_final = 0.1\nfoo = 1")).unwrap_err();
        assert!(e.to_string().contains("foo"), "{e}");
    }

    #[test]
    fn field_level_messages() {
        let e = RunConfig::from_toml_str(&BASE.replace("k = 8", "k = 17")).unwrap_err();
        assert!(e.to_string().contains("numerics.k") && e.to_string().contains("16"), "{e}");
        let e = RunConfig::from_toml_str(&BASE.replace("dt = 1e-3", "dt = 1.0")).unwrap_err();
        assert!(e.to_string().contains("numerics.dt"), "{e}");
        let e = RunConfig::from_toml_str(&BASE.replace("spectrum", "certify")).unwrap_err();
        assert!(e.to_string().contains("certify"), "{e}");
        let e = RunConfig::from_toml_str(&BASE.replace("n = 64", "n = 8")).unwrap_err();
        assert!(e.to_string().contains("numerics.n"), "{e}");
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let mut c = RunConfig::from_toml_str(BASE).unwrap();
        c.apply(&Overrides {
            lambda: Some(2.0),
            k: Some(4),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.operator.lambda(), 2.0);
        assert_eq!(c.numerics.k, 4);
        assert!(c
            .apply(&Overrides {
                lambda: Some(-1.0),
                ..Overrides::default()
            })
            .is_err());
    }
}
