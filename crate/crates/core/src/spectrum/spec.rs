use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension for which W^(4,2) embeds in L^inf.
pub const MAX_DIM: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// The segment [0, length].
    Interval { length: f64 },
    /// Unit ball; radial functions only, dimension carried by `OperatorSpec::dim_n`.
    RadialBall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Clamped: u = du/dn = 0.
    Dirichlet,
    /// Pinned: u = Laplacian u = 0.
    Navier,
}

/// Coefficients of u_t + beta Lap^2 u - tau Lap u = lambda/(1-u)^2 and its domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct OperatorSpec {
    beta: f64,
    tau: f64,
    lambda: f64,
    domain: Domain,
    bc: BoundaryCondition,
    dim_n: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    beta: f64,
    tau: f64,
    lambda: f64,
    domain: Domain,
    bc: BoundaryCondition,
    dim_n: usize,
}

impl TryFrom<RawSpec> for OperatorSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        OperatorSpec::new(r.beta, r.tau, r.lambda, r.domain, r.bc, r.dim_n)
    }
}

impl From<OperatorSpec> for RawSpec {
    fn from(s: OperatorSpec) -> Self {
        RawSpec {
            beta: s.beta,
            tau: s.tau,
            lambda: s.lambda,
            domain: s.domain,
            bc: s.bc,
            dim_n: s.dim_n,
        }
    }
}

pub(crate) fn check_domain(domain: Domain, dim_n: usize) -> Result<()> {
    if dim_n == 0 {
        return Err(Error::InvalidSpec("dim_n must be at least 1".into()));
    }
    if dim_n > MAX_DIM {
        return Err(Error::DimensionNotSupported(dim_n));
    }
    match domain {
        Domain::Interval { length } => {
            if !(length.is_finite() && length > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "interval length must be positive and finite, got {length}"
                )));
            }
            if dim_n != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "an interval requires dim_n = 1, got {dim_n}"
                )));
            }
        }
        Domain::RadialBall => {}
    }
    Ok(())
}

impl OperatorSpec {
    pub fn new(
        beta: f64,
        tau: f64,
        lambda: f64,
        domain: Domain,
        bc: BoundaryCondition,
        dim_n: usize,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidSpec(format!("beta must be > 0, got {beta}")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidSpec(format!("tau must be >= 0, got {tau}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidSpec(format!("lambda must be >= 0, got {lambda}")));
        }
        check_domain(domain, dim_n)?;
        Ok(OperatorSpec {
            beta,
            tau,
            lambda,
            domain,
            bc,
            dim_n,
        })
    }

    /// Unit interval, the most common test configuration.
    pub fn interval(beta: f64, tau: f64, lambda: f64, bc: BoundaryCondition) -> Result<Self> {
        Self::new(beta, tau, lambda, Domain::Interval { length: 1.0 }, bc, 1)
    }

    pub fn ball(beta: f64, tau: f64, lambda: f64, bc: BoundaryCondition, dim_n: usize) -> Result<Self> {
        Self::new(beta, tau, lambda, Domain::RadialBall, bc, dim_n)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.beta, self.tau, lambda, self.domain, self.bc, self.dim_n)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }
    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    /// Same operator up to lambda, which the eigenbasis does not depend on.
    pub fn same_operator(&self, other: &OperatorSpec) -> bool {
        self.beta == other.beta
            && self.tau == other.tau
            && self.domain == other.domain
            && self.bc == other.bc
            && self.dim_n == other.dim_n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_coefficients() {
        use BoundaryCondition::Navier;
        assert!(OperatorSpec::interval(0.0, 0.0, 0.0, Navier).is_err());
        assert!(OperatorSpec::interval(1.0, -1.0, 0.0, Navier).is_err());
        assert!(OperatorSpec::interval(1.0, 0.0, -0.1, Navier).is_err());
        assert!(OperatorSpec::interval(1.0, 0.0, f64::NAN, Navier).is_err());
    }

    #[test]
    fn dimension_gate() {
        use BoundaryCondition::Dirichlet;
        for n in 1..=7 {
            assert!(OperatorSpec::ball(1.0, 0.0, 0.0, Dirichlet, n).is_ok());
        }
        assert!(matches!(
            OperatorSpec::ball(1.0, 0.0, 0.0, Dirichlet, 8),
            Err(Error::DimensionNotSupported(8))
        ));
        assert!(matches!(
            OperatorSpec::new(1.0, 0.0, 0.0, Domain::Interval { length: 1.0 }, Dirichlet, 2),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn serde_validates() {
        let s = OperatorSpec::ball(1.0, 0.5, 2.0, BoundaryCondition::Navier, 3).unwrap();
        let txt = serde_json::to_string(&s).unwrap();
        let back: OperatorSpec = serde_json::from_str(&txt).unwrap();
        assert_eq!(s, back);
        let bad = txt.replace("\"dim_n\":3", "\"dim_n\":9");
        assert!(serde_json::from_str::<OperatorSpec>(&bad).is_err());
    }
}
