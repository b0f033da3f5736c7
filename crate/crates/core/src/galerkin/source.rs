use crate::error::{Error, Result};
use crate::spectrum::SpectralBasis;

/// Right-hand side of the modal system.
pub trait Source: Sync {
    /// Galerkin load <f(t, u), omega_j> for the state with coefficients g.
    fn load(&self, t: f64, g: &[f64]) -> Result<Vec<f64>>;

    /// ||f(t, u)||_2^2; defaults to the norm of the projected load.
    fn norm_sq(&self, t: f64, g: &[f64]) -> Result<f64> {
        Ok(self.load(t, g)?.iter().map(|x| x * x).sum())
    }
}

/// <lambda / (1 - u)^2, omega_j> by quadrature on the grid.
pub fn nonlinear_source(coeffs: &[f64], basis: &SpectralBasis, lambda: f64) -> Result<Vec<f64>> {
    NonlinearSource::new(basis, lambda, super::DEFAULT_TOUCH_EPS).load(0.0, coeffs)
}

/// The MEMS nonlinearity, refusing states closer than `touch_eps` to the plate.
pub struct NonlinearSource<'a> {
    basis: &'a SpectralBasis,
    lambda: f64,
    touch_eps: f64,
}

impl<'a> NonlinearSource<'a> {
    pub fn new(basis: &'a SpectralBasis, lambda: f64, touch_eps: f64) -> Self {
        NonlinearSource {
            basis,
            lambda,
            touch_eps,
        }
    }

    /// Nodal values of lambda / (1 - u)^2.
    pub fn nodal(&self, u: &[f64]) -> Result<Vec<f64>> {
        let max_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max_u.is_nan() {
            return Err(Error::NonFinite("state".into()));
        }
        if max_u >= 1.0 - self.touch_eps {
            return Err(Error::TouchdownImminent { max_u });
        }
        Ok(u.iter().map(|x| self.lambda / ((1.0 - x) * (1.0 - x))).collect())
    }
}

impl Source for NonlinearSource<'_> {
    fn load(&self, _t: f64, g: &[f64]) -> Result<Vec<f64>> {
        if self.lambda == 0.0 {
            return Ok(vec![0.0; g.len()]);
        }
        let u = self.basis.synthesize(g)?;
        self.basis.analyze(&self.nodal(&u)?)
    }

    fn norm_sq(&self, _t: f64, g: &[f64]) -> Result<f64> {
        if self.lambda == 0.0 {
            return Ok(0.0);
        }
        let f = self.nodal(&self.basis.synthesize(g)?)?;
        Ok(self.basis.grid().weights().iter().zip(&f).map(|(w, x)| w * x * x).sum())
    }
}

/// Time-dependent load given at sample times, linear in between and constant outside.
pub struct PrescribedSource {
    times: Vec<f64>,
    loads: Vec<Vec<f64>>,
}

impl PrescribedSource {
    pub fn new(times: Vec<f64>, loads: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != loads.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: loads.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InsufficientSamples(
                "source times must be strictly increasing".into(),
            ));
        }
        Ok(PrescribedSource { times, loads })
    }

    /// Load constant in time.
    pub fn constant(load: Vec<f64>) -> Self {
        PrescribedSource {
            times: vec![0.0],
            loads: vec![load],
        }
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.loads[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.loads[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let a = (t - t0) / (t1 - t0);
        self.loads[i]
            .iter()
            .zip(&self.loads[i + 1])
            .map(|(x, y)| (1.0 - a) * x + a * y)
            .collect()
    }
}

impl Source for PrescribedSource {
    fn load(&self, t: f64, g: &[f64]) -> Result<Vec<f64>> {
        let f = self.at(t);
        if f.len() != g.len() {
            return Err(Error::LengthMismatch {
                expected: g.len(),
                got: f.len(),
            });
        }
        Ok(f)
    }
}
