use serde::{Deserialize, Serialize};

use super::spec::{check_domain, Domain};
use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 16;

/// Discrete Laplacian used inside the bending term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianStencil {
    /// Three-point second difference.
    Standard,
    /// Lap_h - (h^2/12) Lap_h^2, fourth-order on smooth data.
    Corrected,
}

/// Uniform nodes with measure-carrying quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: Domain,
    dim_n: usize,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    mid_weights: Vec<f64>,
    stencil: LaplacianStencil,
}

/// Volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Uniform grid with N intervals.
pub fn build_grid(domain: Domain, dim_n: usize, n: usize) -> Result<Grid> {
    check_domain(domain, dim_n)?;
    if n < MIN_RESOLUTION {
        return Err(Error::ResolutionTooCoarse(n));
    }
    let extent = match domain {
        Domain::Interval { length } => length,
        Domain::RadialBall => 1.0,
    };
    let h = extent / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let (weights, mid_weights, stencil) = match domain {
        Domain::Interval { .. } => {
            let mut w = vec![h; n + 1];
            w[0] = 0.5 * h;
            w[n] = 0.5 * h;
            (w, vec![h; n], LaplacianStencil::Corrected)
        }
        Domain::RadialBall => {
            let p = (dim_n - 1) as i32;
            let mut w: Vec<f64> = nodes.iter().map(|&r| h * r.powi(p)).collect();
            w[0] = if dim_n == 1 { 0.5 * h } else { 0.0 };
            w[n] *= 0.5;
            let mw: Vec<f64> = (0..n).map(|m| h * ((m as f64 + 0.5) * h).powi(p)).collect();
            // Rescale so that the weights integrate 1 to the exact volume.
            let c = unit_ball_volume(dim_n) / w.iter().sum::<f64>();
            (
                w.iter().map(|x| x * c).collect(),
                mw.iter().map(|x| x * c).collect(),
                LaplacianStencil::Standard,
            )
        }
    };
    Ok(Grid {
        domain,
        dim_n,
        n,
        h,
        nodes,
        weights,
        mid_weights,
        stencil,
    })
}

impl Grid {
    pub fn with_stencil(mut self, stencil: LaplacianStencil) -> Self {
        self.stencil = stencil;
        self
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn dim_n(&self) -> usize {
        self.dim_n
    }
    /// Number of intervals N.
    pub fn resolution(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.n + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Weights at cell midpoints, used by the gradient term.
    pub fn mid_weights(&self) -> &[f64] {
        &self.mid_weights
    }
    pub fn stencil(&self) -> LaplacianStencil {
        self.stencil
    }
    /// Measure of the domain.
    pub fn measure(&self) -> f64 {
        match self.domain {
            Domain::Interval { length } => length,
            Domain::RadialBall => unit_ball_volume(self.dim_n),
        }
    }
}

/// Discrete L^2 product sum_i w_i u_i v_i.
pub fn l2_inner_product(u: &[f64], v: &[f64], grid: &Grid) -> Result<f64> {
    let w = grid.weights();
    for x in [u, v] {
        if x.len() != w.len() {
            return Err(Error::LengthMismatch {
                expected: w.len(),
                got: x.len(),
            });
        }
    }
    Ok(w.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_pattern() {
        let g = build_grid(Domain::Interval { length: 2.0 }, 1, 16).unwrap();
        let h = 0.125;
        assert_eq!(g.spacing(), h);
        assert_eq!(g.weights()[0], h / 2.0);
        assert_eq!(g.weights()[1], h);
        assert_eq!(g.weights()[16], h / 2.0);
        assert_eq!(g.nodes()[16], 2.0);
    }

    #[test]
    fn too_coarse() {
        assert!(matches!(
            build_grid(Domain::Interval { length: 1.0 }, 1, 8),
            Err(Error::ResolutionTooCoarse(8))
        ));
    }

    #[test]
    fn radial_weights() {
        for n in 1..=7 {
            let g = build_grid(Domain::RadialBall, n, 64).unwrap();
            let total: f64 = g.weights().iter().sum();
            assert!((total / unit_ball_volume(n) - 1.0).abs() < 1e-12);
            assert!(g.weights().iter().all(|&w| w >= 0.0));
            if n >= 2 {
                assert_eq!(g.weights()[0], 0.0);
            }
        }
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn l2_of_one_is_measure() {
        let g = build_grid(Domain::Interval { length: 1.0 }, 1, 32).unwrap();
        let one = vec![1.0; g.len()];
        assert!((l2_inner_product(&one, &one, &g).unwrap() - 1.0).abs() < 1e-14);
        assert!(l2_inner_product(&one, &one[1..], &g).is_err());
    }
}
