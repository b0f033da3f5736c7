use std::sync::Arc;

use super::assembly::{assemble_operator, DiscreteOperator};
use super::eigen::{lowest_eigenpairs, BandedTriangular};
use super::grid::{l2_inner_product, Grid};
use super::spec::{OperatorSpec, MAX_DIM};
use crate::error::{Error, Result};

/// Bumped whenever the discretization changes the computed basis.
pub const BASIS_VERSION: u32 = 1;

/// Relative gap below which eigenvalues are treated as one cluster.
pub const CLUSTER_TOL: f64 = 1e-10;

/// Truncated L^2-orthonormal eigenbasis of beta Lap^2 - tau Lap.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    spec: OperatorSpec,
    grid: Grid,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Vec<f64>>,
    operator: Arc<DiscreteOperator>,
    version: u32,
}

fn sign_node(v: &[f64]) -> usize {
    let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    v.iter().position(|x| x.abs() > 1e-8 * peak).unwrap_or(0)
}

/// The K lowest eigenpairs, B-orthonormal, sign-fixed.
pub fn compute_spectrum(spec: &OperatorSpec, grid: &Grid, k: usize) -> Result<SpectralBasis> {
    let max = grid.resolution() / 4;
    if k == 0 || k > max {
        return Err(Error::TruncationTooLarge { k, max });
    }
    let op = assemble_operator(spec, grid)?;
    let m = op.dim();
    let inv_sqrt_b: Vec<f64> = op.mass().iter().map(|b| 1.0 / b.sqrt()).collect();
    let scaled: Vec<_> = op
        .root_rows()
        .iter()
        .map(|r| r.iter().map(|&(j, v)| (j, v * inv_sqrt_b[j])).collect())
        .collect();
    let r = BandedTriangular::from_rows(&scaled, m)?;
    let (vals, vecs) = lowest_eigenpairs(&r, k)?;
    let mut funcs: Vec<Vec<f64>> = vecs
        .iter()
        .map(|x| {
            let v: Vec<f64> = x.iter().zip(&inv_sqrt_b).map(|(a, b)| a * b).collect();
            op.prolongate(&v)
        })
        .collect();
    let w = grid.weights();

    // Re-orthogonalize inside near-degenerate clusters.
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && (vals[end] - vals[end - 1]).abs() < CLUSTER_TOL * vals[end] {
            end += 1;
        }
        if end - start > 1 {
            for i in start..end {
                for j in start..i {
                    let c: f64 = (0..w.len()).map(|t| w[t] * funcs[i][t] * funcs[j][t]).sum();
                    let fj = funcs[j].clone();
                    funcs[i].iter_mut().zip(&fj).for_each(|(a, b)| *a -= c * b);
                }
                let nrm: f64 = (0..w.len()).map(|t| w[t] * funcs[i][t].powi(2)).sum::<f64>().sqrt();
                funcs[i].iter_mut().for_each(|a| *a /= nrm);
            }
        }
        start = end;
    }
    for f in funcs.iter_mut() {
        let i = sign_node(f);
        if f[i] < 0.0 {
            f.iter_mut().for_each(|a| *a = -*a);
        }
    }
    // Tie-break cluster order by the value at the first interior node.
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && (vals[end] - vals[end - 1]).abs() < CLUSTER_TOL * vals[end] {
            end += 1;
        }
        if end - start > 1 {
            let node = op.free_nodes()[0];
            funcs[start..end].sort_by(|a, b| b[node].total_cmp(&a[node]));
        }
        start = end;
    }
    SpectralBasis::from_parts(*spec, grid.clone(), vals, funcs, Arc::new(op))
}

impl SpectralBasis {
    pub(crate) fn from_parts(
        spec: OperatorSpec,
        grid: Grid,
        eigenvalues: Vec<f64>,
        eigenfunctions: Vec<Vec<f64>>,
        operator: Arc<DiscreteOperator>,
    ) -> Result<Self> {
        if eigenfunctions.len() != eigenvalues.len() {
            return Err(Error::LengthMismatch {
                expected: eigenvalues.len(),
                got: eigenfunctions.len(),
            });
        }
        for f in &eigenfunctions {
            if f.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: f.len(),
                });
            }
        }
        Ok(SpectralBasis {
            spec,
            grid,
            eigenvalues,
            eigenfunctions,
            operator,
            version: BASIS_VERSION,
        })
    }

    /// Spec the basis was built for; its lambda plays no role.
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn eigenfunctions(&self) -> &[Vec<f64>] {
        &self.eigenfunctions
    }
    pub fn eigenfunction(&self, k: usize) -> &[f64] {
        &self.eigenfunctions[k]
    }
    pub fn operator(&self) -> &DiscreteOperator {
        &self.operator
    }
    pub fn version(&self) -> u32 {
        self.version
    }

    fn check_coeffs(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.k() {
            return Err(Error::LengthMismatch {
                expected: self.k(),
                got: c.len(),
            });
        }
        Ok(())
    }

    /// Nodal values of sum_k c_k omega_k.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_coeffs(coeffs)?;
        let mut u = vec![0.0; self.grid.len()];
        for (c, f) in coeffs.iter().zip(&self.eigenfunctions) {
            if *c != 0.0 {
                u.iter_mut().zip(f).for_each(|(a, b)| *a += c * b);
            }
        }
        Ok(u)
    }

    /// L^2 projection coefficients <u, omega_k>.
    pub fn analyze(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                got: u.len(),
            });
        }
        let w = self.grid.weights();
        let wu: Vec<f64> = w.iter().zip(u).map(|(a, b)| a * b).collect();
        Ok(self
            .eigenfunctions
            .iter()
            .map(|f| f.iter().zip(&wu).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn l2_inner_product(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        l2_inner_product(u, v, &self.grid)
    }

    pub fn energy_inner_product(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.operator.energy_inner_product(u, v)
    }

    /// max_{i,j} |<omega_i, omega_j> - delta_ij|.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.k();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in i..k {
                let v = l2_inner_product(&self.eigenfunctions[i], &self.eigenfunctions[j], &self.grid)
                    .unwrap_or(f64::NAN);
                let d = (v - if i == j { 1.0 } else { 0.0 }).abs();
                worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
            }
        }
        worst
    }

    /// max_{i,j} |a(omega_i, omega_j) - lambda_i delta_ij|.
    pub fn energy_diagonality_defect(&self) -> f64 {
        let k = self.k();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in i..k {
                let v = self
                    .energy_inner_product(&self.eigenfunctions[i], &self.eigenfunctions[j])
                    .unwrap_or(f64::NAN);
                let d = (v - if i == j { self.eigenvalues[i] } else { 0.0 }).abs();
                worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
            }
        }
        worst
    }

    /// Discrete embedding constant max_x sqrt(sum_k omega_k(x)^2 / (1 + lambda_k^2)).
    ///
    /// This is the norm of point evaluation on span{omega_k} under
    /// ||u||^2 + ||Lu||^2, a lower approximation of the continuous constant.
    pub fn embedding_constant(&self) -> Result<f64> {
        if self.spec.dim_n() > MAX_DIM {
            return Err(Error::DimensionNotSupported(self.spec.dim_n()));
        }
        let mut acc = vec![0.0; self.grid.len()];
        for (lam, f) in self.eigenvalues.iter().zip(&self.eigenfunctions) {
            let s = 1.0 / (1.0 + lam * lam);
            acc.iter_mut().zip(f).for_each(|(a, b)| *a += s * b * b);
        }
        Ok(acc.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt())
    }

    /// The first `k` members, as a smaller basis on the same grid.
    pub fn truncated(&self, k: usize) -> Result<SpectralBasis> {
        if k == 0 || k > self.k() {
            return Err(Error::TruncationTooLarge { k, max: self.k() });
        }
        SpectralBasis::from_parts(
            self.spec,
            self.grid.clone(),
            self.eigenvalues[..k].to_vec(),
            self.eigenfunctions[..k].to_vec(),
            self.operator.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::grid::{build_grid, LaplacianStencil};
    use crate::spectrum::spec::BoundaryCondition::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use std::f64::consts::PI;

    fn navier(n: usize, k: usize, tau: f64) -> SpectralBasis {
        let spec = OperatorSpec::interval(1.0, tau, 0.0, Navier).unwrap();
        let g = build_grid(spec.domain(), 1, n).unwrap();
        compute_spectrum(&spec, &g, k).unwrap()
    }

    #[test]
    fn truncation_guard() {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.0, Navier).unwrap();
        let g = build_grid(spec.domain(), 1, 32).unwrap();
        assert!(matches!(
            compute_spectrum(&spec, &g, 9),
            Err(Error::TruncationTooLarge { k: 9, max: 8 })
        ));
    }

    #[test]
    fn navier_eigenpairs_are_sines() {
        let b = navier(256, 6, 0.0);
        let x = b.grid().nodes();
        for k in 0..6 {
            let kp = (k + 1) as f64 * PI;
            assert!((b.eigenvalues()[k] / kp.powi(4) - 1.0).abs() < 1e-5);
            for (i, &xi) in x.iter().enumerate() {
                let want = 2f64.sqrt() * (kp * xi).sin();
                assert!((b.eigenfunction(k)[i] - want).abs() < 1e-5);
            }
        }
        let b1 = navier(256, 4, 1.0);
        for k in 0..4 {
            let kp = (k + 1) as f64 * PI;
            assert!((b1.eigenvalues()[k] / (kp.powi(4) + kp * kp) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn agrees_with_dense_generalized_solve() {
        for spec in [
            OperatorSpec::interval(1.0, 0.5, 0.0, Dirichlet).unwrap(),
            OperatorSpec::ball(1.0, 0.0, 0.0, Dirichlet, 2).unwrap(),
            OperatorSpec::ball(1.5, 2.0, 0.0, Navier, 5).unwrap(),
            OperatorSpec::ball(1.0, 0.0, 0.0, Navier, 1).unwrap(),
        ] {
            let g = build_grid(spec.domain(), spec.dim_n(), 40).unwrap();
            let basis = compute_spectrum(&spec, &g, 10).unwrap();
            let op = basis.operator();
            let m = op.dim();
            let a = op.stiffness().to_dense();
            let c = DMatrix::from_fn(m, m, |i, j| a[i][j] / (op.mass()[i] * op.mass()[j]).sqrt());
            let mut want: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
            want.sort_by(f64::total_cmp);
            // The dense reference is only accurate to a few eps * ||C||.
            let tol = 1e-14 * want[m - 1];
            for (got, want) in basis.eigenvalues().iter().zip(&want) {
                assert!((got - want).abs() < tol, "{spec:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn invariants_hold_across_domains() {
        for n in [1usize, 2, 3, 7] {
            for bc in [Dirichlet, Navier] {
                let spec = OperatorSpec::ball(1.0, 0.5, 0.0, bc, n).unwrap();
                let g = build_grid(spec.domain(), n, 128).unwrap();
                let b = compute_spectrum(&spec, &g, 12).unwrap();
                let lk = *b.eigenvalues().last().unwrap();
                assert!(b.eigenvalues()[0] > 0.0);
                assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
                assert!(b.orthonormality_defect() < 1e-8);
                assert!(b.energy_diagonality_defect() < 1e-6 * lk);
                for f in b.eigenfunctions() {
                    assert_eq!(f[g.resolution()], 0.0);
                    assert!(f[sign_node(f)] > 0.0);
                }
            }
        }
    }

    #[test]
    fn synthesize_analyze_round_trip() {
        let b = navier(64, 8, 0.0);
        let c: Vec<f64> = (0..8).map(|i| (i as f64 * 1.3).sin()).collect();
        let back = b.analyze(&b.synthesize(&c).unwrap()).unwrap();
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        let e3 = b.analyze(b.eigenfunction(2)).unwrap();
        for (i, v) in e3.iter().enumerate() {
            assert!((v - if i == 2 { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
        assert!(b.synthesize(&[0.0; 8]).unwrap().iter().all(|&x| x == 0.0));
        assert!(b.synthesize(&[0.0; 7]).is_err());
    }

    #[test]
    fn embedding_constant_single_mode() {
        let b = navier(512, 4, 0.0).truncated(1).unwrap();
        let l1 = PI.powi(4);
        let want = 2f64.sqrt() / (1.0 + l1 * l1).sqrt();
        assert!((b.embedding_constant().unwrap() / want - 1.0).abs() < 1e-6);
        let full = navier(512, 4, 0.0);
        let mut prev = 0.0;
        for k in 1..=4 {
            let c = full.truncated(k).unwrap().embedding_constant().unwrap();
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn standard_stencil_converges_at_second_order() {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.0, Navier).unwrap();
        let err = |n: usize| {
            let g = build_grid(spec.domain(), 1, n)
                .unwrap()
                .with_stencil(LaplacianStencil::Standard);
            let b = compute_spectrum(&spec, &g, 2).unwrap();
            (b.eigenvalues()[0] / PI.powi(4) - 1.0).abs()
        };
        let ratio = err(64) / err(128);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }
}
