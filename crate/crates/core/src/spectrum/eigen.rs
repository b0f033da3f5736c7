//! Smallest eigenpairs of C = B^{-1/2} A B^{-1/2} from a square root of A.
//!
//! Forming A explicitly squares the condition number of the difference
//! operator, so for fine grids the lowest eigenvalues would lose most of their
//! digits. Instead the sparse rows S (with S^T S = A) are scaled by B^{-1/2}
//! and reduced to a banded upper-triangular R by Givens rotations, giving
//! R^T R = C. Block inverse iteration with R^{-1} R^{-T} and Rayleigh-Ritz
//! projections then yields the lowest K pairs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::assembly::SparseRow;
use crate::error::{Error, Result};

/// Upper-triangular banded factor, R(i, i + d) = data[i * (bw + 1) + d].
pub(crate) struct BandedTriangular {
    m: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedTriangular {
    /// QR of the stacked sparse rows by Givens row merging; only R is kept.
    pub(crate) fn from_rows(rows: &[SparseRow], m: usize) -> Result<Self> {
        let bw = rows
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| r.last().unwrap().0 - r.first().unwrap().0)
            .max()
            .unwrap_or(0);
        let stride = bw + 1;
        let mut data = vec![0.0; m * stride];
        let mut filled = vec![false; m];
        let mut order: Vec<&SparseRow> = rows.iter().filter(|r| !r.is_empty()).collect();
        order.sort_by_key(|r| r[0].0);
        let mut buf = vec![0.0; stride];
        for row in order {
            let mut j = row[0].0;
            buf.iter_mut().for_each(|x| *x = 0.0);
            for &(c, v) in row {
                buf[c - j] = v;
            }
            while j < m {
                if buf[0] == 0.0 {
                    buf.rotate_left(1);
                    buf[bw] = 0.0;
                    j += 1;
                    if buf.iter().all(|&x| x == 0.0) {
                        break;
                    }
                    continue;
                }
                let rj = &mut data[j * stride..(j + 1) * stride];
                if !filled[j] {
                    rj.copy_from_slice(&buf);
                    filled[j] = true;
                    break;
                }
                let a = rj[0];
                let b = buf[0];
                let r = a.hypot(b);
                let (c, s) = (a / r, b / r);
                for d in 0..stride {
                    let x = rj[d];
                    let y = buf[d];
                    rj[d] = c * x + s * y;
                    buf[d] = -s * x + c * y;
                }
                buf[0] = 0.0;
            }
        }
        let scale = data.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        for i in 0..m {
            let d = data[i * stride];
            if !filled[i] || d.abs() <= 1e-14 * scale {
                return Err(Error::SingularAssembly(format!(
                    "stiffness is singular at free unknown {i}"
                )));
            }
        }
        Ok(BandedTriangular { m, bw, data })
    }

    fn at(&self, i: usize, d: usize) -> f64 {
        self.data[i * (self.bw + 1) + d]
    }

    /// Solve R x = b in place.
    pub(crate) fn solve_upper(&self, b: &mut [f64]) {
        for i in (0..self.m).rev() {
            let hi = self.bw.min(self.m - 1 - i);
            let mut s = b[i];
            for d in 1..=hi {
                s -= self.at(i, d) * b[i + d];
            }
            b[i] = s / self.at(i, 0);
        }
    }

    /// Solve R^T x = b in place.
    pub(crate) fn solve_lower_transposed(&self, b: &mut [f64]) {
        for i in 0..self.m {
            let lo = self.bw.min(i);
            let mut s = b[i];
            for d in 1..=lo {
                s -= self.at(i - d, d) * b[i - d];
            }
            b[i] = s / self.at(i, 0);
        }
    }

    /// R x.
    pub(crate) fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let hi = self.bw.min(self.m - 1 - i);
                (0..=hi).map(|d| self.at(i, d) * x[i + d]).sum()
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt, applied twice.
fn orthonormalize(cols: &mut [Vec<f64>]) -> Result<()> {
    for _ in 0..2 {
        for j in 0..cols.len() {
            let (done, rest) = cols.split_at_mut(j);
            let v = &mut rest[0];
            for q in done.iter() {
                let c = dot(q, v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
            let nrm = dot(v, v).sqrt();
            if !(nrm.is_finite() && nrm > 0.0) {
                return Err(Error::EigensolveFailure("iteration block lost rank".into()));
            }
            v.iter_mut().for_each(|x| *x /= nrm);
        }
    }
    Ok(())
}

fn gram(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let p = cols.len();
    let mut g = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = dot(&cols[i], &cols[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

fn combine(cols: &[Vec<f64>], v: &DMatrix<f64>, order: &[usize]) -> Vec<Vec<f64>> {
    let m = cols[0].len();
    order
        .iter()
        .map(|&k| {
            let mut x = vec![0.0; m];
            for (i, c) in cols.iter().enumerate() {
                let a = v[(i, k)];
                x.iter_mut().zip(c).for_each(|(x, y)| *x += a * y);
            }
            x
        })
        .collect()
}

const MAX_ITER: usize = 3000;
const RESIDUAL_TOL: f64 = 1e-13;

/// Lowest `k` eigenpairs of R^T R, eigenvalues ascending, vectors orthonormal.
pub(crate) fn lowest_eigenpairs(r: &BandedTriangular, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = r.m;
    if k == 0 || k > m {
        return Err(Error::EigensolveFailure(format!("cannot extract {k} pairs from {m} unknowns")));
    }
    let p = (2 * k + 8).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_6d73);
    let mut y: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut q_final: Option<Vec<Vec<f64>>> = None;
    for _ in 0..MAX_ITER {
        orthonormalize(&mut y)?;
        let q = y;
        // Z = R^{-T} Q, so Z^T Z = Q^T C^{-1} Q.
        let z: Vec<Vec<f64>> = q
            .iter()
            .map(|c| {
                let mut c = c.clone();
                r.solve_lower_transposed(&mut c);
                c
            })
            .collect();
        let eig = SymmetricEigen::new(gram(&z));
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mu: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        if !(mu[0].is_finite() && mu[0] > 0.0) {
            return Err(Error::EigensolveFailure("non-positive Ritz value".into()));
        }
        let x = combine(&q, &eig.eigenvectors, &order);
        // C^{-1} X = R^{-1} Z V, which is also the next block.
        let mut w = combine(&z, &eig.eigenvectors, &order);
        w.iter_mut().for_each(|c| r.solve_upper(c));
        let res = (0..k)
            .map(|j| {
                w[j].iter()
                    .zip(&x[j])
                    .map(|(a, b)| (a - mu[j] * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max)
            / mu[0];
        if !res.is_finite() {
            return Err(Error::EigensolveFailure("non-finite residual".into()));
        }
        if res <= RESIDUAL_TOL {
            q_final = Some(x);
            break;
        }
        if res < 0.5 * best {
            best = res;
            stalled = 0;
        } else {
            stalled += 1;
            // Round-off floor reached.
            if stalled >= 20 && best <= 1e-8 {
                q_final = Some(x);
                break;
            }
        }
        y = w;
    }
    let x = q_final.ok_or_else(|| {
        Error::EigensolveFailure(format!("no convergence in {MAX_ITER} iterations"))
    })?;
    // Final Rayleigh-Ritz in C itself so the returned vectors diagonalize the energy.
    let s: Vec<Vec<f64>> = x.iter().map(|c| r.mul(c)).collect();
    let eig = SymmetricEigen::new(gram(&s));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(k);
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = combine(&x, &eig.eigenvectors, &order);
    for v in vecs.iter_mut() {
        let nrm = dot(v, v).sqrt();
        v.iter_mut().for_each(|a| *a /= nrm);
    }
    if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::EigensolveFailure("non-positive eigenvalue".into()));
    }
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rows(m: usize, bw: usize, seed: u64) -> Vec<SparseRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for i in 0..m {
            for _ in 0..2 {
                let hi = (i + bw).min(m - 1);
                rows.push((i..=hi).map(|j| (j, rng.gen_range(-1.0..1.0))).collect());
            }
        }
        rows
    }

    fn dense_from_rows(rows: &[SparseRow], m: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(rows.len(), m);
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                s[(i, j)] = v;
            }
        }
        s
    }

    #[test]
    fn factor_reproduces_gram() {
        let m = 30;
        let rows = random_rows(m, 3, 7);
        let r = BandedTriangular::from_rows(&rows, m).unwrap();
        let s = dense_from_rows(&rows, m);
        let a = s.transpose() * &s;
        let mut rd = DMatrix::zeros(m, m);
        for i in 0..m {
            for d in 0..=r.bw.min(m - 1 - i) {
                rd[(i, i + d)] = r.at(i, d);
            }
        }
        let diff = (rd.transpose() * &rd - &a).abs().max();
        assert!(diff < 1e-12 * a.abs().max(), "{diff}");
        let b: Vec<f64> = (0..m).map(|i| (i as f64).cos()).collect();
        let mut x = b.clone();
        r.solve_lower_transposed(&mut x);
        r.solve_upper(&mut x);
        let ax = &a * DMatrix::from_column_slice(m, 1, &x);
        for i in 0..m {
            assert!((ax[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_dense_eigensolver() {
        let m = 60;
        let rows = random_rows(m, 2, 11);
        let r = BandedTriangular::from_rows(&rows, m).unwrap();
        let s = dense_from_rows(&rows, m);
        let dense = SymmetricEigen::new(s.transpose() * &s);
        let mut want: Vec<f64> = dense.eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        let (vals, vecs) = lowest_eigenpairs(&r, 6).unwrap();
        for (a, b) in vals.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
        for i in 0..6 {
            for j in 0..6 {
                let d = dot(&vecs[i], &vecs[j]) - if i == j { 1.0 } else { 0.0 };
                assert!(d.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_rows_rejected() {
        let rows: Vec<SparseRow> = vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 2.0), (1, 2.0)]];
        assert!(BandedTriangular::from_rows(&rows, 2).is_err());
    }
}
