//! Finite-difference assembly of the bending/tension form.
//!
//! The energy of a nodal vector u is
//!
//!   a(u, u) = beta * sum_i w_i (L u)_i^2 + tau * sum_m w_{m+1/2} ((u_{m+1} - u_m)/h)^2,
//!
//! where L is the discrete Laplacian with the boundary condition built in. Free
//! unknowns are mapped to nodal values by a prolongation P that eliminates the
//! pinned boundary node(s) and, for n >= 2, the origin through the one-sided
//! symmetry condition u_0 = (4 u_1 - u_2)/3. Then A = P^T (...) P and B = P^T W P.

use super::grid::{Grid, LaplacianStencil};
use super::spec::{BoundaryCondition, Domain, OperatorSpec};
use crate::error::{Error, Result};

pub(crate) type SparseRow = Vec<(usize, f64)>;

fn merge(mut row: SparseRow) -> SparseRow {
    row.sort_by_key(|e| e.0);
    let mut out: SparseRow = Vec::with_capacity(row.len());
    for (j, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

fn apply_rows(rows: &[SparseRow], u: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().map(|&(j, v)| v * u[j]).sum())
        .collect()
}

/// Symmetric banded matrix stored as its upper band.
#[derive(Clone, Debug)]
pub struct SymBand {
    m: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    fn zeros(m: usize, bw: usize) -> Self {
        SymBand {
            m,
            bw,
            data: vec![0.0; m * (bw + 1)],
        }
    }
    pub fn dim(&self) -> usize {
        self.m
    }
    pub fn bandwidth(&self) -> usize {
        self.bw
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if j - i > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + (j - i)]
        }
    }
    fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i <= j && j - i <= self.bw);
        self.data[i * (self.bw + 1) + (j - i)] += v;
    }
    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.m)
            .map(|i| (0..self.m).map(|j| self.get(i, j)).collect())
            .collect()
    }
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for i in 0..self.m {
            let hi = (i + self.bw).min(self.m - 1);
            for j in i..=hi {
                let a = self.data[i * (self.bw + 1) + (j - i)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }
}

/// Assembled stiffness/mass pair together with the difference operators behind it.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    n_nodes: usize,
    free: Vec<usize>,
    prolong: Vec<SparseRow>,
    laplacian: Vec<SparseRow>,
    gradient: Vec<SparseRow>,
    beta: f64,
    tau: f64,
    weights: Vec<f64>,
    mid_weights: Vec<f64>,
    /// Rows of the square root S with S^T S = A, over free unknowns.
    root: Vec<SparseRow>,
    stiffness: SymBand,
    mass: Vec<f64>,
}

fn base_laplacian(spec: &OperatorSpec, grid: &Grid) -> Vec<SparseRow> {
    let n = grid.resolution();
    let h = grid.spacing();
    let h2 = h * h;
    let clamped = spec.bc() == BoundaryCondition::Dirichlet;
    let ghost = |i: usize, j: usize| -> SparseRow { vec![(i, -2.0 / h2), (j, 2.0 / h2)] };
    let mut rows: Vec<SparseRow> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let row = match spec.domain() {
            Domain::Interval { .. } => {
                if i > 0 && i < n {
                    vec![(i - 1, 1.0 / h2), (i, -2.0 / h2), (i + 1, 1.0 / h2)]
                } else if clamped {
                    ghost(i, if i == 0 { 1 } else { n - 1 })
                } else {
                    // Odd reflection across a pinned end.
                    Vec::new()
                }
            }
            Domain::RadialBall => {
                let dn = spec.dim_n() as f64;
                if i == 0 {
                    // Lap u(0) = n u''(0) with the even ghost u_{-1} = u_1.
                    vec![(0, -2.0 * dn / h2), (1, 2.0 * dn / h2)]
                } else if i < n {
                    let c = (dn - 1.0) / (grid.nodes()[i] * 2.0 * h);
                    vec![(i - 1, 1.0 / h2 - c), (i, -2.0 / h2), (i + 1, 1.0 / h2 + c)]
                } else if clamped {
                    ghost(n, n - 1)
                } else {
                    Vec::new()
                }
            }
        };
        rows.push(merge(row));
    }
    rows
}

fn compose(a: &[SparseRow], b: &[SparseRow]) -> Vec<SparseRow> {
    a.iter()
        .map(|ra| {
            let mut acc = SparseRow::new();
            for &(k, va) in ra {
                for &(j, vb) in &b[k] {
                    acc.push((j, va * vb));
                }
            }
            merge(acc)
        })
        .collect()
}

/// Assemble A and B for the given spec on the given grid.
pub fn assemble_operator(spec: &OperatorSpec, grid: &Grid) -> Result<DiscreteOperator> {
    if grid.domain() != spec.domain() || grid.dim_n() != spec.dim_n() {
        return Err(Error::DimensionMismatch(
            "grid and spec describe different domains".into(),
        ));
    }
    let n = grid.resolution();
    let h = grid.spacing();
    let radial_origin_eliminated = spec.domain() == Domain::RadialBall && spec.dim_n() >= 2;
    let free: Vec<usize> = (0..n)
        .filter(|&i| match spec.domain() {
            Domain::Interval { .. } => i > 0,
            Domain::RadialBall => !(i == 0 && radial_origin_eliminated),
        })
        .collect();
    let m = free.len();
    if m < 2 {
        return Err(Error::SingularAssembly("no free unknowns left".into()));
    }
    let mut col_of = vec![None; n + 1];
    for (c, &i) in free.iter().enumerate() {
        col_of[i] = Some(c);
    }
    let prolong: Vec<SparseRow> = (0..=n)
        .map(|i| match col_of[i] {
            Some(c) => vec![(c, 1.0)],
            None if i == 0 && radial_origin_eliminated => {
                let c1 = col_of[1].expect("node 1 is free");
                let c2 = col_of[2].expect("node 2 is free");
                vec![(c1, 4.0 / 3.0), (c2, -1.0 / 3.0)]
            }
            None => Vec::new(),
        })
        .collect();

    let lap0 = base_laplacian(spec, grid);
    let laplacian = match grid.stencil() {
        LaplacianStencil::Standard => lap0,
        LaplacianStencil::Corrected => {
            let sq = compose(&lap0, &lap0);
            let c = h * h / 12.0;
            lap0.iter()
                .zip(&sq)
                .map(|(a, b)| {
                    let mut r = a.clone();
                    r.extend(b.iter().map(|&(j, v)| (j, -c * v)));
                    merge(r)
                })
                .collect()
        }
    };
    let gradient: Vec<SparseRow> = (0..n)
        .map(|k| vec![(k, -1.0 / h), (k + 1, 1.0 / h)])
        .collect();

    let w = grid.weights();
    let wm = grid.mid_weights();
    let beta = spec.beta();
    let tau = spec.tau();
    let lp = compose(&laplacian, &prolong);
    let gp = compose(&gradient, &prolong);
    let mut root: Vec<SparseRow> = Vec::new();
    for (i, r) in lp.iter().enumerate() {
        let s = (beta * w[i]).sqrt();
        if s > 0.0 && !r.is_empty() {
            root.push(r.iter().map(|&(j, v)| (j, s * v)).collect());
        }
    }
    if tau > 0.0 {
        for (k, r) in gp.iter().enumerate() {
            let s = (tau * wm[k]).sqrt();
            if s > 0.0 && !r.is_empty() {
                root.push(r.iter().map(|&(j, v)| (j, s * v)).collect());
            }
        }
    }
    let bw = root
        .iter()
        .map(|r| r.last().unwrap().0 - r.first().unwrap().0)
        .max()
        .unwrap_or(0);

    // Accumulate the two parts separately so that A is exactly linear in (beta, tau).
    let mut bend = SymBand::zeros(m, bw);
    let mut tens = SymBand::zeros(m, bw);
    for (i, r) in lp.iter().enumerate() {
        let s = beta * w[i];
        for &(a, va) in r {
            for &(b, vb) in r {
                if a <= b {
                    bend.add(a, b, s * va * vb);
                }
            }
        }
    }
    if tau > 0.0 {
        for (k, r) in gp.iter().enumerate() {
            let s = tau * wm[k];
            for &(a, va) in r {
                for &(b, vb) in r {
                    if a <= b {
                        tens.add(a, b, s * va * vb);
                    }
                }
            }
        }
    }
    let mut stiffness = bend;
    for (x, y) in stiffness.data.iter_mut().zip(&tens.data) {
        *x += y;
    }

    // B = P^T W P is diagonal: the only coupled row of P is the origin, which has zero weight.
    let mut mass = vec![0.0; m];
    for (i, r) in prolong.iter().enumerate() {
        debug_assert!(r.len() <= 1 || w[i] == 0.0);
        for &(c, v) in r {
            mass[c] += w[i] * v * v;
        }
    }
    if let Some(c) = mass.iter().position(|&b| b <= 0.0) {
        return Err(Error::SingularAssembly(format!(
            "free unknown {c} carries zero mass"
        )));
    }
    if (0..m).any(|i| stiffness.get(i, i) <= 0.0) {
        return Err(Error::SingularAssembly("stiffness has a zero diagonal".into()));
    }

    Ok(DiscreteOperator {
        n_nodes: n + 1,
        free,
        prolong,
        laplacian,
        gradient,
        beta,
        tau,
        weights: w.to_vec(),
        mid_weights: wm.to_vec(),
        root,
        stiffness,
        mass,
    })
}

impl DiscreteOperator {
    /// Number of free unknowns.
    pub fn dim(&self) -> usize {
        self.free.len()
    }
    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }
    pub fn stiffness(&self) -> &SymBand {
        &self.stiffness
    }
    /// Diagonal of B.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
    pub(crate) fn root_rows(&self) -> &[SparseRow] {
        &self.root
    }

    /// Nodal values from free unknowns.
    pub fn prolongate(&self, v: &[f64]) -> Vec<f64> {
        apply_rows(&self.prolong, v)
    }

    /// Discrete Laplacian of a nodal vector.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        apply_rows(&self.laplacian, u)
    }

    /// Forward differences on the cells.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        apply_rows(&self.gradient, u)
    }

    /// beta <Lap u, Lap v> + tau <grad u, grad v> with the assembly's own stencils.
    pub fn energy_inner_product(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        for x in [u, v] {
            if x.len() != self.n_nodes {
                return Err(Error::LengthMismatch {
                    expected: self.n_nodes,
                    got: x.len(),
                });
            }
        }
        let (lu, lv) = (self.laplacian(u), self.laplacian(v));
        let mut e: f64 = self
            .weights
            .iter()
            .zip(lu.iter().zip(&lv))
            .map(|(w, (a, b))| w * a * b)
            .sum::<f64>()
            * self.beta;
        if self.tau > 0.0 {
            let (gu, gv) = (self.gradient(u), self.gradient(v));
            e += self.tau
                * self
                    .mid_weights
                    .iter()
                    .zip(gu.iter().zip(&gv))
                    .map(|(w, (a, b))| w * a * b)
                    .sum::<f64>();
        }
        Ok(e)
    }
}

/// Convenience form that assembles on the fly.
pub fn energy_inner_product(u: &[f64], v: &[f64], spec: &OperatorSpec, grid: &Grid) -> Result<f64> {
    assemble_operator(spec, grid)?.energy_inner_product(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::grid::build_grid;
    use BoundaryCondition::*;

    fn setup(spec: OperatorSpec, n: usize) -> (Grid, DiscreteOperator) {
        let g = build_grid(spec.domain(), spec.dim_n(), n).unwrap();
        let op = assemble_operator(&spec, &g).unwrap();
        (g, op)
    }

    #[test]
    fn pinned_interval_is_squared_second_difference() {
        let spec = OperatorSpec::interval(1.0, 0.0, 0.0, Navier).unwrap();
        let n = 16;
        let g = build_grid(spec.domain(), 1, n)
            .unwrap()
            .with_stencil(LaplacianStencil::Standard);
        let op = assemble_operator(&spec, &g).unwrap();
        let h = g.spacing();
        let m = n - 1;
        let d2 = |i: usize, j: usize| -> f64 {
            if i == j {
                -2.0 / (h * h)
            } else if i.abs_diff(j) == 1 {
                1.0 / (h * h)
            } else {
                0.0
            }
        };
        for i in 0..m {
            assert!((op.mass()[i] - h).abs() < 1e-15);
            for j in 0..m {
                let sq: f64 = (0..m).map(|k| d2(i, k) * d2(k, j)).sum();
                let a = op.stiffness().get(i, j) / h;
                assert!((a - sq).abs() <= 1e-9 * sq.abs().max(1.0), "{i} {j} {a} {sq}");
            }
        }
    }

    #[test]
    fn symmetric_by_construction() {
        for spec in [
            OperatorSpec::interval(1.0, 0.3, 0.0, Dirichlet).unwrap(),
            OperatorSpec::ball(2.0, 1.0, 0.0, Dirichlet, 3).unwrap(),
            OperatorSpec::ball(1.0, 0.0, 0.0, Navier, 7).unwrap(),
        ] {
            let (_, op) = setup(spec, 32);
            let a = op.stiffness().to_dense();
            for (i, row) in a.iter().enumerate() {
                for (j, x) in row.iter().enumerate() {
                    assert_eq!(*x, a[j][i]);
                }
            }
        }
    }

    #[test]
    fn linear_in_beta_and_tau() {
        let s1 = OperatorSpec::interval(1.0, 1.0, 0.0, Dirichlet).unwrap();
        let s2 = OperatorSpec::interval(1.0, 0.0, 0.0, Dirichlet).unwrap();
        let (_, o1) = setup(s1, 32);
        let (_, o2) = setup(s2, 32);
        let g = build_grid(s1.domain(), 1, 32).unwrap();
        let h = g.spacing();
        let m = o1.dim();
        for i in 0..m {
            for j in 0..m {
                let lap = if i == j {
                    2.0 / h
                } else if i.abs_diff(j) == 1 {
                    -1.0 / h
                } else {
                    0.0
                };
                let want = o2.stiffness().get(i, j) + lap;
                let got = o1.stiffness().get(i, j);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn energy_matches_stiffness() {
        let spec = OperatorSpec::ball(1.0, 0.5, 0.0, Dirichlet, 2).unwrap();
        let (_, op) = setup(spec, 24);
        let m = op.dim();
        let x: Vec<f64> = (0..m).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.1).collect();
        let y: Vec<f64> = (0..m).map(|i| (i as f64 * 0.3).sin()).collect();
        let e = op
            .energy_inner_product(&op.prolongate(&x), &op.prolongate(&y))
            .unwrap();
        let ay = op.stiffness().mul(&y);
        let xay: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
        assert!((e - xay).abs() < 1e-9 * xay.abs().max(1.0));
        let zero = vec![0.0; op.n_nodes];
        assert_eq!(op.energy_inner_product(&zero, &op.prolongate(&y)).unwrap(), 0.0);
    }
}
