//! Discrete integral operators assembled by midpoint quadrature.
//!
//! With interior cells `x, y` and exterior collar cells `y'`:
//!
//! * `W[x][y]  = J(x_c - y_c) · vol(y)`, including the self term `J(0) · vol`;
//! * `A[x]     = Σ_y W[x][y] ≈ ∫_Ω J(x - y) dy`;
//! * `G[x][y'] = J(x_c - y'_c) · vol(y')`.
//!
//! The diffusion term is `(Lu)[x] = (Wu)[x] - A[x] u[x]`, the flux term is `Gg`.

pub mod fft;
pub mod store;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::geometry::Geometry;
use crate::kernel::Kernel;
use crate::Real;

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Csr<F> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<F>,
}

impl<F: Real> Csr<F> {
    fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, F)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in &rows {
            for &(c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n_rows: rows.len(), n_cols, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    fn row_dot(&self, r: usize, x: &[F]) -> F {
        let mut acc = F::zero();
        for (c, v) in self.row(r) {
            acc += v * x[c];
        }
        acc
    }

    fn row_sum(&self, r: usize) -> F {
        self.row(r).fold(F::zero(), |acc, (_, v)| acc + v)
    }

    /// `y = M x`; rows computed independently, so the parallel path is bitwise
    /// identical to the sequential one.
    pub fn mul_into(&self, x: &[F], y: &mut [F], parallel: bool) {
        if parallel {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = self.row_dot(r, x));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = self.row_dot(r, x);
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<F>> {
        let mut m = vec![vec![F::zero(); self.n_cols]; self.n_rows];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        m
    }
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return usage(format!("{name} has {got} entries, expected {want}"));
    }
    Ok(())
}

/// Interior-to-interior quadrature of the diffusion integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlocalOperator<F> {
    pub w: Csr<F>,
    /// `A[x] = Σ_y W[x][y]`.
    pub a: Vec<F>,
    /// `min_x A[x]`, the positivity constant of the representation formula.
    pub alpha_min: F,
    /// Per-cell volumes.
    pub vol: Vec<F>,
    #[serde(skip)]
    parallel: bool,
}

/// Interior-to-collar quadrature of the flux integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxOperator<F> {
    pub g: Csr<F>,
    #[serde(skip)]
    parallel: bool,
}

/// `K φ = a · Wφ` with `a = 1/A`, self-adjoint for the weights `μ = vol · A`.
#[derive(Debug, Clone, PartialEq)]
pub struct FredholmPair<F> {
    pub a: Vec<F>,
    pub mu_weights: Vec<F>,
    pub op: NonlocalOperator<F>,
}

/// Assembles `W`, `A` over the interior and `G` over the collar in one pass.
pub fn assemble<F: Real>(
    geom: &Geometry<F>,
    kernel: &Kernel<F>,
) -> Result<(NonlocalOperator<F>, FluxOperator<F>)> {
    Ok((assemble_diffusion(geom, kernel)?, assemble_flux(geom, kernel)?))
}

fn check_kernel<F: Real>(geom: &Geometry<F>, kernel: &Kernel<F>) -> Result<()> {
    if kernel.dim() != geom.dim() {
        return usage(format!(
            "kernel dimension {} does not match geometry dimension {}",
            kernel.dim(),
            geom.dim()
        ));
    }
    if (kernel.radius() - geom.radius).abs() > geom.radius * F::lit(1e-12) {
        return usage("kernel radius differs from the radius the geometry was built for");
    }
    Ok(())
}

pub fn assemble_diffusion<F: Real>(
    geom: &Geometry<F>,
    kernel: &Kernel<F>,
) -> Result<NonlocalOperator<F>> {
    check_kernel(geom, kernel)?;
    let vol = geom.cell_volume();
    let weights: Vec<F> = geom.stencil.distances.iter().map(|&r| kernel.eval_radius(r) * vol).collect();
    let rows: Vec<Vec<(usize, F)>> = (0..geom.n_interior())
        .map(|o| {
            let idx = geom.mask.interior[o];
            geom.stencil
                .offsets
                .iter()
                .zip(&weights)
                .filter(|&(_, &w)| w > F::zero())
                .filter_map(|(&off, &w)| {
                    let n = geom.grid.shifted(idx, off)?;
                    geom.interior_ordinal(n).map(|c| (c, w))
                })
                .collect()
        })
        .collect();
    let w = Csr::from_rows(geom.n_interior(), rows);
    NonlocalOperator::from_csr(w, vec![vol; geom.n_interior()])
}

pub fn assemble_flux<F: Real>(geom: &Geometry<F>, kernel: &Kernel<F>) -> Result<FluxOperator<F>> {
    check_kernel(geom, kernel)?;
    let vol = geom.cell_volume();
    let rows: Vec<Vec<(usize, F)>> = (0..geom.n_interior())
        .map(|o| {
            let idx = geom.mask.interior[o];
            geom.stencil
                .offsets
                .iter()
                .zip(&geom.stencil.distances)
                .filter_map(|(&off, &r)| {
                    let n = geom.grid.shifted(idx, off)?;
                    geom.collar_ordinal(n).map(|c| (c, kernel.eval_radius(r) * vol))
                })
                .filter(|&(_, v)| v > F::zero())
                .collect()
        })
        .collect();
    Ok(FluxOperator { g: Csr::from_rows(geom.n_collar(), rows), parallel: false })
}

impl<F: Real> NonlocalOperator<F> {
    /// Wraps an assembled `W`; computes `A` and checks positivity.
    pub fn from_csr(w: Csr<F>, vol: Vec<F>) -> Result<Self> {
        check_len("volume vector", vol.len(), w.n_rows)?;
        let a: Vec<F> = (0..w.n_rows).map(|r| w.row_sum(r)).collect();
        let alpha_min = a.iter().fold(F::infinity(), |m, &v| m.min(v));
        if !(alpha_min > F::zero()) {
            return Err(Error::Assembly(format!(
                "absorption coefficient not positive: min A = {alpha_min}"
            )));
        }
        Ok(Self { w, a, alpha_min, vol, parallel: false })
    }

    /// Operator with an absorption coefficient supplied independently of
    /// `W`. Only the representation-formula tests need `A ≠ rowsum W`.
    pub fn from_parts(w: Csr<F>, a: Vec<F>, vol: Vec<F>) -> Result<Self> {
        check_len("volume vector", vol.len(), w.n_rows)?;
        check_len("absorption vector", a.len(), w.n_rows)?;
        let alpha_min = a.iter().fold(F::infinity(), |m, &v| m.min(v));
        if !(alpha_min > F::zero()) {
            return Err(Error::Assembly(format!(
                "absorption coefficient not positive: min A = {alpha_min}"
            )));
        }
        Ok(Self { w, a, alpha_min, vol, parallel: false })
    }

    /// Operator from explicit pairwise kernel values `J[x][y]` and cell volumes.
    pub fn from_kernel_matrix(j: &[Vec<F>], vol: &[F]) -> Result<Self> {
        let n = vol.len();
        check_len("kernel matrix", j.len(), n)?;
        let rows = j
            .iter()
            .map(|row| {
                check_len("kernel matrix row", row.len(), n)?;
                Ok(row
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != F::zero())
                    .map(|(c, &v)| (c, v * vol[c]))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_csr(Csr::from_rows(n, rows), vol.to_vec())
    }

    /// Enables row-parallel application (rayon global pool).
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn max_a(&self) -> F {
        self.a.iter().fold(F::zero(), |m, &v| m.max(v))
    }

    pub fn apply_w_into(&self, u: &[F], out: &mut [F]) -> Result<()> {
        check_len("field", u.len(), self.len())?;
        check_len("output", out.len(), self.len())?;
        self.w.mul_into(u, out, self.parallel);
        Ok(())
    }

    pub fn apply_w(&self, u: &[F]) -> Result<Vec<F>> {
        let mut out = vec![F::zero(); self.len()];
        self.apply_w_into(u, &mut out)?;
        Ok(out)
    }

    /// `(Lu)[x] = Σ_y W[x][y] (u[y] - u[x])`, computed as differences so a
    /// constant field maps to exactly zero.
    pub fn apply_l_into(&self, u: &[F], out: &mut [F]) -> Result<()> {
        check_len("field", u.len(), self.len())?;
        check_len("output", out.len(), self.len())?;
        let row = |r: usize| {
            let ux = u[r];
            let mut acc = F::zero();
            for (c, v) in self.w.row(r) {
                acc += v * (u[c] - ux);
            }
            acc
        };
        if self.parallel {
            out.par_iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = row(r);
            }
        }
        Ok(())
    }

    pub fn apply_l(&self, u: &[F]) -> Result<Vec<F>> {
        let mut out = vec![F::zero(); self.len()];
        self.apply_l_into(u, &mut out)?;
        Ok(out)
    }

    /// Volume-weighted inner product `Σ vol·u·v`.
    pub fn inner(&self, u: &[F], v: &[F]) -> F {
        self.vol.iter().zip(u).zip(v).map(|((&w, &a), &b)| w * a * b).sum()
    }

    /// `Σ vol·u`.
    pub fn mass(&self, u: &[F]) -> F {
        self.vol.iter().zip(u).map(|(&w, &a)| w * a).sum()
    }

    /// `Q(u) = Σ_x Σ_y vol_x vol_y J(x_c - y_c) (u_y - u_x)²`.
    pub fn dirichlet_form(&self, u: &[F]) -> F {
        let mut acc = F::zero();
        for r in 0..self.len() {
            let ux = u[r];
            let mut row = F::zero();
            for (c, v) in self.w.row(r) {
                let d = u[c] - ux;
                row += v * d * d;
            }
            acc += self.vol[r] * row;
        }
        acc
    }

    /// Volume-weighted quadratic-form matrix `M = vol_x (A_x δ_xy − W_xy)`;
    /// `uᵀ M u = −⟨Lu, u⟩ = Q(u)/2`.
    pub fn form_matrix(&self) -> Vec<Vec<F>> {
        let n = self.len();
        let mut m = vec![vec![F::zero(); n]; n];
        for (r, row) in m.iter_mut().enumerate() {
            row[r] += self.vol[r] * self.a[r];
            for (c, v) in self.w.row(r) {
                row[c] -= self.vol[r] * v;
            }
        }
        m
    }

    pub fn fredholm(&self) -> FredholmPair<F> {
        FredholmPair {
            a: self.a.iter().map(|&v| F::one() / v).collect(),
            mu_weights: self.vol.iter().zip(&self.a).map(|(&w, &v)| w * v).collect(),
            op: self.clone(),
        }
    }
}

impl<F: Real> FluxOperator<F> {
    pub fn from_csr(g: Csr<F>) -> Self {
        Self { g, parallel: false }
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn n_interior(&self) -> usize {
        self.g.n_rows
    }

    pub fn n_collar(&self) -> usize {
        self.g.n_cols
    }

    pub fn apply_into(&self, g: &[F], out: &mut [F]) -> Result<()> {
        check_len("collar field", g.len(), self.n_collar())?;
        check_len("output", out.len(), self.n_interior())?;
        self.g.mul_into(g, out, self.parallel);
        Ok(())
    }

    /// `(Gg)[x] = Σ_y G[x][y] g[y]`.
    pub fn apply(&self, g: &[F]) -> Result<Vec<F>> {
        let mut out = vec![F::zero(); self.n_interior()];
        self.apply_into(g, &mut out)?;
        Ok(out)
    }

    /// `B[x] = Σ_y G[x][y]`, the exterior kernel mass seen by each cell.
    pub fn exterior_mass(&self) -> Vec<F> {
        (0..self.n_interior()).map(|r| self.g.row_sum(r)).collect()
    }

    /// `Σ_x vol(x)·(Gh)[x]`: discrete net flux. Zero is necessary for a
    /// stationary solution.
    pub fn compat_residual(&self, vol: &[F], h: &[F]) -> Result<F> {
        let gh = self.apply(h)?;
        check_len("volume vector", vol.len(), gh.len())?;
        Ok(vol.iter().zip(&gh).map(|(&w, &v)| w * v).sum())
    }
}

impl<F: Real> FredholmPair<F> {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `(Kφ)[x] = a[x]·(Wφ)[x]`.
    pub fn apply_k(&self, phi: &[F]) -> Result<Vec<F>> {
        let mut out = self.op.apply_w(phi)?;
        for (o, &a) in out.iter_mut().zip(&self.a) {
            *o *= a;
        }
        Ok(out)
    }

    /// `⟨u, v⟩_μ = Σ μ_x u_x v_x`.
    pub fn inner_mu(&self, u: &[F], v: &[F]) -> F {
        self.mu_weights.iter().zip(u).zip(v).map(|((&w, &a), &b)| w * a * b).sum()
    }

    /// `b = a · Gh`.
    pub fn rhs(&self, flux: &FluxOperator<F>, h: &[F]) -> Result<Vec<F>> {
        let mut b = flux.apply(h)?;
        check_len("flux rows", b.len(), self.len())?;
        for (o, &a) in b.iter_mut().zip(&self.a) {
            *o *= a;
        }
        Ok(b)
    }

    /// Symmetrized `S = D^{1/2} K D^{-1/2}`, `D = diag(μ)`; same spectrum as `K`.
    pub fn symmetric_matrix(&self) -> Vec<Vec<F>> {
        let n = self.len();
        let sq: Vec<F> = self.mu_weights.iter().map(|v| v.sqrt()).collect();
        let mut s = vec![vec![F::zero(); n]; n];
        for (r, row) in s.iter_mut().enumerate() {
            for (c, v) in self.op.w.row(r) {
                row[c] += sq[r] * self.a[r] * v / sq[c];
            }
        }
        s
    }
}
