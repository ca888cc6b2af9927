//! Masked FFT convolution for `Wu` over the bounding box.
//!
//! Equivalent to the sparse product; the box is zero padded by the stencil
//! reach on each axis so the circular convolution never wraps onto the
//! interior.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{usage, Result};
use crate::geometry::Geometry;
use crate::kernel::Kernel;
use crate::Real;

pub struct ConvolutionPlan<F: Real> {
    dims: [usize; 2],
    grid_shape: [usize; 2],
    interior: Vec<usize>,
    spectrum: Vec<Complex<F>>,
    forward: [Arc<dyn Fft<F>>; 2],
    inverse: [Arc<dyn Fft<F>>; 2],
}

impl<F: Real> ConvolutionPlan<F> {
    pub fn new(geom: &Geometry<F>, kernel: &Kernel<F>) -> Result<Self> {
        if kernel.dim() != geom.dim() {
            return usage("kernel and geometry dimensions differ");
        }
        let reach = geom.stencil.reach() as usize;
        let shape = geom.grid.shape;
        let dims = [
            shape[0] + 2 * reach,
            if geom.dim() == 1 { 1 } else { shape[1] + 2 * reach },
        ];
        let mut planner = FftPlanner::new();
        let forward = [planner.plan_fft_forward(dims[0]), planner.plan_fft_forward(dims[1])];
        let inverse = [planner.plan_fft_inverse(dims[0]), planner.plan_fft_inverse(dims[1])];
        let vol = geom.cell_volume();
        let mut spectrum = vec![Complex::new(F::zero(), F::zero()); dims[0] * dims[1]];
        for (&(di, dj), &r) in geom.stencil.offsets.iter().zip(&geom.stencil.distances) {
            let i = di.rem_euclid(dims[0] as isize) as usize;
            let j = dj.rem_euclid(dims[1] as isize) as usize;
            spectrum[j * dims[0] + i].re += kernel.eval_radius(r) * vol;
        }
        let mut plan = Self {
            dims,
            grid_shape: shape,
            interior: geom.mask.interior.clone(),
            spectrum: Vec::new(),
            forward,
            inverse,
        };
        plan.transform(&mut spectrum, false);
        plan.spectrum = spectrum;
        Ok(plan)
    }

    fn transform(&self, buf: &mut [Complex<F>], inverse: bool) {
        let [p0, p1] = self.dims;
        let plans = if inverse { &self.inverse } else { &self.forward };
        for row in buf.chunks_exact_mut(p0) {
            plans[0].process(row);
        }
        if p1 > 1 {
            let mut column = vec![Complex::new(F::zero(), F::zero()); p1];
            for i in 0..p0 {
                for (j, c) in column.iter_mut().enumerate() {
                    *c = buf[j * p0 + i];
                }
                plans[1].process(&mut column);
                for (j, c) in column.iter().enumerate() {
                    buf[j * p0 + i] = *c;
                }
            }
        }
    }

    /// `Wu` for an interior field `u`.
    pub fn apply_w(&self, u: &[F]) -> Result<Vec<F>> {
        if u.len() != self.interior.len() {
            return usage(format!(
                "field has {} entries, expected {}",
                u.len(),
                self.interior.len()
            ));
        }
        let [p0, p1] = self.dims;
        let nx = self.grid_shape[0];
        let mut buf = vec![Complex::new(F::zero(), F::zero()); p0 * p1];
        for (&idx, &v) in self.interior.iter().zip(u) {
            let (i, j) = (idx % nx, idx / nx);
            buf[j * p0 + i].re = v;
        }
        self.transform(&mut buf, false);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b = *b * *s;
        }
        self.transform(&mut buf, true);
        let scale = F::one() / F::from_usize_lossy(p0 * p1);
        Ok(self
            .interior
            .iter()
            .map(|&idx| {
                let (i, j) = (idx % nx, idx / nx);
                buf[j * p0 + i].re * scale
            })
            .collect())
    }
}
