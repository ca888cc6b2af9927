//! Radial, compactly supported jump kernels normalized to unit mass.
//!
//! A kernel is fixed by its radial profile ([`KernelFamily`]), support radius
//! `d` and spatial dimension (1 or 2). Evaluation depends on `|z|` only, so
//! `J(z) = J(-z)` holds by construction.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// Constant on the closed ball of radius `d`; bounded but discontinuous.
    Uniform,
    /// Linear decay `1 - |z|/d`; continuous.
    Tent,
    /// `exp(-1/(1-(|z|/d)²))`; smooth.
    Bump,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "tent" => Ok(Self::Tent),
            "bump" => Ok(Self::Bump),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Relative slack when deciding whether a lattice distance equals `d`.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel<F> {
    family: KernelFamily,
    radius: F,
    dim: usize,
    norm_const: F,
}

const BUMP_QUAD_POINTS: usize = 40_000;

fn bump_profile(rho: f64) -> f64 {
    if rho >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - rho * rho)).exp()
    }
}

/// `∫₀¹ ρ^(dim-1) φ(ρ) dρ` for the bump profile, midpoint rule.
/// The integrand is flat to all orders at ρ = 1, so the rule converges spectrally.
fn bump_radial_moment(dim: usize) -> f64 {
    let h = 1.0 / BUMP_QUAD_POINTS as f64;
    (0..BUMP_QUAD_POINTS)
        .map(|i| {
            let rho = (i as f64 + 0.5) * h;
            rho.powi(dim as i32 - 1) * bump_profile(rho)
        })
        .sum::<f64>()
        * h
}

impl<F: Real> Kernel<F> {
    pub fn new(family: KernelFamily, radius: F, dim: usize) -> Result<Self> {
        if !(radius > F::zero()) || !radius.is_finite() {
            return Err(Error::Config(format!("kernel radius must be positive, got {radius}")));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::Config(format!("kernel dimension must be 1 or 2, got {dim}")));
        }
        let d = radius.as_f64();
        let pi = std::f64::consts::PI;
        let norm = match (family, dim) {
            (KernelFamily::Uniform, 1) => 1.0 / (2.0 * d),
            (KernelFamily::Uniform, _) => 1.0 / (pi * d * d),
            (KernelFamily::Tent, 1) => 1.0 / d,
            (KernelFamily::Tent, _) => 3.0 / (pi * d * d),
            (KernelFamily::Bump, 1) => 1.0 / (2.0 * d * bump_radial_moment(1)),
            (KernelFamily::Bump, _) => 1.0 / (2.0 * pi * d * d * bump_radial_moment(2)),
        };
        Ok(Self { family, radius, dim, norm_const: F::lit(norm) })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Support radius `d`.
    pub fn radius(&self) -> F {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_const(&self) -> F {
        self.norm_const
    }

    /// `J` as a function of `|z|`. The support is the closed ball: lattice
    /// points at exactly `|z| = d` count, which only matters for the uniform
    /// family (the others vanish there).
    pub fn eval_radius(&self, r: F) -> F {
        let r = r.abs();
        if r > self.radius * (F::one() + F::lit(TIE_TOLERANCE)) {
            return F::zero();
        }
        let rho = (r / self.radius).min(F::one());
        let shape = match self.family {
            KernelFamily::Uniform => F::one(),
            KernelFamily::Tent => F::one() - rho,
            KernelFamily::Bump if rho >= F::one() => F::zero(),
            KernelFamily::Bump => (-F::one() / (F::one() - rho * rho)).exp(),
        };
        self.norm_const * shape
    }

    /// `J(z)` for a point `z` of the kernel's dimension.
    pub fn eval(&self, z: &[F]) -> Result<F> {
        if z.len() != self.dim {
            return usage(format!("point has dimension {}, kernel has {}", z.len(), self.dim));
        }
        let r = z.iter().map(|&c| c * c).sum::<F>().sqrt();
        Ok(self.eval_radius(r))
    }

    /// `|∑ J(z_c) hᵈ − 1|` on a midpoint grid with `resolution` points across
    /// the support diameter along each axis.
    pub fn mass_residual(&self, resolution: usize) -> Result<F> {
        if resolution < 16 {
            return usage(format!("quadrature resolution must be >= 16, got {resolution}"));
        }
        let d = self.radius.as_f64();
        let h = 2.0 * d / resolution as f64;
        let center = |i: usize| -d + (i as f64 + 0.5) * h;
        let mut total = 0.0f64;
        match self.dim {
            1 => {
                for i in 0..resolution {
                    total += self.eval_radius(F::lit(center(i))).as_f64();
                }
                total *= h;
            }
            _ => {
                for i in 0..resolution {
                    let x = center(i);
                    for j in 0..resolution {
                        let y = center(j);
                        total += self.eval_radius(F::lit((x * x + y * y).sqrt())).as_f64();
                    }
                }
                total *= h * h;
            }
        }
        Ok(F::lit((total - 1.0).abs()))
    }
}
