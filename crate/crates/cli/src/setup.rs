//! Turns a validated config into operators, data and solver settings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlflux::analysis::{compute_profiles, matched_initial, slowest_mode, Profiles};
use nlflux::evolution::{BoundaryDatum, Scheme, SolverConfig};
use nlflux::geometry::{build_boundary_chart, build_grid, strip_decomposition, ShapeSpec, StripDecomposition};
use nlflux::io::read_field;
use nlflux::kernel::{Kernel, KernelFamily};
use nlflux::operators::{assemble, FluxOperator, NonlocalOperator};
use nlflux::stationary::solve_stationary;
use nlflux::{BoundaryDatum64, Geometry64, SolverConfig64};

use crate::config::{BoundaryKind, CollarShape, ExperimentConfig, InitialKind, ShapeKind};
use crate::error::CliError;

pub struct Experiment {
    pub geom: Geometry64,
    pub op: NonlocalOperator<f64>,
    pub flux: FluxOperator<f64>,
    /// Static or power-law amplitude `h`; zero for the other data.
    pub h: Vec<f64>,
    pub datum: BoundaryDatum64,
    pub solver: SolverConfig64,
    pub u0: Vec<f64>,
    /// Present for power-law data.
    pub strips: Option<StripDecomposition>,
    pub profiles: Option<Profiles<f64>>,
}

pub fn shape_spec(cfg: &ExperimentConfig) -> ShapeSpec<f64> {
    let b = &cfg.domain.bounds;
    match cfg.domain.shape {
        ShapeKind::Interval => ShapeSpec::Interval { a: b[0], b: b[1] },
        ShapeKind::Rectangle => ShapeSpec::Rectangle { lo: [b[0], b[1]], hi: [b[2], b[3]] },
        ShapeKind::Disk => ShapeSpec::Disk { center: [b[0], b[1]], radius: b[2] },
    }
}

pub fn build(cfg: &ExperimentConfig, parallel: bool) -> Result<Experiment, CliError> {
    let shape = shape_spec(cfg);
    let dim = shape.dim();
    let geom = build_grid(shape, cfg.kernel.radius, cfg.domain.h_grid)?;
    let family: KernelFamily = cfg.kernel.family.parse()?;
    let kernel = Kernel::new(family, cfg.kernel.radius, dim)?;
    let (op, flux) = assemble(&geom, &kernel)?;
    let (op, flux) = (op.with_parallel(parallel), flux.with_parallel(parallel));

    let h = collar_field(cfg, &geom)?;
    let b = &cfg.boundary;
    let datum = match b.kind {
        BoundaryKind::None => BoundaryDatum::zero(geom.n_collar()),
        BoundaryKind::Static => BoundaryDatum::Static { h: h.clone() },
        BoundaryKind::PowerLaw => BoundaryDatum::PowerLaw {
            h: h.clone(),
            blowup_time: b.blowup_time.expect("validated"),
            alpha: b.alpha.expect("validated"),
        },
        BoundaryKind::Nonlinear => BoundaryDatum::NonlinearTrace {
            p: b.p.expect("validated"),
            chart: build_boundary_chart(&geom)?,
            floor: None,
        },
    };
    datum.validate(geom.n_collar())?;

    let (strips, profiles) = if b.kind == BoundaryKind::PowerLaw {
        let support: Vec<usize> = (0..h.len()).filter(|&c| h[c] > 0.0).collect();
        let strips = strip_decomposition(&geom, &support)?;
        let profiles = compute_profiles(&op, &flux, &strips, &h, b.alpha.expect("validated"))?;
        (Some(strips), Some(profiles))
    } else {
        (None, None)
    };

    let s = &cfg.solver;
    let scheme: Scheme = s.scheme.parse()?;
    let mut solver = SolverConfig::new(scheme, s.dt, s.t_end).with_threshold(s.threshold).with_stride(s.stride);
    if s.adaptive {
        solver = solver.adaptive(s.adaptive_fraction);
    }

    let u0 = initial_field(cfg, &geom, &op, &flux, &h, profiles.as_ref())?;
    Ok(Experiment { geom, op, flux, h, datum, solver, u0, strips, profiles })
}

fn collar_field(cfg: &ExperimentConfig, geom: &Geometry64) -> Result<Vec<f64>, CliError> {
    let b = &cfg.boundary;
    if !matches!(b.kind, BoundaryKind::Static | BoundaryKind::PowerLaw) {
        return Ok(vec![0.0; geom.n_collar()]);
    }
    let centers = geom.interior_centers();
    let mid = centers.iter().map(|c| c[0]).sum::<f64>() / centers.len() as f64;
    let v = b.value.unwrap_or(0.0);
    Ok(match b.h {
        CollarShape::Zero => vec![0.0; geom.n_collar()],
        CollarShape::Constant => vec![v; geom.n_collar()],
        CollarShape::Right => geom.collar_field(|c| if c[0] > mid { v } else { 0.0 }),
        CollarShape::Left => geom.collar_field(|c| if c[0] < mid { v } else { 0.0 }),
        CollarShape::Antisymmetric => geom.collar_field(|c| if c[0] > mid { v } else { -v }),
        CollarShape::File => {
            let path = b.file.as_ref().expect("validated");
            let values = read_field(path)?;
            if values.len() != geom.n_collar() {
                return Err(CliError::Config {
                    line: 0,
                    message: format!(
                        "{} holds {} values, the collar has {} cells",
                        path.display(),
                        values.len(),
                        geom.n_collar()
                    ),
                });
            }
            values
        }
    })
}

fn initial_field(
    cfg: &ExperimentConfig,
    geom: &Geometry64,
    op: &NonlocalOperator<f64>,
    flux: &FluxOperator<f64>,
    h: &[f64],
    profiles: Option<&Profiles<f64>>,
) -> Result<Vec<f64>, CliError> {
    let i = &cfg.initial;
    let base = i.value.unwrap_or(0.0);
    let amp = i.amplitude.unwrap_or(0.0);
    Ok(match i.kind {
        InitialKind::Constant => vec![base; op.len()],
        InitialKind::Cosine => {
            let centers = geom.interior_centers();
            let lo = centers.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
            let hi = centers.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
            let k = i.wavenumber.expect("validated");
            let width = (hi - lo).max(geom.grid.cell_size);
            centers
                .iter()
                .map(|c| base + amp * (k * std::f64::consts::PI * (c[0] - lo) / width).cos())
                .collect()
        }
        InitialKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..op.len()).map(|_| base + amp * rng.gen_range(-1.0..1.0)).collect()
        }
        InitialKind::Matched => {
            let blowup_time = cfg.boundary.blowup_time.expect("validated");
            matched_initial(profiles.expect("power-law profiles"), blowup_time)
        }
        InitialKind::Mode => {
            let mass = cfg.stationary.mass.unwrap_or(base * geom.domain_volume());
            let sol = solve_stationary(&op.fredholm(), flux, h, mass, geom.grid.cell_size)?;
            let v = slowest_mode(op)?;
            sol.phi.iter().zip(&v).map(|(p, m)| p + amp * m).collect()
        }
        InitialKind::File => {
            let path = i.file.as_ref().expect("validated");
            let values = read_field(path)?;
            if values.len() != op.len() {
                return Err(CliError::Config {
                    line: 0,
                    message: format!(
                        "{} holds {} values, the domain has {} cells",
                        path.display(),
                        values.len(),
                        op.len()
                    ),
                });
            }
            values
        }
    })
}
