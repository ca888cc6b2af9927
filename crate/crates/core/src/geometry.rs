//! Cartesian discretization of the domain, its exterior collar, the recursive
//! blow-up strips and the boundary chart used by the trace extension.
//!
//! Cells are identified two ways: a *grid index* into the full bounding box,
//! and an *ordinal* into either the interior list or the collar list. Fields
//! over the domain are indexed by interior ordinal, exterior data by collar
//! ordinal. Set membership is decided by cell centers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::Real;

pub type Point<F> = [F; 2];

fn dist<F: Real>(a: Point<F>, b: Point<F>) -> F {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeSpec<F> {
    Interval { a: F, b: F },
    Rectangle { lo: Point<F>, hi: Point<F> },
    Disk { center: Point<F>, radius: F },
    /// Union of same-dimension shapes. Only meaningful as a disconnected
    /// negative control; see [`build_grid_unchecked`].
    Union { parts: Vec<ShapeSpec<F>> },
}

impl<F: Real> ShapeSpec<F> {
    pub fn dim(&self) -> usize {
        match self {
            ShapeSpec::Interval { .. } => 1,
            ShapeSpec::Rectangle { .. } | ShapeSpec::Disk { .. } => 2,
            ShapeSpec::Union { parts } => parts.first().map_or(1, |p| p.dim()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ShapeSpec::Interval { a, b } if !(a < b) => {
                Err(Error::Config(format!("interval needs a < b, got ({a}, {b})")))
            }
            ShapeSpec::Rectangle { lo, hi } if !(lo[0] < hi[0] && lo[1] < hi[1]) => {
                Err(Error::Config("rectangle needs lo < hi componentwise".into()))
            }
            ShapeSpec::Disk { radius, .. } if !(*radius > F::zero()) => {
                Err(Error::Config(format!("disk radius must be positive, got {radius}")))
            }
            ShapeSpec::Union { parts } => {
                if parts.is_empty() {
                    return Err(Error::Config("empty shape union".into()));
                }
                let dim = parts[0].dim();
                for p in parts {
                    if p.dim() != dim {
                        return Err(Error::Config("shape union mixes dimensions".into()));
                    }
                    p.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, p: Point<F>) -> bool {
        match self {
            ShapeSpec::Interval { a, b } => *a < p[0] && p[0] < *b,
            ShapeSpec::Rectangle { lo, hi } => {
                lo[0] < p[0] && p[0] < hi[0] && lo[1] < p[1] && p[1] < hi[1]
            }
            ShapeSpec::Disk { center, radius } => dist(p, *center) < *radius,
            ShapeSpec::Union { parts } => parts.iter().any(|s| s.contains(p)),
        }
    }

    /// Nearest point of the closed shape; equals `p` for interior points.
    pub fn nearest_point(&self, p: Point<F>) -> Point<F> {
        match self {
            ShapeSpec::Interval { a, b } => [p[0].max(*a).min(*b), F::zero()],
            ShapeSpec::Rectangle { lo, hi } => {
                [p[0].max(lo[0]).min(hi[0]), p[1].max(lo[1]).min(hi[1])]
            }
            ShapeSpec::Disk { center, radius } => {
                let r = dist(p, *center);
                if r <= *radius {
                    p
                } else {
                    let s = *radius / r;
                    [center[0] + (p[0] - center[0]) * s, center[1] + (p[1] - center[1]) * s]
                }
            }
            ShapeSpec::Union { parts } => parts
                .iter()
                .map(|s| s.nearest_point(p))
                .min_by(|x, y| dist(p, *x).partial_cmp(&dist(p, *y)).unwrap())
                .expect("validated nonempty union"),
        }
    }

    /// Euclidean distance from `p` to the shape (zero inside).
    pub fn distance_to(&self, p: Point<F>) -> F {
        dist(p, self.nearest_point(p))
    }

    /// Nearest boundary point for a point outside the shape.
    pub fn boundary_projection(&self, p: Point<F>) -> Point<F> {
        self.nearest_point(p)
    }

    /// Width of the exterior tubular neighbourhood on which the normal
    /// coordinates `(z, s)` are single valued.
    pub fn tubular_width(&self) -> F {
        match self {
            ShapeSpec::Interval { .. } | ShapeSpec::Rectangle { .. } => F::infinity(),
            ShapeSpec::Disk { radius, .. } => *radius,
            ShapeSpec::Union { parts } => {
                parts.iter().fold(F::infinity(), |m, s| m.min(s.tubular_width()))
            }
        }
    }

    fn bbox(&self) -> (Point<F>, Point<F>) {
        match self {
            ShapeSpec::Interval { a, b } => ([*a, F::zero()], [*b, F::zero()]),
            ShapeSpec::Rectangle { lo, hi } => (*lo, *hi),
            ShapeSpec::Disk { center, radius } => (
                [center[0] - *radius, center[1] - *radius],
                [center[0] + *radius, center[1] + *radius],
            ),
            ShapeSpec::Union { parts } => {
                let mut lo = [F::infinity(); 2];
                let mut hi = [F::neg_infinity(); 2];
                for p in parts {
                    let (l, h) = p.bbox();
                    for k in 0..2 {
                        lo[k] = lo[k].min(l[k]);
                        hi[k] = hi[k].max(h[k]);
                    }
                }
                (lo, hi)
            }
        }
    }
}

/// Uniform Cartesian grid over a box containing the domain and its collar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<F> {
    pub dim: usize,
    pub cell_size: F,
    /// Lower corner of the bounding box.
    pub origin: Point<F>,
    /// Cells per axis; `shape[1] == 1` in one dimension.
    pub shape: [usize; 2],
}

impl<F: Real> Grid<F> {
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> F {
        self.cell_size.powi(self.dim as i32)
    }

    pub fn coords(&self, index: usize) -> [usize; 2] {
        [index % self.shape[0], index / self.shape[0]]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.shape[0] + i
    }

    pub fn center(&self, index: usize) -> Point<F> {
        let [i, j] = self.coords(index);
        let half = F::lit(0.5);
        let x = self.origin[0] + (F::from_usize_lossy(i) + half) * self.cell_size;
        let y = if self.dim == 1 {
            F::zero()
        } else {
            self.origin[1] + (F::from_usize_lossy(j) + half) * self.cell_size
        };
        [x, y]
    }

    /// Grid index after shifting by an integer offset, if still inside the box.
    pub fn shifted(&self, index: usize, offset: (isize, isize)) -> Option<usize> {
        let [i, j] = self.coords(index);
        let ni = i as isize + offset.0;
        let nj = j as isize + offset.1;
        if ni < 0 || nj < 0 || ni >= self.shape[0] as isize || nj >= self.shape[1] as isize {
            None
        } else {
            Some(self.index(ni as usize, nj as usize))
        }
    }

    /// Grid index of the cell containing `p`, clamped to the box.
    pub fn locate(&self, p: Point<F>) -> usize {
        let cell = |k: usize| {
            let t = ((p[k] - self.origin[k]) / self.cell_size).floor();
            let t = t.max(F::zero()).to_f64().unwrap_or(0.0) as usize;
            t.min(self.shape[k] - 1)
        };
        let j = if self.dim == 1 { 0 } else { cell(1) };
        self.index(cell(0), j)
    }
}

/// Integer offsets `(di, dj)` whose center distance is strictly below the
/// kernel radius, together with that distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stencil<F> {
    pub offsets: Vec<(isize, isize)>,
    pub distances: Vec<F>,
}

impl<F: Real> Stencil<F> {
    /// Offsets at exactly the radius are included (closed kernel support);
    /// ties are decided in integer arithmetic so grids with `d / h` integral
    /// behave symmetrically.
    pub fn new(dim: usize, cell_size: F, radius: F) -> Self {
        let rho = (radius / cell_size).as_f64();
        let rho2 = rho * rho * (1.0 + 1e-9);
        let reach = rho.ceil() as isize;
        let jr = if dim == 1 { 0 } else { reach };
        let mut offsets = Vec::new();
        let mut distances = Vec::new();
        for dj in -jr..=jr {
            for di in -reach..=reach {
                let n = (di * di + dj * dj) as f64;
                if n <= rho2 {
                    offsets.push((di, dj));
                    distances.push(cell_size * F::lit(n.sqrt()));
                }
            }
        }
        Self { offsets, distances }
    }

    pub fn reach(&self) -> isize {
        self.offsets.iter().map(|o| o.0.abs().max(o.1.abs())).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMask<F> {
    pub shape_spec: ShapeSpec<F>,
    /// Grid indices of cells whose centers lie in the domain, ascending.
    pub interior: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collar {
    /// Grid indices of exterior cells within the kernel radius of the domain, ascending.
    pub exterior: Vec<usize>,
}

/// Grid, masks and the kernel-range stencil of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry<F> {
    pub grid: Grid<F>,
    pub mask: DomainMask<F>,
    pub collar: Collar,
    pub radius: F,
    pub stencil: Stencil<F>,
    interior_ordinal: Vec<usize>,
    collar_ordinal: Vec<usize>,
}

const NONE: usize = usize::MAX;

/// Builds grid, interior mask and collar; fails on coarse grids or a
/// disconnected interior.
pub fn build_grid<F: Real>(shape: ShapeSpec<F>, radius: F, cell_size: F) -> Result<Geometry<F>> {
    let geom = build_grid_unchecked(shape, radius, cell_size)?;
    if !geom.is_connected() {
        return Err(Error::Config(
            "interior is disconnected under kernel-range adjacency".into(),
        ));
    }
    Ok(geom)
}

/// As [`build_grid`] without the connectivity requirement.
pub fn build_grid_unchecked<F: Real>(
    shape: ShapeSpec<F>,
    radius: F,
    cell_size: F,
) -> Result<Geometry<F>> {
    shape.validate()?;
    if !(cell_size > F::zero()) || !(radius > F::zero()) {
        return Err(Error::Config("cell size and kernel radius must be positive".into()));
    }
    if cell_size.as_f64() > radius.as_f64() / 4.0 * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "grid too coarse: h_grid = {cell_size} exceeds d/4 = {}",
            radius.as_f64() / 4.0
        )));
    }
    let dim = shape.dim();
    let (lo, hi) = shape.bbox();
    let pad = (radius / cell_size).as_f64().ceil() as usize + 1;
    let cells_across = |k: usize| {
        let span = ((hi[k] - lo[k]) / cell_size).as_f64();
        (span - 1e-9).ceil().max(1.0) as usize
    };
    let padf = F::from_usize_lossy(pad) * cell_size;
    let grid = Grid {
        dim,
        cell_size,
        origin: [lo[0] - padf, if dim == 1 { F::zero() } else { lo[1] - padf }],
        shape: [
            cells_across(0) + 2 * pad,
            if dim == 1 { 1 } else { cells_across(1) + 2 * pad },
        ],
    };
    let mut interior = Vec::new();
    let mut exterior = Vec::new();
    let mut interior_ordinal = vec![NONE; grid.len()];
    let mut collar_ordinal = vec![NONE; grid.len()];
    for idx in 0..grid.len() {
        let c = grid.center(idx);
        if shape.contains(c) {
            interior_ordinal[idx] = interior.len();
            interior.push(idx);
        } else if shape.distance_to(c) < radius {
            collar_ordinal[idx] = exterior.len();
            exterior.push(idx);
        }
    }
    if interior.is_empty() {
        return Err(Error::Config("domain contains no cell centers".into()));
    }
    let stencil = Stencil::new(dim, cell_size, radius);
    Ok(Geometry {
        grid,
        mask: DomainMask { shape_spec: shape, interior },
        collar: Collar { exterior },
        radius,
        stencil,
        interior_ordinal,
        collar_ordinal,
    })
}

impl<F: Real> Geometry<F> {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn n_interior(&self) -> usize {
        self.mask.interior.len()
    }

    pub fn n_collar(&self) -> usize {
        self.collar.exterior.len()
    }

    pub fn cell_volume(&self) -> F {
        self.grid.volume()
    }

    /// Discrete measure of the domain.
    pub fn domain_volume(&self) -> F {
        self.cell_volume() * F::from_usize_lossy(self.n_interior())
    }

    pub fn interior_ordinal(&self, grid_index: usize) -> Option<usize> {
        self.interior_ordinal.get(grid_index).copied().filter(|&o| o != NONE)
    }

    pub fn collar_ordinal(&self, grid_index: usize) -> Option<usize> {
        self.collar_ordinal.get(grid_index).copied().filter(|&o| o != NONE)
    }

    pub fn interior_center(&self, ordinal: usize) -> Point<F> {
        self.grid.center(self.mask.interior[ordinal])
    }

    pub fn collar_center(&self, ordinal: usize) -> Point<F> {
        self.grid.center(self.collar.exterior[ordinal])
    }

    pub fn interior_centers(&self) -> Vec<Point<F>> {
        (0..self.n_interior()).map(|o| self.interior_center(o)).collect()
    }

    /// Interior ordinals with a center distance `≤ radius` to `ordinal`, excluding itself.
    pub fn interior_neighbours(&self, ordinal: usize) -> impl Iterator<Item = usize> + '_ {
        let idx = self.mask.interior[ordinal];
        self.stencil
            .offsets
            .iter()
            .filter(|o| **o != (0, 0))
            .filter_map(move |&o| self.grid.shifted(idx, o))
            .filter_map(move |n| self.interior_ordinal(n))
    }

    fn is_connected(&self) -> bool {
        let n = self.n_interior();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(o) = queue.pop_front() {
            for nb in self.interior_neighbours(o) {
                if !seen[nb] {
                    seen[nb] = true;
                    count += 1;
                    queue.push_back(nb);
                }
            }
        }
        count == n
    }

    /// Distance from the center of an interior cell to the domain boundary.
    pub fn boundary_distance(&self, ordinal: usize) -> F {
        let c = self.interior_center(ordinal);
        match &self.mask.shape_spec {
            ShapeSpec::Interval { a, b } => (c[0] - *a).min(*b - c[0]),
            ShapeSpec::Rectangle { lo, hi } => {
                (c[0] - lo[0]).min(hi[0] - c[0]).min(c[1] - lo[1]).min(hi[1] - c[1])
            }
            ShapeSpec::Disk { center, radius } => *radius - dist(c, *center),
            ShapeSpec::Union { parts } => parts
                .iter()
                .filter(|p| p.contains(c))
                .map(|p| match p {
                    ShapeSpec::Interval { a, b } => (c[0] - *a).min(*b - c[0]),
                    ShapeSpec::Rectangle { lo, hi } => (c[0] - lo[0])
                        .min(hi[0] - c[0])
                        .min(c[1] - lo[1])
                        .min(hi[1] - c[1]),
                    ShapeSpec::Disk { center, radius } => *radius - dist(c, *center),
                    ShapeSpec::Union { .. } => F::zero(),
                })
                .fold(F::zero(), |m, v| m.max(v)),
        }
    }

    /// Collar ordinals whose centers satisfy `pred`.
    pub fn collar_where(&self, mut pred: impl FnMut(Point<F>) -> bool) -> Vec<usize> {
        (0..self.n_collar()).filter(|&o| pred(self.collar_center(o))).collect()
    }

    /// Collar field sampled from a function of the cell center.
    pub fn collar_field(&self, mut f: impl FnMut(Point<F>) -> F) -> Vec<F> {
        (0..self.n_collar()).map(|o| f(self.collar_center(o))).collect()
    }

    /// Interior field sampled from a function of the cell center.
    pub fn interior_field(&self, mut f: impl FnMut(Point<F>) -> F) -> Vec<F> {
        (0..self.n_interior()).map(|o| f(self.interior_center(o))).collect()
    }
}

/// Minimum center-to-center distance from grid cell `cell` to the grid cells in `target`.
pub fn distance_to_set<F: Real>(grid: &Grid<F>, cell: usize, target: &[usize]) -> Result<F> {
    if target.is_empty() {
        return usage("distance to an empty cell set");
    }
    let c = grid.center(cell);
    Ok(target
        .iter()
        .map(|&t| dist(c, grid.center(t)))
        .fold(F::infinity(), |m, v| m.min(v)))
}

/// Strips `B_1, B_2, …` grown inward from the support of the boundary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripDecomposition {
    /// `strips[i - 1]` holds `B_i` as ascending interior ordinals.
    pub strips: Vec<Vec<usize>>,
    /// `residuals[i]` holds `Ω_i`, starting with `Ω_0` = the whole interior.
    pub residuals: Vec<Vec<usize>>,
    /// `B_0`: collar ordinals carrying the data.
    pub support: Vec<usize>,
}

impl StripDecomposition {
    pub fn len(&self) -> usize {
        self.strips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strips.is_empty()
    }

    /// `B_i` for `i >= 1`.
    pub fn strip(&self, i: usize) -> &[usize] {
        &self.strips[i - 1]
    }

    /// `Ω_i`; empty beyond the terminal index.
    pub fn residual(&self, i: usize) -> &[usize] {
        self.residuals.get(i).map_or(&[], |v| v.as_slice())
    }

    /// Strip number of each interior cell, `0` for cells in the terminal residual.
    pub fn labels(&self, n_interior: usize) -> Vec<usize> {
        let mut labels = vec![0; n_interior];
        for (k, s) in self.strips.iter().enumerate() {
            for &o in s {
                labels[o] = k + 1;
            }
        }
        labels
    }

    /// Union `B_1 ∪ … ∪ B_m`.
    pub fn union_upto(&self, m: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.strips.iter().take(m).flatten().copied().collect();
        out.sort_unstable();
        out
    }
}

/// `B_i = { x ∈ Ω \ ∪_{j<i} B_j : dist(x, B_{i-1}) ≤ d }` with `B_0` the
/// collar cells in `support`, distances between cell centers. Reach is that
/// of the assembled operators, so a strip is exactly the set of new cells
/// coupled to the previous one; with `d / h` integral this reproduces the
/// continuum strips sampled at cell centers.
pub fn strip_decomposition<F: Real>(
    geom: &Geometry<F>,
    support: &[usize],
) -> Result<StripDecomposition> {
    if support.is_empty() {
        return usage("strip decomposition needs a nonempty data support");
    }
    if let Some(&bad) = support.iter().find(|&&o| o >= geom.n_collar()) {
        return usage(format!("support ordinal {bad} is not a collar cell"));
    }
    let mut support: Vec<usize> = support.to_vec();
    support.sort_unstable();
    support.dedup();

    let n = geom.n_interior();
    let mut assigned = vec![false; n];
    let mut remaining = n;
    let mut frontier: Vec<usize> =
        support.iter().map(|&o| geom.collar.exterior[o]).collect();
    let mut strips = Vec::new();
    let mut residuals = vec![(0..n).collect::<Vec<_>>()];
    while remaining > 0 {
        let mut next = vec![false; n];
        for &idx in &frontier {
            for &off in &geom.stencil.offsets {
                if let Some(o) = geom.grid.shifted(idx, off).and_then(|g| geom.interior_ordinal(g)) {
                    if !assigned[o] {
                        next[o] = true;
                    }
                }
            }
        }
        let strip: Vec<usize> = (0..n).filter(|&o| next[o]).collect();
        if strip.is_empty() {
            break;
        }
        for &o in &strip {
            assigned[o] = true;
        }
        remaining -= strip.len();
        frontier = strip.iter().map(|&o| geom.mask.interior[o]).collect();
        strips.push(strip);
        residuals.push((0..n).filter(|&o| !assigned[o]).collect());
    }
    Ok(StripDecomposition { strips, residuals, support })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartEntry<F> {
    /// Nearest boundary point `z(y)`.
    pub foot: Point<F>,
    /// Distance `s(y) = |y - z(y)|`.
    pub depth: F,
    /// Interior ordinal of the cell nearest to `z(y)`; carries the trace value.
    pub trace: usize,
}

/// Normal coordinates `y = z + s η(z)` for every collar cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryChart<F> {
    pub entries: Vec<ChartEntry<F>>,
    pub tubular_width: F,
}

impl<F: Real> BoundaryChart<F> {
    /// Distinct trace-carrying interior cells, ascending.
    pub fn trace_cells(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.entries.iter().map(|e| e.trace).collect();
        t.sort_unstable();
        t.dedup();
        t
    }
}

pub fn build_boundary_chart<F: Real>(geom: &Geometry<F>) -> Result<BoundaryChart<F>> {
    let shape = &geom.mask.shape_spec;
    let width = shape.tubular_width();
    if geom.radius >= width {
        return Err(Error::Config(format!(
            "kernel radius {} must be below the tubular width {width}",
            geom.radius
        )));
    }
    let grid = &geom.grid;
    let nearest_interior = |z: Point<F>| -> usize {
        let home = grid.locate(z);
        let mut best: Option<(F, usize)> = None;
        let reach = 2isize;
        let jr = if geom.dim() == 1 { 0 } else { reach };
        for dj in -jr..=jr {
            for di in -reach..=reach {
                if let Some(o) = grid.shifted(home, (di, dj)).and_then(|g| geom.interior_ordinal(g)) {
                    let dd = dist(z, geom.interior_center(o));
                    if best.map_or(true, |(b, _)| dd < b) {
                        best = Some((dd, o));
                    }
                }
            }
        }
        best.map(|(_, o)| o).unwrap_or_else(|| {
            (0..geom.n_interior())
                .min_by(|&a, &b| {
                    dist(z, geom.interior_center(a))
                        .partial_cmp(&dist(z, geom.interior_center(b)))
                        .unwrap()
                })
                .expect("nonempty interior")
        })
    };
    let entries = (0..geom.n_collar())
        .map(|o| {
            let y = geom.collar_center(o);
            let foot = shape.boundary_projection(y);
            ChartEntry { foot, depth: dist(y, foot), trace: nearest_interior(foot) }
        })
        .collect();
    Ok(BoundaryChart { entries, tubular_width: width })
}
