//! Assembled operators, strips and profiles against brute-force sums over
//! cell centers.

use nlflux::analysis::compute_profiles;
use nlflux::geometry::{build_grid, strip_decomposition, Geometry, ShapeSpec};
use nlflux::kernel::{Kernel, KernelFamily};
use nlflux::operators::assemble;

fn dist(a: [f64; 2], b: [f64; 2], dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

fn j(k: &Kernel<f64>, a: [f64; 2], b: [f64; 2], dim: usize) -> f64 {
    let z: Vec<f64> = (0..dim).map(|i| a[i] - b[i]).collect();
    k.eval(&z).unwrap()
}

fn cases() -> Vec<(Geometry<f64>, Kernel<f64>)> {
    vec![
        (
            build_grid(ShapeSpec::Interval { a: 0.0, b: 1.0 }, 0.25, 0.05).unwrap(),
            Kernel::new(KernelFamily::Uniform, 0.25, 1).unwrap(),
        ),
        (
            build_grid(ShapeSpec::Interval { a: 0.0, b: 1.0 }, 0.2, 0.02).unwrap(),
            Kernel::new(KernelFamily::Tent, 0.2, 1).unwrap(),
        ),
        (
            build_grid(ShapeSpec::Disk { center: [0.0, 0.0], radius: 1.0 }, 0.4, 0.1).unwrap(),
            Kernel::new(KernelFamily::Bump, 0.4, 2).unwrap(),
        ),
        (
            build_grid(ShapeSpec::Rectangle { lo: [0.0, 0.0], hi: [2.0, 1.0] }, 0.25, 0.0625).unwrap(),
            Kernel::new(KernelFamily::Uniform, 0.25, 2).unwrap(),
        ),
    ]
}

#[test]
fn interior_weights_and_absorption_match_direct_sums() {
    for (g, k) in cases() {
        let (op, _) = assemble(&g, &k).unwrap();
        let w = op.w.to_dense();
        let vol = g.cell_volume();
        let dim = g.dim();
        for x in 0..g.n_interior() {
            let mut a = 0.0;
            for y in 0..g.n_interior() {
                // midpoint rule over Ω, own cell included
                let want = j(&k, g.interior_center(x), g.interior_center(y), dim) * vol;
                assert!((w[x][y] - want).abs() <= 1e-12, "W[{x}][{y}] = {} vs {want}", w[x][y]);
                a += want;
            }
            assert!((op.a[x] - a).abs() <= 1e-12);
        }
    }
}

#[test]
fn collar_weights_match_direct_sums() {
    for (g, k) in cases() {
        let (_, flux) = assemble(&g, &k).unwrap();
        let gd = flux.g.to_dense();
        let vol = g.cell_volume();
        for x in 0..g.n_interior() {
            for y in 0..g.n_collar() {
                let want = j(&k, g.interior_center(x), g.collar_center(y), g.dim()) * vol;
                assert!((gd[x][y] - want).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn kernel_integrates_to_one() {
    for family in [KernelFamily::Uniform, KernelFamily::Tent, KernelFamily::Bump] {
        for dim in [1, 2] {
            let k = Kernel::new(family, 0.3, dim).unwrap();
            // midpoint rule on a fine grid over the support
            let m = if dim == 1 { 200_000 } else { 1000 };
            let step = 0.6 / m as f64;
            let total: f64 = if dim == 1 {
                (0..m).map(|i| k.eval(&[-0.3 + (i as f64 + 0.5) * step]).unwrap() * step).sum()
            } else {
                (0..m)
                    .flat_map(|i| (0..m).map(move |l| (i, l)))
                    .map(|(i, l)| {
                        let z = [-0.3 + (i as f64 + 0.5) * step, -0.3 + (l as f64 + 0.5) * step];
                        k.eval(&z).unwrap() * step * step
                    })
                    .sum()
            };
            assert!((total - 1.0).abs() < 1e-3, "{family:?} dim {dim}: {total}");
        }
    }
}

#[test]
fn strips_match_center_distances() {
    let g = build_grid(ShapeSpec::Disk { center: [0.0, 0.0], radius: 1.0 }, 0.4, 0.1).unwrap();
    let support = g.collar_where(|c| c[0] > 0.5);
    let strips = strip_decomposition(&g, &support).unwrap();
    let mut assigned = vec![false; g.n_interior()];
    let mut previous: Vec<[f64; 2]> = support.iter().map(|&o| g.collar_center(o)).collect();
    for i in 1..=strips.len() {
        let mut want: Vec<usize> = (0..g.n_interior())
            .filter(|&x| !assigned[x])
            .filter(|&x| previous.iter().any(|&p| dist(g.interior_center(x), p, 2) <= 0.4 + 1e-9))
            .collect();
        want.sort_unstable();
        assert_eq!(strips.strip(i), want.as_slice(), "strip {i}");
        for &x in &want {
            assigned[x] = true;
        }
        previous = want.iter().map(|&x| g.interior_center(x)).collect();
    }
    let rest: Vec<usize> = (0..g.n_interior()).filter(|&x| !assigned[x]).collect();
    assert_eq!(strips.residual(strips.len()), rest.as_slice());
}

#[test]
fn ladder_strips_are_five_cells_each() {
    let g = build_grid(ShapeSpec::Interval { a: 0.0, b: 1.0 }, 0.25, 0.05).unwrap();
    let strips = strip_decomposition(&g, &g.collar_where(|c| c[0] > 1.0)).unwrap();
    assert_eq!(strips.len(), 4);
    for i in 1..=4 {
        let want: Vec<usize> = (0..20).filter(|&x| (19 - x) / 5 == i - 1).collect();
        assert_eq!(strips.strip(i), want.as_slice());
    }
}

#[test]
fn profile_recursion_matches_brute_force() {
    let g = build_grid(ShapeSpec::Interval { a: 0.0, b: 1.0 }, 0.2, 0.02).unwrap();
    let k = Kernel::new(KernelFamily::Tent, 0.2, 1).unwrap();
    let (op, flux) = assemble(&g, &k).unwrap();
    let support = g.collar_where(|c| c[0] > 1.0);
    let h = g.collar_field(|c| if c[0] > 1.0 { 1.0 + c[0] } else { 0.0 });
    let strips = strip_decomposition(&g, &support).unwrap();
    let vol = g.cell_volume();
    for alpha in [1.0f64, 1.7, 2.0, 3.4] {
        let prof = compute_profiles(&op, &flux, &strips, &h, alpha).unwrap();
        // w̃₁ = Σ_y J vol h on B₁; w̃_i = Σ_{y ∈ B_{i−1}} J vol w_{i−1}; w_i = w̃_i / (α − i)
        let mut prev: Vec<f64> = vec![0.0; g.n_interior()];
        for i in 1..=alpha.floor() as usize {
            if i > strips.len() {
                break;
            }
            let strip = strips.strip(i);
            let mut wt = vec![0.0; g.n_interior()];
            for &x in strip {
                wt[x] = if i == 1 {
                    (0..g.n_collar())
                        .map(|y| j(&k, g.interior_center(x), g.collar_center(y), 1) * vol * h[y])
                        .sum()
                } else {
                    strips
                        .strip(i - 1)
                        .iter()
                        .map(|&y| j(&k, g.interior_center(x), g.interior_center(y), 1) * vol * prev[y])
                        .sum()
                };
            }
            let got = prof.w_tilde(i).unwrap();
            for x in 0..wt.len() {
                assert!((got[x] - wt[x]).abs() <= 1e-12, "alpha {alpha}, w~_{i}[{x}]");
            }
            if (i as f64) < alpha {
                let w: Vec<f64> = wt.iter().map(|v| v / (alpha - i as f64)).collect();
                let got = prof.w(i).unwrap();
                for x in 0..w.len() {
                    assert!((got[x] - w[x]).abs() <= 1e-12, "alpha {alpha}, w_{i}[{x}]");
                }
                prev = w;
            } else {
                assert!(prof.w(i).is_err(), "w_{i} must be undefined for alpha = {i}");
            }
        }
    }
}

#[test]
fn boundary_distance_matches_shape() {
    let g = build_grid(ShapeSpec::Disk { center: [0.5, -0.5], radius: 1.0 }, 0.4, 0.1).unwrap();
    for x in 0..g.n_interior() {
        let c = g.interior_center(x);
        let want = 1.0 - dist(c, [0.5, -0.5], 2);
        assert!((g.boundary_distance(x) - want).abs() < 1e-14);
    }
}

#[test]
fn single_precision_aliases_agree_with_double() {
    let g32 = build_grid(ShapeSpec::Interval { a: 0.0f32, b: 1.0 }, 0.25, 0.05).unwrap();
    let k32 = nlflux::Kernel32::new(KernelFamily::Uniform, 0.25, 1).unwrap();
    let (op32, _) = assemble(&g32, &k32).unwrap();
    let g = build_grid(ShapeSpec::Interval { a: 0.0, b: 1.0 }, 0.25, 0.05).unwrap();
    let (op, _) = assemble(&g, &Kernel::new(KernelFamily::Uniform, 0.25, 1).unwrap()).unwrap();
    for (a, b) in op32.a.iter().zip(&op.a) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}
