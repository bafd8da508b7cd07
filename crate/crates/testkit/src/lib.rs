//! Test-only oracles and instance builders shared by the integration and
//! acceptance suites. Everything here is deliberately independent of the
//! library's solvers: direct linear algebra, hand-assembled stencils, and
//! plain finite differences.

use odg::descent::SolverOptions;
use odg::grid::{Grid, NodeRole, VectorField};
use odg::local::LocalProblem;
use odg::nfunc::NFunction;
use odg::nonlocal::{EnergyForm, FarField, NonlocalProblem, QuadratureOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Conjugate gradients on a symmetric positive definite operator.
/// Panics if the residual fails to reach `tol * |b|`; oracles should not
/// fail silently.
pub fn cg_solve(apply: &dyn Fn(&[f64]) -> Vec<f64>, b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let b_norm = rs.sqrt().max(1e-300);
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * b_norm {
            return x;
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        assert!(pap > 0.0, "operator lost positive definiteness (pAp = {pap:.3e})");
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_next: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_next / rs;
        rs = rs_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    assert!(
        rs.sqrt() <= tol * b_norm,
        "conjugate gradients stalled: |r| = {:.3e}, target {:.3e}",
        rs.sqrt(),
        tol * b_norm
    );
    x
}

/// Minimizes a quadratic energy given its (affine) gradient on the free
/// coordinates: solves g(x) = 0 with A x := g(x) - g(0), rhs := -g(0).
pub fn solve_affine_gradient(
    g: &dyn Fn(&[f64]) -> Vec<f64>,
    n: usize,
    tol: f64,
) -> Vec<f64> {
    let g0 = g(&vec![0.0; n]);
    let apply = move |x: &[f64]| -> Vec<f64> {
        g(x).iter().zip(&g0).map(|(a, b)| a - b).collect()
    };
    let rhs: Vec<f64> = g(&vec![0.0; n]).iter().map(|v| -v).collect();
    cg_solve(&apply, &rhs, tol, 40 * n + 1000)
}

/// Direct five-point solve of the componentwise Laplace system with the
/// problem's fixed data. Valid oracle for the quadratic N-function: the
/// cell-difference energy's stationarity condition at every interior node
/// is exactly the classical stencil.
pub fn five_point_solve(p: &LocalProblem) -> VectorField {
    let g = p.grid().clone();
    assert_eq!(g.dim, 2, "the stencil oracle is two-dimensional");
    let nc = p.data.components;
    let free = p.data.free_indices();
    let n = free.len();
    let mut slot = vec![usize::MAX; g.node_count()];
    for (k, &idx) in free.iter().enumerate() {
        slot[idx] = k;
    }
    let neighbors = |idx: usize| -> [usize; 4] {
        let [i, j] = g.multi_index(idx);
        [g.index(i - 1, j), g.index(i + 1, j), g.index(i, j - 1), g.index(i, j + 1)]
    };
    let mut out = p.data.clone();
    for c in 0..nc {
        let apply = |x: &[f64]| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (k, &idx) in free.iter().enumerate() {
                let mut acc = 4.0 * x[k];
                for nb in neighbors(idx) {
                    if slot[nb] != usize::MAX {
                        acc -= x[slot[nb]];
                    }
                }
                y[k] = acc;
            }
            y
        };
        let mut b = vec![0.0; n];
        for (k, &idx) in free.iter().enumerate() {
            for nb in neighbors(idx) {
                if slot[nb] == usize::MAX {
                    b[k] += p.data.values[nb * nc + c];
                }
            }
        }
        let x = cg_solve(&apply, &b, 1e-13, 40 * n + 1000);
        for (k, &idx) in free.iter().enumerate() {
            out.values[idx * nc + c] = x[k];
        }
    }
    out
}

/// Direct solve of a quadratic local problem through its gradient map.
pub fn local_linear_solve(p: &LocalProblem) -> VectorField {
    let free = p.data.free_indices();
    let nc = p.data.components;
    let g = |x: &[f64]| -> Vec<f64> {
        let mut v = p.data.clone();
        v.unpack_free(&free, x).unwrap();
        odg::local::local_energy_gradient(p, &v).unwrap().pack_free(&free)
    };
    let x = solve_affine_gradient(&g, free.len() * nc, 1e-13);
    let mut out = p.data.clone();
    out.unpack_free(&free, &x).unwrap();
    out
}

/// Direct solve of a quadratic nonlocal problem through its gradient map.
pub fn nonlocal_linear_solve(p: &NonlocalProblem) -> VectorField {
    let free = p.free_nodes().to_vec();
    let nc = p.data.components;
    let g = |x: &[f64]| -> Vec<f64> {
        let mut v = p.data.clone();
        v.unpack_free(&free, x).unwrap();
        odg::nonlocal::nonlocal_energy_gradient(p, &v).unwrap().pack_free(&free)
    };
    let x = solve_affine_gradient(&g, free.len() * nc, 1e-13);
    let mut out = p.data.clone();
    out.unpack_free(&free, &x).unwrap();
    out
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hi = f(&probe);
        probe[i] = x[i] - step;
        let lo = f(&probe);
        probe[i] = x[i];
        out[i] = (hi - lo) / (2.0 * step);
    }
    out
}

/// Closed-form tail of constant data c on the complement of a ball, for
/// the two-dimensional power family: |c| (2 pi / (s p))^(1/(p-1)).
pub fn tail_closed_form(c_norm: f64, s: f64, p: f64) -> f64 {
    c_norm * (2.0 * std::f64::consts::PI / (s * p)).powf(1.0 / (p - 1.0))
}

/// Square grid on [-half, half]^2.
pub fn centered_grid(nodes: usize, half: f64) -> Grid {
    let h = 2.0 * half / (nodes - 1) as f64;
    Grid::new(2, &[nodes, nodes], h, &[-half, -half]).unwrap()
}

/// Random harmonic polynomial data: every term (1, x, y, xy, x^2 - y^2)
/// is harmonic, so the quadratic local minimizer reproduces it exactly.
pub fn harmonic_poly_field(grid: &Grid, nc: usize, amp: f64, seed: u64) -> VectorField {
    let mut r = rng(seed);
    let coeffs: Vec<[f64; 5]> = (0..nc)
        .map(|_| {
            let mut c = [0.0; 5];
            for v in &mut c {
                *v = r.gen_range(-amp..=amp);
            }
            c
        })
        .collect();
    VectorField::from_fn(grid.clone(), nc, move |x| {
        let (a, b) = (x[0], x[1]);
        coeffs
            .iter()
            .map(|c| c[0] + c[1] * a + c[2] * b + c[3] * a * b + c[4] * (a * a - b * b))
            .collect()
    })
    .unwrap()
}

/// Random smooth field with non-harmonic content.
pub fn smooth_random_field(grid: &Grid, nc: usize, amp: f64, seed: u64) -> VectorField {
    use std::f64::consts::PI;
    let mut r = rng(seed);
    let coeffs: Vec<[f64; 6]> = (0..nc)
        .map(|_| {
            let mut c = [0.0; 6];
            for v in &mut c {
                *v = r.gen_range(-amp..=amp);
            }
            c
        })
        .collect();
    VectorField::from_fn(grid.clone(), nc, move |x| {
        let (a, b) = (x[0], x[1]);
        coeffs
            .iter()
            .map(|c| {
                c[0] + c[1] * a
                    + c[2] * b
                    + c[3] * a * b
                    + c[4] * (PI * a).sin() * (PI * b).cos()
                    + c[5] * (a * a + b * b)
            })
            .collect()
    })
    .unwrap()
}

/// Local problem around the given data field.
pub fn local_instance(phi: NFunction, data: VectorField, tolerance: f64) -> LocalProblem {
    let options = SolverOptions { tolerance, ..SolverOptions::default() };
    LocalProblem::new(phi, data, options).unwrap()
}

/// Nonlocal problem around the given data field and far-field descriptor.
pub fn nonlocal_instance(
    s: f64,
    phi: NFunction,
    data: VectorField,
    far: FarField,
    tolerance: f64,
) -> NonlocalProblem {
    let options = SolverOptions { tolerance, ..SolverOptions::default() };
    NonlocalProblem::new(s, phi, data, far, EnergyForm::Renormalized, QuadratureOptions::default(), options)
        .unwrap()
}

/// Random vector with entries in [-amp, amp].
pub fn random_vec(r: &mut ChaCha8Rng, len: usize, amp: f64) -> Vec<f64> {
    (0..len).map(|_| r.gen_range(-amp..=amp)).collect()
}
