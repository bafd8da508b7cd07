//! Local Orlicz energy on a box with Dirichlet data: per-cell forward
//! differences, energy Σ_cells φ(|∇_h v|_F) h^n, its exact discrete
//! gradient, and a monotone descent solver.
//!
//! Assembly is sequential in cell/node index order, so energies and
//! gradients are bitwise reproducible run to run.

use std::cell::RefCell;

use crate::descent::{minimize, SmoothObjective, SolveTrace, SolverOptions};
use crate::grid::{Grid, NodeRole, VectorField};
use crate::nfunc::NFunction;
use crate::{Error, Result};

/// Minimization instance: φ, the data field (fixed nodes carry u_D, free
/// nodes are unknowns), and solver options. The grid needs at least 3 nodes
/// per axis so the interior is nonempty.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    pub phi: NFunction,
    pub data: VectorField,
    pub options: SolverOptions,
}

impl LocalProblem {
    pub fn new(phi: NFunction, data: VectorField, options: SolverOptions) -> Result<Self> {
        options.validate()?;
        let g = &data.grid;
        for k in 0..g.dim {
            if g.shape[k] < 3 {
                return Err(Error::domain(format!(
                    "local problem needs at least 3 nodes per axis, got {}",
                    g.shape[k]
                )));
            }
        }
        if data.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("problem data must be finite"));
        }
        if !data.role.iter().any(|r| *r == NodeRole::Free) {
            return Err(Error::domain("problem has no free nodes"));
        }
        Ok(LocalProblem { phi, data, options })
    }

    pub fn grid(&self) -> &Grid {
        &self.data.grid
    }

    /// A field conforms if it shares the layout and reproduces the fixed data.
    fn check_field(&self, v: &VectorField) -> Result<()> {
        if !v.same_layout(&self.data) || v.role != self.data.role {
            return Err(Error::shape("field does not match the problem layout"));
        }
        for idx in 0..v.grid.node_count() {
            if v.role[idx] == NodeRole::Fixed && v.node(idx) != self.data.node(idx) {
                return Err(Error::domain(format!("field differs from the fixed data at node {idx}")));
            }
        }
        Ok(())
    }
}

/// Visit every forward-difference cell: passes the cell center and the
/// Frobenius norm of the cell Jacobian.
fn for_each_cell(v: &VectorField, eps: f64, mut visit: impl FnMut(&[f64; 2], f64)) {
    let g = &v.grid;
    let nc = v.components;
    let inv_h = 1.0 / g.h;
    let [cx, cy] = g.cell_counts();
    let e2 = eps * eps;
    for i in 0..cx {
        for j in 0..cy {
            let base = g.index(i, j);
            let right = g.index(i + 1, j);
            let mut rho2 = 0.0;
            for c in 0..nc {
                let dx = (v.values[right * nc + c] - v.values[base * nc + c]) * inv_h;
                rho2 += dx * dx;
            }
            if g.dim == 2 {
                let top = g.index(i, j + 1);
                for c in 0..nc {
                    let dy = (v.values[top * nc + c] - v.values[base * nc + c]) * inv_h;
                    rho2 += dy * dy;
                }
            }
            let center = [
                g.origin[0] + g.h * (i as f64 + 0.5),
                if g.dim == 2 { g.origin[1] + g.h * (j as f64 + 0.5) } else { 0.0 },
            ];
            visit(&center, (rho2 + e2).sqrt());
        }
    }
}

fn energy_eps(phi: &NFunction, v: &VectorField, eps: f64) -> f64 {
    let measure = v.grid.cell_measure();
    let mut sum = 0.0;
    for_each_cell(v, eps, |_, rho| sum += phi.eval_raw(rho));
    sum * measure
}

/// Energy restricted to cells whose center the predicate keeps; used by the
/// Caccioppoli and Poincaré certificates. Unregularized.
pub fn masked_cell_energy(phi: &NFunction, v: &VectorField, keep: impl Fn(&[f64]) -> bool) -> f64 {
    let dim = v.grid.dim;
    let measure = v.grid.cell_measure();
    let mut sum = 0.0;
    for_each_cell(v, 0.0, |center, rho| {
        if keep(&center[..dim]) {
            sum += phi.eval_raw(rho);
        }
    });
    sum * measure
}

/// Full-field gradient buffer (node-major), fixed-node entries zeroed.
/// The derivative map A(Q) = φ'(ρ) Q/ρ uses ρ = sqrt(|Q|² + eps²); at
/// eps = 0 the A(0) = 0 extension applies.
fn gradient_eps(phi: &NFunction, v: &VectorField, eps: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), v.values.len());
    out.fill(0.0);
    let g = &v.grid;
    let nc = v.components;
    let inv_h = 1.0 / g.h;
    // h^n * (1/h): per-cell weight against each difference component.
    let cell_w = g.cell_measure() * inv_h;
    let [cx, cy] = g.cell_counts();
    let e2 = eps * eps;
    for i in 0..cx {
        for j in 0..cy {
            let base = g.index(i, j);
            let right = g.index(i + 1, j);
            let top = if g.dim == 2 { g.index(i, j + 1) } else { usize::MAX };
            let mut rho2 = 0.0;
            for c in 0..nc {
                let dx = (v.values[right * nc + c] - v.values[base * nc + c]) * inv_h;
                rho2 += dx * dx;
                if g.dim == 2 {
                    let dy = (v.values[top * nc + c] - v.values[base * nc + c]) * inv_h;
                    rho2 += dy * dy;
                }
            }
            let rho = (rho2 + e2).sqrt();
            if rho < 1e-300 {
                continue;
            }
            let w = cell_w * phi.deriv_raw(rho) / rho;
            for c in 0..nc {
                let dx = (v.values[right * nc + c] - v.values[base * nc + c]) * inv_h;
                out[right * nc + c] += w * dx;
                out[base * nc + c] -= w * dx;
                if g.dim == 2 {
                    let dy = (v.values[top * nc + c] - v.values[base * nc + c]) * inv_h;
                    out[top * nc + c] += w * dy;
                    out[base * nc + c] -= w * dy;
                }
            }
        }
    }
    for idx in 0..g.node_count() {
        if v.role[idx] == NodeRole::Fixed {
            out[idx * nc..(idx + 1) * nc].fill(0.0);
        }
    }
}

/// Σ_cells φ(|∇_h v|_F) h^n.
pub fn local_energy(p: &LocalProblem, v: &VectorField) -> Result<f64> {
    p.check_field(v)?;
    Ok(energy_eps(&p.phi, v, 0.0))
}

/// Exact gradient of the discrete energy with respect to free-node values;
/// smoothed through eps_reg when the problem sets it. Fixed entries are 0.
pub fn local_energy_gradient(p: &LocalProblem, v: &VectorField) -> Result<VectorField> {
    p.check_field(v)?;
    let mut out = v.clone();
    let mut buf = vec![0.0; v.values.len()];
    gradient_eps(&p.phi, v, p.options.eps_reg, &mut buf);
    out.values = buf;
    Ok(out)
}

/// Largest absolute gradient component over free nodes.
pub fn el_residual_local(p: &LocalProblem, v: &VectorField) -> Result<f64> {
    let g = local_energy_gradient(p, v)?;
    Ok(g.values.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

struct LocalObjective<'a> {
    p: &'a LocalProblem,
    free: &'a [usize],
    scratch: RefCell<VectorField>,
    grad: RefCell<Vec<f64>>,
}

impl SmoothObjective for LocalObjective<'_> {
    fn energy(&self, x: &[f64]) -> f64 {
        let mut v = self.scratch.borrow_mut();
        v.unpack_free(self.free, x).expect("packed length fixed by construction");
        energy_eps(&self.p.phi, &v, self.p.options.eps_reg)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut v = self.scratch.borrow_mut();
        v.unpack_free(self.free, x).expect("packed length fixed by construction");
        let mut buf = self.grad.borrow_mut();
        gradient_eps(&self.p.phi, &v, self.p.options.eps_reg, &mut buf);
        let nc = v.components;
        for (k, &idx) in self.free.iter().enumerate() {
            out[k * nc..(k + 1) * nc].copy_from_slice(&buf[idx * nc..(idx + 1) * nc]);
        }
    }
}

/// Minimize the (possibly eps-smoothed) energy over free nodes from `init`.
pub fn solve_local(p: &LocalProblem, init: &VectorField) -> Result<(VectorField, SolveTrace)> {
    p.check_field(init)?;
    let free = init.free_indices();
    let obj = LocalObjective {
        p,
        free: &free,
        scratch: RefCell::new(init.clone()),
        grad: RefCell::new(vec![0.0; init.values.len()]),
    };
    let x0 = init.pack_free(&free);
    let (x, trace) = minimize(&obj, x0, &p.options)?;
    let mut out = init.clone();
    out.unpack_free(&free, &x)?;
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem_1d(nodes: usize, phi: NFunction, data: impl Fn(&[f64]) -> Vec<f64>) -> LocalProblem {
        let g = Grid::new(1, &[nodes], 1.0 / (nodes - 1) as f64, &[0.0]).unwrap();
        let f = VectorField::from_fn(g, data(&[0.0]).len(), data).unwrap();
        LocalProblem::new(phi, f, SolverOptions::default()).unwrap()
    }

    #[test]
    fn constant_field_has_zero_energy() {
        let p = problem_1d(11, NFunction::power(2.0).unwrap(), |_| vec![3.0]);
        let v = p.data.clone();
        assert_eq!(local_energy(&p, &v).unwrap(), 0.0);
        let g = local_energy_gradient(&p, &v).unwrap();
        assert!(g.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_ramp_energy_is_half() {
        // v(x) = x on (0,1), phi = t^2/2: energy 1/2 at any resolution.
        for nodes in [3, 7, 12] {
            let p = problem_1d(nodes, NFunction::power(2.0).unwrap(), |x| vec![x[0]]);
            let v = p.data.clone();
            assert!((local_energy(&p, &v).unwrap() - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_vector_ramp_energy_is_one() {
        // v(x) = (x, x): cell Jacobian norm sqrt(2), phi(sqrt 2) = 1.
        let p = problem_1d(9, NFunction::power(2.0).unwrap(), |x| vec![x[0], x[0]]);
        let v = p.data.clone();
        assert!((local_energy(&p, &v).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quadratic_gradient_is_five_point_stencil() {
        // p=2, N=1, dim 2: the free-node gradient is the unscaled 5-point sum.
        let g = Grid::new(2, &[5, 5], 0.25, &[0.0, 0.0]).unwrap();
        let f = VectorField::from_fn(g, 1, |x| vec![x[0] * x[0] - 0.3 * x[1] + x[0] * x[1]]).unwrap();
        let p = LocalProblem::new(NFunction::power(2.0).unwrap(), f.clone(), SolverOptions::default()).unwrap();
        let grad = local_energy_gradient(&p, &f).unwrap();
        let gr = &f.grid;
        for i in 1..4 {
            for j in 1..4 {
                let idx = gr.index(i, j);
                let stencil = 4.0 * f.values[idx]
                    - f.values[gr.index(i - 1, j)]
                    - f.values[gr.index(i + 1, j)]
                    - f.values[gr.index(i, j - 1)]
                    - f.values[gr.index(i, j + 1)];
                assert!((grad.values[idx] - stencil).abs() < 1e-12, "node ({i},{j})");
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = Grid::new(2, &[4, 4], 0.5, &[0.0, 0.0]).unwrap();
        let f = VectorField::from_fn(g, 2, |x| {
            vec![x[0] * x[0] + 0.37 * x[1], (x[0] - 0.51) * (x[1] + 0.23)]
        })
        .unwrap();
        for phi in [NFunction::power(1.5).unwrap(), NFunction::power_sum(2.0, 4.0).unwrap()] {
            let p = LocalProblem::new(phi, f.clone(), SolverOptions::default()).unwrap();
            let grad = local_energy_gradient(&p, &f).unwrap();
            let eps = 1e-6;
            for &idx in &f.free_indices() {
                for c in 0..f.components {
                    let mut vp = f.clone();
                    vp.values[idx * 2 + c] += eps;
                    let mut vm = f.clone();
                    vm.values[idx * 2 + c] -= eps;
                    let fd = (local_energy(&p, &vp).unwrap() - local_energy(&p, &vm).unwrap()) / (2.0 * eps);
                    let got = grad.values[idx * 2 + c];
                    assert!((fd - got).abs() <= 1e-6 * fd.abs().max(1.0), "fd {fd} vs {got}");
                }
            }
        }
    }

    #[test]
    fn constant_boundary_solves_to_constant() {
        let g = Grid::new(2, &[6, 6], 0.2, &[0.0, 0.0]).unwrap();
        let mut data = VectorField::from_fn(g, 1, |_| vec![2.5]).unwrap();
        // Perturb the free interior so the solver has work to do.
        for &idx in &data.free_indices() {
            data.node_mut(idx)[0] = 0.0;
        }
        let p = LocalProblem::new(NFunction::power(3.0).unwrap(), data.clone(), SolverOptions::default()).unwrap();
        let (u, trace) = solve_local(&p, &data).unwrap();
        assert!(trace.converged());
        // p=3 is degenerate at zero slope: value accuracy scales like the
        // square root of the gradient tolerance.
        for &idx in &u.free_indices() {
            assert!((u.node(idx)[0] - 2.5).abs() < 1e-3);
        }
        assert!(local_energy(&p, &u).unwrap() < 1e-9);
    }

    #[test]
    fn linear_interpolant_is_the_1d_quadratic_minimizer() {
        let p = problem_1d(9, NFunction::power(2.0).unwrap(), |x| vec![2.0 * x[0] - 1.0]);
        let init = p.data.clone();
        let (u, trace) = solve_local(&p, &init).unwrap();
        assert!(trace.converged());
        assert_eq!(trace.iterations, 0);
        assert_eq!(u.values, init.values);
        assert!(el_residual_local(&p, &u).unwrap() < 1e-12);
    }

    #[test]
    fn conformance_violations_are_rejected() {
        let p = problem_1d(5, NFunction::power(2.0).unwrap(), |x| vec![x[0]]);
        let other = VectorField::zeros(Grid::new(1, &[7], 0.2, &[0.0]).unwrap(), 1).unwrap();
        assert!(matches!(local_energy(&p, &other), Err(Error::Shape(_))));
        let mut tampered = p.data.clone();
        tampered.node_mut(0)[0] += 1.0;
        assert!(matches!(local_energy(&p, &tampered), Err(Error::Domain(_))));
    }

    #[test]
    fn two_node_axes_are_rejected_for_problems() {
        let g = Grid::new(1, &[2], 1.0, &[0.0]).unwrap();
        let f = VectorField::zeros(g, 1).unwrap();
        assert!(LocalProblem::new(NFunction::power(2.0).unwrap(), f, SolverOptions::default()).is_err());
    }
}
