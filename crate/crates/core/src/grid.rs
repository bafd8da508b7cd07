//! Uniform node grids on axis-aligned boxes (1-D and 2-D) and vector fields
//! sampled on them. Node (i, j) sits at origin + h·(i, j); fields store N
//! components per node in node-major order.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    /// Nodes per axis; shape[1] == 1 when dim == 1.
    pub shape: [usize; 2],
    pub h: f64,
    pub origin: [f64; 2],
}

impl Grid {
    pub fn new(dim: usize, shape: &[usize], h: f64, origin: &[f64]) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::domain(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if shape.len() != dim || origin.len() != dim {
            return Err(Error::shape(format!(
                "grid with dim {dim} needs {dim} extents and {dim} origin coordinates"
            )));
        }
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::domain(format!("grid spacing must be positive, got {h}")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid origin must be finite"));
        }
        let mut s = [1usize; 2];
        let mut o = [0.0f64; 2];
        for k in 0..dim {
            if shape[k] < 2 {
                return Err(Error::domain(format!("grid needs at least 2 nodes per axis, got {}", shape[k])));
            }
            s[k] = shape[k];
            o[k] = origin[k];
        }
        if s[0].checked_mul(s[1]).map_or(true, |n| n > 1 << 26) {
            return Err(Error::domain("grid is too large"));
        }
        Ok(Grid { dim, shape: s, h, origin: o })
    }

    /// Square/interval [0, side]^dim with `nodes` per axis.
    pub fn unit_box(dim: usize, nodes: usize, side: f64) -> Result<Grid> {
        if nodes < 2 {
            return Err(Error::domain("grid needs at least 2 nodes per axis"));
        }
        let h = side / (nodes - 1) as f64;
        let shape = [nodes, nodes];
        let origin = [0.0, 0.0];
        Grid::new(dim, &shape[..dim], h, &origin[..dim])
    }

    pub fn node_count(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn cell_counts(&self) -> [usize; 2] {
        [self.shape[0] - 1, if self.dim == 2 { self.shape[1] - 1 } else { 1 }]
    }

    pub fn cell_count(&self) -> usize {
        let c = self.cell_counts();
        c[0] * c[1]
    }

    /// Volume element h^dim.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.shape[0] && j < self.shape[1]);
        i * self.shape[1] + j
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx / self.shape[1], idx % self.shape[1]]
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.multi_index(idx);
        [self.origin[0] + self.h * i as f64, self.origin[1] + self.h * j as f64]
    }

    /// True for nodes on the boundary of the grid box.
    pub fn on_box_boundary(&self, idx: usize) -> bool {
        let [i, j] = self.multi_index(idx);
        if i == 0 || i + 1 == self.shape[0] {
            return true;
        }
        self.dim == 2 && (j == 0 || j + 1 == self.shape[1])
    }

    /// Closed-ball node mask: |x - center| <= r.
    pub fn ball_mask(&self, center: &[f64], r: f64) -> Result<Vec<bool>> {
        if center.len() != self.dim {
            return Err(Error::shape(format!(
                "ball center has {} coordinates on a {}-d grid",
                center.len(),
                self.dim
            )));
        }
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::domain(format!("ball radius must be positive, got {r}")));
        }
        let r2 = r * r;
        Ok((0..self.node_count())
            .map(|idx| {
                let x = self.coord(idx);
                let mut d2 = 0.0;
                for k in 0..self.dim {
                    let d = x[k] - center[k];
                    d2 += d * d;
                }
                d2 <= r2
            })
            .collect())
    }

    /// Squared distance between two nodes.
    #[inline]
    pub fn node_dist_sq(&self, a: usize, b: usize) -> f64 {
        let [ai, aj] = self.multi_index(a);
        let [bi, bj] = self.multi_index(b);
        let di = (ai as f64 - bi as f64) * self.h;
        let dj = (aj as f64 - bj as f64) * self.h;
        di * di + dj * dj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    /// Unknown optimized by the solver.
    Free,
    /// Carries prescribed data (Dirichlet boundary or complement values).
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub components: usize,
    /// Node-major: values[idx * components + c].
    pub values: Vec<f64>,
    pub role: Vec<NodeRole>,
}

impl VectorField {
    pub fn new(grid: Grid, components: usize, values: Vec<f64>, role: Vec<NodeRole>) -> Result<Self> {
        if components == 0 {
            return Err(Error::domain("field needs at least one component"));
        }
        let n = grid.node_count();
        if values.len() != n * components {
            return Err(Error::shape(format!(
                "field needs {} values ({} nodes x {} components), got {}",
                n * components,
                n,
                components,
                values.len()
            )));
        }
        if role.len() != n {
            return Err(Error::shape(format!("field needs {} role tags, got {}", n, role.len())));
        }
        Ok(VectorField { grid, components, values, role })
    }

    /// Zero field with every box-boundary node fixed.
    pub fn zeros(grid: Grid, components: usize) -> Result<Self> {
        let n = grid.node_count();
        let role = (0..n)
            .map(|idx| if grid.on_box_boundary(idx) { NodeRole::Fixed } else { NodeRole::Free })
            .collect();
        VectorField::new(grid, components, vec![0.0; n * components], role)
    }

    /// Sample a function of node position; roles as in `zeros`.
    pub fn from_fn(grid: Grid, components: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let n = grid.node_count();
        let mut values = Vec::with_capacity(n * components);
        for idx in 0..n {
            let x = grid.coord(idx);
            let v = f(&x[..grid.dim]);
            if v.len() != components {
                return Err(Error::shape(format!(
                    "sample function returned {} components, expected {}",
                    v.len(),
                    components
                )));
            }
            values.extend_from_slice(&v);
        }
        VectorField::zeros(grid, components).map(|mut fld| {
            fld.values = values;
            fld
        })
    }

    #[inline]
    pub fn node(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.components..(idx + 1) * self.components]
    }

    #[inline]
    pub fn node_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.values[idx * self.components..(idx + 1) * self.components]
    }

    pub fn node_norm(&self, idx: usize) -> f64 {
        self.node(idx).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.role.len()).filter(|&i| self.role[i] == NodeRole::Free).collect()
    }

    pub fn fixed_indices(&self) -> Vec<usize> {
        (0..self.role.len()).filter(|&i| self.role[i] == NodeRole::Fixed).collect()
    }

    /// Flatten the free-node values in index order.
    pub fn pack_free(&self, free: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(free.len() * self.components);
        for &idx in free {
            out.extend_from_slice(self.node(idx));
        }
        out
    }

    /// Write a flat free-node vector back.
    pub fn unpack_free(&mut self, free: &[usize], x: &[f64]) -> Result<()> {
        if x.len() != free.len() * self.components {
            return Err(Error::shape(format!(
                "expected {} packed values, got {}",
                free.len() * self.components,
                x.len()
            )));
        }
        for (k, &idx) in free.iter().enumerate() {
            let src = &x[k * self.components..(k + 1) * self.components];
            self.node_mut(idx).copy_from_slice(src);
        }
        Ok(())
    }

    /// Max euclidean node norm over nodes selected by the predicate.
    pub fn sup_norm_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        (0..self.grid.node_count())
            .filter(|&i| keep(i))
            .map(|i| self.node_norm(i))
            .fold(0.0, f64::max)
    }

    pub fn same_layout(&self, other: &VectorField) -> bool {
        self.grid == other.grid && self.components == other.components
    }
}

/// Euclidean ball, the reference set for tail, level, and hull certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: &[f64], radius: f64) -> Result<Self> {
        if center.is_empty() || center.len() > 2 || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("ball center must be a finite 1- or 2-vector"));
        }
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::domain(format!("ball radius must be positive and finite, got {radius}")));
        }
        Ok(Ball { center: center.to_vec(), radius })
    }

    /// Concentric ball with the radius scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Ball {
        Ball { center: self.center.clone(), radius: self.radius * factor }
    }
}
