//! Pointwise vector operators: closest-point projection onto balls and
//! convex hulls, radial truncation T_λ and shortening S_λ, their Jacobians
//! under the standing-gradient convention, and randomized verification of
//! the identities and inequalities this calculus satisfies.
//!
//! T_λ a = min{|a|, λ} a/|a| clamps a vector into the closed λ-ball;
//! S_λ a = a - T_λ a shrinks it radially, with |S_λ a| = (|a|-λ)_+.

use serde_json::json;

use crate::report::{digest_of, CertificateReport};
use crate::sampling::{log_uniform, log_uniform_vector, normal, rng_from_seed, unit_vector};
use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// |T_λ a| / |a| as a function of |a|, with the convention 1 at a = 0.
#[inline]
pub(crate) fn truncate_factor(lambda: f64, norm: f64) -> f64 {
    if norm <= lambda {
        1.0
    } else {
        lambda / norm
    }
}

/// |S_λ a| / |a| as a function of |a|, with the convention 0 at a = 0.
#[inline]
pub(crate) fn shorten_factor(lambda: f64, norm: f64) -> f64 {
    if norm <= lambda {
        0.0
    } else {
        1.0 - lambda / norm
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::domain(format!("radius must be finite and positive, got {lambda}")));
    }
    Ok(())
}

fn check_finite(a: &[f64]) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("vector entries must be finite"));
    }
    Ok(())
}

/// T_λ a: a if |a| <= λ, else λ a/|a|.
pub fn truncate(lambda: f64, a: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_finite(a)?;
    let f = truncate_factor(lambda, norm(a));
    Ok(a.iter().map(|&x| x * f).collect())
}

/// S_λ a = a - T_λ a.
pub fn shorten(lambda: f64, a: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_finite(a)?;
    let f = shorten_factor(lambda, norm(a));
    Ok(a.iter().map(|&x| x * f).collect())
}

/// A convex closed projection target.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexTarget {
    Ball { center: Vec<f64>, radius: f64 },
    Hull { points: Vec<Vec<f64>> },
}

impl ConvexTarget {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_lambda(radius)?;
        check_finite(&center)?;
        Ok(ConvexTarget::Ball { center, radius })
    }

    pub fn hull(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("hull needs at least one point"));
        }
        let d = points[0].len();
        for p in &points {
            if p.len() != d {
                return Err(Error::shape(format!(
                    "hull points must share one dimension, found {} and {}",
                    d,
                    p.len()
                )));
            }
            check_finite(p)?;
        }
        Ok(ConvexTarget::Hull { points })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexTarget::Ball { center, .. } => center.len(),
            ConvexTarget::Hull { points } => points[0].len(),
        }
    }
}

/// Closest point of K to a.
pub fn project(k: &ConvexTarget, a: &[f64]) -> Result<Vec<f64>> {
    check_finite(a)?;
    if k.dim() != a.len() {
        return Err(Error::shape(format!(
            "projection target has dimension {}, point has {}",
            k.dim(),
            a.len()
        )));
    }
    match k {
        ConvexTarget::Ball { center, radius } => {
            let shifted: Vec<f64> = a.iter().zip(center).map(|(x, c)| x - c).collect();
            let f = truncate_factor(*radius, norm(&shifted));
            Ok(shifted.iter().zip(center).map(|(s, c)| c + s * f).collect())
        }
        ConvexTarget::Hull { points } => {
            let shifted: Vec<Vec<f64>> =
                points.iter().map(|p| p.iter().zip(a).map(|(x, y)| x - y).collect()).collect();
            let x = min_norm_point(&shifted);
            Ok(x.iter().zip(a).map(|(s, y)| y + s).collect())
        }
    }
}

/// Distance from a to the convex hull of the given points.
pub fn hull_distance(points: &[Vec<f64>], a: &[f64]) -> Result<f64> {
    let hull = ConvexTarget::hull(points.to_vec())?;
    let p = project(&hull, a)?;
    Ok(norm(&p.iter().zip(a).map(|(x, y)| x - y).collect::<Vec<f64>>()))
}

/// Wolfe's min-norm-point iteration over conv(points). The corral (active
/// vertex set) stays affinely independent; termination is by duality gap
/// |x|^2 - min_j <x, p_j> or by stall at a corral-optimal point.
fn min_norm_point(points: &[Vec<f64>]) -> Vec<f64> {
    const GAP_TOL: f64 = 1e-15;
    let start = points
        .iter()
        .enumerate()
        .min_by(|(_, p), (_, q)| dot(p, p).partial_cmp(&dot(q, q)).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut corral = vec![start];
    let mut coef = vec![1.0f64];
    let mut x = points[start].clone();

    let max_outer = 16 * points.len() + 64;
    for _ in 0..max_outer {
        let xx = dot(&x, &x);
        let mut jmin = 0;
        let mut pmin = f64::INFINITY;
        for (j, p) in points.iter().enumerate() {
            let v = dot(&x, p);
            if v < pmin {
                pmin = v;
                jmin = j;
            }
        }
        if xx - pmin <= GAP_TOL * xx.max(1.0) || corral.contains(&jmin) {
            break;
        }
        corral.push(jmin);
        coef.push(0.0);

        let max_inner = 2 * corral.len() + 8;
        for _ in 0..max_inner {
            match affine_min_norm(points, &corral) {
                Some(alpha) if alpha.iter().all(|&v| v > 1e-12) => {
                    coef = alpha;
                    break;
                }
                Some(alpha) => {
                    // Step toward the affine solution until a coefficient hits zero.
                    let mut theta = 1.0f64;
                    for i in 0..corral.len() {
                        if alpha[i] <= 1e-12 {
                            let denom = coef[i] - alpha[i];
                            if denom > 0.0 {
                                theta = theta.min(coef[i] / denom);
                            }
                        }
                    }
                    for i in 0..corral.len() {
                        coef[i] += theta * (alpha[i] - coef[i]);
                    }
                    drop_small(&mut corral, &mut coef);
                }
                None => {
                    // Affinely dependent corral; drop the weakest member.
                    let weakest = coef
                        .iter()
                        .enumerate()
                        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                        .map(|(i, _)| i)
                        .unwrap();
                    corral.remove(weakest);
                    coef.remove(weakest);
                    renormalize(&mut coef);
                }
            }
            if corral.len() == 1 {
                coef = vec![1.0];
                break;
            }
        }

        let d = points[0].len();
        x = vec![0.0; d];
        for (i, &ci) in corral.iter().enumerate() {
            for k in 0..d {
                x[k] += coef[i] * points[ci][k];
            }
        }
    }
    x
}

fn drop_small(corral: &mut Vec<usize>, coef: &mut Vec<f64>) {
    let mut i = 0;
    while i < coef.len() {
        if coef[i] <= 1e-12 && coef.len() > 1 {
            coef.remove(i);
            corral.remove(i);
        } else {
            i += 1;
        }
    }
    renormalize(coef);
}

fn renormalize(coef: &mut [f64]) {
    let s: f64 = coef.iter().sum();
    if s > 0.0 {
        for c in coef.iter_mut() {
            *c /= s;
        }
    }
}

/// Minimize |Σ α_i p_{c_i}| subject to Σ α_i = 1 (α unconstrained in sign).
/// Solves the KKT system [[P^T P, 1],[1^T, 0]]; None if numerically singular.
fn affine_min_norm(points: &[Vec<f64>], corral: &[usize]) -> Option<Vec<f64>> {
    let m = corral.len();
    let mut a = vec![vec![0.0f64; m + 1]; m + 1];
    let mut rhs = vec![0.0f64; m + 1];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = dot(&points[corral[i]], &points[corral[j]]);
        }
        a[i][m] = 1.0;
        a[m][i] = 1.0;
    }
    rhs[m] = 1.0;
    solve_dense(&mut a, &mut rhs).map(|mut sol| {
        sol.truncate(m);
        sol
    })
}

/// Gaussian elimination with partial pivoting; None on a vanishing pivot.
pub(crate) fn solve_dense(a: &mut [Vec<f64>], rhs: &mut [f64]) -> Option<Vec<f64>> {
    let m = rhs.len();
    for col in 0..m {
        let mut piv = col;
        for row in col + 1..m {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..m {
                    a[row][k] -= f * a[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0f64; m];
    for col in (0..m).rev() {
        let mut s = rhs[col];
        for k in col + 1..m {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Dense row-major matrix; rows index space directions (n), columns index
/// target components (N), so entry (i, j) is ∂_i v_j.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(k: usize) -> Matrix {
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            m.data[i * k + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::shape("matrix needs at least one row and column"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("matrix rows must have equal length"));
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frob_inner(&self, other: &Matrix) -> f64 {
        debug_assert!(self.rows == other.rows && self.cols == other.cols);
        self.data.iter().zip(&other.data).map(|(x, y)| x * y).sum()
    }

    /// Row-wise contraction (M v)_i = Σ_j M_{ij} v_j.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], v)).collect()
    }
}

/// A value together with its spatial Jacobian (G_{ij} = ∂_i v_j).
#[derive(Debug, Clone)]
pub struct PointJacobianPair {
    pub value: Vec<f64>,
    pub jacobian: Matrix,
}

impl PointJacobianPair {
    pub fn new(value: Vec<f64>, jacobian: Matrix) -> Result<Self> {
        if jacobian.cols != value.len() {
            return Err(Error::shape(format!(
                "jacobian has {} columns but the value has {} components",
                jacobian.cols,
                value.len()
            )));
        }
        check_finite(&value)?;
        check_finite(&jacobian.data)?;
        Ok(PointJacobianPair { value, jacobian })
    }
}

/// A Jacobian branch value; `interface` marks |a| = λ exactly, where the
/// closed-ball branch was returned by convention.
#[derive(Debug, Clone)]
pub struct JacobianBranch {
    pub matrix: Matrix,
    pub interface: bool,
}

/// ∇(T_λ v) = G inside the ball, (λ/|v|) G (I - v̂ ⊗ v̂) outside.
pub fn truncate_jacobian(pair: &PointJacobianPair, lambda: f64) -> Result<JacobianBranch> {
    check_lambda(lambda)?;
    let a = &pair.value;
    let g = &pair.jacobian;
    let nm = norm(a);
    if nm <= lambda {
        return Ok(JacobianBranch { matrix: g.clone(), interface: nm == lambda });
    }
    let ahat: Vec<f64> = a.iter().map(|&x| x / nm).collect();
    let w = g.mul_vec(&ahat);
    let f = lambda / nm;
    let mut m = Matrix::zeros(g.rows, g.cols);
    for i in 0..g.rows {
        for j in 0..g.cols {
            m.data[i * g.cols + j] = f * (g.at(i, j) - w[i] * ahat[j]);
        }
    }
    Ok(JacobianBranch { matrix: m, interface: false })
}

/// ∇(S_λ v) = G - ∇(T_λ v), taken entrywise from the same truncation
/// branch: exactly zero inside the ball, and reconstructing G to at most
/// one rounding per entry outside.
pub fn shorten_jacobian(pair: &PointJacobianPair, lambda: f64) -> Result<JacobianBranch> {
    let t = truncate_jacobian(pair, lambda)?;
    let g = &pair.jacobian;
    let mut m = Matrix::zeros(g.rows, g.cols);
    for (k, v) in m.data.iter_mut().enumerate() {
        *v = g.data[k] - t.matrix.data[k];
    }
    Ok(JacobianBranch { matrix: m, interface: t.interface })
}

struct SlackTable<'a> {
    names: &'a [&'a str],
    min_slack: Vec<f64>,
    worst: Option<(f64, serde_json::Value)>,
    tol_of: Vec<f64>,
}

impl<'a> SlackTable<'a> {
    fn new(names: &'a [&'a str], tol_of: Vec<f64>) -> Self {
        debug_assert_eq!(names.len(), tol_of.len());
        SlackTable { names, min_slack: vec![f64::INFINITY; names.len()], worst: None, tol_of }
    }

    /// slack < 0 means violated; witness keeps the worst normalized one.
    fn push(&mut self, k: usize, slack: f64, witness: impl Fn() -> serde_json::Value) {
        if slack < self.min_slack[k] {
            self.min_slack[k] = slack;
            let rel = slack / self.tol_of[k];
            let worst_rel = self.worst.as_ref().map(|(w, _)| *w).unwrap_or(f64::INFINITY);
            if slack < -self.tol_of[k] && rel < worst_rel {
                let mut w = witness();
                w["check"] = json!(self.names[k]);
                self.worst = Some((rel, w));
            }
        }
    }

    fn finish(self, rep: &mut CertificateReport) {
        for (k, name) in self.names.iter().enumerate() {
            rep.record(&format!("min_slack_{name}"), self.min_slack[k]);
            rep.record(&format!("violation_{name}"), (-self.min_slack[k]).max(0.0));
            rep.cap(&format!("violation_{name}"), self.tol_of[k]);
        }
        rep.witness = self.worst.map(|(_, w)| w);
    }
}

/// Randomized verification of the projection/truncation/shortening calculus
/// in R^dim: contraction chains for T, S, and ball/hull projections, the
/// paired difference bounds, S + T = identity, the shortening norm formula,
/// and the γ-comparison. Violations are scale-normalized against 1e-12.
pub fn verify_pointwise_inequalities(dim: usize, trials: usize, seed: u64) -> Result<CertificateReport> {
    const TOL: f64 = 1e-12;
    if dim == 0 {
        return Err(Error::domain("operator suite needs dim >= 1"));
    }
    if trials == 0 {
        return Err(Error::domain("operator suite needs trials >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut rep = CertificateReport::new(
        "pointwise-operators",
        digest_of(&[&dim.to_string(), &trials.to_string(), &seed.to_string()]),
    );
    let names = [
        "s_plus_t_identity",
        "shorten_norm_formula",
        "truncate_chain_lower",
        "truncate_chain_upper",
        "shorten_chain_lower",
        "shorten_chain_upper",
        "truncate_difference_bound",
        "shorten_difference_bound",
        "ball_chain_lower",
        "ball_chain_upper",
        "hull_chain_lower",
        "hull_chain_upper",
        "gamma_comparison",
    ];
    let mut table = SlackTable::new(&names, vec![TOL; names.len()]);

    for trial in 0..trials {
        let lambda = log_uniform(&mut rng, 1e-3, 1e3);
        let mut a = log_uniform_vector(&mut rng, dim, 1e-3, 1e3);
        let mut b = log_uniform_vector(&mut rng, dim, 1e-3, 1e3);
        match trial % 8 {
            5 => b = vec![0.0; dim],
            6 => b = a.clone(),
            7 => {
                // Land |a| on (or within rounding of) the interface.
                a = unit_vector(&mut rng, dim).iter().map(|x| x * lambda).collect();
            }
            _ => {}
        }
        let na = norm(&a);
        let nb = norm(&b);
        let ta = truncate(lambda, &a)?;
        let tb = truncate(lambda, &b)?;
        let sa = shorten(lambda, &a)?;
        let sb = shorten(lambda, &b)?;
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let dsq = dot(&diff, &diff);
        let scale = dsq.max(1.0);
        let wit = || json!({"a": a, "b": b, "lambda": lambda});

        let ident = a
            .iter()
            .enumerate()
            .map(|(i, &ai)| (sa[i] + ta[i] - ai).abs())
            .fold(0.0f64, f64::max);
        table.push(0, -ident / na.max(1.0), wit);
        table.push(1, -(norm(&sa) - (na - lambda).max(0.0)).abs() / na.max(1.0), wit);

        let dt: Vec<f64> = ta.iter().zip(&tb).map(|(x, y)| x - y).collect();
        let ds: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| x - y).collect();
        let inner_t = dot(&diff, &dt);
        let inner_s = dot(&diff, &ds);
        table.push(2, (inner_t - dot(&dt, &dt)) / scale, wit);
        table.push(3, (dsq - inner_t) / scale, wit);
        table.push(4, (inner_s - dot(&ds, &ds)) / scale, wit);
        table.push(5, (dsq - inner_s) / scale, wit);

        let rt = 0.5 * (truncate_factor(lambda, na) + truncate_factor(lambda, nb));
        table.push(6, (rt * dsq - dot(&dt, &dt)) / scale, wit);
        let rs = 0.5 * (shorten_factor(lambda, na) + shorten_factor(lambda, nb));
        table.push(7, (inner_s - rs * dsq) / scale, wit);

        let ball = ConvexTarget::ball(log_uniform_vector(&mut rng, dim, 1e-2, 1e2), log_uniform(&mut rng, 1e-2, 1e2))?;
        let pa = project(&ball, &a)?;
        let pb = project(&ball, &b)?;
        let dp: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        let inner_p = dot(&diff, &dp);
        table.push(8, (inner_p - dot(&dp, &dp)) / scale, wit);
        table.push(9, (dsq - inner_p) / scale, wit);

        let hull_pts: Vec<Vec<f64>> =
            (0..dim + 2).map(|_| log_uniform_vector(&mut rng, dim, 1e-1, 1e1)).collect();
        let hull = ConvexTarget::hull(hull_pts.clone())?;
        let ha = project(&hull, &a)?;
        let hb = project(&hull, &b)?;
        let dh: Vec<f64> = ha.iter().zip(&hb).map(|(x, y)| x - y).collect();
        let inner_h = dot(&diff, &dh);
        let hwit = || json!({"a": a, "b": b, "hull": hull_pts});
        table.push(10, (inner_h - dot(&dh, &dh)) / scale, hwit);
        table.push(11, (dsq - inner_h) / scale, hwit);

        // |c| >= γ > λ implies |c| <= (γ/(γ-λ)) |S_λ c|.
        let gamma = lambda * (1.0 + log_uniform(&mut rng, 1e-2, 1e1));
        let mag = gamma * log_uniform(&mut rng, 1.0, 1e2);
        let c: Vec<f64> = unit_vector(&mut rng, dim).iter().map(|x| x * mag).collect();
        let sc = shorten(lambda, &c)?;
        let lhs = norm(&c);
        let rhs = gamma / (gamma - lambda) * norm(&sc);
        table.push(12, (rhs - lhs) / lhs.max(1.0), || {
            json!({"c": c, "lambda": lambda, "gamma": gamma})
        });
    }

    table.finish(&mut rep);
    rep.finish();
    Ok(rep)
}

/// Randomized verification of the T_λ/S_λ Jacobian calculus for n-by-nn
/// gradients: the four Frobenius identities, the sandwich inequalities,
/// the shortening lower bound driving the iteration argument, the exact
/// complement, and central-difference agreement away from the interface.
pub fn verify_jacobian_identities(n: usize, nn: usize, trials: usize, seed: u64) -> Result<CertificateReport> {
    const TOL_ID: f64 = 1e-10;
    const TOL_FD: f64 = 1e-6;
    if n == 0 || nn == 0 {
        return Err(Error::domain("jacobian suite needs n >= 1 and N >= 1"));
    }
    if trials == 0 {
        return Err(Error::domain("jacobian suite needs trials >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut rep = CertificateReport::new(
        "operator-jacobians",
        digest_of(&[&n.to_string(), &nn.to_string(), &trials.to_string(), &seed.to_string()]),
    );
    let names = [
        "identity_truncate_inner",
        "identity_truncate_norm",
        "identity_shorten_inner",
        "identity_shorten_norm",
        "sandwich_truncate_lower",
        "sandwich_truncate_upper",
        "sandwich_shorten_lower",
        "sandwich_shorten_upper",
        "shorten_inner_lower_bound",
        "complement_exact",
        "fd_truncate",
        "fd_shorten",
    ];
    let mut tols = vec![TOL_ID; names.len()];
    tols[10] = TOL_FD;
    tols[11] = TOL_FD;
    let mut table = SlackTable::new(&names, tols);

    for trial in 0..trials {
        let lambda = log_uniform(&mut rng, 1e-2, 1e2);
        let a: Vec<f64> = if trial % 5 == 0 {
            vec![0.0; nn]
        } else {
            log_uniform_vector(&mut rng, nn, 1e-2, 1e2)
        };
        let gscale = log_uniform(&mut rng, 1e-1, 1e1);
        let mut g = Matrix::zeros(n, nn);
        for v in g.data.iter_mut() {
            *v = gscale * normal(&mut rng);
        }
        let pair = PointJacobianPair::new(a.clone(), g.clone())?;
        let t = truncate_jacobian(&pair, lambda)?;
        let s = shorten_jacobian(&pair, lambda)?;

        let nm = norm(&a);
        let outside = nm > lambda;
        let gsq = g.frob_norm_sq();
        let gv_sq = if nm > 0.0 {
            let ahat: Vec<f64> = a.iter().map(|&x| x / nm).collect();
            let w = g.mul_vec(&ahat);
            dot(&w, &w)
        } else {
            0.0
        };
        let c1 = shorten_factor(lambda, nm);
        let (id_ti, id_tn, id_si, id_sn) = if outside {
            let f = lambda / nm;
            (
                f * (gsq - gv_sq),
                f * f * (gsq - gv_sq),
                c1 * gsq + f * gv_sq,
                c1 * c1 * gsq + (1.0 - c1 * c1) * gv_sq,
            )
        } else {
            (gsq, gsq, 0.0, 0.0)
        };

        let scale = gsq.max(1.0);
        let wit = || json!({"a": a, "lambda": lambda, "g": g.data, "n": n, "nn": nn});
        let g_t = g.frob_inner(&t.matrix);
        let g_s = g.frob_inner(&s.matrix);
        let t_sq = t.matrix.frob_norm_sq();
        let s_sq = s.matrix.frob_norm_sq();

        table.push(0, -(g_t - id_ti).abs() / scale, wit);
        table.push(1, -(t_sq - id_tn).abs() / scale, wit);
        table.push(2, -(g_s - id_si).abs() / scale, wit);
        table.push(3, -(s_sq - id_sn).abs() / scale, wit);

        table.push(4, (g_t - t_sq) / scale, wit);
        table.push(5, (gsq - g_t) / scale, wit);
        table.push(6, (g_s - s_sq) / scale, wit);
        table.push(7, (gsq - g_s) / scale, wit);
        table.push(8, (g_s - c1 * gsq) / scale, wit);

        let comp = g
            .data
            .iter()
            .enumerate()
            .map(|(k, &gg)| (t.matrix.data[k] + s.matrix.data[k] - gg).abs())
            .fold(0.0f64, f64::max);
        table.push(9, -comp / scale.sqrt(), wit);

        // Central differences along a random direction, clear of the kink.
        if (nm - lambda).abs() > 1e-3 * nm.max(lambda) {
            let d = unit_vector(&mut rng, nn);
            let eps = 1e-6 * nm.max(1.0);
            let mut fd_check = |which: usize, op: &dyn Fn(&[f64]) -> Result<Vec<f64>>| -> Result<()> {
                let ap: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + eps * y).collect();
                let am: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x - eps * y).collect();
                let fp = op(&ap)?;
                let fm = op(&am)?;
                let numeric: Vec<f64> =
                    fp.iter().zip(&fm).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
                let row = PointJacobianPair::new(a.clone(), Matrix { rows: 1, cols: nn, data: d.clone() })?;
                let analytic = if which == 10 {
                    truncate_jacobian(&row, lambda)?
                } else {
                    shorten_jacobian(&row, lambda)?
                };
                let nscale = numeric.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
                let err = numeric
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (v - analytic.matrix.at(0, j)).abs())
                    .fold(0.0f64, f64::max);
                table.push(which, -err / nscale, || json!({"a": a, "lambda": lambda, "dir": d}));
                Ok(())
            };
            fd_check(10, &|v| truncate(lambda, v))?;
            fd_check(11, &|v| shorten(lambda, v))?;
        }
    }

    table.finish(&mut rep);
    rep.finish();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_vec_eq(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "got {got:?}, want {want:?}");
        }
    }

    #[test]
    fn truncate_clamps_and_fixes() {
        assert_vec_eq(&truncate(1.0, &[2.0, 0.0]).unwrap(), &[1.0, 0.0], 0.0);
        assert_vec_eq(&truncate(1.0, &[0.3, 0.4]).unwrap(), &[0.3, 0.4], 0.0);
        assert_vec_eq(&truncate(2.0, &[3.0, 4.0]).unwrap(), &[1.2, 1.6], 1e-15);
        assert_vec_eq(&truncate(1.0, &[0.0, 0.0]).unwrap(), &[0.0, 0.0], 0.0);
    }

    #[test]
    fn shorten_complements_truncate() {
        assert_vec_eq(&shorten(1.0, &[2.0, 0.0]).unwrap(), &[1.0, 0.0], 1e-15);
        assert_vec_eq(&shorten(1.0, &[0.5, 0.0]).unwrap(), &[0.0, 0.0], 0.0);
        assert_vec_eq(&shorten(2.0, &[3.0, 4.0]).unwrap(), &[1.8, 2.4], 1e-15);
    }

    #[test]
    fn nonpositive_radius_is_domain_error() {
        assert!(truncate(0.0, &[1.0]).is_err());
        assert!(shorten(-1.0, &[1.0]).is_err());
        assert!(ConvexTarget::ball(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn ball_projection_is_shifted_truncation() {
        let k = ConvexTarget::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_vec_eq(&project(&k, &[2.0, 0.0]).unwrap(), &[1.0, 0.0], 0.0);
        let k2 = ConvexTarget::ball(vec![1.0, 1.0], 0.5).unwrap();
        assert_vec_eq(&project(&k2, &[1.0, 3.0]).unwrap(), &[1.0, 1.5], 1e-15);
    }

    #[test]
    fn hull_projection_examples() {
        let tri = ConvexTarget::hull(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_vec_eq(&project(&tri, &[0.2, 0.2]).unwrap(), &[0.2, 0.2], 1e-12);
        let seg = ConvexTarget::hull(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_vec_eq(&project(&seg, &[2.0, 1.0]).unwrap(), &[1.0, 0.0], 1e-12);
    }

    #[test]
    fn hull_distance_examples() {
        let square = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        assert!(hull_distance(&square, &[0.5, 0.5]).unwrap() <= 1e-12);
        assert!((hull_distance(&square, &[2.0, 0.5]).unwrap() - 1.0).abs() <= 1e-12);
        let single = vec![vec![1.0, 1.0]];
        assert!((hull_distance(&single, &[4.0, 5.0]).unwrap() - 5.0).abs() <= 1e-12);
        assert!(hull_distance(&[], &[0.0]).is_err());
    }

    #[test]
    fn truncate_jacobian_branches() {
        let g = Matrix::identity(2);
        let inside = PointJacobianPair::new(vec![0.1, 0.1], g.clone()).unwrap();
        let r = truncate_jacobian(&inside, 1.0).unwrap();
        assert_eq!(r.matrix, g);
        assert!(!r.interface);

        let outside = PointJacobianPair::new(vec![2.0, 0.0], g.clone()).unwrap();
        let r = truncate_jacobian(&outside, 1.0).unwrap();
        assert_vec_eq(&r.matrix.data, &[0.0, 0.0, 0.0, 0.5], 1e-15);
    }

    #[test]
    fn shorten_jacobian_branches() {
        let g = Matrix::identity(2);
        let inside = PointJacobianPair::new(vec![0.1, 0.1], g.clone()).unwrap();
        assert_vec_eq(&shorten_jacobian(&inside, 1.0).unwrap().matrix.data, &[0.0; 4], 0.0);

        let outside = PointJacobianPair::new(vec![2.0, 0.0], g.clone()).unwrap();
        let r = shorten_jacobian(&outside, 1.0).unwrap();
        assert_vec_eq(&r.matrix.data, &[1.0, 0.0, 0.0, 0.5], 1e-15);
    }

    #[test]
    fn interface_point_is_flagged_with_closed_branch() {
        let g = Matrix::identity(2);
        let pair = PointJacobianPair::new(vec![1.0, 0.0], g.clone()).unwrap();
        let t = truncate_jacobian(&pair, 1.0).unwrap();
        assert!(t.interface);
        assert_eq!(t.matrix, g);
        let s = shorten_jacobian(&pair, 1.0).unwrap();
        assert!(s.interface);
        assert_vec_eq(&s.matrix.data, &[0.0; 4], 0.0);
    }

    #[test]
    fn complement_identity_holds_to_rounding() {
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let a = log_uniform_vector(&mut rng, 3, 1e-2, 1e2);
            let mut g = Matrix::zeros(2, 3);
            for v in g.data.iter_mut() {
                *v = normal(&mut rng);
            }
            let pair = PointJacobianPair::new(a, g.clone()).unwrap();
            let t = truncate_jacobian(&pair, 1.0).unwrap();
            let s = shorten_jacobian(&pair, 1.0).unwrap();
            for k in 0..g.data.len() {
                let got = t.matrix.data[k] + s.matrix.data[k];
                let tol = 8.0 * f64::EPSILON * (g.data[k].abs() + t.matrix.data[k].abs());
                assert!((got - g.data[k]).abs() <= tol);
            }
        }
    }

    #[test]
    fn shorten_difference_bound_spot_value() {
        // a=(2,0), b=0, lambda=1: inner product 2 against bound 1.
        let a = [2.0, 0.0];
        let sa = shorten(1.0, &a).unwrap();
        let inner = dot(&a, &sa);
        assert!((inner - 2.0).abs() < 1e-15);
        let bound = 0.5 * (shorten_factor(1.0, 2.0) + 0.0) * 4.0;
        assert!((bound - 1.0).abs() < 1e-15);
        assert!(inner >= bound);
    }

    #[test]
    fn gamma_comparison_equality_at_gamma() {
        // |c| = gamma: comparison holds with equality.
        let c = [3.0, 0.0];
        let sc = shorten(1.0, &c).unwrap();
        let rhs = 3.0 / (3.0 - 1.0) * norm(&sc);
        assert!((rhs - 3.0).abs() < 1e-14);
    }

    #[test]
    fn operator_suite_passes() {
        for dim in [1, 2, 3] {
            let rep = verify_pointwise_inequalities(dim, 2000, 11).unwrap();
            assert!(rep.pass, "dim {dim}: {:?}", rep.witness);
        }
    }

    #[test]
    fn jacobian_suite_passes() {
        for (n, nn) in [(1, 1), (2, 2), (2, 3)] {
            let rep = verify_jacobian_identities(n, nn, 1500, 5).unwrap();
            assert!(rep.pass, "(n,N)=({n},{nn}): {:?}", rep.witness);
        }
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let k = ConvexTarget::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(project(&k, &[1.0]).is_err());
        assert!(PointJacobianPair::new(vec![1.0], Matrix::zeros(2, 2)).is_err());
        assert!(ConvexTarget::hull(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }
}
