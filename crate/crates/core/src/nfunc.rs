//! N-functions: convex φ with φ(0) = 0, φ(t)/t -> 0 at 0 and -> ∞ at ∞.
//!
//! Three families: pure powers t^p/p, two-term power sums t^p/p + t^q/q, and
//! tabulated functions interpolated monotone-cubically in log-log space with
//! power continuation beyond the sample range. Growth is tracked through the
//! Simonenko index pair p = inf t φ'(t)/φ(t), q = sup t φ'(t)/φ(t).

use serde::{Deserialize, Serialize};

use crate::quad::adaptive_simpson;
use crate::report::{digest_of, CertificateReport};
use crate::sampling::{log_grid, log_uniform, rng_from_seed};
use crate::{Error, Result};

/// Number of points of the index sampling grid on [1e-8, 1e8].
const INDEX_GRID_POINTS: usize = 401;
const INDEX_GRID_LO: f64 = 1e-8;
const INDEX_GRID_HI: f64 = 1e8;

/// Relative tolerance of the scalar bisection solves.
const BISECT_REL_TOL: f64 = 1e-12;
const BISECT_MAX_ITER: usize = 200;

/// JSON-facing description of an N-function.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    Power { p: f64 },
    PowerSum { p: f64, q: f64 },
    Tabulated { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone)]
enum Kind {
    Power { p: f64 },
    PowerSum { p: f64, q: f64 },
    Tabulated { spline: MonotoneCubic, deriv_monotone: bool },
}

/// An N-function with cached Simonenko indices and Δ2 estimate.
#[derive(Debug, Clone)]
pub struct NFunction {
    kind: Kind,
    lower_index: f64,
    upper_index: f64,
    delta2: f64,
}

impl NFunction {
    /// φ(t) = t^p / p, p > 1.
    pub fn power(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::domain(format!("power family needs finite p > 1, got {p}")));
        }
        Ok(NFunction { kind: Kind::Power { p }, lower_index: p, upper_index: p, delta2: 2f64.powf(p) })
    }

    /// φ(t) = t^p / p + t^q / q, 1 < p <= q.
    pub fn power_sum(p: f64, q: f64) -> Result<Self> {
        if !p.is_finite() || !q.is_finite() || p <= 1.0 || q < p {
            return Err(Error::domain(format!(
                "power_sum family needs finite 1 < p <= q, got p={p}, q={q}"
            )));
        }
        Ok(NFunction { kind: Kind::PowerSum { p, q }, lower_index: p, upper_index: q, delta2: 2f64.powf(q) })
    }

    /// Monotone-cubic interpolation of log φ against log t, with power
    /// continuation (constant log-log slope) outside the sample range.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::domain("tabulated family needs at least 4 sample points"));
        }
        let mut xs = Vec::with_capacity(points.len());
        let mut ys = Vec::with_capacity(points.len());
        let mut prev_t = 0.0;
        let mut prev_phi = 0.0;
        for (i, &(t, phi)) in points.iter().enumerate() {
            if !t.is_finite() || !phi.is_finite() || t <= 0.0 || phi <= 0.0 {
                return Err(Error::domain(format!(
                    "tabulated sample {i} must have finite t > 0 and phi > 0"
                )));
            }
            if i > 0 && (t <= prev_t || phi <= prev_phi) {
                return Err(Error::domain(format!(
                    "tabulated samples must be strictly increasing in t and phi (sample {i})"
                )));
            }
            prev_t = t;
            prev_phi = phi;
            xs.push(t.ln());
            ys.push(phi.ln());
        }
        let spline = MonotoneCubic::new(&xs, &ys)?;

        // Local index tφ'(t)/φ(t) equals the log-log slope of the interpolant.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut slope_at = |x: f64| {
            let s = spline.deriv(x);
            lo = lo.min(s);
            hi = hi.max(s);
        };
        for t in log_grid(INDEX_GRID_LO, INDEX_GRID_HI, INDEX_GRID_POINTS) {
            slope_at(t.ln());
        }
        for &x in &spline.x {
            slope_at(x);
        }
        if !(lo > 1.0) {
            return Err(Error::domain(format!(
                "tabulated samples violate superlinear growth: minimum index {lo:.6} <= 1"
            )));
        }
        if !hi.is_finite() {
            return Err(Error::domain("tabulated samples give an unbounded upper index"));
        }

        let mut nf = NFunction {
            kind: Kind::Tabulated { spline, deriv_monotone: false },
            lower_index: lo,
            upper_index: hi,
            delta2: 2f64.powf(hi),
        };
        let monotone = nf.deriv_is_monotone_sampled();
        if let Kind::Tabulated { deriv_monotone, .. } = &mut nf.kind {
            *deriv_monotone = monotone;
        }
        Ok(nf)
    }

    pub fn from_config(cfg: &PhiConfig) -> Result<Self> {
        match cfg {
            PhiConfig::Power { p } => NFunction::power(*p),
            PhiConfig::PowerSum { p, q } => NFunction::power_sum(*p, *q),
            PhiConfig::Tabulated { points } => NFunction::tabulated(points),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.kind {
            Kind::Power { .. } => "power",
            Kind::PowerSum { .. } => "power_sum",
            Kind::Tabulated { .. } => "tabulated",
        }
    }

    /// Short parameter string for digests and witnesses.
    pub fn describe(&self) -> String {
        match &self.kind {
            Kind::Power { p } => format!("power(p={p})"),
            Kind::PowerSum { p, q } => format!("power_sum(p={p},q={q})"),
            Kind::Tabulated { spline, .. } => {
                format!("tabulated({} pts, idx=[{:.4},{:.4}])", spline.x.len(), self.lower_index, self.upper_index)
            }
        }
    }

    /// Simonenko index pair (inf, sup) of t φ'(t)/φ(t). Exact for the power
    /// families, sampled on the log grid for tabulated data.
    pub fn indices(&self) -> (f64, f64) {
        (self.lower_index, self.upper_index)
    }

    /// Exponents e with φ(t) = Σ t^e/e, when φ is such a finite sum. Lets
    /// radially integrated quantities collapse to per-exponent moments.
    pub(crate) fn power_exponents(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Power { p } => Some(vec![*p]),
            Kind::PowerSum { p, q } => Some(vec![*p, *q]),
            Kind::Tabulated { .. } => None,
        }
    }

    /// Cached Δ2 doubling estimate φ(2t) <= Δ2 φ(t), namely 2^q.
    pub fn delta2_estimate(&self) -> f64 {
        self.delta2
    }

    /// φ(t) for t >= 0.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::domain(format!("phi is defined for finite t >= 0, got {t}")));
        }
        Ok(self.eval_raw(t))
    }

    #[inline]
    pub(crate) fn eval_raw(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        if t == 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Power { p } => powf_fast(t, *p) / p,
            Kind::PowerSum { p, q } => powf_fast(t, *p) / p + powf_fast(t, *q) / q,
            Kind::Tabulated { spline, .. } => spline.eval(t.ln()).exp(),
        }
    }

    /// φ'(t) for t >= 0; φ'(0) = 0.
    pub fn deriv(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::domain(format!("phi' is defined for finite t >= 0, got {t}")));
        }
        Ok(self.deriv_raw(t))
    }

    #[inline]
    pub(crate) fn deriv_raw(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        if t == 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Power { p } => powf_fast(t, p - 1.0),
            Kind::PowerSum { p, q } => powf_fast(t, p - 1.0) + powf_fast(t, q - 1.0),
            Kind::Tabulated { spline, .. } => {
                let x = t.ln();
                spline.eval(x).exp() * spline.deriv(x) / t
            }
        }
    }

    /// (φ')^{-1}(y): closed form for powers, bisection otherwise.
    pub fn deriv_inv(&self, y: f64) -> Result<f64> {
        if !y.is_finite() || y < 0.0 {
            return Err(Error::domain(format!("(phi')^-1 is defined for finite y >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            Kind::Power { p } => Ok(powf_fast(y, 1.0 / (p - 1.0))),
            Kind::Tabulated { deriv_monotone: false, .. } => Err(Error::capability(
                "tabulated phi' is not strictly increasing on the sample grid; cannot invert",
            )),
            _ => bisect_increasing(|t| self.deriv_raw(t), y),
        }
    }

    /// φ^{-1}(y) by bisection (φ is strictly increasing).
    pub fn inv(&self, y: f64) -> Result<f64> {
        if !y.is_finite() || y < 0.0 {
            return Err(Error::domain(format!("phi^-1 is defined for finite y >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        bisect_increasing(|t| self.eval_raw(t), y)
    }

    /// Conjugate φ*(s) = sup_{t>=0} (s t - φ(t)). Closed form s^{p'}/p' for
    /// the power family; otherwise evaluated at the stationary point
    /// t* = (φ')^{-1}(s).
    pub fn conjugate(&self, s: f64) -> Result<f64> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::domain(format!("phi* is defined for finite s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            Kind::Power { p } => {
                let pc = p / (p - 1.0);
                Ok(powf_fast(s, pc) / pc)
            }
            _ => {
                let t = self.deriv_inv(s)?;
                Ok((s * t - self.eval_raw(t)).max(0.0))
            }
        }
    }

    /// ∫_0^1 φ(τ u) / u du. Closed form for the power families; used by the
    /// far-field ray quadrature.
    pub fn ray_primitive(&self, tau: f64) -> Result<f64> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::domain(format!("ray primitive needs finite tau >= 0, got {tau}")));
        }
        Ok(self.ray_primitive_raw(tau))
    }

    #[inline]
    pub(crate) fn ray_primitive_raw(&self, tau: f64) -> f64 {
        debug_assert!(tau >= 0.0);
        if tau == 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Power { p } => powf_fast(tau, *p) / (p * p),
            Kind::PowerSum { p, q } => powf_fast(tau, *p) / (p * p) + powf_fast(tau, *q) / (q * q),
            Kind::Tabulated { .. } => {
                adaptive_simpson(&|u| if u <= 0.0 { 0.0 } else { self.eval_raw(tau * u) / u }, 0.0, 1.0, 1e-11)
            }
        }
    }

    fn deriv_is_monotone_sampled(&self) -> bool {
        let mut prev = 0.0;
        for t in log_grid(INDEX_GRID_LO, INDEX_GRID_HI, INDEX_GRID_POINTS) {
            let d = self.deriv_raw(t);
            if d < prev * (1.0 - 1e-12) {
                return false;
            }
            prev = prev.max(d);
        }
        true
    }
}

#[inline]
pub(crate) fn powf_fast(t: f64, e: f64) -> f64 {
    if e == 2.0 {
        t * t
    } else if e == 1.0 {
        t
    } else if e == 0.5 {
        t.sqrt()
    } else if e == 1.5 {
        t * t.sqrt()
    } else if e == 3.0 {
        t * t * t
    } else if e == 2.5 {
        t * t * t.sqrt()
    } else if e == 4.0 {
        let s = t * t;
        s * s
    } else {
        t.powf(e)
    }
}

fn bisect_increasing(f: impl Fn(f64) -> f64, y: f64) -> Result<f64> {
    let mut hi = 1.0f64;
    let mut grow = 0;
    while f(hi) < y {
        hi *= 4.0;
        grow += 1;
        if grow > 600 {
            return Err(Error::domain("bisection target out of representable range"));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECT_REL_TOL * hi.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monotone cubic interpolant (Fritsch-Carlson slopes) with linear
/// continuation outside the knot range.
#[derive(Debug, Clone)]
struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let m = x.len();
        debug_assert!(m >= 3 && x.len() == y.len());
        let h: Vec<f64> = (0..m - 1).map(|i| x[i + 1] - x[i]).collect();
        let delta: Vec<f64> = (0..m - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; m];
        d[0] = endpoint_slope(h[0], h[1], delta[0], delta[1]);
        d[m - 1] = endpoint_slope(h[m - 2], h[m - 3], delta[m - 2], delta[m - 3]);
        for i in 1..m - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Ok(MonotoneCubic { x: x.to_vec(), y: y.to_vec(), d })
    }

    fn segment(&self, x: f64) -> usize {
        let m = self.x.len();
        let mut lo = 0usize;
        let mut hi = m - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.x[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn eval(&self, x: f64) -> f64 {
        let m = self.x.len();
        if x <= self.x[0] {
            return self.y[0] + self.d[0] * (x - self.x[0]);
        }
        if x >= self.x[m - 1] {
            return self.y[m - 1] + self.d[m - 1] * (x - self.x[m - 1]);
        }
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    fn deriv(&self, x: f64) -> f64 {
        let m = self.x.len();
        if x <= self.x[0] {
            return self.d[0];
        }
        if x >= self.x[m - 1] {
            return self.d[m - 1];
        }
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let t2 = t * t;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (6.0 * t - 6.0 * t2) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        dh00 * self.y[i] + dh10 * self.d[i] + dh01 * self.y[i + 1] + dh11 * self.d[i + 1]
    }
}

fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    // Three-point one-sided estimate with the usual shape clamps.
    let mut d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        d = 0.0;
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        d = 3.0 * d0;
    }
    d
}

/// Random verification of the growth, conjugate-duality, and Young-type
/// inequalities at the cached index pair. Draws (s, t) log-uniformly from
/// [1e-4, 1e4]^2 and ε from [1e-3, 1]; any normalized violation beyond
/// 1e-10 fails the certificate and is reported with a witness.
pub fn verify_nfunc_inequalities(phi: &NFunction, trials: usize, seed: u64) -> Result<CertificateReport> {
    const TOL: f64 = 1e-10;
    let (p, q) = phi.indices();
    let pc = p / (p - 1.0);
    let mut rng = rng_from_seed(seed);
    let mut rep = CertificateReport::new(
        "nfunc-inequalities",
        digest_of(&[&phi.describe(), &trials.to_string(), &seed.to_string()]),
    );

    let mut worst: Option<(f64, serde_json::Value)> = None;
    let mut min_slack = [f64::INFINITY; 7];
    let names = [
        "growth_lower",
        "growth_upper",
        "conjugate_lower",
        "conjugate_upper",
        "young_first_form",
        "young_second_form",
        "deriv_product_bound",
    ];

    for _ in 0..trials {
        let s = log_uniform(&mut rng, 1e-4, 1e4);
        let t = log_uniform(&mut rng, 1e-4, 1e4);
        let eps = log_uniform(&mut rng, 1e-3, 1.0);

        let phi_s = phi.eval(s)?;
        let phi_t = phi.eval(t)?;
        let phi_st = phi.eval(s * t)?;
        let dphi_s = phi.deriv(s)?;
        let conj_dphi_s = phi.conjugate(dphi_s)?;
        let conj_t = phi.conjugate(t)?;

        let sp = powf_fast(s, p);
        let sq = powf_fast(s, q);
        let (lo_fac, hi_fac) = if sp < sq { (sp, sq) } else { (sq, sp) };

        // (lhs, rhs) pairs asserting lhs <= rhs.
        let checks = [
            (lo_fac * phi_t, phi_st),
            (phi_st, hi_fac * phi_t),
            (2f64.powf(-pc) * phi_s, conj_dphi_s),
            (conj_dphi_s, 2f64.powf(q) * phi_s),
            (s * t, eps * phi_s + eps.powf(1.0 - pc) * conj_t),
            (s * t, eps.powf(1.0 - q) * phi_s + eps * conj_t),
            (dphi_s * t, 2f64.powf(q) * eps.powf(1.0 - pc) * phi_s + eps * phi_t),
        ];

        for (k, (lhs, rhs)) in checks.iter().enumerate() {
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            let slack = (rhs - lhs) / scale;
            if slack < min_slack[k] {
                min_slack[k] = slack;
                if slack < -TOL && worst.as_ref().map(|(w, _)| slack < *w).unwrap_or(true) {
                    worst = Some((
                        slack,
                        serde_json::json!({
                            "check": names[k], "s": s, "t": t, "eps": eps,
                            "lhs": lhs, "rhs": rhs,
                        }),
                    ));
                }
            }
        }
    }

    rep.record("index_lower", p);
    rep.record("index_upper", q);
    for (k, name) in names.iter().enumerate() {
        rep.record(&format!("min_slack_{name}"), min_slack[k]);
        rep.record(&format!("violation_{name}"), (-min_slack[k]).max(0.0));
        rep.cap(&format!("violation_{name}"), TOL);
    }
    rep.witness = worst.map(|(_, w)| w);
    rep.finish();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi_p2() -> NFunction {
        NFunction::power(2.0).unwrap()
    }

    #[test]
    fn power_eval_matches_closed_form() {
        assert_eq!(phi_p2().eval(3.0).unwrap(), 4.5);
        assert_eq!(NFunction::power(3.0).unwrap().deriv(2.0).unwrap(), 4.0);
    }

    #[test]
    fn power_sum_eval_at_two() {
        // 2^1.5 / 1.5 + 2^3 / 3
        let phi = NFunction::power_sum(1.5, 3.0).unwrap();
        let expect = 2f64.powf(1.5) / 1.5 + 8.0 / 3.0;
        assert!((phi.eval(2.0).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 4.552284749830793).abs() < 1e-12);
    }

    #[test]
    fn power_deriv_inv_closed_form() {
        let phi = NFunction::power(3.0).unwrap();
        assert!((phi.deriv_inv(4.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn conjugate_of_power_two() {
        assert!((phi_p2().conjugate(3.0).unwrap() - 4.5).abs() < 1e-15);
        let phi3 = NFunction::power(3.0).unwrap();
        assert!((phi3.conjugate(1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn simonenko_indices_are_exact_for_power_families() {
        assert_eq!(phi_p2().indices(), (2.0, 2.0));
        assert_eq!(NFunction::power_sum(1.5, 3.0).unwrap().indices(), (1.5, 3.0));
    }

    #[test]
    fn delta2_estimate_uses_upper_index() {
        assert_eq!(NFunction::power_sum(1.5, 3.0).unwrap().delta2_estimate(), 8.0);
    }

    #[test]
    fn rejects_sublinear_and_linear_growth() {
        assert!(NFunction::power(1.0).is_err());
        assert!(NFunction::power(0.5).is_err());
        assert!(NFunction::power_sum(0.9, 2.0).is_err());
        assert!(NFunction::power_sum(2.0, 1.5).is_err());
    }

    #[test]
    fn negative_arguments_are_domain_errors() {
        let phi = phi_p2();
        assert!(phi.eval(-1.0).is_err());
        assert!(phi.deriv(-0.1).is_err());
        assert!(phi.deriv_inv(-2.0).is_err());
        assert!(phi.conjugate(-2.0).is_err());
        assert!(phi.eval(f64::NAN).is_err());
    }

    #[test]
    fn tabulated_reproduces_quadratic_samples() {
        let pts: Vec<(f64, f64)> = log_grid(1e-2, 1e2, 33).into_iter().map(|t| (t, t * t)).collect();
        let phi = NFunction::tabulated(&pts).unwrap();
        for &t in &[0.013, 0.4, 1.7, 23.0, 77.0, 500.0, 1e-3] {
            let rel = (phi.eval(t).unwrap() - t * t).abs() / (t * t);
            assert!(rel < 1e-6, "t={t}, rel={rel}");
        }
        let (lo, hi) = phi.indices();
        assert!((lo - 2.0).abs() < 1e-3 && (hi - 2.0).abs() < 1e-3);
    }

    #[test]
    fn tabulated_rejects_non_monotone_samples() {
        let pts = [(0.5, 0.3), (1.0, 1.0), (2.0, 0.9), (4.0, 16.0)];
        assert!(NFunction::tabulated(&pts).is_err());
    }

    #[test]
    fn tabulated_rejects_sublinear_data() {
        // phi = sqrt(t): log-log slope 0.5 <= 1
        let pts: Vec<(f64, f64)> = log_grid(1e-1, 1e1, 9).into_iter().map(|t| (t, t.sqrt())).collect();
        assert!(NFunction::tabulated(&pts).is_err());
    }

    #[test]
    fn deriv_inv_round_trip() {
        for phi in [NFunction::power(1.5).unwrap(), NFunction::power_sum(2.0, 4.0).unwrap()] {
            for &t in &[1e-3, 0.17, 1.0, 42.0, 1e3] {
                let y = phi.deriv(t).unwrap();
                let back = phi.deriv_inv(y).unwrap();
                assert!((back - t).abs() < 1e-9 * t.max(1.0), "t={t}, back={back}");
            }
        }
    }

    #[test]
    fn inv_round_trip() {
        let phi = NFunction::power_sum(1.5, 3.0).unwrap();
        for &t in &[1e-2, 1.0, 5.0, 2e2] {
            let back = phi.inv(phi.eval(t).unwrap()).unwrap();
            assert!((back - t).abs() < 1e-9 * t.max(1.0));
        }
    }

    #[test]
    fn conjugate_bound_example_power_two() {
        // phi*(phi'(1)) = 0.5 for t^2/2, inside [2^{-p'} phi(1), 2^q phi(1)].
        let phi = phi_p2();
        let v = phi.conjugate(phi.deriv(1.0).unwrap()).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        assert!(0.25 * 0.5 <= v && v <= 4.0 * 0.5);
    }

    #[test]
    fn ray_primitive_closed_forms() {
        let phi = NFunction::power(2.0).unwrap();
        assert!((phi.ray_primitive(3.0).unwrap() - 9.0 / 4.0).abs() < 1e-14);
        let ps = NFunction::power_sum(1.5, 3.0).unwrap();
        let expect = 2f64.powf(1.5) / (1.5 * 1.5) + 8.0 / 9.0;
        assert!((ps.ray_primitive(2.0).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn verify_suite_passes_for_standard_families() {
        for phi in [
            NFunction::power(1.5).unwrap(),
            NFunction::power(2.0).unwrap(),
            NFunction::power(3.0).unwrap(),
            NFunction::power_sum(1.5, 3.0).unwrap(),
        ] {
            let rep = verify_nfunc_inequalities(&phi, 2000, 17).unwrap();
            assert!(rep.pass, "family {} failed: {:?}", phi.describe(), rep.witness);
        }
    }

    #[test]
    fn phi_config_round_trip() {
        let cfg: PhiConfig = serde_json::from_str(r#"{"family":"power_sum","p":1.5,"q":3.0}"#).unwrap();
        let phi = NFunction::from_config(&cfg).unwrap();
        assert_eq!(phi.indices(), (1.5, 3.0));
        assert!(serde_json::from_str::<PhiConfig>(r#"{"family":"power","p":2.0,"bogus":1}"#).is_err());
    }
}
