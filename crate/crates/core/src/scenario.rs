//! Scenario configs: one JSON document describing a problem, its data,
//! and the certificate suite to run against the solved field.
//!
//! Parsing reports the offending field path and line/column; validation
//! catches semantic dead ends (exponent shifts at or past s, expressions
//! referencing missing axes) before any work starts. `run` is pure with
//! respect to the filesystem; the binary owns file layout and exit codes.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::degiorgi::{
    boundedness_certificate_local, boundedness_certificate_nonlocal, caccioppoli_ratio_local,
    caccioppoli_ratio_nonlocal, convex_hull_certificate_local, convex_hull_certificate_nonlocal,
    level_decay_certificate, poincare_ratio_local, poincare_ratio_nonlocal, scale_invariance_check,
    LevelMode, LEVEL_EPSILON,
};
use crate::descent::{SolveTrace, SolverOptions};
use crate::expr::Expr;
use crate::grid::{Ball, Grid, NodeRole, VectorField};
use crate::local::{solve_local, LocalProblem};
use crate::nfunc::{NFunction, PhiConfig};
use crate::nonlocal::{
    nonlocal_energy, solve_nonlocal, tail, BoxExtent, EnergyForm, FarField, NonlocalProblem,
    QuadratureOptions,
};
use crate::report::{digest_bytes, CertificateReport, RunReport, SolverSummary};
use crate::sampling::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub h: f64,
    /// Defaults to the box centered at the coordinate origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        let origin = match &self.origin {
            Some(o) => o.clone(),
            None => self.shape.iter().map(|&n| -self.h * (n.saturating_sub(1) as f64) / 2.0).collect(),
        };
        Grid::new(self.dim, &self.shape, self.h, &origin)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Local,
    Nonlocal {
        s: f64,
        #[serde(default = "default_far_field")]
        far_field: FarField,
        #[serde(default)]
        form: EnergyForm,
    },
}

fn default_far_field() -> FarField {
    FarField::Zero
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Same vector at every node.
    Constant { value: Vec<f64> },
    /// One formula per component, evaluated at node coordinates.
    Expression { formulas: Vec<String> },
    /// Independent uniform values in [-amplitude, amplitude], drawn in
    /// node order from the scenario seed.
    Random { amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub components: usize,
    pub generator: GeneratorSpec,
}

/// Per-key cap overrides applied on top of a certificate's defaults.
pub type CapOverrides = BTreeMap<String, f64>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateSpec {
    Caccioppoli {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        lambda: f64,
        big_lambda: f64,
        r: f64,
        big_r: f64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        caps: CapOverrides,
    },
    Boundedness {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radius: f64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        caps: CapOverrides,
    },
    Hull {
        #[serde(default = "default_hull_cap")]
        cap: f64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        caps: CapOverrides,
    },
    Poincare {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radius: f64,
        /// Exponent shift of the nonlocal estimate; must stay below s.
        /// Local scenarios leave it at 0.
        #[serde(default)]
        alpha: f64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        caps: CapOverrides,
    },
    LevelDecay {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radius: f64,
        #[serde(default = "default_levels")]
        levels: usize,
        #[serde(default = "default_epsilon_hat")]
        epsilon_hat: f64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        caps: CapOverrides,
    },
    ScaleInvariance {
        #[serde(default = "default_scale_factor")]
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radius: f64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        caps: CapOverrides,
    },
}

fn default_hull_cap() -> f64 {
    1e-3
}

fn default_levels() -> usize {
    20
}

fn default_epsilon_hat() -> f64 {
    LEVEL_EPSILON
}

fn default_scale_factor() -> f64 {
    2.0
}

impl CertificateSpec {
    fn cap_overrides(&self) -> &CapOverrides {
        match self {
            CertificateSpec::Caccioppoli { caps, .. }
            | CertificateSpec::Boundedness { caps, .. }
            | CertificateSpec::Hull { caps, .. }
            | CertificateSpec::Poincare { caps, .. }
            | CertificateSpec::LevelDecay { caps, .. }
            | CertificateSpec::ScaleInvariance { caps, .. } => caps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub grid: GridSpec,
    pub phi: PhiConfig,
    pub problem: ProblemSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub certificates: Vec<CertificateSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub quadrature: QuadratureOptions,
}

/// The constructed problem, either flavor.
#[derive(Debug, Clone)]
pub enum Problem {
    Local(LocalProblem),
    Nonlocal(NonlocalProblem),
}

impl Problem {
    pub fn grid(&self) -> &Grid {
        match self {
            Problem::Local(p) => p.grid(),
            Problem::Nonlocal(p) => p.grid(),
        }
    }

    pub fn phi(&self) -> &NFunction {
        match self {
            Problem::Local(p) => &p.phi,
            Problem::Nonlocal(p) => &p.phi,
        }
    }

    pub fn solve(&self, init: &VectorField) -> Result<(VectorField, SolveTrace)> {
        match self {
            Problem::Local(p) => solve_local(p, init),
            Problem::Nonlocal(p) => solve_nonlocal(p, init),
        }
    }
}

/// Everything `run` produces; the caller decides what hits disk.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: RunReport,
    pub solution: VectorField,
    pub trace: SolveTrace,
}

impl ScenarioConfig {
    /// Parses and validates. Errors carry the JSON field path plus the
    /// line/column of the underlying syntax or type problem.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<ScenarioConfig> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        let cfg: ScenarioConfig = match serde_path_to_error::deserialize(&mut de) {
            Ok(cfg) => cfg,
            Err(e) => {
                let inner = e.inner();
                return Err(Error::config(
                    e.path().to_string(),
                    format!("{inner} (line {}, column {})", inner.line(), inner.column()),
                ));
            }
        };
        de.end().map_err(|e| {
            Error::config(".", format!("trailing data after the config object: {e}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Semantic checks that do not need the solved field.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        let grid = self.grid.build().map_err(|e| Error::config("grid", e.to_string()))?;
        NFunction::from_config(&self.phi).map_err(|e| Error::config("phi", e.to_string()))?;
        let nc = self.data.components;
        if nc == 0 {
            return Err(Error::config("data.components", "need at least one component"));
        }
        match &self.data.generator {
            GeneratorSpec::Constant { value } => {
                if value.len() != nc {
                    return Err(Error::config(
                        "data.generator.value",
                        format!("expected {nc} entries, got {}", value.len()),
                    ));
                }
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("data.generator.value", "entries must be finite"));
                }
            }
            GeneratorSpec::Expression { formulas } => {
                if formulas.len() != nc {
                    return Err(Error::config(
                        "data.generator.formulas",
                        format!("expected {nc} entries, got {}", formulas.len()),
                    ));
                }
                for (j, src) in formulas.iter().enumerate() {
                    let path = format!("data.generator.formulas[{j}]");
                    let expr =
                        Expr::parse(src).map_err(|e| Error::config(path.clone(), e.to_string()))?;
                    if let Some(axis) = expr.max_axis() {
                        if axis >= grid.dim {
                            return Err(Error::config(
                                path,
                                format!("references x{axis} but the grid has {} axes", grid.dim),
                            ));
                        }
                    }
                }
            }
            GeneratorSpec::Random { amplitude } => {
                if !amplitude.is_finite() || *amplitude <= 0.0 {
                    return Err(Error::config(
                        "data.generator.amplitude",
                        format!("must be positive, got {amplitude}"),
                    ));
                }
            }
        }
        let s = match &self.problem {
            ProblemSpec::Local => None,
            ProblemSpec::Nonlocal { s, far_field, .. } => {
                if !s.is_finite() || *s <= 0.0 || *s >= 1.0 {
                    return Err(Error::config(
                        "problem.s",
                        format!("fractional order must lie in (0,1), got {s}"),
                    ));
                }
                match far_field {
                    FarField::ConstantVector { c } | FarField::PowerDecay { c, .. }
                        if c.len() != nc =>
                    {
                        return Err(Error::config(
                            "problem.far_field.c",
                            format!("expected {nc} entries, got {}", c.len()),
                        ));
                    }
                    _ => {}
                }
                Some(*s)
            }
        };
        for (i, cert) in self.certificates.iter().enumerate() {
            let path = |field: &str| format!("certificates[{i}].{field}");
            match cert {
                CertificateSpec::Caccioppoli { lambda, big_lambda, r, big_r, .. } => {
                    if !(0.0 < *lambda && lambda < big_lambda) {
                        return Err(Error::config(path("lambda"), "need 0 < lambda < big_lambda"));
                    }
                    if !(0.0 < *r && r < big_r) {
                        return Err(Error::config(path("r"), "need 0 < r < big_r"));
                    }
                }
                CertificateSpec::Boundedness { radius, .. } => {
                    if !radius.is_finite() || *radius <= 0.0 {
                        return Err(Error::config(path("radius"), "need a positive radius"));
                    }
                }
                CertificateSpec::Hull { cap, .. } => {
                    if !cap.is_finite() || *cap <= 0.0 {
                        return Err(Error::config(path("cap"), "need a positive cap"));
                    }
                }
                CertificateSpec::Poincare { radius, alpha, .. } => {
                    if !radius.is_finite() || *radius <= 0.0 {
                        return Err(Error::config(path("radius"), "need a positive radius"));
                    }
                    match s {
                        None => {
                            if *alpha != 0.0 {
                                return Err(Error::config(
                                    path("alpha"),
                                    "exponent shift applies to nonlocal problems only",
                                ));
                            }
                            if grid.dim != 2 {
                                return Err(Error::config(
                                    path("kind"),
                                    "the local estimate needs a two-axis grid",
                                ));
                            }
                        }
                        Some(s) => {
                            if !alpha.is_finite() || *alpha < 0.0 || *alpha >= s {
                                return Err(Error::config(
                                    path("alpha"),
                                    format!("must lie in [0, s) with s={s}, got {alpha}"),
                                ));
                            }
                        }
                    }
                }
                CertificateSpec::LevelDecay { radius, levels, epsilon_hat, .. } => {
                    if !radius.is_finite() || *radius <= 0.0 {
                        return Err(Error::config(path("radius"), "need a positive radius"));
                    }
                    if *levels == 0 {
                        return Err(Error::config(path("levels"), "need at least one level"));
                    }
                    if !epsilon_hat.is_finite() || *epsilon_hat <= 0.0 {
                        return Err(Error::config(path("epsilon_hat"), "must be positive"));
                    }
                }
                CertificateSpec::ScaleInvariance { t, radius, .. } => {
                    if s.is_none() {
                        return Err(Error::config(
                            path("kind"),
                            "rescaling applies to nonlocal problems only",
                        ));
                    }
                    if !t.is_finite() || *t <= 0.0 {
                        return Err(Error::config(path("t"), "need a positive factor"));
                    }
                    if !radius.is_finite() || *radius <= 0.0 {
                        return Err(Error::config(path("radius"), "need a positive radius"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds the data field and the problem. Assumes `validate` passed;
    /// the constructors re-check their own invariants regardless.
    pub fn build(&self) -> Result<Problem> {
        let grid = self.grid.build()?;
        let phi = NFunction::from_config(&self.phi)?;
        let data = self.build_data(&grid)?;
        match &self.problem {
            ProblemSpec::Local => {
                Ok(Problem::Local(LocalProblem::new(phi, data, self.solver.clone())?))
            }
            ProblemSpec::Nonlocal { s, far_field, form } => Ok(Problem::Nonlocal(
                NonlocalProblem::new(
                    *s,
                    phi,
                    data,
                    far_field.clone(),
                    *form,
                    self.quadrature.clone(),
                    self.solver.clone(),
                )?,
            )),
        }
    }

    fn build_data(&self, grid: &Grid) -> Result<VectorField> {
        let nc = self.data.components;
        match &self.data.generator {
            GeneratorSpec::Constant { value } => {
                let value = value.clone();
                VectorField::from_fn(grid.clone(), nc, move |_| value.clone())
            }
            GeneratorSpec::Expression { formulas } => {
                let exprs: Vec<Expr> =
                    formulas.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?;
                VectorField::from_fn(grid.clone(), nc, move |x| {
                    exprs.iter().map(|e| e.eval(x)).collect()
                })
            }
            GeneratorSpec::Random { amplitude } => {
                use rand::Rng;
                let mut rng = rng_from_seed(self.seed);
                let amp = *amplitude;
                let n = grid.node_count();
                let mut values = Vec::with_capacity(n * nc);
                let mut role = Vec::with_capacity(n);
                for idx in 0..n {
                    for _ in 0..nc {
                        values.push(rng.gen_range(-amp..=amp));
                    }
                    role.push(if grid.on_box_boundary(idx) {
                        NodeRole::Fixed
                    } else {
                        NodeRole::Free
                    });
                }
                VectorField::new(grid.clone(), nc, values, role)
            }
        }
    }

    /// Solves the problem and runs every listed certificate. No file I/O.
    pub fn run(&self) -> Result<ScenarioOutcome> {
        self.validate()?;
        let problem = self.build()?;
        let init = match &problem {
            Problem::Local(p) => p.data.clone(),
            Problem::Nonlocal(p) => p.data.clone(),
        };
        let (solution, trace) = problem.solve(&init)?;
        let mut certificates = Vec::with_capacity(self.certificates.len());
        for cert in &self.certificates {
            let mut rep = run_certificate(&problem, &solution, cert)?;
            let overrides = cert.cap_overrides();
            if !overrides.is_empty() && !rep.degenerate {
                for (key, cap) in overrides {
                    rep.cap(key, *cap);
                }
                rep.finish();
            }
            certificates.push(rep);
        }
        let config_digest = digest_bytes(&serde_json::to_vec(self)?);
        let report = RunReport {
            scenario: self.name.clone(),
            seed: self.seed,
            config_digest,
            solver: Some(SolverSummary {
                iterations: trace.iterations,
                energy: trace.energy,
                residual: trace.residual,
                converged: trace.converged(),
            }),
            certificates,
        };
        Ok(ScenarioOutcome { report, solution, trace })
    }
}

fn ball_from(grid: &Grid, center: &Option<Vec<f64>>, radius: f64) -> Result<Ball> {
    let center = match center {
        Some(c) => c.clone(),
        None => BoxExtent::of(grid).center()[..grid.dim].to_vec(),
    };
    Ball::new(&center, radius)
}

/// Dispatches one certificate spec against the solved field.
pub fn run_certificate(
    problem: &Problem,
    u: &VectorField,
    spec: &CertificateSpec,
) -> Result<CertificateReport> {
    let grid = problem.grid();
    match spec {
        CertificateSpec::Caccioppoli { center, lambda, big_lambda, r, big_r, .. } => {
            let b = ball_from(grid, center, *r)?;
            match problem {
                Problem::Local(p) => {
                    caccioppoli_ratio_local(p, u, &b.center, *lambda, *big_lambda, *r, *big_r)
                }
                Problem::Nonlocal(p) => {
                    caccioppoli_ratio_nonlocal(p, u, &b.center, *lambda, *big_lambda, *r, *big_r)
                }
            }
        }
        CertificateSpec::Boundedness { center, radius, .. } => {
            let b = ball_from(grid, center, *radius)?;
            match problem {
                Problem::Local(p) => boundedness_certificate_local(p, u, &b),
                Problem::Nonlocal(p) => boundedness_certificate_nonlocal(p, u, &b),
            }
        }
        CertificateSpec::Hull { cap, .. } => match problem {
            Problem::Local(p) => convex_hull_certificate_local(p, u, *cap),
            Problem::Nonlocal(p) => convex_hull_certificate_nonlocal(p, u, *cap),
        },
        CertificateSpec::Poincare { center, radius, alpha, .. } => {
            let b = ball_from(grid, center, *radius)?;
            match problem {
                Problem::Local(p) => poincare_ratio_local(&p.phi, u, &b),
                Problem::Nonlocal(p) => poincare_ratio_nonlocal(p, u, &b, *alpha),
            }
        }
        CertificateSpec::LevelDecay { center, radius, levels, epsilon_hat, .. } => {
            let b = ball_from(grid, center, *radius)?;
            match problem {
                Problem::Local(p) => level_decay_certificate(
                    &p.phi,
                    u,
                    &b,
                    LevelMode::Local,
                    0.0,
                    *levels,
                    *epsilon_hat,
                ),
                Problem::Nonlocal(p) => {
                    let t = tail(p, u, &b)?;
                    level_decay_certificate(
                        &p.phi,
                        u,
                        &b,
                        LevelMode::Nonlocal { s: p.s },
                        t,
                        *levels,
                        *epsilon_hat,
                    )
                }
            }
        }
        CertificateSpec::ScaleInvariance { t, center, radius, .. } => {
            let b = ball_from(grid, center, *radius)?;
            match problem {
                Problem::Local(_) => {
                    Err(Error::capability("rescaling applies to nonlocal problems only"))
                }
                Problem::Nonlocal(p) => scale_invariance_check(p, u, *t, &b),
            }
        }
    }
}

/// Smoke check used by the binary's verify subcommand: the solved field
/// of a problem actually minimizes among a few random perturbations.
pub fn energy_is_minimal(p: &NonlocalProblem, u: &VectorField, trials: usize, seed: u64) -> Result<bool> {
    use rand::Rng;
    let base = nonlocal_energy(p, u)?;
    let mut rng = rng_from_seed(seed);
    let free = p.free_nodes().to_vec();
    for _ in 0..trials {
        let mut v = u.clone();
        for &i in &free {
            for c in v.node_mut(i) {
                *c += rng.gen_range(-1e-3..=1e-3);
            }
        }
        if nonlocal_energy(p, &v)? < base - 1e-12 * (1.0 + base.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn local_config_json() -> String {
        r#"{
            "name": "minimal-local",
            "seed": 7,
            "grid": { "dim": 2, "shape": [9, 9], "h": 0.25 },
            "phi": { "family": "power", "p": 2.0 },
            "problem": { "kind": "local" },
            "data": { "components": 1, "generator": { "kind": "constant", "value": [0.7] } },
            "certificates": [
                { "kind": "hull", "cap": 1e-8 },
                { "kind": "boundedness", "radius": 0.5 },
                { "kind": "poincare", "radius": 0.5 },
                { "kind": "level_decay", "radius": 0.4 },
                { "kind": "caccioppoli", "lambda": 0.1, "big_lambda": 0.4, "r": 0.3, "big_r": 0.6 }
            ]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_local_scenario_runs_clean() {
        let cfg = ScenarioConfig::from_json_bytes(local_config_json().as_bytes()).unwrap();
        let out = cfg.run().unwrap();
        assert!(out.trace.converged());
        assert!(out.report.all_pass(), "{:?}", out.report);
        // constant data: the minimizer is that constant
        for i in 0..out.solution.grid.node_count() {
            assert!((out.solution.node(i)[0] - 0.7).abs() < 1e-12);
        }
        // poincare on a constant field is the degenerate case
        let poincare =
            out.report.certificates.iter().find(|c| c.name.starts_with("poincare")).unwrap();
        assert!(poincare.degenerate && poincare.pass);
    }

    #[test]
    fn nonlocal_scenario_with_expression_data() {
        let json = r#"{
            "name": "nonlocal-smoke",
            "seed": 3,
            "grid": { "dim": 2, "shape": [9, 9], "h": 0.25 },
            "phi": { "family": "power", "p": 2.0 },
            "problem": { "kind": "nonlocal", "s": 0.5,
                         "far_field": { "kind": "constant_vector", "c": [0.2] } },
            "data": { "components": 1,
                      "generator": { "kind": "expression", "formulas": ["0.2 + 0*x0"] } },
            "certificates": [
                { "kind": "hull", "cap": 1e-8 },
                { "kind": "poincare", "radius": 0.6, "alpha": 0.25 },
                { "kind": "scale_invariance", "t": 2.0, "radius": 0.4 }
            ]
        }"#;
        let cfg = ScenarioConfig::from_json_bytes(json.as_bytes()).unwrap();
        let out = cfg.run().unwrap();
        assert!(out.report.all_pass(), "{:?}", out.report);
    }

    #[test]
    fn rejects_alpha_at_s() {
        let json = r#"{
            "name": "bad-alpha",
            "grid": { "dim": 2, "shape": [9, 9], "h": 0.25 },
            "phi": { "family": "power", "p": 2.0 },
            "problem": { "kind": "nonlocal", "s": 0.5 },
            "data": { "components": 1, "generator": { "kind": "constant", "value": [0.0] } },
            "certificates": [ { "kind": "poincare", "radius": 0.5, "alpha": 0.5 } ]
        }"#;
        match ScenarioConfig::from_json_bytes(json.as_bytes()) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "certificates[0].alpha"),
            other => panic!("expected config rejection, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_field_paths() {
        // wrong type deep in the tree
        let bad_type = r#"{
            "name": "x",
            "grid": { "dim": 2, "shape": [9, 9], "h": "wide" },
            "phi": { "family": "power", "p": 2.0 },
            "problem": { "kind": "local" },
            "data": { "components": 1, "generator": { "kind": "constant", "value": [0.0] } }
        }"#;
        match ScenarioConfig::from_json_bytes(bad_type.as_bytes()) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "grid.h");
                assert!(message.contains("line"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        // unknown field
        let unknown = r#"{ "name": "x", "grip": {} }"#;
        assert!(matches!(
            ScenarioConfig::from_json_bytes(unknown.as_bytes()),
            Err(Error::Config { .. })
        ));
        // syntactically broken
        assert!(matches!(
            ScenarioConfig::from_json_bytes(b"{ \"name\": "),
            Err(Error::Config { .. })
        ));
        // trailing garbage
        let trailing = format!("{} true", local_config_json());
        assert!(matches!(
            ScenarioConfig::from_json_bytes(trailing.as_bytes()),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn expression_axis_out_of_range_is_rejected() {
        let json = r#"{
            "name": "bad-axis",
            "grid": { "dim": 2, "shape": [9, 9], "h": 0.25 },
            "phi": { "family": "power", "p": 2.0 },
            "problem": { "kind": "local" },
            "data": { "components": 1,
                      "generator": { "kind": "expression", "formulas": ["x3 + 1"] } }
        }"#;
        match ScenarioConfig::from_json_bytes(json.as_bytes()) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "data.generator.formulas[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_data_is_seed_deterministic() {
        let mk = |seed: u64| {
            let json = format!(
                r#"{{
                    "name": "rand",
                    "seed": {seed},
                    "grid": {{ "dim": 2, "shape": [7, 7], "h": 0.25 }},
                    "phi": {{ "family": "power", "p": 2.0 }},
                    "problem": {{ "kind": "local" }},
                    "data": {{ "components": 2,
                               "generator": {{ "kind": "random", "amplitude": 0.5 }} }}
                }}"#
            );
            let cfg = ScenarioConfig::from_json_bytes(json.as_bytes()).unwrap();
            let Problem::Local(p) = cfg.build().unwrap() else { panic!() };
            p.data.values.clone()
        };
        assert_eq!(mk(5), mk(5));
        assert_ne!(mk(5), mk(6));
    }

    #[test]
    fn run_reports_are_reproducible() {
        let cfg = ScenarioConfig::from_json_bytes(local_config_json().as_bytes()).unwrap();
        let a = cfg.run().unwrap().report.to_json_bytes().unwrap();
        let b = cfg.run().unwrap().report.to_json_bytes().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cap_overrides_flip_the_verdict() {
        let json = r#"{
            "name": "tight-cap",
            "grid": { "dim": 2, "shape": [9, 9], "h": 0.25 },
            "phi": { "family": "power", "p": 2.0 },
            "problem": { "kind": "local" },
            "data": { "components": 1,
                      "generator": { "kind": "expression", "formulas": ["x0"] } },
            "certificates": [
                { "kind": "boundedness", "radius": 0.5, "caps": { "c_hat": 1e-300 } }
            ]
        }"#;
        let cfg = ScenarioConfig::from_json_bytes(json.as_bytes()).unwrap();
        let out = cfg.run().unwrap();
        assert!(!out.report.all_pass());
        assert_eq!(out.report.certificates[0].caps["c_hat"], 1e-300);
    }

    #[test]
    fn local_scale_invariance_is_rejected() {
        let json = r#"{
            "name": "bad-kind",
            "grid": { "dim": 2, "shape": [9, 9], "h": 0.25 },
            "phi": { "family": "power", "p": 2.0 },
            "problem": { "kind": "local" },
            "data": { "components": 1, "generator": { "kind": "constant", "value": [0.0] } },
            "certificates": [ { "kind": "scale_invariance", "radius": 0.4 } ]
        }"#;
        match ScenarioConfig::from_json_bytes(json.as_bytes()) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "certificates[0].kind"),
            other => panic!("{other:?}"),
        }
    }
}
