//! Scenario runner. Exit codes: 0 all certificates pass, 1 a certificate
//! failed, 2 invalid configuration, 3 solver stagnation, 4 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use odg::nfunc::NFunction;
use odg::report::{fmt_f64, CertificateReport, MergedReport, RunReport};
use odg::scenario::ScenarioConfig;
use odg::vecops::{verify_jacobian_identities, verify_pointwise_inequalities};
use odg::Error;

#[derive(Parser)]
#[command(name = "odg", version, about = "Orlicz energy scenarios and regularity certificates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a scenario config and run its certificate suite.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's output_dir, else out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force sequential reductions so reruns are byte-identical.
        #[arg(long)]
        deterministic: bool,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the operator, jacobian, and N-function suites standalone.
    VerifyOps {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Merge report.json files from several run directories.
    ReportMerge {
        dirs: Vec<PathBuf>,
        /// Where to write merged.json and merged.csv (default: print CSV only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run { config, out, deterministic, seed } => run(&config, out, deterministic, seed),
        Cmd::VerifyOps { trials } => verify_ops(trials),
        Cmd::ReportMerge { dirs, out } => report_merge(&dirs, out),
    };
    ExitCode::from(code)
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Solver { .. } => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

fn run(config: &Path, out: Option<PathBuf>, deterministic: bool, seed: Option<u64>) -> u8 {
    let bytes = match std::fs::read(config) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config.display());
            return 4;
        }
    };
    let mut cfg = match ScenarioConfig::from_json_bytes(&bytes) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return error_code(&e);
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if deterministic {
        cfg.quadrature.force_sequential = true;
    }
    let outcome = match cfg.run() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return error_code(&e);
        }
    };
    let dir = out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    if let Err(e) = emit_run(&dir, &outcome.report, &outcome.solution) {
        eprintln!("cannot write {}: {e}", dir.display());
        return 4;
    }
    println!("{}", outcome.report.summary_csv().trim_end());
    if !outcome.trace.converged() {
        eprintln!(
            "solver stagnated: {} iterations, residual {:.3e}",
            outcome.trace.iterations, outcome.trace.residual
        );
        return 3;
    }
    if outcome.report.all_pass() {
        0
    } else {
        eprintln!("certificate failure; witnesses in {}", dir.join("report.json").display());
        1
    }
}

fn emit_run(dir: &Path, report: &RunReport, solution: &odg::grid::VectorField) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = report.to_json_bytes().map_err(io_other)?;
    std::fs::write(dir.join("report.json"), json)?;
    std::fs::write(dir.join("summary.csv"), report.summary_csv())?;
    std::fs::write(dir.join("solution.csv"), odg::field_io::field_csv(solution))?;
    std::fs::write(dir.join("solution.odgf"), odg::field_io::write_odgf(solution))?;
    for (idx, cert) in report.certificates.iter().enumerate() {
        std::fs::write(
            dir.join(format!("cert_{idx}_{}.csv", cert.name)),
            certificate_csv(cert),
        )?;
        if let Some(levels) = cert.witness.as_ref().and_then(|w| w.get("levels")).and_then(|v| v.as_array()) {
            let mut csv = String::from("k,u_k\n");
            for (k, v) in levels.iter().enumerate() {
                csv.push_str(&format!("{k},{}\n", fmt_f64(v.as_f64().unwrap_or(f64::NAN))));
            }
            std::fs::write(dir.join(format!("cert_{idx}_{}_trajectory.csv", cert.name)), csv)?;
        }
    }
    Ok(())
}

fn certificate_csv(cert: &CertificateReport) -> String {
    let mut csv = String::from("key,value,cap\n");
    for (key, value) in &cert.measured {
        let cap = cert.caps.get(key).map(|c| fmt_f64(*c)).unwrap_or_default();
        csv.push_str(&format!("{key},{},{cap}\n", fmt_f64(*value)));
    }
    csv
}

fn io_other(e: Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

fn verify_ops(trials: usize) -> u8 {
    let mut all = true;
    let mut show = |rep: &CertificateReport| {
        let worst = rep
            .measured
            .iter()
            .filter(|(k, _)| rep.caps.contains_key(*k))
            .map(|(k, v)| format!("{k}={v:.2e}"))
            .max_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)))
            .unwrap_or_default();
        println!("[{}] {} ({worst})", if rep.pass { "PASS" } else { "FAIL" }, rep.name);
        all &= rep.pass;
    };
    for dim in [1usize, 2, 3, 5] {
        match verify_pointwise_inequalities(dim, trials, 0x0D6 + dim as u64) {
            Ok(rep) => show(&rep),
            Err(e) => {
                eprintln!("{e}");
                return 2;
            }
        }
    }
    for (n, nn) in [(1usize, 2usize), (2, 2), (3, 5)] {
        match verify_jacobian_identities(n, nn, trials / 10 + 1, 0x1A0 + n as u64) {
            Ok(rep) => show(&rep),
            Err(e) => {
                eprintln!("{e}");
                return 2;
            }
        }
    }
    let families = [
        NFunction::power(1.5),
        NFunction::power(2.0),
        NFunction::power(3.0),
        NFunction::power_sum(1.5, 3.0),
    ];
    for phi in families {
        let phi = match phi {
            Ok(phi) => phi,
            Err(e) => {
                eprintln!("{e}");
                return 2;
            }
        };
        match odg::nfunc::verify_nfunc_inequalities(&phi, trials / 10 + 1, 0x3F) {
            Ok(rep) => show(&rep),
            Err(e) => {
                eprintln!("{e}");
                return 2;
            }
        }
    }
    if all {
        0
    } else {
        1
    }
}

fn report_merge(dirs: &[PathBuf], out: Option<PathBuf>) -> u8 {
    if dirs.is_empty() {
        eprintln!("report-merge needs at least one run directory");
        return 2;
    }
    let mut runs = Vec::new();
    for dir in dirs {
        let path = dir.join("report.json");
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("cannot read {}: {e}", path.display());
                return 4;
            }
        };
        match serde_json::from_slice::<RunReport>(&bytes) {
            Ok(run) => runs.push(run),
            Err(e) => {
                eprintln!("{} is not a run report: {e}", path.display());
                return 2;
            }
        }
    }
    let merged = MergedReport { runs };
    let all_pass = merged.runs.iter().all(|r| r.all_pass());
    if let Some(dir) = out {
        if let Err(e) = (|| -> std::io::Result<()> {
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("merged.json"), merged.to_json_bytes().map_err(io_other)?)?;
            std::fs::write(dir.join("merged.csv"), merged.summary_csv())?;
            Ok(())
        })() {
            eprintln!("cannot write merged report: {e}");
            return 4;
        }
    }
    print!("{}", merged.summary_csv());
    if all_pass {
        0
    } else {
        1
    }
}
