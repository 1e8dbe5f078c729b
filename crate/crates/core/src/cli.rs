//! The `exmeas` command line.
//!
//! Exit codes: 0 success, 1 a verification suite failed, 2 config or usage
//! error, 3 resource cap hit while sampling, 4 not locally finite (or the
//! certification gate of `verify` failed), 5 certification inconclusive.

use crate::config::{ConfigError, ModelConfig};
use crate::finiteness::{self, CertifyConfig};
use crate::harness::{self, ModelSource, SkewedSource, TestReport, WindowSource};
use crate::quadrature::QuadConfig;
use crate::rng::RngKey;
use crate::sampler::{self, SampleError, TruncationError};
use crate::types::{window_mass, AdjacencyMeasureWindow, ConditionStatus, Status, Verdict};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SUITE_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_NOT_FINITE: i32 = 4;
pub const EXIT_INCONCLUSIVE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "exmeas", version, about = "Sample and certify jointly exchangeable random measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the restriction of a model to [0, s]^2 and write its atoms as TSV.
    Sample {
        config: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        /// Overrides `[truncation] mark_cap`.
        #[arg(long = "mark-cap")]
        mark_cap: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Atom file; the summary goes to `<out>.summary.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the local-finiteness conditions of a model.
    Certify {
        config: PathBuf,
        /// Overrides the 1-D tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Growth of the star mass of the counter-example under increasing mark caps.
    Demo {
        #[arg(long = "T-list", value_delimiter = ',', default_value = "10,20,40,80")]
        t_list: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV file with columns T,mean_mass,stderr.
        #[arg(long, default_value = "demo.csv")]
        out: PathBuf,
    },
    /// Run statistical verification suites on a certified model.
    Verify {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Exchangeability,
    Independence,
    Campbell,
    All,
}

/// Sizes the global worker pool from `EXMEAS_THREADS` (unset or 0: one per core).
pub fn configure_threads() {
    let n = std::env::var("EXMEAS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    // Fails only if the pool was already built, in which case it stays as is.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Sample {
            config,
            window,
            mark_cap,
            seed,
            out: path,
        } => cmd_sample(&config, window, mark_cap, seed, &path, err),
        Command::Certify { config, tol, json } => cmd_certify(&config, tol, json, out),
        Command::Demo {
            t_list,
            samples,
            seed,
            out: path,
        } => cmd_demo(&t_list, samples, seed, &path, out),
        Command::Verify { config, suite, json } => cmd_verify(&config, suite, json, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::new(EXIT_CONFIG, e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(EXIT_CONFIG, format!("cannot write {}: {e}", path.display()))
}

fn load(path: &Path) -> Result<ModelConfig, CliError> {
    Ok(ModelConfig::load(path)?)
}

/// A real in 17 significant digits.
fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Integral multiplicities print as integers.
fn format_mult(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 9.007_199_254_740_992e15 {
        format!("{}", v as i64)
    } else {
        format_real(v)
    }
}

#[derive(Serialize)]
struct SampleSummary<'a> {
    format: &'static str,
    window: f64,
    seed: u64,
    mark_cap: f64,
    atom_count: usize,
    total_mass: f64,
    atom_mass: f64,
    diag_mass: f64,
    plane_mass: f64,
    line_mass: f64,
    lines: &'a [crate::types::LineMass],
    parts: crate::types::PartMasses,
    truncation_error: Option<TruncationError>,
    truncation_error_note: Option<String>,
}

pub fn atoms_tsv(w: &AdjacencyMeasureWindow, seed: u64, mark_cap: f64) -> String {
    let mut s = format!("# exmeas-atoms v1 window={} seed={} mark_cap={}\n", w.window, seed, mark_cap);
    for a in &w.atoms {
        s.push_str(&format_real(a.x));
        s.push('\t');
        s.push_str(&format_real(a.y));
        s.push('\t');
        s.push_str(&format_mult(a.mult));
        s.push('\n');
    }
    s
}

fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".summary.json");
    PathBuf::from(name)
}

pub fn cmd_sample(config: &Path, window: f64, mark_cap: Option<f64>, seed: u64, out: &Path, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load(config)?;
    let mut tc = cfg.truncation;
    if let Some(t) = mark_cap {
        tc.mark_cap = t;
    }
    let key = RngKey::new(seed);
    let w = match sampler::sample_model(&cfg.model, window, &tc, &key) {
        Ok(w) => w,
        Err(SampleError::ResourceCap { what, count, cap }) => {
            let mut message = format!("resource cap exceeded: {what} ({count} > {cap})");
            let verdict = finiteness::certify(&cfg.model, &cfg.tolerances);
            match verdict.violated().next() {
                Some(rec) => message.push_str(&format!(
                    "; the model is not locally finite: condition {} is violated ({})",
                    rec.id,
                    rec.witness.as_deref().unwrap_or(&rec.description)
                )),
                None => message.push_str("; raise the caps or lower the mark cap"),
            }
            let _ = writeln!(err, "error: {message}");
            return Ok(EXIT_RESOURCE);
        }
        Err(e) => return Err(CliError::new(EXIT_CONFIG, e.to_string())),
    };
    let (truncation_error, truncation_error_note) =
        match sampler::truncation_error(&cfg.model, window, tc.mark_cap, &QuadConfig::with_tol(cfg.tolerances.tol_1d)) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
    std::fs::write(out, atoms_tsv(&w, seed, tc.mark_cap)).map_err(|e| io_err(out, e))?;
    let summary = SampleSummary {
        format: "exmeas-summary v1",
        window,
        seed,
        mark_cap: tc.mark_cap,
        atom_count: w.atoms.len(),
        total_mass: window_mass(&w),
        atom_mass: w.atom_mass(),
        diag_mass: w.diag_mass,
        plane_mass: w.plane_mass,
        line_mass: w.line_mass(),
        lines: &w.line_masses,
        parts: w.parts,
        truncation_error,
        truncation_error_note,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    let spath = summary_path(out);
    std::fs::write(&spath, json).map_err(|e| io_err(&spath, e))?;
    Ok(EXIT_OK)
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn verdict_table(v: &Verdict) -> String {
    let mut s = format!("{:<6} {:<13} {:>14} {:>12}  condition\n", "id", "status", "estimate", "error");
    for r in &v.evidence {
        let status = match r.status {
            ConditionStatus::Holds => "holds",
            ConditionStatus::Violated => "VIOLATED",
            ConditionStatus::Inconclusive => "inconclusive",
            ConditionStatus::Skipped => "skipped",
        };
        s.push_str(&format!(
            "{:<6} {:<13} {:>14} {:>12}  {}\n",
            r.id,
            status,
            fmt_num(r.estimate),
            fmt_num(r.error),
            r.description
        ));
        if let Some(w) = &r.witness {
            s.push_str(&format!("{:<6} {}\n", "", w));
        }
        for c in &r.cutoffs {
            s.push_str(&format!(
                "{:<6}   λ{{> {:e}}} = {}{}\n",
                "",
                c.cutoff,
                fmt_num(c.measure),
                if c.converged { "" } else { " (not converged)" }
            ));
        }
    }
    let verdict = match v.status {
        Status::LocallyFinite => "locally finite",
        Status::NotLocallyFinite => "NOT locally finite",
        Status::Inconclusive => "inconclusive",
    };
    s.push_str(&format!("verdict: {verdict}\n"));
    s
}

fn exit_for(status: Status) -> i32 {
    match status {
        Status::LocallyFinite => EXIT_OK,
        Status::NotLocallyFinite => EXIT_NOT_FINITE,
        Status::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn certify_config(cfg: &ModelConfig, tol: Option<f64>) -> Result<CertifyConfig, CliError> {
    let mut c = cfg.tolerances.clone();
    if let Some(t) = tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::new(EXIT_CONFIG, format!("--tol must be positive, got {t}")));
        }
        c.tol_1d = t;
        c.tol_2d = c.tol_2d.max(t);
    }
    Ok(c)
}

pub fn cmd_certify(config: &Path, tol: Option<f64>, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load(config)?;
    let verdict = finiteness::certify(&cfg.model, &certify_config(&cfg, tol)?);
    let text = if json {
        serde_json::to_string_pretty(&verdict).expect("verdict serializes") + "\n"
    } else {
        verdict_table(&verdict)
    };
    let _ = out.write_all(text.as_bytes());
    Ok(exit_for(verdict.status))
}

pub fn cmd_demo(t_list: &[f64], samples: usize, seed: u64, csv: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    if let Some(t) = t_list.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(CliError::new(EXIT_CONFIG, format!("mark caps must be finite and nonnegative, got {t}")));
    }
    let table = harness::counterexample_demo(t_list, samples, &RngKey::new(seed))
        .map_err(|e| CliError::new(EXIT_RESOURCE, e.to_string()))?;
    let mut s = format!("{:>10} {:>14} {:>12}\n", "T", "mean_mass", "stderr");
    for r in &table.rows {
        s.push_str(&format!("{:>10} {:>14.6} {:>12.6}\n", r.mark_cap, r.mean_mass, r.stderr));
    }
    if table.rows.len() >= 2 {
        s.push_str(&format!(
            "slope {:.6} ± {:.6} (intercept {:.6}, p = {:.3e})\n",
            table.slope, table.slope_stderr, table.intercept, table.slope_p_value
        ));
    }
    let _ = out.write_all(s.as_bytes());
    std::fs::write(csv, table.to_csv()).map_err(|e| io_err(csv, e))?;
    Ok(EXIT_OK)
}

fn report_text(r: &TestReport) -> String {
    let mut s = format!(
        "[{}] {}: {} = {:.6}, p = {:.4e}, alpha = {}, n = {:?}{}\n  null: {}\n",
        match r.decision {
            harness::Decision::Pass => "PASS",
            harness::Decision::Fail => "FAIL",
            harness::Decision::Skipped => "SKIP",
        },
        r.name,
        r.statistic,
        r.value,
        r.p_value,
        r.alpha,
        r.sample_sizes,
        if r.degenerate { " (degenerate, pass by convention)" } else { "" },
        r.null_distribution
    );
    for n in &r.notes {
        s.push_str(&format!("  {n}\n"));
    }
    s
}

pub fn cmd_verify(config: &Path, suite: Suite, json: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = load(config)?;
    let verdict = finiteness::certify(&cfg.model, &cfg.tolerances);
    if verdict.status != Status::LocallyFinite {
        let _ = writeln!(err, "certification gate failed; refusing to sample\n{}", verdict_table(&verdict));
        return Ok(EXIT_NOT_FINITE);
    }
    let v = &cfg.verify;
    let key = RngKey::new(v.seed);
    let source = ModelSource::new(cfg.model.clone(), cfg.truncation);
    let skewed;
    let sampling: &dyn WindowSource = match v.corrupt.as_deref() {
        None => &source,
        Some("skew") => {
            skewed = SkewedSource {
                inner: ModelSource::new(cfg.model.clone(), cfg.truncation),
                a: v.a,
            };
            &skewed
        }
        Some(other) => return Err(CliError::new(EXIT_CONFIG, format!("unknown corruption {other:?}; expected \"skew\""))),
    };
    let sample_err = |e: SampleError| match e {
        SampleError::ResourceCap { .. } => CliError::new(EXIT_RESOURCE, e.to_string()),
        other => CliError::new(EXIT_CONFIG, other.to_string()),
    };
    let mut reports = Vec::new();
    if matches!(suite, Suite::Exchangeability | Suite::All) {
        reports.push(
            harness::test_exchangeability(sampling, v.a, v.exchangeability_samples, v.alpha, &key.child(crate::rng::label::USER, 0))
                .map_err(sample_err)?,
        );
    }
    if matches!(suite, Suite::Independence | Suite::All) {
        reports.push(
            harness::test_block_independence(
                sampling,
                v.r,
                v.rp,
                v.independence_samples,
                harness::three_sigma_alpha(),
                &key.child(crate::rng::label::USER, 1),
            )
            .map_err(sample_err)?,
        );
    }
    if matches!(suite, Suite::Campbell | Suite::All) {
        let r = harness::campbell_check(&source, v.window, v.campbell_samples, &key.child(crate::rng::label::USER, 2))
            .map_err(|e| match e {
                harness::CampbellError::Sample(s) => sample_err(s),
                other => CliError::new(EXIT_INCONCLUSIVE, other.to_string()),
            })?;
        reports.push(r);
    }
    let text = if json {
        serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n"
    } else {
        reports.iter().map(report_text).collect()
    };
    let _ = out.write_all(text.as_bytes());
    Ok(if reports.iter().all(TestReport::passed) { EXIT_OK } else { EXIT_SUITE_FAILED })
}
