//! Command-line front end: `run`, `verify-lemmas`, `spectrum-plot`, `version`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use faer::c64;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::experiments::{ConvergenceTable, run_convergence_study, run_lemma_suite, trial_matrix, trial_seed};
use crate::linalg::check_dense_guard;
use crate::outlier::{assemble_y, dense_spectrum_oracle};
use crate::perturbation::{Spike, build_perturbation};

pub const OVERLAP_COLUMNS: [&str; 12] = [
    "n",
    "k",
    "mu_re",
    "mu_im",
    "multiplicity",
    "trials",
    "failures",
    "mean_overlap",
    "std_overlap",
    "limit",
    "mean_hausdorff",
    "count_success_rate",
];

#[derive(Debug, Parser)]
#[command(name = "spikelab", version, about = "Outlier eigenpairs of spiked sparse non-Hermitian random matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the convergence study and write overlaps.csv, trials.json, summary.json.
    Run(CommonArgs),
    /// Check the resolvent limits and write lemma_report.json.
    VerifyLemmas(CommonArgs),
    /// Write spectrum_<n>_<trial>.svg for every n in the config.
    SpectrumPlot {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 picks automatically.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

/// Exit status with a message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::SizeGuard { .. } => Failure::usage(e.to_string()),
            other => Failure::runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::runtime(format!("{}: {e}", path.display()))
}

pub fn main_with(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::VerifyLemmas(args) => cmd_verify_lemmas(&args),
        Command::SpectrumPlot { common, trial } => cmd_spectrum_plot(&common, trial).map(|_| ()),
        Command::Version => {
            println!("spikelab {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn prepare(args: &CommonArgs) -> Result<(ExperimentConfig, PathBuf), Failure> {
    if args.threads > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global();
    }
    let cfg = ExperimentConfig::load(&args.config)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
    Ok((cfg, out))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

/// Writes the table with the fixed column order.
pub fn write_overlaps_csv(path: &Path, table: &ConvergenceTable) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
    w.write_record(OVERLAP_COLUMNS).map_err(|e| io_failure(path, e))?;
    for r in &table.rows {
        w.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.mu.re.to_string(),
            r.mu.im.to_string(),
            r.multiplicity.to_string(),
            r.trials.to_string(),
            r.failures.to_string(),
            r.mean_overlap.to_string(),
            r.std_overlap.to_string(),
            r.limit.to_string(),
            r.mean_hausdorff.to_string(),
            r.count_success_rate.to_string(),
        ])
        .map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

#[derive(Serialize)]
struct Metadata {
    version: &'static str,
    unix_time: u64,
}

#[derive(Serialize)]
struct Summary<'a> {
    metadata: Metadata,
    partial: bool,
    failure_rate: f64,
    config: &'a ExperimentConfig,
    table: &'a ConvergenceTable,
}

fn metadata() -> Metadata {
    let unix_time = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Metadata { version: env!("CARGO_PKG_VERSION"), unix_time }
}

pub fn cmd_run(args: &CommonArgs) -> Result<(), Failure> {
    let (cfg, out) = prepare(args)?;
    let study_cfg = cfg.study_config()?;
    let study = run_convergence_study(&study_cfg)?;
    let failure_rate = study.failure_rate();
    let partial = failure_rate > 0.5;
    write_overlaps_csv(&out.join("overlaps.csv"), &study.table)?;
    write_json(&out.join("trials.json"), &study.trials)?;
    write_json(
        &out.join("summary.json"),
        &Summary { metadata: metadata(), partial, failure_rate, config: &cfg, table: &study.table },
    )?;
    if partial {
        return Err(Failure::runtime(format!("failure rate {failure_rate:.3} exceeds 0.5; results marked partial")));
    }
    Ok(())
}

pub fn cmd_verify_lemmas(args: &CommonArgs) -> Result<(), Failure> {
    let (cfg, out) = prepare(args)?;
    let report = run_lemma_suite(&cfg.lemma_config()?)?;
    write_json(&out.join("lemma_report.json"), &report)?;
    if !report.deterministic_pass {
        return Err(Failure::runtime("a deterministic inequality check failed; see lemma_report.json"));
    }
    Ok(())
}

/// Returns the written files.
pub fn cmd_spectrum_plot(args: &CommonArgs, trial: usize) -> Result<Vec<PathBuf>, Failure> {
    let (cfg, out) = prepare(args)?;
    for &n in &cfg.n_list {
        check_dense_guard(n)?;
    }
    let study = cfg.study_config()?;
    let mut written = Vec::new();
    for idx in 0..cfg.n_list.len() {
        let model = study.model_config(idx)?;
        let n = model.n;
        let x = trial_matrix(&model, trial_seed(cfg.base_seed, n, trial), cfg.zero_matrix)?;
        let e = build_perturbation(&study.spike_spec, n, crate::experiments::perturbation_seed(cfg.base_seed, n))?;
        let spectrum = dense_spectrum_oracle(assemble_y(&x, &e)?.as_ref())?;
        let eps = study.options.epsilon_for(e.spikes());
        let path = out.join(format!("spectrum_{n}_{trial}.svg"));
        fs::write(&path, spectrum_svg(&spectrum, e.spikes(), eps)).map_err(|err| io_failure(&path, err))?;
        written.push(path);
    }
    Ok(written)
}

/// Eigenvalues as dots, the unit circle, the `1 + ε` circle and crosses at the spikes.
pub fn spectrum_svg(eigenvalues: &[c64], spikes: &[Spike], epsilon: f64) -> String {
    let size = 600.0;
    let half = size / 2.0;
    let reach = eigenvalues
        .iter()
        .map(|z| z.norm())
        .chain(spikes.iter().map(|s| s.mu.norm()))
        .fold(1.0 + epsilon, f64::max)
        * 1.1;
    let scale = (half - 20.0) / reach;
    let px = |z: c64| (half + scale * z.re, half - scale * z.im);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<line x1="0" y1="{half}" x2="{size}" y2="{half}" stroke="#ccc"/><line x1="{half}" y1="0" x2="{half}" y2="{size}" stroke="#ccc"/>"##
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{half}" cy="{half}" r="{:.4}" fill="none" stroke="black"/>"#,
        scale
    );
    let _ = writeln!(
        s,
        r##"<circle cx="{half}" cy="{half}" r="{:.4}" fill="none" stroke="#888" stroke-dasharray="4 3"/>"##,
        scale * (1.0 + epsilon)
    );
    let _ = writeln!(s, r#"<g fill="steelblue">"#);
    for &z in eigenvalues {
        let (x, y) = px(z);
        let _ = writeln!(s, r#"<circle cx="{x:.4}" cy="{y:.4}" r="2"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g stroke="crimson" stroke-width="2">"#);
    for spike in spikes {
        let (x, y) = px(spike.mu);
        let _ = writeln!(
            s,
            r#"<line x1="{:.4}" y1="{:.4}" x2="{:.4}" y2="{:.4}"/><line x1="{:.4}" y1="{:.4}" x2="{:.4}" y2="{:.4}"/>"#,
            x - 6.0,
            y - 6.0,
            x + 6.0,
            y + 6.0,
            x - 6.0,
            y + 6.0,
            x + 6.0,
            y - 6.0
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_places_points_by_coordinates() {
        let svg = spectrum_svg(&[c64::new(0.0, 0.0)], &[Spike::real(2.0, 1)], 0.1);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(r#"<circle cx="300.0000" cy="300.0000" r="2"/>"#));
        assert_eq!(svg.matches("<line").count(), 4);
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code, 2);
        assert_eq!(Failure::from(Error::SizeGuard { n: 6000, limit: 5000 }).code, 2);
        assert_eq!(Failure::from(Error::Oracle("x".into())).code, 3);
    }
}
