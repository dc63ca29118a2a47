//! Analysis orchestration: resolves the effective seed, output directory,
//! and formats, executes one analysis, and records a run manifest whose
//! config digest is stable under key reordering and comments.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use qdlab::chernoff::chernoff_report;
use qdlab::info::{fragment_average, FragmentMetric, FragmentSampler, InfoError};
use qdlab::model::{validate_model, DecoherenceModel, ModelError};
use qdlab::photon::photon_report;

use crate::config::{build_model, load_config, BuiltModel, ExperimentConfig, SamplerConfig};
use crate::emit::{self, float_cell, opt_float_cell, Formats, OutputLog};
use crate::{AnalysisArgs, CliError, SelftestArgs};

#[derive(Debug, Clone, Copy)]
pub enum Analysis {
    Validate,
    Pip,
    Redundancy,
    Chernoff,
    Photon,
}

impl Analysis {
    fn name(self) -> &'static str {
        match self {
            Analysis::Validate => "validate",
            Analysis::Pip => "pip",
            Analysis::Redundancy => "redundancy",
            Analysis::Chernoff => "chernoff",
            Analysis::Photon => "photon",
        }
    }
}

/// Run record written as `manifest.json` after the analysis outputs.
#[derive(Debug, Serialize)]
struct RunManifest {
    tool_version: &'static str,
    /// Absent for `selftest`, which takes no configuration file.
    config_digest: Option<String>,
    seed: u64,
    started_unix_s: u64,
    finished_unix_s: u64,
    analyses: Vec<AnalysisRecord>,
}

#[derive(Debug, Serialize)]
struct AnalysisRecord {
    analysis: String,
    files: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/* Canonical config rendering: tables are emitted with sorted keys, so the
 * digest ignores key order and comments but tracks every value. */
fn render_canonical(value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::String(s) => out.push_str(&format!("{s:?}")),
        toml::Value::Integer(i) => out.push_str(&i.to_string()),
        toml::Value::Float(x) => out.push_str(&format!("{x:?}")),
        toml::Value::Boolean(b) => out.push_str(&b.to_string()),
        toml::Value::Datetime(d) => out.push_str(&d.to_string()),
        toml::Value::Array(items) => {
            out.push('[');
            for item in items {
                render_canonical(item, out);
                out.push(',');
            }
            out.push(']');
        }
        toml::Value::Table(table) => {
            let mut keys: Vec<&String> = table.keys().collect();
            keys.sort();
            out.push('{');
            for key in keys {
                out.push_str(&format!("{key:?}="));
                render_canonical(&table[key], out);
                out.push(';');
            }
            out.push('}');
        }
    }
}

/// SHA-256 digest of the canonical rendering, as lowercase hex.
pub fn canonical_digest(value: &toml::Value) -> String {
    let mut text = String::new();
    render_canonical(value, &mut text);
    let hash = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in hash {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Everything an executor needs plus the failure verdict it produced.
struct Execution {
    log: OutputLog,
    /// A completed run whose subject failed its invariants: files are
    /// written, the manifest is recorded, and the process exits 2.
    invariant_failure: Option<String>,
}

fn resolve_out_dir(arg: &Option<PathBuf>, config: Option<&ExperimentConfig>) -> PathBuf {
    arg.clone()
        .or_else(|| config.and_then(|c| c.output.directory.clone()))
        .unwrap_or_else(|| PathBuf::from("qdlab-out"))
}

fn resolve_formats(
    arg: Option<crate::FormatArg>,
    config: Option<&ExperimentConfig>,
) -> Result<Formats, CliError> {
    match arg {
        Some(f) => Ok(f.into()),
        None => match config {
            Some(c) => Formats::from_names(&c.output.formats),
            None => Ok(Formats::Both),
        },
    }
}

fn build_sampler(
    sampler: &SamplerConfig,
    seed: u64,
    environment_size: usize,
) -> Result<FragmentSampler, CliError> {
    match sampler.mode.as_str() {
        "exhaustive" => Ok(FragmentSampler::exhaustive(seed, environment_size)),
        "monte-carlo" => FragmentSampler::monte_carlo(seed, sampler.samples, environment_size)
            .map_err(|e| CliError::Config(e.to_string())),
        other => Err(CliError::Config(format!(
            "sampler mode `{other}` is not recognized"
        ))),
    }
}

fn analysis_error(e: InfoError) -> CliError {
    CliError::Analysis(e.to_string())
}

/* A metric the model cannot afford (dense dimension or pointer shape) is an
 * absent column, not a failed run. */
fn refusal_to_none(
    result: Result<(f64, f64), InfoError>,
) -> Result<Option<(f64, f64)>, CliError> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(InfoError::DenseCapExceeded { .. })
        | Err(InfoError::UnsupportedPath { .. })
        | Err(InfoError::PointerDimUnsupported(_))
        | Err(InfoError::Model(ModelError::JointDimensionTooLarge { .. })) => Ok(None),
        Err(e) => Err(analysis_error(e)),
    }
}

/// Fragment sizes for the partial-information table: every size when the
/// environment is small, otherwise 65 evenly spaced sizes including 0 and ♯ℰ.
fn fragment_sizes(environment_size: usize) -> Vec<usize> {
    if environment_size <= 64 {
        (0..=environment_size).collect()
    } else {
        let mut sizes: Vec<usize> = (0..=64)
            .map(|k| (k * environment_size + 32) / 64)
            .collect();
        sizes.dedup();
        sizes
    }
}

fn quantum_model(built: &BuiltModel, analysis: Analysis) -> Result<&DecoherenceModel, CliError> {
    match built {
        BuiltModel::Quantum(model) => Ok(model),
        BuiltModel::Photon { .. } => Err(CliError::Config(format!(
            "the `{}` analysis applies to quantum models; use the `photon` subcommand \
             for the photon-sky kind",
            analysis.name()
        ))),
    }
}

fn non_empty<'a, T>(list: &'a [T], key: &str, analysis: Analysis) -> Result<&'a [T], CliError> {
    if list.is_empty() {
        return Err(CliError::Config(format!(
            "the `{}` analysis requires a non-empty `{key}` list in the config",
            analysis.name()
        )));
    }
    Ok(list)
}

/// Entry point for the five config-driven subcommands.
pub fn analysis(args: &AnalysisArgs, which: Analysis) -> Result<(), CliError> {
    let started = unix_now();
    let (config, raw) = load_config(&args.config)?;
    let digest = canonical_digest(&raw);
    let seed = args.seed.unwrap_or(config.sampler.master_seed);
    let out_dir = resolve_out_dir(&args.out, Some(&config));
    std::fs::create_dir_all(&out_dir)?;
    let formats = resolve_formats(args.format, Some(&config))?;

    let built = build_model(&config.model)?;
    let execution = match which {
        Analysis::Validate => run_validate(&built, &out_dir, formats)?,
        Analysis::Pip => run_pip(&built, &config, seed, &out_dir, formats)?,
        Analysis::Redundancy => run_redundancy(&built, &config, seed, &out_dir, formats)?,
        Analysis::Chernoff => run_chernoff(&built, &config, seed, &out_dir, formats)?,
        Analysis::Photon => run_photon(&built, &config, &out_dir, formats)?,
    };

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_digest: Some(digest),
        seed,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        analyses: vec![AnalysisRecord {
            analysis: which.name().to_string(),
            files: execution.log.file_names(),
        }],
    };
    emit::write_json(&out_dir.join("manifest.json"), &manifest)?;

    match execution.invariant_failure {
        Some(message) => Err(CliError::Invariant(message)),
        None => Ok(()),
    }
}

/* ---------- validate ---------- */

#[derive(Debug, Serialize)]
struct ValidationOutput {
    errors: Vec<String>,
    warnings: Vec<String>,
}

fn run_validate(
    built: &BuiltModel,
    out_dir: &Path,
    formats: Formats,
) -> Result<Execution, CliError> {
    let output = match built {
        BuiltModel::Quantum(model) => {
            let report = validate_model(model);
            ValidationOutput {
                errors: report.errors().to_vec(),
                warnings: report.warnings().to_vec(),
            }
        }
        /* Photon models are validated during construction (partition
         * coverage, quadrature normalization, kernel unitarity), so getting
         * here means every check passed. */
        BuiltModel::Photon { model, .. } => {
            println!(
                "photon model constructed: {} cells ({} in the patch), {} momentum nodes",
                model.partition().cell_count(),
                model.partition().patch_cell_count(),
                model.spectrum().node_count(),
            );
            ValidationOutput {
                errors: Vec::new(),
                warnings: Vec::new(),
            }
        }
    };

    for error in &output.errors {
        println!("invalid: {error}");
    }
    for warning in &output.warnings {
        println!("warning: {warning}");
    }
    if output.errors.is_empty() {
        println!("model is valid ({} warnings)", output.warnings.len());
    }

    let mut log = OutputLog::default();
    if formats.csv() {
        let mut rows = Vec::new();
        for error in &output.errors {
            rows.push(vec!["error".to_string(), error.clone()]);
        }
        for warning in &output.warnings {
            rows.push(vec!["warning".to_string(), warning.clone()]);
        }
        let path = out_dir.join("validate.csv");
        emit::write_csv(&path, &["severity", "message"], &rows)?;
        log.record(path);
    }
    if formats.json() {
        let path = out_dir.join("validate.json");
        emit::write_json(&path, &output)?;
        log.record(path);
    }

    let invariant_failure = if output.errors.is_empty() {
        None
    } else {
        Some(format!(
            "model failed validation: {}",
            output.errors.join("; ")
        ))
    };
    Ok(Execution {
        log,
        invariant_failure,
    })
}

/* ---------- pip ---------- */

#[derive(Debug, Serialize)]
struct PipRow {
    m: usize,
    chi_mean_bits: f64,
    chi_stderr: f64,
    i_mean_bits: Option<f64>,
    i_stderr: Option<f64>,
}

#[derive(Debug, Serialize)]
struct PipReport {
    time: f64,
    environment_size: usize,
    rows: Vec<PipRow>,
}

fn run_pip(
    built: &BuiltModel,
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    formats: Formats,
) -> Result<Execution, CliError> {
    let model = quantum_model(built, Analysis::Pip)?;
    let times = non_empty(&config.times, "times", Analysis::Pip)?;
    let sampler = build_sampler(&config.sampler, seed, model.environment_size())?;
    let sizes = fragment_sizes(model.environment_size());

    let mut log = OutputLog::default();
    for (i, &t) in times.iter().enumerate() {
        let mut rows = Vec::with_capacity(sizes.len());
        for &m in &sizes {
            let (chi, chi_se) = fragment_average(model, t, m, FragmentMetric::HolevoBits, &sampler)
                .map_err(analysis_error)?;
            let mi = refusal_to_none(fragment_average(
                model,
                t,
                m,
                FragmentMetric::MutualInformationBits,
                &sampler,
            ))?;
            rows.push(PipRow {
                m,
                chi_mean_bits: chi,
                chi_stderr: chi_se,
                i_mean_bits: mi.map(|v| v.0),
                i_stderr: mi.map(|v| v.1),
            });
        }
        let report = PipReport {
            time: t,
            environment_size: model.environment_size(),
            rows,
        };

        if formats.csv() {
            let csv_rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.m.to_string(),
                        float_cell(r.chi_mean_bits),
                        float_cell(r.chi_stderr),
                        opt_float_cell(r.i_mean_bits),
                        opt_float_cell(r.i_stderr),
                    ]
                })
                .collect();
            let path = out_dir.join(format!("pip_t{i}.csv"));
            emit::write_csv(
                &path,
                &["m", "chi_mean_bits", "chi_stderr", "I_mean_bits", "I_stderr"],
                &csv_rows,
            )?;
            log.record(path);
        }
        if formats.json() {
            let path = out_dir.join(format!("pip_t{i}.json"));
            emit::write_json(&path, &report)?;
            log.record(path);
        }
    }
    Ok(Execution {
        log,
        invariant_failure: None,
    })
}

/* ---------- redundancy ---------- */

fn run_redundancy(
    built: &BuiltModel,
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    formats: Formats,
) -> Result<Execution, CliError> {
    let model = quantum_model(built, Analysis::Redundancy)?;
    let times = non_empty(&config.times, "times", Analysis::Redundancy)?;
    let deltas = non_empty(&config.deltas, "deltas", Analysis::Redundancy)?;
    let sampler = build_sampler(&config.sampler, seed, model.environment_size())?;

    let mut log = OutputLog::default();
    for (i, &t) in times.iter().enumerate() {
        for (j, &delta) in deltas.iter().enumerate() {
            let report = qdlab::info::redundancy(model, t, delta, &sampler)
                .map_err(analysis_error)?;
            println!(
                "t = {t}, delta = {delta}: m_delta = {}, R_delta = {}",
                report
                    .m_delta
                    .map(|m| m.to_string())
                    .unwrap_or_else(|| "-".to_string()),
                report.redundancy,
            );

            if formats.csv() {
                let csv_rows: Vec<Vec<String>> = report
                    .rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.m.to_string(),
                            float_cell(r.chi_mean_bits),
                            float_cell(r.chi_stderr),
                            opt_float_cell(r.i_mean_bits),
                            opt_float_cell(r.pe_mean),
                            opt_float_cell(r.fano_lb_bits),
                            opt_float_cell(r.fid_ub_bits),
                        ]
                    })
                    .collect();
                let path = out_dir.join(format!("redundancy_t{i}_d{j}.csv"));
                emit::write_csv(
                    &path,
                    &[
                        "m",
                        "chi_mean_bits",
                        "chi_stderr",
                        "I_mean_bits",
                        "Pe_mean",
                        "fano_lb_bits",
                        "fid_ub_bits",
                    ],
                    &csv_rows,
                )?;
                log.record(path);
            }
            if formats.json() {
                let path = out_dir.join(format!("redundancy_t{i}_d{j}.json"));
                emit::write_json(&path, &report)?;
                log.record(path);
            }
        }
    }
    Ok(Execution {
        log,
        invariant_failure: None,
    })
}

/* ---------- chernoff ---------- */

fn run_chernoff(
    built: &BuiltModel,
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    formats: Formats,
) -> Result<Execution, CliError> {
    let model = quantum_model(built, Analysis::Chernoff)?;
    let times = non_empty(&config.times, "times", Analysis::Chernoff)?;
    let delta = *non_empty(&config.deltas, "deltas", Analysis::Chernoff)?
        .first()
        .expect("non_empty checked");
    let choice = config.chernoff.choice()?;
    let sampler = build_sampler(&config.sampler, seed, model.environment_size())?;

    let mut reports = Vec::with_capacity(times.len());
    for &t in times {
        let report = chernoff_report(
            model,
            t,
            choice,
            delta,
            config.chernoff.fit_sizes.as_deref(),
            &sampler,
        )
        .map_err(|e| CliError::Analysis(e.to_string()))?;
        println!(
            "t = {t}: xi_qcb = {} nats, redundancy estimate = {}",
            report.xi_qcb_nats, report.redundancy_estimate,
        );
        reports.push(report);
    }

    let mut log = OutputLog::default();
    if formats.csv() {
        let csv_rows: Vec<Vec<String>> = reports
            .iter()
            .map(|r| {
                vec![
                    float_cell(r.time),
                    r.environment_size.to_string(),
                    float_cell(r.c),
                    r.optimized.to_string(),
                    float_cell(r.mean_overlap),
                    float_cell(r.xi_qcb_nats),
                    r.perfect_records.to_string(),
                    float_cell(r.r_low_nats),
                    float_cell(r.r_high_nats),
                    float_cell(r.delta),
                    float_cell(r.redundancy_estimate),
                    r.estimate_exceeds_environment.to_string(),
                    opt_float_cell(r.exponent_fit.as_ref().map(|f| f.slope)),
                    opt_float_cell(r.exponent_fit.as_ref().map(|f| f.residual_rms)),
                ]
            })
            .collect();
        let path = out_dir.join("chernoff.csv");
        emit::write_csv(
            &path,
            &[
                "time",
                "environment_size",
                "c",
                "optimized",
                "mean_overlap",
                "xi_qcb_nats",
                "perfect_records",
                "r_low_nats",
                "r_high_nats",
                "delta",
                "redundancy_estimate",
                "estimate_exceeds_environment",
                "fit_slope_nats",
                "fit_residual_rms",
            ],
            &csv_rows,
        )?;
        log.record(path);
    }
    if formats.json() {
        let path = out_dir.join("chernoff.json");
        emit::write_json(&path, &reports)?;
        log.record(path);
    }
    Ok(Execution {
        log,
        invariant_failure: None,
    })
}

/* ---------- photon ---------- */

fn run_photon(
    built: &BuiltModel,
    config: &ExperimentConfig,
    out_dir: &Path,
    formats: Formats,
) -> Result<Execution, CliError> {
    let BuiltModel::Photon {
        model,
        coarse,
        photon_rate,
    } = built
    else {
        return Err(CliError::Config(
            "the `photon` analysis requires model kind \"photon-sky\"".to_string(),
        ));
    };
    let delta = *non_empty(&config.deltas, "deltas", Analysis::Photon)?
        .first()
        .expect("non_empty checked");

    let report = photon_report(model, *photon_rate, delta, coarse.as_deref())
        .map_err(|e| CliError::Analysis(e.to_string()))?;
    println!(
        "per-photon overlap = {}, kappa = {}, redundancy rate = {}",
        report.per_photon_overlap, report.kappa, report.redundancy_rate,
    );

    let mut log = OutputLog::default();
    if formats.csv() {
        let row = vec![
            report.cells.to_string(),
            report.patch_cells.to_string(),
            float_cell(report.patch_area_sr),
            report.momentum_nodes.to_string(),
            float_cell(report.per_photon_overlap),
            float_cell(report.xi_per_photon_nats),
            float_cell(report.kappa),
            float_cell(report.tau_d),
            report.no_decoherence.to_string(),
            opt_float_cell(report.alpha),
            float_cell(report.delta),
            float_cell(report.redundancy_rate),
            opt_float_cell(report.alpha_coarse),
            opt_float_cell(report.alpha_resolution_delta),
        ];
        let path = out_dir.join("photon.csv");
        emit::write_csv(
            &path,
            &[
                "cells",
                "patch_cells",
                "patch_area_sr",
                "momentum_nodes",
                "per_photon_overlap",
                "xi_per_photon_nats",
                "kappa",
                "tau_d",
                "no_decoherence",
                "alpha",
                "delta",
                "redundancy_rate",
                "alpha_coarse",
                "alpha_resolution_delta",
            ],
            &[row],
        )?;
        log.record(path);
    }
    if formats.json() {
        let path = out_dir.join("photon.json");
        emit::write_json(&path, &report)?;
        log.record(path);
    }
    Ok(Execution {
        log,
        invariant_failure: None,
    })
}

/* ---------- selftest ---------- */

/// Entry point for `selftest`, which needs no configuration file.
pub fn selftest(args: &SelftestArgs) -> Result<(), CliError> {
    let started = unix_now();
    let out_dir = resolve_out_dir(&args.out, None);
    std::fs::create_dir_all(&out_dir)?;
    let formats = resolve_formats(args.format, None)?;

    let suites = qdlab::selftest::run_all(args.seed);
    let mut failures = Vec::new();
    for suite in &suites {
        for check in &suite.checks {
            let verdict = if check.passed { "PASS" } else { "FAIL" };
            println!("{}/{}: {verdict} ({})", suite.suite, check.name, check.detail);
            if !check.passed {
                failures.push(format!("{}/{}", suite.suite, check.name));
            }
        }
    }

    let mut log = OutputLog::default();
    if formats.csv() {
        let rows: Vec<Vec<String>> = suites
            .iter()
            .flat_map(|suite| {
                suite.checks.iter().map(|check| {
                    vec![
                        suite.suite.clone(),
                        check.name.clone(),
                        check.passed.to_string(),
                        check.detail.clone(),
                    ]
                })
            })
            .collect();
        let path = out_dir.join("selftest.csv");
        emit::write_csv(&path, &["suite", "check", "passed", "detail"], &rows)?;
        log.record(path);
    }
    if formats.json() {
        let path = out_dir.join("selftest.json");
        emit::write_json(&path, &suites)?;
        log.record(path);
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_digest: None,
        seed: args.seed,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        analyses: vec![AnalysisRecord {
            analysis: "selftest".to_string(),
            files: log.file_names(),
        }],
    };
    emit::write_json(&out_dir.join("manifest.json"), &manifest)?;

    if failures.is_empty() {
        println!("all self-test checks passed");
        Ok(())
    } else {
        Err(CliError::Invariant(format!(
            "self-test checks failed: {}",
            failures.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_key_order_and_comments() {
        let a: toml::Value = "x = 1\n[b]\ny = 2.5\nz = \"s\"\n".parse().unwrap();
        let b: toml::Value = "# reordered\nx = 1\n\n[b]\nz = \"s\"\ny = 2.5\n"
            .parse()
            .unwrap();
        assert_eq!(canonical_digest(&a), canonical_digest(&b));

        let c: toml::Value = "x = 2\n[b]\ny = 2.5\nz = \"s\"\n".parse().unwrap();
        assert_ne!(canonical_digest(&a), canonical_digest(&c));
    }

    #[test]
    fn digest_distinguishes_value_types_and_nesting() {
        let int: toml::Value = "x = 1".parse().unwrap();
        let float: toml::Value = "x = 1.0".parse().unwrap();
        assert_ne!(canonical_digest(&int), canonical_digest(&float));

        let flat: toml::Value = "x = [1, 2]".parse().unwrap();
        let nested: toml::Value = "x = [[1], [2]]".parse().unwrap();
        assert_ne!(canonical_digest(&flat), canonical_digest(&nested));
    }

    #[test]
    fn fragment_sizes_cover_the_range() {
        assert_eq!(fragment_sizes(4), vec![0, 1, 2, 3, 4]);
        let sizes = fragment_sizes(1000);
        assert_eq!(sizes.first(), Some(&0));
        assert_eq!(sizes.last(), Some(&1000));
        assert_eq!(sizes.len(), 65);
        assert!(sizes.windows(2).all(|w| w[0] < w[1]));
    }
}
