//! Command implementations behind the `noisefed` binary.
//!
//! Every run writes two files into its output directory:
//!
//! * `summary.json`: schema version, run id, the resolved config and the
//!   run-level metrics;
//! * `rounds.csv`: one `(schema_version, run_id, round, metric, value)` row
//!   per metric per round.
//!
//! Floats are written in scientific notation with at least nine significant
//! digits and parse back to the exact same value.

pub mod error;
pub mod format;

use std::fs;
use std::io::Write;
use std::path::Path;

use noisefed_core::checks::{self, CheckOutcome, Suite};
use noisefed_core::orchestrator::{run_simulation, run_sweep};
use noisefed_core::{RunSummary, SimConfig, SweepAxis};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use error::{CliError, CliResult};
use format::{fmt_f64, JsonFormatter};

pub const SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const INDEX_FILE: &str = "index.csv";

pub fn load_config(path: &Path) -> CliResult<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: SimConfig = toml::from_str(&text).map_err(|e| CliError::new("config", Some(path), e))?;
    cfg.validate().map_err(|e| CliError::sim(Some(path), &e))?;
    Ok(cfg)
}

/// First 16 hex digits of SHA-256 over the compact JSON of `cfg` (seed included).
pub fn run_id(cfg: &SimConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

#[derive(Serialize)]
struct Metrics<'a> {
    a_g: f64,
    u_l_bar: f64,
    a_l_bar: f64,
    n_bar: f64,
    stabilization_round: Option<u32>,
    final_global_accuracy: f64,
    rounds: usize,
    gammas: &'a [f64],
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    schema_version: u32,
    run_id: &'a str,
    config: &'a SimConfig,
    summary: Metrics<'a>,
}

pub fn summary_json(cfg: &SimConfig, summary: &RunSummary) -> Vec<u8> {
    let id = run_id(cfg);
    let doc = SummaryDoc {
        schema_version: SCHEMA_VERSION,
        run_id: &id,
        config: cfg,
        summary: Metrics {
            a_g: summary.a_g,
            u_l_bar: summary.u_l_bar,
            a_l_bar: summary.a_l_bar,
            n_bar: summary.n_bar,
            stabilization_round: summary.stabilization_round,
            final_global_accuracy: summary.final_global_accuracy,
            rounds: summary.records.len(),
            gammas: &summary.gammas,
        },
    };
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, JsonFormatter::new());
    doc.serialize(&mut ser).expect("summary serializes");
    buf.push(b'\n');
    buf
}

pub fn rounds_csv(cfg: &SimConfig, summary: &RunSummary) -> Vec<u8> {
    let id = run_id(cfg);
    let schema = SCHEMA_VERSION.to_string();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["schema_version", "run_id", "round", "metric", "value"]).expect("in-memory write");
    for r in &summary.records {
        let round = r.round.to_string();
        let mut row = |metric: &str, value: String| {
            w.write_record([schema.as_str(), id.as_str(), round.as_str(), metric, value.as_str()])
                .expect("in-memory write");
        };
        row("global_accuracy", fmt_f64(r.global_accuracy));
        for c in &r.clients {
            let i = c.client_id;
            if let Some(k) = c.action {
                row(&format!("client{i}.action"), k.to_string());
            }
            row(&format!("client{i}.level"), fmt_f64(c.level));
            row(&format!("client{i}.true_std"), fmt_f64(c.true_std));
            if let Some(s) = c.sigma_hat {
                row(&format!("client{i}.sigma_hat"), fmt_f64(s));
            }
            row(&format!("client{i}.weight"), fmt_f64(c.weight));
            row(&format!("client{i}.local_accuracy"), fmt_f64(c.local_accuracy));
            row(&format!("client{i}.utility"), fmt_f64(c.utility));
        }
    }
    w.into_inner().expect("in-memory flush")
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_run(out_dir: &Path, cfg: &SimConfig, summary: &RunSummary) -> CliResult<()> {
    ensure_dir(out_dir)?;
    write_file(&out_dir.join(SUMMARY_FILE), &summary_json(cfg, summary))?;
    write_file(&out_dir.join(ROUNDS_FILE), &rounds_csv(cfg, summary))
}

pub fn cmd_run(config: &Path, out_dir: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let summary = run_simulation(&cfg).map_err(|e| CliError::sim(Some(config), &e))?;
    write_run(out_dir, &cfg, &summary)
}

fn cell_dir_name(k: usize, axis: SweepAxis, value: &str) -> String {
    let clean: String = value
        .trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{k:02}_{axis}_{clean}")
}

/// Runs every cell, writes one directory per cell plus `index.csv`, and
/// returns how many cells failed.
pub fn cmd_sweep(config: &Path, axis: SweepAxis, values: &[String], out_dir: &Path) -> CliResult<usize> {
    let base = load_config(config)?;
    let cells = run_sweep(&base, axis, values).map_err(|e| CliError::sim(Some(config), &e))?;
    ensure_dir(out_dir)?;
    let mut index = csv::Writer::from_writer(Vec::new());
    index
        .write_record([
            "schema_version", "cell", "dir", "axis", "value", "seed", "status", "run_id", "a_g", "u_l_bar",
            "a_l_bar", "n_bar", "stabilization_round", "error",
        ])
        .expect("in-memory write");
    let mut failed = 0;
    for (k, cell) in cells.iter().enumerate() {
        let dir = cell_dir_name(k, axis, &cell.value);
        let mut fields = vec![
            SCHEMA_VERSION.to_string(),
            k.to_string(),
            dir.clone(),
            axis.to_string(),
            cell.value.clone(),
            cell.seed.to_string(),
        ];
        match (&cell.outcome, &cell.config) {
            (Ok(summary), Some(cfg)) => {
                write_run(&out_dir.join(&dir), cfg, summary)?;
                fields.extend([
                    "ok".to_string(),
                    run_id(cfg),
                    fmt_f64(summary.a_g),
                    fmt_f64(summary.u_l_bar),
                    fmt_f64(summary.a_l_bar),
                    fmt_f64(summary.n_bar),
                    summary.stabilization_round.map(|r| r.to_string()).unwrap_or_default(),
                    String::new(),
                ]);
            }
            (outcome, cfg) => {
                failed += 1;
                let err = match outcome {
                    Err(e) => CliError::sim(None, e),
                    Ok(_) => CliError::new("internal", None, "cell has a summary but no config"),
                };
                let err_line = err.to_string();
                ensure_dir(&out_dir.join(&dir))?;
                write_file(&out_dir.join(&dir).join("error.json"), format!("{err_line}\n").as_bytes())?;
                fields.extend([
                    "failed".to_string(),
                    cfg.as_ref().map(run_id).unwrap_or_default(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    err.message,
                ]);
            }
        }
        index.write_record(&fields).expect("in-memory write");
    }
    write_file(&out_dir.join(INDEX_FILE), &index.into_inner().expect("in-memory flush"))?;
    Ok(failed)
}

/// Runs one property suite, printing a line per property. Returns the outcomes.
pub fn cmd_check<W: Write>(suite: Suite, out: &mut W) -> std::io::Result<Vec<CheckOutcome>> {
    let outcomes = checks::run(suite);
    for o in &outcomes {
        writeln!(out, "{o}")?;
    }
    Ok(outcomes)
}
