//! The `datagen` and `run` commands.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use driftnet_core::sim::{
    generate_synthetic_sites, GridSummary, ReplicateFailure, ReplicateResult, SiteSource,
};
use driftnet_core::{run_grid, SimConfig, SimError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{load_config, site_inputs, validate, Overrides};
use crate::io_util::{read_probabilities, write_atomic, write_probabilities, CsvSink};
use crate::CliError;

pub const VERDICTS: &str = "verdicts.csv";
pub const SEVERITY: &str = "severity.csv";
pub const BATCHES: &str = "batches.csv";
pub const SUMMARY: &str = "summary.json";
pub const MANIFEST: &str = "manifest.json";

/// One evaluated window of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub run_id: usize,
    pub cell: String,
    pub scheme: String,
    pub agent: String,
    pub batch_index: usize,
    pub n_valid: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub drift: bool,
    pub truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityRow {
    pub run_id: usize,
    pub cell: String,
    pub scheme: String,
    pub batch_index: usize,
    pub c_true: usize,
    pub c_pred: usize,
    pub score: f64,
    pub category: String,
}

/// Ground truth of every window, evaluated or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub run_id: usize,
    pub cell: String,
    pub scheme: String,
    pub agent: String,
    pub window_size: usize,
    pub batch_index: usize,
    pub n_valid: usize,
    pub n_drifted: usize,
    pub truth: bool,
    pub evaluated: bool,
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFiles {
    pub verdicts: String,
    pub severity: String,
    pub batches: String,
    pub summary: String,
}

/// Everything needed to repeat a run; loadable as a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub threads: usize,
    pub started_at: String,
    pub finished_at: String,
    pub overrides: Overrides,
    pub outputs: OutputFiles,
    pub cells: Vec<String>,
    pub failures: Vec<ReplicateFailure>,
    pub config: SimConfig,
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, CliError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(&path, e))
}

pub fn summary_json(summary: &GridSummary) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(summary).expect("summary serializes");
    bytes.push(b'\n');
    bytes
}

fn require_dir(dir: &Path) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        })
    }
}

fn site_file_name(prefix: &str, id: &str) -> Result<String, CliError> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(CliError::Invalid(format!(
            "site id {id:?} cannot be used in a file name"
        )));
    }
    Ok(format!("{prefix}_{id}.csv"))
}

/// Writes `ref_<site>.csv` and `test_<site>.csv` for every site of `config`.
/// Synthetic sites are drawn from the config's data seed.
pub fn cmd_datagen(config: &SimConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    validate(config, Path::new("<config>"))?;
    require_dir(out_dir)?;
    let synthetic: Vec<_> = config.synthetic_sites().into_iter().flatten().collect();
    let mut generated = generate_synthetic_sites(
        &synthetic,
        &mut ChaCha8Rng::seed_from_u64(config.data_seed()),
    )?
    .into_iter();
    let mut written = Vec::new();
    for site in &config.sites {
        let (reference, test) = match &site.source {
            SiteSource::Synthetic(_) => {
                let data = generated
                    .next()
                    .expect("one generated site per synthetic spec");
                (data.reference, data.test)
            }
            SiteSource::Csv { reference, test } => {
                (read_probabilities(reference)?, read_probabilities(test)?)
            }
        };
        for (prefix, values) in [("ref", &reference), ("test", &test)] {
            let path = out_dir.join(site_file_name(prefix, &site.id)?);
            write_probabilities(&path, values)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Configuration or manifest file; the built-in defaults if absent.
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub overrides: Overrides,
}

struct Sinks {
    verdicts: CsvSink,
    severity: CsvSink,
    batches: CsvSink,
}

impl Sinks {
    fn write(&mut self, result: &ReplicateResult) -> Result<(), CliError> {
        let cell = result.cell.label();
        let run_id = result.replicate;
        for run in &result.schemes {
            let scheme = run.scheme.name().to_string();
            for agent in &run.agents {
                let mut verdicts = agent.verdicts.iter().peekable();
                for b in &agent.batches {
                    let verdict = verdicts.next_if(|v| v.batch_index == b.batch_index);
                    if let Some(v) = verdict {
                        self.verdicts.write(&VerdictRow {
                            run_id,
                            cell: cell.clone(),
                            scheme: scheme.clone(),
                            agent: agent.agent.clone(),
                            batch_index: v.batch_index,
                            n_valid: v.n_valid,
                            statistic: v.statistic,
                            p_value: v.p_value,
                            drift: v.drift,
                            truth: b.drift,
                        })?;
                    }
                    self.batches.write(&BatchRow {
                        run_id,
                        cell: cell.clone(),
                        scheme: scheme.clone(),
                        agent: agent.agent.clone(),
                        window_size: agent.window_size,
                        batch_index: b.batch_index,
                        n_valid: b.n_valid,
                        n_drifted: b.n_drifted,
                        truth: b.drift,
                        evaluated: verdict.is_some(),
                        reference: agent.reference_batches.contains(&b.batch_index),
                    })?;
                }
                if let Some(v) = verdicts.next() {
                    return Err(CliError::Invalid(format!(
                        "verdict for batch {} of agent {} has no ground truth window",
                        v.batch_index, agent.agent
                    )));
                }
            }
            for s in &run.severity {
                self.severity.write(&SeverityRow {
                    run_id,
                    cell: cell.clone(),
                    scheme: scheme.clone(),
                    batch_index: s.batch_index,
                    c_true: s.c_true,
                    c_pred: s.c_pred,
                    score: s.score,
                    category: s.category.as_str().to_string(),
                })?;
            }
        }
        Ok(())
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker threads: {e}")))
}

/// Runs the full grid and writes verdicts, severity, batch truth, summary
/// and manifest into `out_dir`. The configuration is validated before any
/// replicate runs.
pub fn cmd_run(options: &RunOptions) -> Result<GridSummary, CliError> {
    let started_at = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
    let mut config = match &options.config {
        Some(path) => load_config(path)?,
        None => SimConfig::default(),
    };
    options.overrides.apply(&mut config);
    let source = options
        .config
        .clone()
        .unwrap_or_else(|| PathBuf::from("<defaults>"));
    validate(&config, &source)?;
    let inputs = site_inputs(&config)?;
    fs::create_dir_all(&options.out_dir).map_err(CliError::io(&options.out_dir))?;

    let dir = &options.out_dir;
    let mut sinks = Sinks {
        verdicts: CsvSink::create(dir.join(VERDICTS))?,
        severity: CsvSink::create(dir.join(SEVERITY))?,
        batches: CsvSink::create(dir.join(BATCHES))?,
    };
    let pool = thread_pool(options.overrides.threads)?;
    tracing::info!(
        cells = config.cells().len(),
        replicates = config.replicates,
        threads = pool.current_num_threads(),
        "starting run"
    );
    let summary = pool.install(|| {
        run_grid(&config, &inputs, |result| {
            sinks
                .write(result)
                .map_err(|e| SimError::Sink(e.to_string()))
        })
    })?;
    sinks.verdicts.commit()?;
    sinks.severity.commit()?;
    sinks.batches.commit()?;
    write_atomic(&dir.join(SUMMARY), &summary_json(&summary))?;

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        threads: pool.current_num_threads(),
        started_at,
        finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        overrides: options.overrides.clone(),
        outputs: OutputFiles {
            verdicts: VERDICTS.into(),
            severity: SEVERITY.into(),
            batches: BATCHES.into(),
            summary: SUMMARY.into(),
        },
        cells: config.cells().iter().map(|c| c.label()).collect(),
        failures: summary.failures.clone(),
        config,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&dir.join(MANIFEST), &bytes)?;
    tracing::info!(failures = summary.failures.len(), "run finished");
    Ok(summary)
}
