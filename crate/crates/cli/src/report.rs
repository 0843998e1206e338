//! The `report` command: tidy plot data and text tables from a finished run.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use driftnet_core::metrics::{ConfusionCounts, MetricPool, MetricsSummary, PoolSummary};
use driftnet_core::schemes::SchemeKind;
use driftnet_core::severity::SeverityCategory;
use driftnet_core::sim::{GridAccumulator, GridSummary, SchemeSummary};

use crate::io_util::{read_rows, write_atomic, CsvSink};
use crate::run::{
    read_manifest, BatchRow, SeverityRow, VerdictRow, BATCHES, MANIFEST, SEVERITY, SUMMARY,
    VERDICTS,
};
use crate::CliError;

pub const REPORT_AGENTS: &str = "report_agents.csv";
pub const REPORT_BREAKDOWN: &str = "report_breakdown.csv";
pub const REPORT_TIMELINE: &str = "report_timeline.csv";
pub const REPORT_TABLES: &str = "report_tables.txt";

const METRIC_COLUMNS: [&str; 10] = [
    "n",
    "skipped",
    "precision_mean",
    "precision_std",
    "sensitivity_mean",
    "sensitivity_std",
    "specificity_mean",
    "specificity_std",
    "f1_mean",
    "f1_std",
];

struct RunData {
    verdicts: Vec<VerdictRow>,
    severity: Vec<SeverityRow>,
    batches: Vec<BatchRow>,
}

fn check_inputs(dir: &Path, names: &[&str]) -> Result<(), CliError> {
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !dir.join(n).is_file())
        .map(|n| n.to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::MissingInputs {
            dir: dir.to_path_buf(),
            missing,
        })
    }
}

fn load_run(dir: &Path) -> Result<RunData, CliError> {
    Ok(RunData {
        verdicts: read_rows(&dir.join(VERDICTS))?,
        severity: read_rows(&dir.join(SEVERITY))?,
        batches: read_rows(&dir.join(BATCHES))?,
    })
}

fn parse_scheme(path: &Path, name: &str) -> Result<SchemeKind, CliError> {
    name.parse().map_err(|e| CliError::data(path, e))
}

type ReplicateKey = (String, String, usize);

/// Agents of each (cell, scheme, run) in output order.
fn agents_by_replicate(batches: &[BatchRow]) -> HashMap<ReplicateKey, Vec<String>> {
    let mut out: HashMap<ReplicateKey, Vec<String>> = HashMap::new();
    for b in batches {
        let agents = out
            .entry((b.cell.clone(), b.scheme.clone(), b.run_id))
            .or_default();
        if agents.last() != Some(&b.agent) && !agents.contains(&b.agent) {
            agents.push(b.agent.clone());
        }
    }
    out
}

fn detection_counts(verdicts: &[VerdictRow]) -> HashMap<(ReplicateKey, String), ConfusionCounts> {
    let mut out: HashMap<(ReplicateKey, String), ConfusionCounts> = HashMap::new();
    for v in verdicts {
        out.entry((
            (v.cell.clone(), v.scheme.clone(), v.run_id),
            v.agent.clone(),
        ))
        .or_default()
        .record(v.drift, v.truth);
    }
    out
}

fn severity_counts(
    path: &Path,
    rows: &[SeverityRow],
) -> Result<HashMap<ReplicateKey, ConfusionCounts>, CliError> {
    let mut out: HashMap<ReplicateKey, ConfusionCounts> = HashMap::new();
    for s in rows {
        let category = SeverityCategory::parse(&s.category).ok_or_else(|| {
            CliError::data(path, format!("unknown severity category {:?}", s.category))
        })?;
        out.entry((s.cell.clone(), s.scheme.clone(), s.run_id))
            .or_default()
            .record_category(category);
    }
    Ok(out)
}

/// Rebuilds `summary.json` from the manifest and the per-window CSV files.
pub fn recompute_summary(dir: &Path) -> Result<GridSummary, CliError> {
    check_inputs(dir, &[MANIFEST, VERDICTS, SEVERITY, BATCHES])?;
    let manifest = read_manifest(dir)?;
    let data = load_run(dir)?;
    let config = &manifest.config;
    let agents = agents_by_replicate(&data.batches);
    let detection = detection_counts(&data.verdicts);
    let severity = severity_counts(&dir.join(SEVERITY), &data.severity)?;

    let mut runs: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for b in &data.batches {
        runs.entry(b.cell.as_str()).or_default().push(b.run_id);
    }
    let mut acc = GridAccumulator::new(config.schemes.clone(), config.empty_class_policy);
    for cell in config.cells() {
        acc.add_cell(&cell);
        let label = cell.label();
        let mut ids = runs.get(label.as_str()).cloned().unwrap_or_default();
        ids.sort_unstable();
        ids.dedup();
        for run_id in ids {
            for &scheme in &config.schemes {
                let key = (label.clone(), scheme.name().to_string(), run_id);
                let Some(names) = agents.get(&key) else {
                    continue;
                };
                let counts: Vec<ConfusionCounts> = names
                    .iter()
                    .map(|a| {
                        detection
                            .get(&(key.clone(), a.clone()))
                            .copied()
                            .unwrap_or_default()
                    })
                    .collect();
                let sev = scheme
                    .is_multi_center()
                    .then(|| severity.get(&key).copied().unwrap_or_default());
                acc.add_counts(&cell, scheme, &counts, sev.as_ref());
            }
        }
    }
    let cells = config.cells();
    for f in &manifest.failures {
        if let Some(cell) = cells.iter().find(|c| c.label() == f.cell) {
            acc.add_failure(cell, f.replicate, f.error.clone());
        }
    }
    Ok(acc.finish())
}

fn metric_fields(pool: &PoolSummary) -> Vec<String> {
    let mut out = Vec::with_capacity(METRIC_COLUMNS.len());
    let n = pool.metrics.map(|m| m.n).unwrap_or(0);
    out.push(n.to_string());
    out.push(pool.skipped.to_string());
    match &pool.metrics {
        Some(m) => {
            for ms in [m.precision, m.sensitivity, m.specificity, m.f1] {
                out.push(ms.mean.to_string());
                out.push(ms.std.to_string());
            }
        }
        None => out.extend(std::iter::repeat_n(String::new(), 8)),
    }
    out
}

fn write_agents(
    dir: &Path,
    manifest_schemes: &[SchemeKind],
    data: &RunData,
    policy: driftnet_core::metrics::EmptyClassPolicy,
) -> Result<PathBuf, CliError> {
    let detection = detection_counts(&data.verdicts);
    let mut seen: Vec<(String, String)> = Vec::new();
    let mut replicates: Vec<(ReplicateKey, String)> = Vec::new();
    for b in &data.batches {
        let key = (
            (b.cell.clone(), b.scheme.clone(), b.run_id),
            b.agent.clone(),
        );
        if replicates.last() != Some(&key) && !replicates.contains(&key) {
            replicates.push(key);
        }
        let pair = (b.scheme.clone(), b.agent.clone());
        if !seen.contains(&pair) {
            seen.push(pair);
        }
    }
    let mut pools: HashMap<(String, String), MetricPool> = HashMap::new();
    for key in &replicates {
        let counts = detection.get(key).copied().unwrap_or_default();
        pools
            .entry((key.0 .1.clone(), key.1.clone()))
            .or_default()
            .push(&counts, policy);
    }
    let path = dir.join(REPORT_AGENTS);
    let mut sink = CsvSink::create(&path)?;
    sink.write_record(["scheme", "agent"].into_iter().chain(METRIC_COLUMNS))?;
    for scheme in manifest_schemes {
        for (s, agent) in seen.iter().filter(|(s, _)| s == scheme.name()) {
            let summary = pools[&(s.clone(), agent.clone())].summarize();
            sink.write_record(
                [s.clone(), agent.clone()]
                    .into_iter()
                    .chain(metric_fields(&summary)),
            )?;
        }
    }
    sink.commit()?;
    Ok(path)
}

fn write_breakdown(dir: &Path, summary: &GridSummary) -> Result<PathBuf, CliError> {
    let path = dir.join(REPORT_BREAKDOWN);
    let mut sink = CsvSink::create(&path)?;
    let head = [
        "cell",
        "drift_strength",
        "drift_duration",
        "window_fraction",
        "scheme",
        "task",
    ];
    sink.write_record(head.into_iter().chain(METRIC_COLUMNS))?;
    for cell in &summary.cells {
        for s in &cell.schemes {
            let tasks = std::iter::once(("detection", &s.detection))
                .chain(s.severity.as_ref().map(|p| ("severity", p)));
            for (task, pool) in tasks {
                let lead = [
                    cell.cell.clone(),
                    cell.drift_strength.to_string(),
                    cell.drift_duration.to_string(),
                    cell.window_fraction.to_string(),
                    s.scheme.name().to_string(),
                    task.to_string(),
                ];
                sink.write_record(lead.into_iter().chain(metric_fields(pool)))?;
            }
        }
    }
    sink.commit()?;
    Ok(path)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-window predicted and true drift of the first completed replicate of
/// every cell, with the scheme's severity where it has one.
fn write_timeline(dir: &Path, data: &RunData) -> Result<PathBuf, CliError> {
    let mut first: HashMap<&str, usize> = HashMap::new();
    for b in &data.batches {
        let e = first.entry(b.cell.as_str()).or_insert(b.run_id);
        *e = (*e).min(b.run_id);
    }
    let shown = |cell: &str, run_id: usize| first.get(cell) == Some(&run_id);
    let verdicts: HashMap<(&str, &str, &str, usize), &VerdictRow> = data
        .verdicts
        .iter()
        .filter(|v| shown(&v.cell, v.run_id))
        .map(|v| {
            (
                (
                    v.cell.as_str(),
                    v.scheme.as_str(),
                    v.agent.as_str(),
                    v.batch_index,
                ),
                v,
            )
        })
        .collect();
    let severity: HashMap<(&str, &str, usize), &SeverityRow> = data
        .severity
        .iter()
        .filter(|s| shown(&s.cell, s.run_id))
        .map(|s| ((s.cell.as_str(), s.scheme.as_str(), s.batch_index), s))
        .collect();

    let path = dir.join(REPORT_TIMELINE);
    let mut sink = CsvSink::create(&path)?;
    sink.write_record([
        "run_id",
        "cell",
        "scheme",
        "agent",
        "batch_index",
        "window_size",
        "n_valid",
        "n_drifted",
        "truth",
        "evaluated",
        "reference",
        "predicted",
        "statistic",
        "p_value",
        "c_true",
        "c_pred",
        "severity_score",
        "severity_category",
    ])?;
    for b in data.batches.iter().filter(|b| shown(&b.cell, b.run_id)) {
        let v = verdicts.get(&(
            b.cell.as_str(),
            b.scheme.as_str(),
            b.agent.as_str(),
            b.batch_index,
        ));
        let s = severity.get(&(b.cell.as_str(), b.scheme.as_str(), b.batch_index));
        sink.write_record([
            b.run_id.to_string(),
            b.cell.clone(),
            b.scheme.clone(),
            b.agent.clone(),
            b.batch_index.to_string(),
            b.window_size.to_string(),
            b.n_valid.to_string(),
            b.n_drifted.to_string(),
            b.truth.to_string(),
            b.evaluated.to_string(),
            b.reference.to_string(),
            opt(v.map(|v| v.drift)),
            opt(v.and_then(|v| v.statistic)),
            opt(v.and_then(|v| v.p_value)),
            opt(s.map(|s| s.c_true)),
            opt(s.map(|s| s.c_pred)),
            opt(s.map(|s| s.score)),
            opt(s.map(|s| s.category.clone())),
        ])?;
    }
    sink.commit()?;
    Ok(path)
}

fn table_cell(
    m: &MetricsSummary,
    pick: fn(&MetricsSummary) -> driftnet_core::metrics::MeanStd,
) -> String {
    let v = pick(m);
    format!("{:.3} ± {:.3}", v.mean, v.std)
}

fn write_table(out: &mut String, title: &str, rows: &[(&SchemeSummary, &PoolSummary)]) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(
        out,
        "{:<12} {:>15} {:>15} {:>15} {:>15} {:>7} {:>7}",
        "Scheme", "Precision", "Sensitivity", "Specificity", "F1-score", "n", "skipped"
    );
    for (s, pool) in rows {
        match &pool.metrics {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{:<12} {:>15} {:>15} {:>15} {:>15} {:>7} {:>7}",
                    s.scheme.name(),
                    table_cell(m, |m| m.precision),
                    table_cell(m, |m| m.sensitivity),
                    table_cell(m, |m| m.specificity),
                    table_cell(m, |m| m.f1),
                    m.n,
                    pool.skipped
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{:<12} {:>15} {:>7} {:>7}",
                    s.scheme.name(),
                    "no data",
                    0,
                    pool.skipped
                );
            }
        }
    }
    out.push('\n');
}

fn write_tables(dir: &Path, summary: &GridSummary) -> Result<PathBuf, CliError> {
    let mut out = String::new();
    let detection: Vec<_> = summary.overall.iter().map(|s| (s, &s.detection)).collect();
    write_table(
        &mut out,
        "Drift detection, all cells (mean ± std)",
        &detection,
    );
    let severity: Vec<_> = summary
        .overall
        .iter()
        .filter_map(|s| s.severity.as_ref().map(|p| (s, p)))
        .collect();
    if !severity.is_empty() {
        write_table(
            &mut out,
            "Drift severity, multi-center schemes (mean ± std)",
            &severity,
        );
    }
    if !summary.failures.is_empty() {
        let _ = writeln!(out, "Failed replicates: {}", summary.failures.len());
    }
    let path = dir.join(REPORT_TABLES);
    write_atomic(&path, out.as_bytes())?;
    Ok(path)
}

/// Writes the four report files into the run directory.
pub fn cmd_report(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    check_inputs(dir, &[MANIFEST, SUMMARY, VERDICTS, SEVERITY, BATCHES])?;
    let manifest = read_manifest(dir)?;
    let summary_path = dir.join(SUMMARY);
    let text = fs::read_to_string(&summary_path).map_err(CliError::io(&summary_path))?;
    let summary: GridSummary =
        serde_json::from_str(&text).map_err(|e| CliError::data(&summary_path, e))?;
    let data = load_run(dir)?;
    for b in &data.batches {
        parse_scheme(&dir.join(BATCHES), &b.scheme)?;
    }
    Ok(vec![
        write_agents(
            dir,
            &manifest.config.schemes,
            &data,
            manifest.config.empty_class_policy,
        )?,
        write_breakdown(dir, &summary)?,
        write_timeline(dir, &data)?,
        write_tables(dir, &summary)?,
    ])
}
