//! Result tables and the files written for a run or a sweep.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::experiment::{RunOutcome, SweepPoint};
use crate::metrics::{job_share_percent, AppRecord};
use crate::workload::Model;

pub const RESPONSE_TIMES: &str = "response_times";
pub const JOBS_BY_CLOUD: &str = "jobs_by_cloud";
pub const JOB_SHARE: &str = "job_share";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.ext())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub metric: String,
    pub scope: String,
    pub granularity: Option<usize>,
    pub value: f64,
    pub unit: String,
}

/// Rows sorted by (metric, scope, granularity, value).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(mut rows: Vec<ResultRow>) -> Self {
        rows.sort_by(|a, b| {
            (&a.metric, &a.scope, a.granularity)
                .cmp(&(&b.metric, &b.scope, b.granularity))
                .then_with(|| a.value.total_cmp(&b.value))
        });
        ResultTable { rows }
    }

    pub fn from_run(out: &RunOutcome) -> Self {
        let mut rows: Vec<ResultRow> = out.records().iter().map(response_row).collect();
        for c in &out.clouds {
            for m in Model::ALL {
                rows.push(ResultRow {
                    metric: "jobs_completed".into(),
                    scope: format!("{c}/{}", m.service_type()),
                    granularity: None,
                    value: out.metrics.completed_by(c, m) as f64,
                    unit: "jobs".into(),
                });
            }
        }
        for r in job_share_percent(&out.metrics, &out.clouds).rows {
            for (m, v) in [(Model::Task, r.task_pct), (Model::Thread, r.thread_pct)] {
                rows.push(ResultRow {
                    metric: "job_share".into(),
                    scope: format!("{}/{m}", r.cloud_id),
                    granularity: None,
                    value: round3(v),
                    unit: "%".into(),
                });
            }
        }
        Self::new(rows)
    }

    /// Response-time rows of `model` across all sweep points.
    pub fn from_sweep(points: &[SweepPoint], model: Model) -> Self {
        Self::new(
            points
                .iter()
                .flat_map(|p| p.outcome.records().iter().filter(|r| r.model == model).map(response_row))
                .collect(),
        )
    }

    pub fn get(&self, metric: &str, scope: &str, granularity: Option<usize>) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.scope == scope && r.granularity == granularity)
            .map(|r| r.value)
    }
}

fn response_row(r: &AppRecord) -> ResultRow {
    ResultRow {
        metric: "response_time".into(),
        scope: format!("{}/{}", r.cloud_id, r.model),
        granularity: Some(r.granularity),
        value: round3(r.response_secs()),
        unit: "s".into(),
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

fn cmp_records(a: &&AppRecord, b: &&AppRecord) -> Ordering {
    (&a.cloud_id, a.model, a.granularity, &a.app_id).cmp(&(&b.cloud_id, b.model, b.granularity, &b.app_id))
}

#[derive(Serialize)]
struct ResponseLine {
    cloud_id: String,
    model: Model,
    granularity: usize,
    response_time_s: f64,
}

#[derive(Serialize)]
struct JobsLine {
    cloud_id: String,
    service_type: &'static str,
    jobs_completed: u64,
}

#[derive(Serialize)]
struct ShareLine {
    cloud_id: String,
    task_pct: f64,
    thread_pct: f64,
}

fn response_lines<'a>(records: impl Iterator<Item = &'a AppRecord>) -> Vec<ResponseLine> {
    let mut records: Vec<&AppRecord> = records.collect();
    records.sort_by(cmp_records);
    records
        .into_iter()
        .map(|r| ResponseLine {
            cloud_id: r.cloud_id.clone(),
            model: r.model,
            granularity: r.granularity,
            response_time_s: round3(r.response_secs()),
        })
        .collect()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> io::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], written: &mut Vec<PathBuf>) -> io::Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    written.push(path);
    Ok(())
}

fn write_responses(dir: &Path, lines: &[ResponseLine], format: Format, written: &mut Vec<PathBuf>) -> io::Result<()> {
    let bytes = match format {
        Format::Csv => csv_bytes(
            &["cloud_id", "model", "granularity", "response_time_s"],
            lines.iter().map(|l| {
                vec![
                    l.cloud_id.clone(),
                    l.model.to_string(),
                    l.granularity.to_string(),
                    fmt3(l.response_time_s),
                ]
            }),
        )?,
        Format::Json => json_bytes(lines)?,
    };
    write_file(dir, &format!("{RESPONSE_TIMES}.{}", format.ext()), &bytes, written)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    clouds: &'a [String],
    applications: usize,
    units_submitted: &'a std::collections::BTreeMap<Model, u64>,
    allocations: usize,
    events: u64,
    end_time_ms: u64,
    trace_digest: &'a str,
    task_share_empty: bool,
    thread_share_empty: bool,
    results: &'a [ResultRow],
}

/// Writes the response-time, job-count and job-share tables plus
/// `summary.json` into `dir`, creating it if needed. Returns the paths
/// written.
pub fn write_run(dir: &Path, out: &RunOutcome, format: Format) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    write_responses(dir, &response_lines(out.records().iter()), format, &mut written)?;

    let jobs: Vec<JobsLine> = out
        .clouds
        .iter()
        .flat_map(|c| {
            Model::ALL.into_iter().map(move |m| JobsLine {
                cloud_id: c.clone(),
                service_type: m.service_type(),
                jobs_completed: out.metrics.completed_by(c, m),
            })
        })
        .collect();
    let share = job_share_percent(&out.metrics, &out.clouds);
    let shares: Vec<ShareLine> = share
        .rows
        .iter()
        .map(|r| ShareLine {
            cloud_id: r.cloud_id.clone(),
            task_pct: round3(r.task_pct),
            thread_pct: round3(r.thread_pct),
        })
        .collect();
    let (jobs_bytes, share_bytes) = match format {
        Format::Csv => (
            csv_bytes(
                &["cloud_id", "service_type", "jobs_completed"],
                jobs.iter()
                    .map(|j| vec![j.cloud_id.clone(), j.service_type.to_string(), j.jobs_completed.to_string()]),
            )?,
            csv_bytes(
                &["cloud_id", "task_pct", "thread_pct"],
                shares
                    .iter()
                    .map(|s| vec![s.cloud_id.clone(), fmt3(s.task_pct), fmt3(s.thread_pct)]),
            )?,
        ),
        Format::Json => (json_bytes(&jobs)?, json_bytes(&shares)?),
    };
    write_file(dir, &format!("{JOBS_BY_CLOUD}.{}", format.ext()), &jobs_bytes, &mut written)?;
    write_file(dir, &format!("{JOB_SHARE}.{}", format.ext()), &share_bytes, &mut written)?;

    let table = ResultTable::from_run(out);
    let summary = RunSummary {
        seed: out.seed,
        clouds: &out.clouds,
        applications: out.records().len(),
        units_submitted: &out.metrics.submitted,
        allocations: out.decisions.len(),
        events: out.metrics.events,
        end_time_ms: out.end_time_ms,
        trace_digest: &out.trace_digest,
        task_share_empty: share.task_empty,
        thread_share_empty: share.thread_empty,
        results: &table.rows,
    };
    write_file(dir, SUMMARY, &json_bytes(&summary)?, &mut written)?;
    Ok(written)
}

#[derive(Serialize)]
struct PointSummary<'a> {
    granularity: usize,
    applications: usize,
    events: u64,
    end_time_ms: u64,
    trace_digest: &'a str,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    model: Model,
    seed: Option<u64>,
    points: Vec<PointSummary<'a>>,
    results: &'a [ResultRow],
}

/// Writes one response-time row per application of `model` and sweep
/// point, plus `summary.json`.
pub fn write_sweep(dir: &Path, points: &[SweepPoint], model: Model, format: Format) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let lines = response_lines(
        points
            .iter()
            .flat_map(|p| p.outcome.records().iter().filter(|r| r.model == model)),
    );
    write_responses(dir, &lines, format, &mut written)?;
    let table = ResultTable::from_sweep(points, model);
    let summary = SweepSummary {
        model,
        seed: points.first().map(|p| p.outcome.seed),
        points: points
            .iter()
            .map(|p| PointSummary {
                granularity: p.granularity,
                applications: p.outcome.records().len(),
                events: p.outcome.metrics.events,
                end_time_ms: p.outcome.end_time_ms,
                trace_digest: &p.outcome.trace_digest,
            })
            .collect(),
        results: &table.rows,
    };
    write_file(dir, SUMMARY, &json_bytes(&summary)?, &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run;
    use crate::scenario::Scenario;

    fn small() -> Scenario {
        let mut s = Scenario::melbourne_5();
        for w in &mut s.workloads {
            w.rows = 2;
            w.cols = 2;
        }
        s
    }

    #[test]
    fn run_files_have_fixed_headers() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small()).unwrap();
        let files = write_run(dir.path(), &out, Format::Csv).unwrap();
        assert_eq!(files.len(), 4);
        let read = |n: &str| fs::read_to_string(dir.path().join(n)).unwrap();
        let rt = read("response_times.csv");
        assert_eq!(rt.lines().next().unwrap(), "cloud_id,model,granularity,response_time_s");
        assert_eq!(rt.lines().count(), 1 + out.records().len());
        assert!(rt.lines().skip(1).all(|l| l.split(',').nth(2) == Some("4")));
        let jobs = read("jobs_by_cloud.csv");
        assert_eq!(jobs.lines().next().unwrap(), "cloud_id,service_type,jobs_completed");
        assert_eq!(jobs.lines().count(), 1 + 10);
        assert!(jobs.contains("cloud-5,P2PThreadExecution,"));
        let share = read("job_share.csv");
        assert_eq!(share.lines().next().unwrap(), "cloud_id,task_pct,thread_pct");
        let value = share.lines().nth(1).unwrap().split(',').nth(1).unwrap();
        assert_eq!(value.split('.').nth(1).unwrap().len(), 3);
        let summary: serde_json::Value = serde_json::from_str(&read("summary.json")).unwrap();
        assert_eq!(summary["seed"], 42);
    }

    #[test]
    fn empty_run_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Scenario::melbourne_5();
        s.workloads.clear();
        let out = run(&s).unwrap();
        write_run(dir.path(), &out, Format::Csv).unwrap();
        let rt = fs::read_to_string(dir.path().join("response_times.csv")).unwrap();
        assert_eq!(rt, "cloud_id,model,granularity,response_time_s\n");
        let share = fs::read_to_string(dir.path().join("job_share.csv")).unwrap();
        assert!(share.contains("cloud-1,0.000,0.000"));
    }

    #[test]
    fn json_format() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small()).unwrap();
        write_run(dir.path(), &out, Format::Json).unwrap();
        let rt: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("response_times.json")).unwrap()).unwrap();
        assert_eq!(rt.as_array().unwrap().len(), out.records().len());
        assert!(rt[0]["response_time_s"].is_number());
    }

    #[test]
    fn table_is_sorted() {
        let out = run(&small()).unwrap();
        let t = ResultTable::from_run(&out);
        let keys: Vec<_> = t.rows.iter().map(|r| (&r.metric, &r.scope, r.granularity)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(t.get("response_time", "cloud-1/task", Some(4)).is_some());
        assert_eq!(t.get("jobs_completed", "cloud-1/P2PTaskExecution", None).map(|v| v >= 0.0), Some(true));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("json".parse::<Format>(), Ok(Format::Json));
        assert!("xml".parse::<Format>().is_err());
    }
}
