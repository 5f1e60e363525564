//! Metric aggregation over a finished run.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::workload::Model;

/// Response time of one application.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppRecord {
    pub app_id: String,
    pub cloud_id: String,
    pub model: Model,
    /// Number of units in the application.
    pub granularity: usize,
    pub submitted_at_ms: u64,
    pub response_ms: u64,
}

impl AppRecord {
    pub fn response_secs(&self) -> f64 {
        self.response_ms as f64 / 1000.0
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsSink {
    pub apps: Vec<AppRecord>,
    /// Completed units per (executing cloud, model).
    pub completed: BTreeMap<(String, Model), u64>,
    pub submitted: BTreeMap<Model, u64>,
    pub events: u64,
}

impl MetricsSink {
    pub fn record_submission(&mut self, model: Model, units: usize) {
        *self.submitted.entry(model).or_default() += units as u64;
    }

    pub fn record_completion(&mut self, cloud_id: &str, model: Model) {
        *self.completed.entry((cloud_id.to_string(), model)).or_default() += 1;
    }

    pub fn record_app(&mut self, record: AppRecord) {
        self.apps.push(record);
    }

    pub fn completed_by(&self, cloud_id: &str, model: Model) -> u64 {
        self.completed
            .get(&(cloud_id.to_string(), model))
            .copied()
            .unwrap_or(0)
    }

    pub fn completed_total(&self, model: Model) -> u64 {
        self.completed
            .iter()
            .filter(|((_, m), _)| *m == model)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn completed_in_cloud(&self, cloud_id: &str) -> u64 {
        Model::ALL.iter().map(|&m| self.completed_by(cloud_id, m)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareRow {
    pub cloud_id: String,
    pub task_pct: f64,
    pub thread_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobShare {
    pub rows: Vec<ShareRow>,
    /// Set when no task units completed; all task percentages are then 0.
    pub task_empty: bool,
    /// Set when no thread units completed; all thread percentages are then 0.
    pub thread_empty: bool,
}

impl JobShare {
    pub fn combined(&self, clouds: &[&str]) -> f64 {
        self.rows
            .iter()
            .filter(|r| clouds.contains(&r.cloud_id.as_str()))
            .map(|r| r.task_pct + r.thread_pct)
            .sum()
    }
}

/// Per-cloud share of completed units for each model, in percent.
pub fn job_share_percent(sink: &MetricsSink, clouds: &[String]) -> JobShare {
    let pct = |cloud: &str, model: Model| {
        let total = sink.completed_total(model);
        if total == 0 {
            0.0
        } else {
            100.0 * sink.completed_by(cloud, model) as f64 / total as f64
        }
    };
    JobShare {
        rows: clouds
            .iter()
            .map(|c| ShareRow {
                cloud_id: c.clone(),
                task_pct: pct(c, Model::Task),
                thread_pct: pct(c, Model::Thread),
            })
            .collect(),
        task_empty: sink.completed_total(Model::Task) == 0,
        thread_empty: sink.completed_total(Model::Thread) == 0,
    }
}
