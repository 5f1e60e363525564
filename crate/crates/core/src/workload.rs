//! Synthetic Task- and Thread-model applications.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sim::RngStream;

/// Partition sizes of the granularity sweep (rows = cols).
pub const SWEEP_SIZES: [u32; 5] = [5, 7, 9, 11, 13];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Task,
    Thread,
}

impl Model {
    pub const ALL: [Model; 2] = [Model::Task, Model::Thread];

    /// Label of the execution service that runs units of this model.
    pub fn service_type(self) -> &'static str {
        match self {
            Model::Task => "P2PTaskExecution",
            Model::Thread => "P2PThreadExecution",
        }
    }

    pub fn from_service_type(label: &str) -> Option<Model> {
        Model::ALL.into_iter().find(|m| m.service_type() == label)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Task => "task",
            Model::Thread => "thread",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "task" => Ok(Model::Task),
            "thread" => Ok(Model::Thread),
            other => Err(format!("unknown model '{other}' (expected task or thread)")),
        }
    }
}

/// Per-unit service demand in GHz-seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Demand {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
}

impl Default for Demand {
    fn default() -> Self {
        Demand::Uniform { lo: 3.0, hi: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub id: String,
    pub model: Model,
    pub rows: u32,
    pub cols: u32,
    #[serde(default)]
    pub demand: Demand,
    pub submit_cloud: String,
    #[serde(default)]
    pub submit_time_ms: u64,
}

impl WorkloadSpec {
    pub fn unit_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkUnit {
    pub index: usize,
    pub model: Model,
    pub demand_ghz_s: f64,
}

/// `rows * cols` independent units with demands drawn from the stream
/// `workload/<id>`.
pub fn generate_units(spec: &WorkloadSpec, seed: u64) -> Vec<WorkUnit> {
    let mut rng = RngStream::new(seed, &format!("workload/{}", spec.id));
    (0..spec.unit_count())
        .map(|index| {
            let demand_ghz_s = match spec.demand {
                Demand::Constant(d) => d,
                Demand::Uniform { lo, hi } => rng.uniform(lo, hi).expect("validated demand interval"),
            };
            WorkUnit {
                index,
                model: spec.model,
                demand_ghz_s,
            }
        })
        .collect()
}

/// Copies of `base` at each sweep size, with `model` applied.
pub fn granularity_sweep(model: Model, base: &WorkloadSpec) -> Vec<WorkloadSpec> {
    SWEEP_SIZES
        .iter()
        .map(|&n| WorkloadSpec {
            model,
            rows: n,
            cols: n,
            ..base.clone()
        })
        .collect()
}
