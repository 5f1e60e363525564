//! Whole-scenario runs and granularity sweeps.

use std::collections::BTreeMap;

use crate::coordination::AllocationDecision;
use crate::federation::{deploy_federation, Federation, FederationError};
use crate::metrics::{AppRecord, MetricsSink};
use crate::scenario::Scenario;
use crate::spatial::ClaimId;
use crate::workload::{Model, SWEEP_SIZES};

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub clouds: Vec<String>,
    pub metrics: MetricsSink,
    pub decisions: Vec<AllocationDecision>,
    pub dispatches: BTreeMap<ClaimId, u32>,
    pub end_time_ms: u64,
    pub trace_digest: String,
}

impl RunOutcome {
    fn capture(fed: &Federation, seed: u64) -> Self {
        RunOutcome {
            seed,
            clouds: fed.cloud_ids(),
            metrics: fed.metrics().clone(),
            decisions: fed.decisions().to_vec(),
            dispatches: fed.dispatch_counts().clone(),
            end_time_ms: fed.now(),
            trace_digest: fed.trace_digest(),
        }
    }

    pub fn records(&self) -> &[AppRecord] {
        &self.metrics.apps
    }

    /// Checks that no claim was decided or dispatched more than once and
    /// that every decided claim was dispatched.
    pub fn check_exactly_once(&self) -> Result<(), String> {
        let mut decided = BTreeMap::new();
        for d in &self.decisions {
            *decided.entry(&d.claim_id).or_insert(0u32) += 1;
        }
        if let Some((id, n)) = decided.iter().find(|(_, &n)| n > 1) {
            return Err(format!("claim {id} decided {n} times"));
        }
        if let Some((id, n)) = self.dispatches.iter().find(|(_, &n)| n != 1) {
            return Err(format!("claim {id} dispatched {n} times"));
        }
        if decided.len() != self.dispatches.len() {
            return Err(format!(
                "{} decisions but {} dispatched claims",
                decided.len(),
                self.dispatches.len()
            ));
        }
        Ok(())
    }
}

/// Deploys the scenario, submits its workloads and runs to quiescence.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, FederationError> {
    let mut fed = deploy_federation(scenario)?;
    fed.submit_all(&scenario.workloads)?;
    fed.run_to_quiescence()?;
    log::info!(
        "seed {}: {} apps done at t={}ms after {} events",
        scenario.seed,
        fed.metrics().apps.len(),
        fed.now(),
        fed.events_processed()
    );
    Ok(RunOutcome::capture(&fed, scenario.seed))
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Units per application.
    pub granularity: usize,
    pub outcome: RunOutcome,
}

/// One run per sweep size. Every workload of the scenario is resized to
/// `n x n` for the run at size `n`, so both application models run side by
/// side at the same granularity. `model` only selects which applications
/// the caller reports on and is kept for logging.
pub fn sweep(scenario: &Scenario, model: Model) -> Result<Vec<SweepPoint>, FederationError> {
    SWEEP_SIZES
        .iter()
        .map(|&n| {
            let mut s = scenario.clone();
            for w in &mut s.workloads {
                w.rows = n;
                w.cols = n;
            }
            log::info!("sweep {model}: {n}x{n}");
            Ok(SweepPoint {
                granularity: (n * n) as usize,
                outcome: run(&s)?,
            })
        })
        .collect()
}
