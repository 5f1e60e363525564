//! Cloud federation built on the overlay, the spatial index and the claim
//! stores, driven by the event engine.
//!
//! Each cloud runs a coordinator (one per cloud in the hub topology, one per
//! node in the fully peer-to-peer topology) that joins the overlay and owns
//! the base cells whose keys it is closest to. Applications are submitted to
//! the scheduler of a cloud, which posts one claim per work unit to every
//! cell the claim intersects. Idle execution nodes periodically route a
//! ticket to their cell; the owning coordinator matches it against the
//! waiting claims and notifies the scheduler, which dispatches the unit to
//! the node and collects the result.

mod world;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::coordination::{AllocationDecision, CellIndex};
use crate::metrics::{AppRecord, MetricsSink};
use crate::overlay::{Membership, NodeId, OverlayError};
use crate::scenario::{Scenario, Topology};
use crate::sim::{Engine, EngineError, RngStream, RunError};
use crate::spatial::{build_base_cells, ClaimId, SpatialError, TicketId};
use crate::workload::{generate_units, WorkloadSpec};

pub use world::Msg;
use world::{App, Cloud, ExecNode, Host, NodeState, Peer, World};

/// Virtual-time limit for [`Federation::run_to_quiescence`].
pub const DEFAULT_TIME_LIMIT_MS: u64 = 30 * 24 * 3600 * 1000;

#[derive(Debug, Error)]
pub enum FederationError {
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("unknown cloud '{0}'")]
    UnknownCloud(String),
    #[error("application '{0}' has no work units")]
    EmptyApplication(String),
    #[error("duplicate application id '{0}'")]
    DuplicateApplication(String),
    #[error("consistency violation: {0}")]
    Consistency(String),
    #[error("application '{0}' has not completed")]
    NotReady(String),
    #[error("{} claim(s) can never be served: {}", .0.len(), .0.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(", "))]
    Stranded(Vec<ClaimId>),
    #[error("no progress by t={0}ms")]
    TimeLimit(u64),
    #[error("{entity} failed handling '{kind}' at t={time}ms: {source}")]
    Event {
        entity: String,
        kind: &'static str,
        time: u64,
        source: Box<FederationError>,
    },
}

impl FederationError {
    /// The innermost error, looking through event context.
    pub fn root(&self) -> &FederationError {
        match self {
            FederationError::Event { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AppHandle(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeHandle(pub usize);

/// Read-only view of an overlay peer.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerInfo {
    pub name: String,
    pub id: NodeId,
    pub cloud_id: String,
    pub cells: Vec<CellIndex>,
}

/// Read-only view of an execution node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInfo {
    pub name: String,
    pub cloud_id: String,
    pub speed_ghz: f64,
    pub busy: bool,
    /// First status update, then the fixed period between updates.
    pub first_update_ms: u64,
    pub update_period_ms: u64,
}

/// A deployed federation together with its event engine.
pub struct Federation {
    engine: Engine<Msg>,
    world: World,
}

/// Deploys the clouds of `scenario`: coordinators join the overlay, base
/// cells are assigned to their owners and every node's status timer is
/// armed. Workloads are not submitted; see [`Federation::submit_all`].
pub fn deploy_federation(scenario: &Scenario) -> Result<Federation, FederationError> {
    let mut engine = Engine::with_capacity(scenario.inbox_capacity);
    let cells = build_base_cells(&scenario.space);

    let mut clouds = Vec::new();
    let mut nodes = Vec::new();
    let mut peers = Vec::new();
    for (ci, cfg) in scenario.clouds.iter().enumerate() {
        if clouds.iter().any(|c: &Cloud| c.config.cloud_id == cfg.cloud_id) {
            return Err(FederationError::Consistency(format!("duplicate cloud id '{}'", cfg.cloud_id)));
        }
        let first_node = nodes.len();
        for (ni, &speed) in cfg.node_speeds_ghz.iter().enumerate() {
            let name = format!("{}/n{ni}", cfg.cloud_id);
            let mut rng = RngStream::new(scenario.seed, &format!("status/{name}"));
            let (lo, hi) = cfg.status_update_ms;
            let period = rng.uniform_u64(lo, hi)?;
            let phase = rng.uniform_u64(0, period - 1)?;
            nodes.push(ExecNode {
                name,
                cloud: ci,
                host: Host { cloud: ci, node: ni },
                speed_ghz: speed,
                period_ms: period,
                phase_ms: phase,
                next_type: 0,
                tickets_issued: 0,
                state: NodeState::Idle,
                peer: usize::MAX,
            });
        }
        let first_peer = peers.len();
        match cfg.topology {
            Topology::Hub => peers.push(Peer::new(cfg.cloud_id.clone(), ci, Host { cloud: ci, node: 0 })),
            Topology::FullP2p => {
                for ni in 0..cfg.node_count() {
                    peers.push(Peer::new(
                        format!("{}/n{ni}", cfg.cloud_id),
                        ci,
                        Host { cloud: ci, node: ni },
                    ));
                }
            }
        }
        for (k, node) in nodes[first_node..].iter_mut().enumerate() {
            node.peer = match cfg.topology {
                Topology::Hub => first_peer,
                Topology::FullP2p => first_peer + k,
            };
        }
        clouds.push(Cloud {
            config: cfg.clone(),
            peer: first_peer,
        });
    }

    let mut overlay = Membership::new();
    let ids = overlay.join_all(peers.iter().map(|p| p.name.as_str()))?;
    for (p, id) in peers.iter_mut().zip(ids) {
        p.id = id;
    }

    let mut world = World::new(scenario, overlay, cells, peers, clouds, nodes);
    world.assign_cells()?;

    for ni in 0..world.nodes.len() {
        let delay = world.nodes[ni].phase_ms as i64;
        let target = world.node_entity(ni);
        engine.schedule(delay, target, Msg::StatusTimer)?;
    }
    Ok(Federation { engine, world })
}

impl Federation {
    pub fn now(&self) -> u64 {
        self.engine.now()
    }

    /// Keep the full event trace in memory.
    pub fn record_trace(&mut self) {
        self.engine.record_trace();
    }

    pub fn trace_lines(&self) -> Option<&[String]> {
        self.engine.trace_lines()
    }

    pub fn trace_digest(&self) -> String {
        self.engine.trace_digest()
    }

    pub fn events_processed(&self) -> u64 {
        self.engine.processed()
    }

    /// Registers `app` with the scheduler of `cloud_id`. The submission event
    /// fires at `app.submit_time_ms`, or now if that has passed.
    pub fn submit_application(&mut self, cloud_id: &str, app: &WorkloadSpec) -> Result<AppHandle, FederationError> {
        let cloud = self
            .world
            .cloud_index(cloud_id)
            .ok_or_else(|| FederationError::UnknownCloud(cloud_id.to_string()))?;
        if app.unit_count() == 0 {
            return Err(FederationError::EmptyApplication(app.id.clone()));
        }
        if self.world.apps.iter().any(|a| a.spec.id == app.id) {
            return Err(FederationError::DuplicateApplication(app.id.clone()));
        }
        let units = generate_units(app, self.world.seed);
        let handle = self.world.apps.len();
        self.world.apps.push(App {
            spec: app.clone(),
            cloud,
            units,
            submitted_at: None,
            results: 0,
            last_result: 0,
        });
        self.world.metrics.record_submission(app.model, app.unit_count());
        let delay = app.submit_time_ms.saturating_sub(self.engine.now()) as i64;
        let target = self.world.scheduler_entity(cloud);
        self.world.send(&mut self.engine, delay, target, Msg::Submit { app: handle })?;
        Ok(AppHandle(handle))
    }

    /// Submits every workload of the scenario in order.
    pub fn submit_all(&mut self, workloads: &[WorkloadSpec]) -> Result<Vec<AppHandle>, FederationError> {
        workloads
            .iter()
            .map(|w| self.submit_application(&w.submit_cloud, w))
            .collect()
    }

    /// Sends a status ticket for `node` if it is idle. Returns the ticket id,
    /// or `None` when the node is busy or already has a ticket outstanding.
    pub fn publish_ticket(&mut self, node: NodeHandle) -> Result<Option<TicketId>, FederationError> {
        self.world.publish_ticket(&mut self.engine, node.0, 0)
    }

    /// Processes one event. Returns false once the queue is empty.
    pub fn step(&mut self) -> Result<bool, FederationError> {
        self.engine.step(&mut self.world).map_err(|e| self.world.wrap(e))
    }

    /// Runs events up to and including time `until_ms` and moves the clock there.
    pub fn run_until(&mut self, until_ms: u64) -> Result<u64, FederationError> {
        self.engine.run(Some(until_ms), &mut self.world).map_err(|e| self.world.wrap(e))
    }

    /// Runs until every submitted application has completed.
    ///
    /// Fails with [`FederationError::Stranded`] when nothing but status
    /// timers remain and every waiting claim is unsatisfiable by every node.
    pub fn run_to_quiescence(&mut self) -> Result<(), FederationError> {
        self.run_with_limit(DEFAULT_TIME_LIMIT_MS)
    }

    pub fn run_with_limit(&mut self, time_limit_ms: u64) -> Result<(), FederationError> {
        loop {
            if self.world.all_complete() {
                return Ok(());
            }
            if self.world.in_flight == 0 {
                let waiting = self.world.waiting_claims();
                let stranded: Vec<ClaimId> = waiting
                    .iter()
                    .filter(|c| !self.world.satisfiable(c))
                    .cloned()
                    .collect();
                if !stranded.is_empty() && stranded.len() == waiting.len() {
                    return Err(FederationError::Stranded(stranded));
                }
            }
            if self.engine.peek_time().is_some_and(|t| t > time_limit_ms) {
                return Err(FederationError::TimeLimit(self.engine.now()));
            }
            if !self.step()? {
                return Ok(());
            }
        }
    }

    /// Time from submission to the arrival of the last unit's result, in seconds.
    pub fn response_time(&self, app: AppHandle) -> Result<f64, FederationError> {
        let a = &self.world.apps[app.0];
        match a.submitted_at {
            Some(t0) if a.results == a.units.len() => Ok((a.last_result - t0) as f64 / 1000.0),
            _ => Err(FederationError::NotReady(a.spec.id.clone())),
        }
    }

    pub fn app_record(&self, app: AppHandle) -> Option<&AppRecord> {
        let id = &self.world.apps[app.0].spec.id;
        self.world.metrics.apps.iter().find(|r| &r.app_id == id)
    }

    pub fn metrics(&self) -> &MetricsSink {
        &self.world.metrics
    }

    pub fn cloud_ids(&self) -> Vec<String> {
        self.world.clouds.iter().map(|c| c.config.cloud_id.clone()).collect()
    }

    pub fn overlay(&self) -> &Membership {
        &self.world.overlay
    }

    pub fn cell_count(&self) -> usize {
        self.world.cells.len()
    }

    pub fn cell_owner(&self, cell: CellIndex) -> NodeId {
        self.world.peers[self.world.cell_owner[cell]].id
    }

    pub fn peers(&self) -> Vec<PeerInfo> {
        self.world
            .peers
            .iter()
            .enumerate()
            .map(|(pi, p)| PeerInfo {
                name: p.name.clone(),
                id: p.id,
                cloud_id: self.world.clouds[p.cloud].config.cloud_id.clone(),
                cells: (0..self.world.cells.len())
                    .filter(|&c| self.world.cell_owner[c] == pi)
                    .collect(),
            })
            .collect()
    }

    /// Peer name to owned cells, sorted by peer name.
    pub fn cell_assignment(&self) -> BTreeMap<String, Vec<CellIndex>> {
        self.peers().into_iter().map(|p| (p.name, p.cells)).collect()
    }

    pub fn nodes(&self) -> Vec<NodeInfo> {
        self.world
            .nodes
            .iter()
            .map(|n| NodeInfo {
                name: n.name.clone(),
                cloud_id: self.world.clouds[n.cloud].config.cloud_id.clone(),
                speed_ghz: n.speed_ghz,
                busy: matches!(n.state, NodeState::Busy { .. }),
                first_update_ms: n.phase_ms,
                update_period_ms: n.period_ms,
            })
            .collect()
    }

    pub fn node_handle(&self, name: &str) -> Option<NodeHandle> {
        self.world.nodes.iter().position(|n| n.name == name).map(NodeHandle)
    }

    /// Every allocation decision made so far, in decision order.
    pub fn decisions(&self) -> &[AllocationDecision] {
        &self.world.decisions
    }

    /// Number of dispatches per claim.
    pub fn dispatch_counts(&self) -> &BTreeMap<ClaimId, u32> {
        &self.world.dispatches
    }

    /// `(claim, node name)` in dispatch order.
    pub fn dispatch_log(&self) -> &[(ClaimId, String)] {
        &self.world.dispatch_log
    }

    /// Claims of submitted applications that have not been served.
    pub fn waiting_claims(&self) -> Vec<ClaimId> {
        self.world.waiting_claims()
    }

    /// Total claim replicas currently stored across all peers.
    pub fn stored_replicas(&self) -> usize {
        self.world.peers.iter().map(|p| p.store.len()).sum()
    }
}

impl World {
    fn wrap(&self, e: RunError<FederationError>) -> FederationError {
        let RunError::Handler { target, kind, time, source } = e;
        FederationError::Event {
            entity: self.entity_name(target),
            kind,
            time,
            source: Box::new(source),
        }
    }
}
