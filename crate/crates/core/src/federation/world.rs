use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::coordination::{AllocationDecision, CellIndex, ClaimStore};
use crate::metrics::{AppRecord, MetricsSink};
use crate::overlay::{Membership, NodeId};
use crate::scenario::{CloudConfig, Latency, Scenario, DIM_CPU_TYPE, DIM_PROCESSORS, DIM_SERVICE_TYPE, DIM_SPEED};
use crate::sim::{Engine, EntityId, Handler, Payload, SimEvent};
use crate::spatial::{
    map_claim, map_ticket, matches, AttrValue, AttributeSpace, ClaimId, Constraint, IndexCell, ResourceClaim,
    ResourceTicket, TicketId,
};
use crate::workload::{WorkUnit, WorkloadSpec};

use super::FederationError;

/// Messages exchanged between peers, schedulers and execution nodes.
#[derive(Debug, Clone)]
pub enum Msg {
    Submit { app: usize },
    PostClaims { app: usize, next: usize },
    ClaimPost { cell: CellIndex, claim: ResourceClaim },
    TicketPost { cell: CellIndex, ticket: ResourceTicket },
    TicketUnused { ticket_id: TicketId },
    MatchNotify { decision: AllocationDecision },
    Dispatch { app: usize, unit: usize, ticket_id: TicketId },
    ExecDone { app: usize, unit: usize },
    Result { app: usize, unit: usize },
    StatusTimer,
}

impl Payload for Msg {
    fn kind(&self) -> &'static str {
        match self {
            Msg::Submit { .. } => "submit",
            Msg::PostClaims { .. } => "post-claims",
            Msg::ClaimPost { .. } => "claim-post",
            Msg::TicketPost { .. } => "ticket-post",
            Msg::TicketUnused { .. } => "ticket-unused",
            Msg::MatchNotify { .. } => "match-notify",
            Msg::Dispatch { .. } => "dispatch",
            Msg::ExecDone { .. } => "exec-done",
            Msg::Result { .. } => "result",
            Msg::StatusTimer => "timer",
        }
    }
}

/// Physical location of a process: (cloud index, node index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) struct Host {
    pub cloud: usize,
    pub node: usize,
}

pub(super) struct Peer {
    pub name: String,
    pub id: NodeId,
    pub cloud: usize,
    pub host: Host,
    pub store: ClaimStore,
}

impl Peer {
    pub fn new(name: String, cloud: usize, host: Host) -> Self {
        Peer {
            name,
            id: NodeId::ZERO,
            cloud,
            host,
            store: ClaimStore::new(),
        }
    }
}

pub(super) struct Cloud {
    pub config: CloudConfig,
    /// Peer used by the cloud's schedulers.
    pub peer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) enum NodeState {
    Idle,
    /// A ticket is out; `tried` counts service types offered this round.
    Offering { ticket_id: TicketId, tried: usize },
    Busy { app: usize, unit: usize },
}

pub(super) struct ExecNode {
    pub name: String,
    pub cloud: usize,
    pub host: Host,
    pub speed_ghz: f64,
    pub period_ms: u64,
    pub phase_ms: u64,
    pub next_type: usize,
    pub tickets_issued: u64,
    pub state: NodeState,
    pub peer: usize,
}

pub(super) struct App {
    pub spec: WorkloadSpec,
    pub cloud: usize,
    pub units: Vec<WorkUnit>,
    pub submitted_at: Option<u64>,
    pub results: usize,
    pub last_result: u64,
}

pub(super) struct ClaimInfo {
    app: usize,
    unit: usize,
    pub claim: ResourceClaim,
}

pub(super) struct World {
    pub seed: u64,
    eager_tickets: bool,
    latency: Latency,
    claim_post_spacing_ms: u64,
    pub(super) space: AttributeSpace,
    pub overlay: Membership,
    pub cells: Vec<IndexCell>,
    pub cell_owner: Vec<usize>,
    pub peers: Vec<Peer>,
    peer_by_id: HashMap<NodeId, usize>,
    pub clouds: Vec<Cloud>,
    pub nodes: Vec<ExecNode>,
    node_by_name: HashMap<String, usize>,
    pub apps: Vec<App>,
    pub(super) claims: BTreeMap<ClaimId, ClaimInfo>,
    served: BTreeSet<ClaimId>,
    pub decisions: Vec<AllocationDecision>,
    pub dispatches: BTreeMap<ClaimId, u32>,
    pub dispatch_log: Vec<(ClaimId, String)>,
    pub metrics: MetricsSink,
    /// Scheduled events other than status timers that have not been handled.
    pub in_flight: usize,
}

impl World {
    pub fn new(
        scenario: &Scenario,
        overlay: Membership,
        cells: Vec<IndexCell>,
        peers: Vec<Peer>,
        clouds: Vec<Cloud>,
        nodes: Vec<ExecNode>,
    ) -> Self {
        World {
            seed: scenario.seed,
            eager_tickets: scenario.eager_tickets,
            latency: scenario.latency,
            claim_post_spacing_ms: scenario.claim_post_spacing_ms,
            space: scenario.space.clone(),
            overlay,
            cell_owner: vec![0; cells.len()],
            cells,
            peer_by_id: peers.iter().enumerate().map(|(i, p)| (p.id, i)).collect(),
            peers,
            clouds,
            node_by_name: nodes.iter().enumerate().map(|(i, n)| (n.name.clone(), i)).collect(),
            nodes,
            apps: Vec::new(),
            claims: BTreeMap::new(),
            served: BTreeSet::new(),
            decisions: Vec::new(),
            dispatches: BTreeMap::new(),
            dispatch_log: Vec::new(),
            metrics: MetricsSink::default(),
            in_flight: 0,
        }
    }

    pub fn assign_cells(&mut self) -> Result<(), FederationError> {
        for (c, cell) in self.cells.iter().enumerate() {
            let owner = self.overlay.owner_of(&cell.key)?;
            self.cell_owner[c] = self.peer_by_id[&owner];
        }
        Ok(())
    }

    pub fn cloud_index(&self, cloud_id: &str) -> Option<usize> {
        self.clouds.iter().position(|c| c.config.cloud_id == cloud_id)
    }

    // Entity layout: peers, then one scheduler per cloud, then nodes.
    fn peer_entity(&self, peer: usize) -> EntityId {
        EntityId(peer as u32)
    }

    pub fn scheduler_entity(&self, cloud: usize) -> EntityId {
        EntityId((self.peers.len() + cloud) as u32)
    }

    pub fn node_entity(&self, node: usize) -> EntityId {
        EntityId((self.peers.len() + self.clouds.len() + node) as u32)
    }

    pub fn entity_name(&self, e: EntityId) -> String {
        let i = e.0 as usize;
        let (p, c) = (self.peers.len(), self.clouds.len());
        if i < p {
            format!("peer {}", self.peers[i].name)
        } else if i < p + c {
            format!("scheduler {}", self.clouds[i - p].config.cloud_id)
        } else if i < p + c + self.nodes.len() {
            format!("node {}", self.nodes[i - p - c].name)
        } else {
            e.to_string()
        }
    }

    fn scheduler_host(&self, cloud: usize) -> Host {
        Host { cloud, node: 0 }
    }

    fn scheduler_name(&self, cloud: usize) -> String {
        format!("{}/scheduler", self.clouds[cloud].config.cloud_id)
    }

    fn link(&self, a: Host, b: Host) -> u64 {
        if a == b {
            0
        } else if a.cloud == b.cloud {
            self.latency.intra_cloud_ms
        } else {
            self.latency.inter_cloud_ms
        }
    }

    /// Latency of handing a message to `via` and routing it over the overlay
    /// to the owner of `key`. Returns the owner's peer index as well.
    fn routed(&self, from: Host, via: usize, key: &NodeId) -> Result<(usize, u64), FederationError> {
        let route = self.overlay.route(&self.peers[via].id, key)?;
        let mut delay = self.link(from, self.peers[via].host);
        let mut at = self.peers[via].host;
        for hop in route.path.iter().skip(1) {
            let next = self.peers[self.peer_by_id[hop]].host;
            delay += self.link(at, next);
            at = next;
        }
        Ok((self.peer_by_id[&route.owner], delay))
    }

    pub fn send(&mut self, engine: &mut Engine<Msg>, delay: i64, target: EntityId, msg: Msg) -> Result<(), FederationError> {
        let timer = matches!(msg, Msg::StatusTimer);
        engine.schedule(delay, target, msg)?;
        if !timer {
            self.in_flight += 1;
        }
        Ok(())
    }

    fn point(&self, cloud: &CloudConfig, service: &str, speed: f64) -> Vec<AttrValue> {
        self.space
            .dims()
            .iter()
            .map(|d| match d.name.as_str() {
                DIM_SERVICE_TYPE => AttrValue::label(service),
                DIM_PROCESSORS => AttrValue::Number(1.0),
                DIM_CPU_TYPE => AttrValue::label(cloud.cpu_type.as_str()),
                DIM_SPEED => AttrValue::Number(speed),
                other => unreachable!("scenario validation admits no dimension '{other}'"),
            })
            .collect()
    }

    fn constraints(&self, cloud: &CloudConfig, service: &str) -> Vec<Constraint> {
        self.space
            .dims()
            .iter()
            .map(|d| match d.name.as_str() {
                DIM_SERVICE_TYPE => Constraint::Eq(AttrValue::label(service)),
                DIM_PROCESSORS => Constraint::Eq(AttrValue::Number(1.0)),
                DIM_CPU_TYPE => Constraint::Eq(AttrValue::label(cloud.cpu_type.as_str())),
                DIM_SPEED => Constraint::Ge(cloud.coordinator_speed()),
                other => unreachable!("scenario validation admits no dimension '{other}'"),
            })
            .collect()
    }

    /// Whether some node could ever serve `claim`.
    pub fn satisfiable(&self, claim: &ClaimId) -> bool {
        let Some(info) = self.claims.get(claim) else {
            return false;
        };
        self.nodes.iter().any(|n| {
            let cfg = &self.clouds[n.cloud].config;
            cfg.service_types.iter().any(|s| {
                let t = ResourceTicket::new("probe", self.point(cfg, s, n.speed_ghz), 1, "", 0);
                matches(&info.claim, &t)
            })
        })
    }

    pub fn waiting_claims(&self) -> Vec<ClaimId> {
        self.claims
            .keys()
            .filter(|c| !self.served.contains(*c))
            .cloned()
            .collect()
    }

    pub fn all_complete(&self) -> bool {
        self.apps.iter().all(|a| a.results == a.units.len())
    }

    /// Sends a ticket for an idle node, offering its next service type.
    pub fn publish_ticket(
        &mut self,
        engine: &mut Engine<Msg>,
        node: usize,
        tried: usize,
    ) -> Result<Option<TicketId>, FederationError> {
        if tried == 0 && self.nodes[node].state != NodeState::Idle {
            return Ok(None);
        }
        let n = &self.nodes[node];
        let cfg = &self.clouds[n.cloud].config;
        let service = &cfg.service_types[n.next_type % cfg.service_types.len()];
        let ticket = ResourceTicket::new(
            format!("{}/t{}", n.name, n.tickets_issued),
            self.point(cfg, service, n.speed_ghz),
            1,
            n.name.clone(),
            engine.now(),
        );
        let cell = map_ticket(&self.space, &self.cells, &ticket)?;
        let (owner, delay) = self.routed(n.host, n.peer, &cell.key)?;
        let cell = cell.index;
        let n = &mut self.nodes[node];
        n.next_type += 1;
        n.tickets_issued += 1;
        n.state = NodeState::Offering {
            ticket_id: ticket.ticket_id.clone(),
            tried: tried + 1,
        };
        let id = ticket.ticket_id.clone();
        let target = self.peer_entity(owner);
        self.send(engine, delay as i64, target, Msg::TicketPost { cell, ticket })?;
        Ok(Some(id))
    }

    fn on_submit(&mut self, engine: &mut Engine<Msg>, app: usize) -> Result<(), FederationError> {
        self.apps[app].submitted_at = Some(engine.now());
        let target = self.scheduler_entity(self.apps[app].cloud);
        self.send(engine, 0, target, Msg::PostClaims { app, next: 0 })
    }

    fn on_post_claims(&mut self, engine: &mut Engine<Msg>, app: usize, unit: usize) -> Result<(), FederationError> {
        let cloud = self.apps[app].cloud;
        let cfg = &self.clouds[cloud].config;
        let spec = &self.apps[app].spec;
        let claim = ResourceClaim::new(
            format!("{}/u{unit:04}", spec.id),
            self.constraints(cfg, spec.model.service_type()),
            1,
            self.scheduler_name(cloud),
            engine.now(),
            spec.id.clone(),
        );
        let targets: Vec<(CellIndex, NodeId)> = map_claim(&self.space, &self.cells, &claim)?
            .into_iter()
            .map(|c| (c.index, c.key))
            .collect();
        let from = self.scheduler_host(cloud);
        let via = self.clouds[cloud].peer;
        for (cell, key) in targets {
            let (owner, delay) = self.routed(from, via, &key)?;
            let target = self.peer_entity(owner);
            self.send(engine, delay as i64, target, Msg::ClaimPost { cell, claim: claim.clone() })?;
        }
        self.claims.insert(claim.claim_id.clone(), ClaimInfo { app, unit, claim });

        if unit + 1 < self.apps[app].units.len() {
            let target = self.scheduler_entity(cloud);
            let spacing = self.claim_post_spacing_ms as i64;
            self.send(engine, spacing, target, Msg::PostClaims { app, next: unit + 1 })?;
        }
        Ok(())
    }

    fn on_claim_post(&mut self, peer: usize, cell: CellIndex, claim: ResourceClaim) -> Result<(), FederationError> {
        if self.cell_owner[cell] != peer {
            return Err(FederationError::Consistency(format!(
                "claim {} for cell {cell} reached non-owner {}",
                claim.claim_id, self.peers[peer].name
            )));
        }
        // A replica arriving after the claim was served elsewhere is dropped.
        if !self.served.contains(&claim.claim_id) {
            self.peers[peer].store.post_claim(cell, claim);
        }
        Ok(())
    }

    fn on_ticket_post(
        &mut self,
        engine: &mut Engine<Msg>,
        peer: usize,
        cell: CellIndex,
        ticket: ResourceTicket,
    ) -> Result<(), FederationError> {
        if self.cell_owner[cell] != peer {
            return Err(FederationError::Consistency(format!(
                "ticket {} for cell {cell} reached non-owner {}",
                ticket.ticket_id, self.peers[peer].name
            )));
        }
        let decisions = self.peers[peer].store.post_ticket(cell, &ticket, engine.now());
        let node = self.node_by_name[&ticket.origin];
        let here = self.peers[peer].host;
        if decisions.is_empty() {
            let delay = self.link(here, self.nodes[node].host) as i64;
            let target = self.node_entity(node);
            return self.send(engine, delay, target, Msg::TicketUnused { ticket_id: ticket.ticket_id });
        }
        for decision in decisions {
            if !self.served.insert(decision.claim_id.clone()) {
                return Err(FederationError::Consistency(format!(
                    "claim {} allocated twice",
                    decision.claim_id
                )));
            }
            for p in &mut self.peers {
                p.store.remove_claim(&decision.claim_id);
            }
            let app = self.claims[&decision.claim_id].app;
            let cloud = self.apps[app].cloud;
            let delay = self.link(here, self.scheduler_host(cloud)) as i64;
            let target = self.scheduler_entity(cloud);
            self.decisions.push(decision.clone());
            self.send(engine, delay, target, Msg::MatchNotify { decision })?;
        }
        Ok(())
    }

    fn on_match_notify(&mut self, engine: &mut Engine<Msg>, cloud: usize, decision: AllocationDecision) -> Result<(), FederationError> {
        let info = &self.claims[&decision.claim_id];
        let (app, unit) = (info.app, info.unit);
        let node = *self.node_by_name.get(&decision.target).ok_or_else(|| {
            FederationError::Consistency(format!("allocation to unknown node {}", decision.target))
        })?;
        let n = &self.nodes[node];
        let ncfg = &self.clouds[n.cloud].config;
        let ok = ncfg.service_types.iter().any(|s| {
            let t = ResourceTicket::new("check", self.point(ncfg, s, n.speed_ghz), 1, "", 0);
            matches(&info.claim, &t)
        });
        if !ok {
            return Err(FederationError::Consistency(format!(
                "node {} does not satisfy claim {}",
                n.name, decision.claim_id
            )));
        }
        let count = self.dispatches.entry(decision.claim_id.clone()).or_default();
        *count += 1;
        if *count > 1 {
            return Err(FederationError::Consistency(format!(
                "claim {} dispatched twice",
                decision.claim_id
            )));
        }
        self.dispatch_log.push((decision.claim_id.clone(), n.name.clone()));
        let delay = self.link(self.scheduler_host(cloud), n.host) as i64;
        let target = self.node_entity(node);
        self.send(engine, delay, target, Msg::Dispatch { app, unit, ticket_id: decision.ticket_id })
    }

    fn on_dispatch(
        &mut self,
        engine: &mut Engine<Msg>,
        node: usize,
        app: usize,
        unit: usize,
        ticket_id: TicketId,
    ) -> Result<(), FederationError> {
        let n = &mut self.nodes[node];
        match &n.state {
            NodeState::Offering { ticket_id: t, .. } if *t == ticket_id => {}
            other => {
                return Err(FederationError::Consistency(format!(
                    "node {} received work for ticket {ticket_id} while {other:?}",
                    n.name
                )))
            }
        }
        n.state = NodeState::Busy { app, unit };
        let demand = self.apps[app].units[unit].demand_ghz_s;
        let exec_ms = (demand / n.speed_ghz * 1000.0).round() as i64;
        let target = self.node_entity(node);
        self.send(engine, exec_ms, target, Msg::ExecDone { app, unit })
    }

    fn on_exec_done(&mut self, engine: &mut Engine<Msg>, node: usize, app: usize, unit: usize) -> Result<(), FederationError> {
        let n = &mut self.nodes[node];
        if n.state != (NodeState::Busy { app, unit }) {
            return Err(FederationError::Consistency(format!("node {} finished work it was not running", n.name)));
        }
        n.state = NodeState::Idle;
        let host = n.host;
        let cloud_id = self.clouds[n.cloud].config.cloud_id.clone();
        self.metrics.record_completion(&cloud_id, self.apps[app].spec.model);
        let home = self.apps[app].cloud;
        let delay = self.link(host, self.scheduler_host(home)) as i64;
        let target = self.scheduler_entity(home);
        self.send(engine, delay, target, Msg::Result { app, unit })?;
        if self.eager_tickets {
            self.publish_ticket(engine, node, 0)?;
        }
        Ok(())
    }

    fn on_result(&mut self, engine: &mut Engine<Msg>, app: usize) -> Result<(), FederationError> {
        let now = engine.now();
        let a = &mut self.apps[app];
        a.results += 1;
        a.last_result = now;
        if a.results == a.units.len() {
            let t0 = a.submitted_at.expect("results only follow submission");
            let record = AppRecord {
                app_id: a.spec.id.clone(),
                cloud_id: self.clouds[a.cloud].config.cloud_id.clone(),
                model: a.spec.model,
                granularity: a.units.len(),
                submitted_at_ms: t0,
                response_ms: now - t0,
            };
            self.metrics.record_app(record);
        }
        Ok(())
    }

    fn on_ticket_unused(&mut self, engine: &mut Engine<Msg>, node: usize, ticket_id: TicketId) -> Result<(), FederationError> {
        let n = &self.nodes[node];
        let tried = match &n.state {
            NodeState::Offering { ticket_id: t, tried } if *t == ticket_id => *tried,
            other => {
                return Err(FederationError::Consistency(format!(
                    "node {} got ticket {ticket_id} back while {other:?}",
                    n.name
                )))
            }
        };
        if tried < self.clouds[n.cloud].config.service_types.len() {
            self.publish_ticket(engine, node, tried)?;
        } else {
            self.nodes[node].state = NodeState::Idle;
        }
        Ok(())
    }

    fn on_timer(&mut self, engine: &mut Engine<Msg>, node: usize) -> Result<(), FederationError> {
        if self.nodes[node].state == NodeState::Idle {
            self.publish_ticket(engine, node, 0)?;
        }
        let period = self.nodes[node].period_ms as i64;
        let target = self.node_entity(node);
        self.send(engine, period, target, Msg::StatusTimer)
    }
}

impl Handler<Msg> for World {
    type Error = FederationError;

    fn handle(&mut self, engine: &mut Engine<Msg>, ev: SimEvent<Msg>) -> Result<(), FederationError> {
        self.metrics.events += 1;
        if !matches!(ev.payload, Msg::StatusTimer) {
            self.in_flight -= 1;
        }
        let i = ev.target.0 as usize;
        let (p, c) = (self.peers.len(), self.clouds.len());
        match ev.payload {
            Msg::ClaimPost { cell, claim } if i < p => self.on_claim_post(i, cell, claim),
            Msg::TicketPost { cell, ticket } if i < p => self.on_ticket_post(engine, i, cell, ticket),
            Msg::Submit { app } if (p..p + c).contains(&i) => self.on_submit(engine, app),
            Msg::PostClaims { app, next } if (p..p + c).contains(&i) => self.on_post_claims(engine, app, next),
            Msg::MatchNotify { decision } if (p..p + c).contains(&i) => self.on_match_notify(engine, i - p, decision),
            Msg::Result { app, .. } if (p..p + c).contains(&i) => self.on_result(engine, app),
            Msg::Dispatch { app, unit, ticket_id } if i >= p + c => {
                self.on_dispatch(engine, i - p - c, app, unit, ticket_id)
            }
            Msg::ExecDone { app, unit } if i >= p + c => self.on_exec_done(engine, i - p - c, app, unit),
            Msg::TicketUnused { ticket_id } if i >= p + c => self.on_ticket_unused(engine, i - p - c, ticket_id),
            Msg::StatusTimer if i >= p + c => self.on_timer(engine, i - p - c),
            other => Err(FederationError::Consistency(format!(
                "{} cannot handle '{}'",
                self.entity_name(ev.target),
                other.kind()
            ))),
        }
    }
}
