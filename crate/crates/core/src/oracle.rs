//! Brute-force reference checks for the distributed algorithms.
//!
//! Each suite generates seeded random instances, runs the real code path and
//! an obviously-correct centralized computation side by side, and counts
//! disagreements.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::coordination::ClaimStore;
use crate::overlay::{hash_name, Membership, NodeId};
use crate::sim::RngStream;
use crate::spatial::{
    build_base_cells, map_claim, map_ticket, matches, AttrValue, AttributeSpace, ClaimId, Constraint, DimensionKind,
    DimensionSpec, ResourceClaim, ResourceTicket, TicketId,
};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub checks: u64,
    /// Checks where the property was not vacuous (e.g. the pair matched).
    pub exercised: u64,
    pub failures: u64,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    fn new(name: impl Into<String>) -> Self {
        SuiteReport {
            name: name.into(),
            checks: 0,
            exercised: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn fail(&mut self, detail: impl FnOnce() -> String) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(detail());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn pick(rng: &mut RngStream, n: usize) -> usize {
    rng.uniform_u64(0, n as u64 - 1).expect("non-empty range") as usize
}

fn coin(rng: &mut RngStream) -> bool {
    pick(rng, 2) == 0
}

/// A number in `[lo, hi]`; half of the draws land on a slice boundary or
/// midpoint so that edge cases are common.
fn number(rng: &mut RngStream, lo: f64, hi: f64, f: u32) -> f64 {
    if coin(rng) {
        let steps = 2 * f as usize;
        (lo + (hi - lo) * pick(rng, steps + 1) as f64 / steps as f64).min(hi)
    } else {
        rng.uniform(lo, hi).expect("finite bounds")
    }
}

fn random_space(rng: &mut RngStream, dims: usize) -> AttributeSpace {
    let f = 2 + pick(rng, 3) as u32;
    let specs = (0..dims)
        .map(|j| {
            if pick(rng, 3) == 0 {
                let m = 2 + pick(rng, 4);
                DimensionSpec::categorical(format!("d{j}"), (0..m).map(|i| format!("v{i}")))
            } else {
                let lo = rng.uniform(-10.0, 10.0).unwrap().round();
                let hi = lo + 1.0 + pick(rng, 20) as f64;
                DimensionSpec::numeric(format!("d{j}"), lo, hi)
            }
        })
        .collect();
    AttributeSpace::new(specs, f, f).expect("generated space is valid")
}

fn random_constraint(rng: &mut RngStream, d: &DimensionSpec, f: u32) -> Constraint {
    match &d.kind {
        DimensionKind::Categorical { labels } => Constraint::Eq(AttrValue::label(labels[pick(rng, labels.len())].as_str())),
        DimensionKind::Numeric { lo, hi } => {
            let (a, b) = (number(rng, *lo, *hi, f), number(rng, *lo, *hi, f));
            match pick(rng, 4) {
                0 => Constraint::Eq(AttrValue::Number(a)),
                1 => Constraint::Ge(a),
                2 => Constraint::Le(a),
                _ => Constraint::Range(a.min(b), a.max(b)),
            }
        }
    }
}

/// A value of dimension `d`, satisfying `c` when `want` is set.
fn random_value(rng: &mut RngStream, d: &DimensionSpec, f: u32, c: &Constraint, want: bool) -> AttrValue {
    match (&d.kind, c, want) {
        (_, Constraint::Eq(v), true) => v.clone(),
        (DimensionKind::Numeric { hi, .. }, Constraint::Ge(a), true) => AttrValue::Number(number(rng, *a, *hi, f)),
        (DimensionKind::Numeric { lo, .. }, Constraint::Le(a), true) => AttrValue::Number(number(rng, *lo, *a, f)),
        (DimensionKind::Numeric { .. }, Constraint::Range(a, b), true) => AttrValue::Number(number(rng, *a, *b, f)),
        (DimensionKind::Categorical { labels }, _, _) => AttrValue::label(labels[pick(rng, labels.len())].as_str()),
        (DimensionKind::Numeric { lo, hi }, _, _) => AttrValue::Number(number(rng, *lo, *hi, f)),
    }
}

fn random_claim(rng: &mut RngStream, space: &AttributeSpace, id: String, time: u64, units: u32) -> ResourceClaim {
    let f = space.f_min();
    let constraints = space.dims().iter().map(|d| random_constraint(rng, d, f)).collect();
    ResourceClaim::new(id, constraints, units, "oracle", time, "oracle")
}

/// A ticket that satisfies `claim` on every dimension when `targeted`.
fn random_ticket(
    rng: &mut RngStream,
    space: &AttributeSpace,
    claim: &ResourceClaim,
    targeted: bool,
    id: String,
    units: u32,
) -> ResourceTicket {
    let f = space.f_min();
    let point = space
        .dims()
        .iter()
        .zip(&claim.constraints)
        .map(|(d, c)| random_value(rng, d, f, c, targeted))
        .collect();
    ResourceTicket::new(id, point, units, "oracle", 0)
}

/// Rendezvous: whenever a claim matches a ticket, the ticket's cell is one of
/// the claim's cells.
pub fn rendezvous(trials: u64, dims: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new(format!("rendezvous/dims={dims}"));
    let mut rng = RngStream::new(seed, &format!("oracle/rendezvous/{dims}"));
    let mut space = random_space(&mut rng, dims);
    let mut cells = build_base_cells(&space);
    for t in 0..trials {
        if t % 100 == 0 {
            space = random_space(&mut rng, dims);
            cells = build_base_cells(&space);
        }
        let claim = random_claim(&mut rng, &space, format!("c{t}"), 0, 1);
        let targeted = coin(&mut rng);
        let ticket = random_ticket(&mut rng, &space, &claim, targeted, format!("t{t}"), 1);
        report.checks += 1;
        if !matches(&claim, &ticket) {
            continue;
        }
        report.exercised += 1;
        let found = map_claim(&space, &cells, &claim)
            .and_then(|cs| map_ticket(&space, &cells, &ticket).map(|c| cs.iter().any(|x| x.index == c.index)));
        match found {
            Ok(true) => {}
            Ok(false) => report.fail(|| format!("{claim:?} / {ticket:?}")),
            Err(e) => report.fail(|| format!("{e} for {claim:?} / {ticket:?}")),
        }
    }
    report
}

/// Every claim and ticket over a 5-point grid per axis of a 2-d, f=2 space.
pub fn rendezvous_exhaustive() -> SuiteReport {
    let mut report = SuiteReport::new("rendezvous/exhaustive");
    let space = AttributeSpace::new(
        vec![DimensionSpec::numeric("x", 0.0, 1.0), DimensionSpec::numeric("y", 0.0, 1.0)],
        2,
        2,
    )
    .expect("valid space");
    let cells = build_base_cells(&space);
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut per_axis = Vec::new();
    for &a in &grid {
        per_axis.push(Constraint::Eq(AttrValue::Number(a)));
        per_axis.push(Constraint::Ge(a));
        per_axis.push(Constraint::Le(a));
        for &b in grid.iter().filter(|&&b| b >= a) {
            per_axis.push(Constraint::Range(a, b));
        }
    }
    for cx in &per_axis {
        for cy in &per_axis {
            let claim = ResourceClaim::new("c", vec![cx.clone(), cy.clone()], 1, "o", 0, "j");
            let claim_cells: Vec<usize> = map_claim(&space, &cells, &claim)
                .expect("grid claims are valid")
                .iter()
                .map(|c| c.index)
                .collect();
            for &x in &grid {
                for &y in &grid {
                    let ticket = ResourceTicket::new("t", vec![x.into(), y.into()], 1, "o", 0);
                    report.checks += 1;
                    if !matches(&claim, &ticket) {
                        continue;
                    }
                    report.exercised += 1;
                    let cell = map_ticket(&space, &cells, &ticket).expect("grid tickets are valid").index;
                    if !claim_cells.contains(&cell) {
                        report.fail(|| format!("{claim:?} / {ticket:?}"));
                    }
                }
            }
        }
    }
    report
}

/// One generated allocation instance: claims, then tickets in arrival order.
#[derive(Debug, Clone)]
pub struct AllocationInstance {
    pub space: AttributeSpace,
    pub peers: Vec<String>,
    pub claims: Vec<ResourceClaim>,
    pub tickets: Vec<ResourceTicket>,
}

pub fn random_allocation_instance(rng: &mut RngStream) -> AllocationInstance {
    let dims = 1 + pick(rng, 3);
    let space = random_space(rng, dims);
    let peers = (0..1 + pick(rng, 5)).map(|i| format!("peer-{i}-{}", pick(rng, 1 << 20))).collect();
    let n_claims = 1 + pick(rng, 20);
    let claims: Vec<ResourceClaim> = (0..n_claims)
        .map(|i| {
            let time = pick(rng, 10) as u64 * 100;
            let units = 1 + pick(rng, 3) as u32;
            random_claim(rng, &space, format!("claim-{i:02}"), time, units)
        })
        .collect();
    let tickets = (0..1 + pick(rng, 10))
        .map(|i| {
            let target = &claims[pick(rng, claims.len())];
            let targeted = pick(rng, 4) != 0;
            let units = pick(rng, 5) as u32;
            random_ticket(rng, &space, target, targeted, format!("ticket-{i}"), units)
        })
        .collect();
    AllocationInstance {
        space,
        peers,
        claims,
        tickets,
    }
}

/// `(ticket, claim)` grants made by the per-peer stores, replicating claims
/// to every mapped cell and cleaning up replicas after each grant.
pub fn distributed_allocation(inst: &AllocationInstance) -> Result<Vec<(TicketId, ClaimId)>, String> {
    let cells = build_base_cells(&inst.space);
    let mut overlay = Membership::new();
    overlay.join_all(inst.peers.iter().map(String::as_str)).map_err(|e| e.to_string())?;
    let mut stores: BTreeMap<NodeId, ClaimStore> = overlay.ids().map(|id| (id, ClaimStore::new())).collect();
    for claim in &inst.claims {
        for cell in map_claim(&inst.space, &cells, claim).map_err(|e| e.to_string())? {
            let owner = overlay.owner_of(&cell.key).map_err(|e| e.to_string())?;
            stores.get_mut(&owner).expect("owner is a member").post_claim(cell.index, claim.clone());
        }
    }
    let mut grants = Vec::new();
    for (i, ticket) in inst.tickets.iter().enumerate() {
        let cell = map_ticket(&inst.space, &cells, ticket).map_err(|e| e.to_string())?;
        let owner = overlay.owner_of(&cell.key).map_err(|e| e.to_string())?;
        let decisions = stores.get_mut(&owner).expect("owner is a member").post_ticket(cell.index, ticket, i as u64);
        let granted: u32 = decisions.iter().map(|d| d.units_granted).sum();
        if granted > ticket.available_units {
            return Err(format!("ticket {} over-provisioned: {granted}", ticket.ticket_id));
        }
        for d in decisions {
            for store in stores.values_mut() {
                store.remove_claim(&d.claim_id);
            }
            grants.push((d.ticket_id, d.claim_id));
        }
    }
    Ok(grants)
}

/// The same grants computed over one global FIFO list.
pub fn centralized_allocation(inst: &AllocationInstance) -> Vec<(TicketId, ClaimId)> {
    let mut pool: Vec<&ResourceClaim> = inst.claims.iter().collect();
    pool.sort_by(|a, b| (a.arrival_time, &a.claim_id).cmp(&(b.arrival_time, &b.claim_id)));
    let mut grants = Vec::new();
    for ticket in &inst.tickets {
        let mut left = ticket.available_units;
        let mut i = 0;
        while i < pool.len() && left > 0 {
            let c = pool[i];
            if matches(c, ticket) && c.requested_units <= left {
                left -= c.requested_units;
                grants.push((ticket.ticket_id.clone(), c.claim_id.clone()));
                pool.remove(i);
            } else {
                i += 1;
            }
        }
    }
    grants
}

pub fn allocation(trials: u64, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("allocation");
    let mut rng = RngStream::new(seed, "oracle/allocation");
    for _ in 0..trials {
        let inst = random_allocation_instance(&mut rng);
        report.checks += 1;
        let want = centralized_allocation(&inst);
        if !want.is_empty() {
            report.exercised += 1;
        }
        match distributed_allocation(&inst) {
            Ok(got) if got == want => {}
            Ok(got) => report.fail(|| format!("distributed {got:?} != centralized {want:?}")),
            Err(e) => report.fail(|| e),
        }
    }
    report
}

/// Linear scan: smallest circular distance, ties to the smaller id.
pub fn brute_owner(ids: &[NodeId], key: &NodeId) -> Option<NodeId> {
    ids.iter()
        .copied()
        .min_by(|a, b| key.circular_distance(a).cmp(&key.circular_distance(b)).then(a.cmp(b)))
}

/// Routing from a random member reaches the brute-force owner of a random key.
pub fn routing(trials: u64, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("routing");
    let mut rng = RngStream::new(seed, "oracle/routing");
    let mut overlay = Membership::new();
    let mut ids = Vec::new();
    for t in 0..trials {
        if t % 10 == 0 {
            let n = 1 + pick(&mut rng, 64);
            overlay = Membership::new();
            let names: Vec<String> = (0..n).map(|i| format!("node-{t}-{i}")).collect();
            ids = overlay.join_all(names.iter().map(String::as_str)).expect("distinct names");
        }
        let key = hash_name(&format!("key-{t}-{}", pick(&mut rng, 1 << 30))).expect("non-empty");
        let source = ids[pick(&mut rng, ids.len())];
        report.checks += 1;
        report.exercised += 1;
        let want = brute_owner(&ids, &key);
        match (overlay.route(&source, &key), overlay.owner_of(&key)) {
            (Ok(route), Ok(owner)) if Some(route.owner) == want && Some(owner) == want => {}
            (route, owner) => report.fail(|| format!("key {key}: route {route:?}, owner_of {owner:?}, brute {want:?}")),
        }
    }
    report
}

/// Runs every suite. Rendezvous uses `trials` per dimensionality (2 to 4, or
/// just `dims`); allocation and routing use a tenth of `trials` each.
pub fn run_all(trials: u64, dims: Option<usize>, seed: u64) -> Vec<SuiteReport> {
    let small = (trials / 10).max(1);
    let mut out: Vec<SuiteReport> = match dims {
        Some(d) => vec![rendezvous(trials, d, seed)],
        None => (2..=4).map(|d| rendezvous(trials, d, seed)).collect(),
    };
    out.push(rendezvous_exhaustive());
    out.push(allocation(small, seed));
    out.push(routing(small, seed));
    out
}
