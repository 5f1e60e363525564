//! Per-cell claim queues and ticket-driven allocation.
//!
//! A [`ClaimStore`] holds the claims replicated into the cells owned by one
//! peer. When a ticket arrives at a cell, claims are scanned in
//! `(arrival_time, claim_id)` order and served first-fit until the ticket's
//! capacity is spent. Claims that are not served keep waiting; whatever
//! capacity is left on the ticket is dropped.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::spatial::{matches, ClaimId, ResourceClaim, ResourceTicket, TicketId};

/// Index of a base cell (row-major position in the grid).
pub type CellIndex = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AllocationDecision {
    pub ticket_id: TicketId,
    pub claim_id: ClaimId,
    pub units_granted: u32,
    pub decided_at: u64,
    /// Execution node that issued the ticket.
    pub target: String,
    /// Scheduler that posted the claim.
    pub notify: String,
}

#[derive(Debug, Clone, Default)]
pub struct ClaimStore {
    cells: BTreeMap<CellIndex, Vec<ResourceClaim>>,
}

impl ClaimStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `claim` into `cell` keeping `(arrival_time, claim_id)` order.
    /// A claim id already present in the cell is ignored.
    pub fn post_claim(&mut self, cell: CellIndex, claim: ResourceClaim) {
        let list = self.cells.entry(cell).or_default();
        let key = |c: &ResourceClaim| (c.arrival_time, c.claim_id.clone());
        match list.binary_search_by_key(&key(&claim), key) {
            Ok(_) => {}
            Err(pos) => {
                if !list.iter().any(|c| c.claim_id == claim.claim_id) {
                    list.insert(pos, claim);
                }
            }
        }
    }

    /// Allocates the ticket's capacity among the matching claims in `cell`.
    ///
    /// Served claims are removed from this cell only; replicas elsewhere are
    /// the caller's concern (see [`remove_claim`](Self::remove_claim)).
    pub fn post_ticket(&mut self, cell: CellIndex, ticket: &ResourceTicket, now: u64) -> Vec<AllocationDecision> {
        let mut remaining = ticket.available_units;
        let mut decisions = Vec::new();
        if remaining == 0 {
            return decisions;
        }
        let Some(list) = self.cells.get_mut(&cell) else {
            return decisions;
        };
        list.retain(|claim| {
            if remaining == 0 || claim.requested_units > remaining || !matches(claim, ticket) {
                return true;
            }
            remaining -= claim.requested_units;
            decisions.push(AllocationDecision {
                ticket_id: ticket.ticket_id.clone(),
                claim_id: claim.claim_id.clone(),
                units_granted: claim.requested_units,
                decided_at: now,
                target: ticket.origin.clone(),
                notify: claim.origin.clone(),
            });
            false
        });
        if list.is_empty() {
            self.cells.remove(&cell);
        }
        let granted: u32 = decisions.iter().map(|d| d.units_granted).sum();
        assert!(
            granted <= ticket.available_units,
            "over-provisioned ticket {}: {granted} > {}",
            ticket.ticket_id,
            ticket.available_units
        );
        decisions
    }

    /// Removes the claim from every cell of this store; returns the number of
    /// replicas removed.
    pub fn remove_claim(&mut self, claim_id: &ClaimId) -> usize {
        let mut removed = 0;
        self.cells.retain(|_, list| {
            let before = list.len();
            list.retain(|c| &c.claim_id != claim_id);
            removed += before - list.len();
            !list.is_empty()
        });
        removed
    }

    pub fn snapshot(&self, cell: CellIndex) -> Vec<ResourceClaim> {
        self.cells.get(&cell).cloned().unwrap_or_default()
    }

    /// Total number of stored claim replicas.
    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells currently holding at least one claim.
    pub fn occupied_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.cells.keys().copied()
    }

    pub fn holds(&self, claim_id: &ClaimId) -> bool {
        self.cells.values().any(|l| l.iter().any(|c| &c.claim_id == claim_id))
    }
}
