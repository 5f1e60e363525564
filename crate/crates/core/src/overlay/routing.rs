use super::id::{NodeId, ID_DIGITS};

/// Digit base of the prefix table (hex digits).
pub const ROUTING_BASE: usize = 16;
/// Leaf-set size: half clockwise successors, half counter-clockwise predecessors.
pub const LEAF_SET_SIZE: usize = 8;

/// Per-peer routing state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingState {
    owner: NodeId,
    /// `prefix_table[i][d]` shares exactly `i` digits with the owner and has digit `d` at `i`.
    prefix_table: Vec<[Option<NodeId>; ROUTING_BASE]>,
    /// Nearest successors, closest first.
    cw_leaves: Vec<NodeId>,
    /// Nearest predecessors, closest first.
    ccw_leaves: Vec<NodeId>,
    /// Set when the leaf set holds every other peer.
    leaves_cover_ring: bool,
}

impl RoutingState {
    /// Builds the state of `sorted[index]` from the full sorted member list.
    pub(crate) fn build(index: usize, sorted: &[NodeId]) -> Self {
        let owner = sorted[index];
        let n = sorted.len();
        let half = LEAF_SET_SIZE / 2;

        let mut cw_leaves = Vec::with_capacity(half);
        let mut ccw_leaves = Vec::with_capacity(half);
        for step in 1..=half.min(n.saturating_sub(1)) {
            cw_leaves.push(sorted[(index + step) % n]);
            ccw_leaves.push(sorted[(index + n - step) % n]);
        }
        let leaves_cover_ring = n - 1 <= LEAF_SET_SIZE;

        let mut prefix_table = vec![[None; ROUTING_BASE]; ID_DIGITS];
        for other in sorted {
            if *other == owner {
                continue;
            }
            let row = owner.shared_prefix_len(other);
            let col = other.digit(row) as usize;
            let slot = &mut prefix_table[row][col];
            // Among eligible peers keep the one nearest the owner.
            let better = match slot {
                None => true,
                Some(cur) => owner.cmp_closeness(other, cur).is_lt(),
            };
            if better {
                *slot = Some(*other);
            }
        }
        // Drop trailing empty rows.
        while prefix_table.last().is_some_and(|r| r.iter().all(Option::is_none)) {
            prefix_table.pop();
        }

        RoutingState {
            owner,
            prefix_table,
            cw_leaves,
            ccw_leaves,
            leaves_cover_ring,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn table_entry(&self, row: usize, digit: usize) -> Option<NodeId> {
        self.prefix_table.get(row).and_then(|r| r[digit])
    }

    pub fn table_rows(&self) -> usize {
        self.prefix_table.len()
    }

    /// Leaf set, deduplicated, in (successors, predecessors) order.
    pub fn leaf_set(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::with_capacity(LEAF_SET_SIZE);
        for id in self.cw_leaves.iter().chain(&self.ccw_leaves) {
            if !out.contains(id) {
                out.push(*id);
            }
        }
        out
    }

    fn key_within_leaf_range(&self, key: &NodeId) -> bool {
        if self.leaves_cover_ring {
            return true;
        }
        let (Some(lo), Some(hi)) = (self.ccw_leaves.last(), self.cw_leaves.last()) else {
            return true;
        };
        lo.cw_distance(key) <= lo.cw_distance(hi)
    }

    /// Next peer on the way to `key`, or `None` when this peer is the owner.
    pub fn next_hop(&self, key: &NodeId) -> Option<NodeId> {
        let me = self.owner;
        if self.key_within_leaf_range(key) {
            let best = self
                .leaf_set()
                .into_iter()
                .fold(me, |best, c| if key.cmp_closeness(&c, &best).is_lt() { c } else { best });
            return (best != me).then_some(best);
        }

        let row = me.shared_prefix_len(key);
        if let Some(entry) = self.table_entry(row, key.digit(row) as usize) {
            return Some(entry);
        }

        // Rare case: any known peer with at least as long a prefix that is
        // strictly closer to the key.
        self.prefix_table
            .iter()
            .flat_map(|r| r.iter().flatten())
            .chain(self.cw_leaves.iter())
            .chain(self.ccw_leaves.iter())
            .filter(|c| c.shared_prefix_len(key) >= row)
            .filter(|c| key.cmp_closeness(c, &me).is_lt())
            .min_by(|a, b| key.cmp_closeness(a, b))
            .copied()
    }
}
