//! Decentralized federation of compute clouds over a structured peer-to-peer
//! overlay, simulated with a deterministic discrete-event engine.
//!
//! The layers, bottom up:
//!
//! * [`overlay`]: 160-bit identifiers, prefix routing and key ownership.
//! * [`spatial`]: the attribute-space grid, claim/ticket objects and their
//!   mapping onto cells.
//! * [`coordination`]: per-cell claim queues and ticket allocation.
//! * [`sim`]: the event queue and seeded random streams.
//! * [`federation`]: coordinators, schedulers and execution nodes.
//! * [`workload`], [`metrics`], [`scenario`], [`report`], [`experiment`] and
//!   [`oracle`]: experiment plumbing used by the command-line tool.

pub mod coordination;
pub mod experiment;
pub mod federation;
pub mod metrics;
pub mod oracle;
pub mod overlay;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod spatial;
pub mod workload;

pub use coordination::{AllocationDecision, CellIndex, ClaimStore};
pub use federation::{deploy_federation, AppHandle, Federation, FederationError, NodeHandle};
pub use metrics::{job_share_percent, AppRecord, JobShare, MetricsSink};
pub use overlay::{hash_name, Membership, NodeId, OverlayError, Route};
pub use scenario::{CloudConfig, Latency, LoadError, Scenario, Topology};
pub use sim::{Engine, EntityId, RngStream};
pub use spatial::{
    build_base_cells, map_claim, map_ticket, matches, AttrValue, AttributeSpace, ClaimId, Constraint, DimensionSpec,
    IndexCell, ResourceClaim, ResourceTicket, SpatialError, TicketId,
};
pub use workload::{generate_units, granularity_sweep, Demand, Model, WorkUnit, WorkloadSpec};
