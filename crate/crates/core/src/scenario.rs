//! Scenario files.
//!
//! Scenarios are TOML documents (`schema_version = 1`). The raw document is
//! deserialized first and then checked as a whole; every problem found is
//! reported as a [`Diagnostic`] naming the offending field and, when known,
//! the line of the enclosing table.
//!
//! ```toml
//! schema_version = 1
//! seed = 42
//! eager_tickets = true
//!
//! [latency]
//! intra_cloud_ms = 1
//! inter_cloud_ms = 5
//!
//! [space]
//! f_min = 3
//! f_max = 3
//!
//! [[space.dims]]
//! name = "service_type"
//! labels = ["P2PTaskExecution", "P2PThreadExecution"]
//!
//! [[space.dims]]
//! name = "speed_ghz"
//! lo = 0.0
//! hi = 4.0
//!
//! [[clouds]]
//! id = "cloud-1"
//! nodes = 4
//! speed_ghz = 2.4            # or one value per node
//! cpu_type = "Intel"
//! service_types = ["P2PTaskExecution"]
//! status_update_ms = [5000, 40000]
//! topology = "hub"           # or "full_p2p"
//!
//! [[workloads]]
//! id = "povray-1"
//! model = "task"
//! rows = 5
//! cols = 5
//! demand = { uniform = { lo = 3.0, hi = 6.0 } }
//! submit_cloud = "cloud-1"
//! ```
//!
//! The federation needs exactly the four dimensions `service_type`,
//! `processors`, `cpu_type` and `speed_ghz`, in any order.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::sim::DEFAULT_INBOX_CAPACITY;
use crate::spatial::{AttrValue, AttributeSpace, DimensionSpec};
use crate::workload::{Demand, WorkloadSpec};

pub const SCHEMA_VERSION: u32 = 1;
/// Upper bound on `f_min^dim`.
pub const MAX_CELLS: usize = 100_000;

pub const DIM_SERVICE_TYPE: &str = "service_type";
pub const DIM_PROCESSORS: &str = "processors";
pub const DIM_CPU_TYPE: &str = "cpu_type";
pub const DIM_SPEED: &str = "speed_ghz";

/// The five-cloud testbed, 4 nodes per cloud.
pub const MELBOURNE_5: &str = include_str!("../scenarios/melbourne-5.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// One coordinator per cloud; the other nodes attach to it.
    Hub,
    /// Every node runs its own coordinator and joins the overlay.
    FullP2p,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudConfig {
    pub cloud_id: String,
    pub node_speeds_ghz: Vec<f64>,
    pub cpu_type: String,
    pub service_types: Vec<String>,
    /// Inclusive range the per-node status update period is drawn from.
    pub status_update_ms: (u64, u64),
    pub topology: Topology,
}

impl CloudConfig {
    pub fn node_count(&self) -> usize {
        self.node_speeds_ghz.len()
    }

    /// Speed of node 0, which hosts the coordinator and the schedulers.
    pub fn coordinator_speed(&self) -> f64 {
        self.node_speeds_ghz[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Latency {
    pub intra_cloud_ms: u64,
    pub inter_cloud_ms: u64,
}

impl Default for Latency {
    fn default() -> Self {
        Latency {
            intra_cloud_ms: 1,
            inter_cloud_ms: 5,
        }
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub eager_tickets: bool,
    pub latency: Latency,
    pub inbox_capacity: usize,
    /// Gap between consecutive claim posts of one application.
    pub claim_post_spacing_ms: u64,
    pub space: AttributeSpace,
    pub clouds: Vec<CloudConfig>,
    pub workloads: Vec<WorkloadSpec>,
}

impl Scenario {
    pub fn cloud(&self, id: &str) -> Option<&CloudConfig> {
        self.clouds.iter().find(|c| c.cloud_id == id)
    }

    pub fn cloud_ids(&self) -> Vec<String> {
        self.clouds.iter().map(|c| c.cloud_id.clone()).collect()
    }

    pub fn melbourne_5() -> Scenario {
        parse(MELBOURNE_5).expect("built-in scenario is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Invalid(Vec<Diagnostic>),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read scenario: {e}"),
            LoadError::Invalid(d) => {
                write!(f, "invalid scenario ({} problem(s))", d.len())?;
                for diag in d {
                    write!(f, "\n  {diag}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for LoadError {}

pub fn load(path: &Path) -> Result<Scenario, LoadError> {
    let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    parse(&text).map_err(LoadError::Invalid)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: Spanned<u32>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "yes")]
    eager_tickets: bool,
    #[serde(default)]
    latency: Option<RawLatency>,
    #[serde(default)]
    engine: Option<RawEngine>,
    space: Spanned<RawSpace>,
    #[serde(default)]
    clouds: Vec<Spanned<RawCloud>>,
    #[serde(default)]
    workloads: Vec<Spanned<RawWorkload>>,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLatency {
    intra_cloud_ms: Option<u64>,
    inter_cloud_ms: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEngine {
    inbox_capacity: Option<usize>,
    claim_post_spacing_ms: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    f_min: u32,
    f_max: u32,
    dims: Vec<Spanned<RawDim>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDim {
    name: String,
    lo: Option<f64>,
    hi: Option<f64>,
    labels: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSpeed {
    One(f64),
    PerNode(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCloud {
    id: String,
    nodes: usize,
    speed_ghz: RawSpeed,
    cpu_type: String,
    service_types: Vec<String>,
    status_update_ms: [u64; 2],
    #[serde(default = "hub")]
    topology: Topology,
}

fn hub() -> Topology {
    Topology::Hub
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    id: String,
    model: crate::workload::Model,
    rows: u32,
    cols: u32,
    #[serde(default)]
    demand: Demand,
    submit_cloud: String,
    #[serde(default)]
    submit_time_ms: u64,
}

struct Checker<'a> {
    text: &'a str,
    diags: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err(&mut self, field: impl Into<String>, span: Option<std::ops::Range<usize>>, message: impl Into<String>) {
        let line = span.map(|s| self.line_of(s.start));
        self.diags.push(Diagnostic {
            field: field.into(),
            line,
            message: message.into(),
        });
    }
}

fn valid_id(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_./".contains(c))
}

/// Parses and fully validates a scenario document.
pub fn parse(text: &str) -> Result<Scenario, Vec<Diagnostic>> {
    let mut ck = Checker { text, diags: Vec::new() };
    let raw: RawScenario = match toml::from_str(text) {
        Ok(r) => r,
        Err(e) => {
            ck.err("<document>", e.span(), e.message().to_string());
            return Err(ck.diags);
        }
    };

    if *raw.schema_version.get_ref() != SCHEMA_VERSION {
        ck.err(
            "schema_version",
            Some(raw.schema_version.span()),
            format!("unsupported version {} (expected {SCHEMA_VERSION})", raw.schema_version.get_ref()),
        );
    }

    let latency = {
        let d = Latency::default();
        let l = raw.latency.as_ref();
        Latency {
            intra_cloud_ms: l.and_then(|l| l.intra_cloud_ms).unwrap_or(d.intra_cloud_ms),
            inter_cloud_ms: l.and_then(|l| l.inter_cloud_ms).unwrap_or(d.inter_cloud_ms),
        }
    };
    let inbox_capacity = raw
        .engine
        .as_ref()
        .and_then(|e| e.inbox_capacity)
        .unwrap_or(DEFAULT_INBOX_CAPACITY);
    if inbox_capacity == 0 {
        ck.err("engine.inbox_capacity", None, "must be at least 1");
    }
    let claim_post_spacing_ms = raw.engine.as_ref().and_then(|e| e.claim_post_spacing_ms).unwrap_or(1);

    let space = check_space(&mut ck, &raw.space);
    let clouds = check_clouds(&mut ck, &raw.clouds, space.as_ref());
    let workloads = check_workloads(&mut ck, &raw.workloads, &clouds, space.as_ref());

    if !ck.diags.is_empty() {
        return Err(ck.diags);
    }
    Ok(Scenario {
        seed: raw.seed,
        eager_tickets: raw.eager_tickets,
        latency,
        inbox_capacity,
        claim_post_spacing_ms,
        space: space.expect("no diagnostics implies a space"),
        clouds,
        workloads,
    })
}

fn check_space(ck: &mut Checker, raw: &Spanned<RawSpace>) -> Option<AttributeSpace> {
    let span = raw.span();
    let s = raw.get_ref();
    let before = ck.diags.len();
    if s.f_min < 1 {
        ck.err("space.f_min", Some(span.clone()), "must be at least 1");
    }
    if s.f_max < s.f_min {
        ck.err("space.f_max", Some(span.clone()), "must be at least f_min");
    } else if s.f_max != s.f_min {
        ck.err(
            "space.f_max",
            Some(span.clone()),
            "must equal f_min (division past the base level is not supported)",
        );
    }
    if s.dims.is_empty() {
        ck.err("space.dims", Some(span.clone()), "at least one dimension is required");
    }
    let cells = (s.f_min as u128).checked_pow(s.dims.len() as u32);
    if cells.map_or(true, |c| c > MAX_CELLS as u128) {
        ck.err(
            "space",
            Some(span.clone()),
            format!("f_min^dim exceeds {MAX_CELLS} cells"),
        );
    }

    let mut dims = Vec::new();
    for (i, d) in s.dims.iter().enumerate() {
        let field = format!("space.dims[{i}]");
        let dspan = Some(d.span());
        let d = d.get_ref();
        let spec = match (&d.labels, d.lo, d.hi) {
            (Some(labels), None, None) => DimensionSpec::categorical(d.name.clone(), labels.clone()),
            (None, Some(lo), Some(hi)) => DimensionSpec::numeric(d.name.clone(), lo, hi),
            _ => {
                ck.err(field, dspan, "give either `labels` or both `lo` and `hi`");
                continue;
            }
        };
        // Per-dimension checks reuse the space constructor on a 1-d space.
        if let Err(e) = AttributeSpace::new(vec![spec.clone()], 1, 1) {
            ck.err(field, dspan, e.to_string());
            continue;
        }
        dims.push(spec);
    }

    let required = [
        (DIM_SERVICE_TYPE, true),
        (DIM_PROCESSORS, false),
        (DIM_CPU_TYPE, true),
        (DIM_SPEED, false),
    ];
    for d in &dims {
        if !required.iter().any(|(n, _)| *n == d.name) {
            ck.err(
                "space.dims",
                Some(span.clone()),
                format!("unknown dimension '{}'", d.name),
            );
        }
    }
    for (name, categorical) in required {
        match dims.iter().filter(|d| d.name == name).count() {
            0 => ck.err("space.dims", Some(span.clone()), format!("missing dimension '{name}'")),
            1 => {
                let d = dims.iter().find(|d| d.name == name).unwrap();
                if d.is_categorical() != categorical {
                    let kind = if categorical { "categorical" } else { "numeric" };
                    ck.err("space.dims", Some(span.clone()), format!("dimension '{name}' must be {kind}"));
                }
            }
            _ => ck.err("space.dims", Some(span.clone()), format!("dimension '{name}' given twice")),
        }
    }

    if ck.diags.len() > before {
        return None;
    }
    match AttributeSpace::new(dims, s.f_min, s.f_max) {
        Ok(space) => Some(space),
        Err(e) => {
            ck.err("space", Some(span), e.to_string());
            None
        }
    }
}

fn in_domain(space: &AttributeSpace, dim: &str, value: AttrValue) -> bool {
    space
        .dim_index(dim)
        .is_some_and(|j| space.normalize(j, &value).is_ok())
}

fn check_clouds(ck: &mut Checker, raw: &[Spanned<RawCloud>], space: Option<&AttributeSpace>) -> Vec<CloudConfig> {
    let mut out: Vec<CloudConfig> = Vec::new();
    for (i, rc) in raw.iter().enumerate() {
        let span = Some(rc.span());
        let c = rc.get_ref();
        let f = |name: &str| format!("clouds[{i}].{name}");
        let before = ck.diags.len();

        if !valid_id(&c.id) {
            ck.err(f("id"), span.clone(), "must be non-empty and use only [A-Za-z0-9-_./]");
        } else if out.iter().any(|o| o.cloud_id == c.id) || raw[..i].iter().any(|o| o.get_ref().id == c.id) {
            ck.err(f("id"), span.clone(), format!("duplicate cloud id '{}'", c.id));
        }
        if c.nodes < 1 {
            ck.err(f("nodes"), span.clone(), "must be at least 1");
        }
        let speeds = match &c.speed_ghz {
            RawSpeed::One(s) => vec![*s; c.nodes],
            RawSpeed::PerNode(v) => {
                if v.len() != c.nodes {
                    ck.err(
                        f("speed_ghz"),
                        span.clone(),
                        format!("{} speeds given for {} nodes", v.len(), c.nodes),
                    );
                }
                v.clone()
            }
        };
        if let Some(space) = space {
            for s in &speeds {
                if !(*s > 0.0) || !in_domain(space, DIM_SPEED, AttrValue::Number(*s)) {
                    ck.err(f("speed_ghz"), span.clone(), format!("speed {s} outside the speed_ghz dimension"));
                }
            }
            if !in_domain(space, DIM_CPU_TYPE, AttrValue::label(&c.cpu_type)) {
                ck.err(f("cpu_type"), span.clone(), format!("unknown cpu type '{}'", c.cpu_type));
            }
            for st in &c.service_types {
                if !in_domain(space, DIM_SERVICE_TYPE, AttrValue::label(st)) {
                    ck.err(f("service_types"), span.clone(), format!("unknown service type '{st}'"));
                }
            }
            if !in_domain(space, DIM_PROCESSORS, AttrValue::Number(1.0)) {
                ck.err("space.dims", span.clone(), "processors dimension must contain 1");
            }
        }
        if c.service_types.is_empty() {
            ck.err(f("service_types"), span.clone(), "at least one service type is required");
        }
        let [lo, hi] = c.status_update_ms;
        if lo < 1 || lo > hi {
            ck.err(f("status_update_ms"), span.clone(), "need 1 <= lo <= hi");
        }

        if ck.diags.len() == before {
            out.push(CloudConfig {
                cloud_id: c.id.clone(),
                node_speeds_ghz: speeds,
                cpu_type: c.cpu_type.clone(),
                service_types: c.service_types.clone(),
                status_update_ms: (lo, hi),
                topology: c.topology,
            });
        }
    }
    out
}

fn check_workloads(
    ck: &mut Checker,
    raw: &[Spanned<RawWorkload>],
    clouds: &[CloudConfig],
    space: Option<&AttributeSpace>,
) -> Vec<WorkloadSpec> {
    let mut out = Vec::new();
    for (i, rw) in raw.iter().enumerate() {
        let span = Some(rw.span());
        let w = rw.get_ref();
        let f = |name: &str| format!("workloads[{i}].{name}");
        let before = ck.diags.len();

        if !valid_id(&w.id) {
            ck.err(f("id"), span.clone(), "must be non-empty and use only [A-Za-z0-9-_./]");
        } else if raw[..i].iter().any(|o| o.get_ref().id == w.id) {
            ck.err(f("id"), span.clone(), format!("duplicate workload id '{}'", w.id));
        }
        if w.rows < 1 || w.cols < 1 {
            ck.err(f("rows"), span.clone(), "rows and cols must be at least 1");
        }
        match w.demand {
            Demand::Constant(d) if !(d > 0.0 && d.is_finite()) => {
                ck.err(f("demand"), span.clone(), "demand must be positive");
            }
            Demand::Uniform { lo, hi } if !(lo > 0.0 && lo <= hi && hi.is_finite()) => {
                ck.err(f("demand"), span.clone(), "need 0 < lo <= hi");
            }
            _ => {}
        }
        if !clouds.iter().any(|c| c.cloud_id == w.submit_cloud) {
            ck.err(f("submit_cloud"), span.clone(), format!("unknown cloud '{}'", w.submit_cloud));
        }
        if let Some(space) = space {
            if !in_domain(space, DIM_SERVICE_TYPE, AttrValue::label(w.model.service_type())) {
                ck.err(
                    f("model"),
                    span.clone(),
                    format!("service type '{}' is not in the space", w.model.service_type()),
                );
            }
        }
        if ck.diags.len() == before {
            out.push(WorkloadSpec {
                id: w.id.clone(),
                model: w.model,
                rows: w.rows,
                cols: w.cols,
                demand: w.demand,
                submit_cloud: w.submit_cloud.clone(),
                submit_time_ms: w.submit_time_ms,
            });
        }
    }
    out
}
