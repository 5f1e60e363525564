use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AttrValue, AttributeSpace, DimensionKind, SpatialError};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClaimId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TicketId(pub String);

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for TicketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Constraint on a single attribute. Comparisons are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    Eq(AttrValue),
    Ge(f64),
    Le(f64),
    Range(f64, f64),
}

impl Constraint {
    pub fn holds(&self, value: &AttrValue) -> bool {
        match (self, value) {
            (Constraint::Eq(want), v) => want == v,
            (Constraint::Ge(lo), AttrValue::Number(v)) => v >= lo,
            (Constraint::Le(hi), AttrValue::Number(v)) => v <= hi,
            (Constraint::Range(lo, hi), AttrValue::Number(v)) => lo <= v && v <= hi,
            _ => false,
        }
    }
}

/// A d-dimensional range object describing what a work unit needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceClaim {
    pub claim_id: ClaimId,
    pub constraints: Vec<Constraint>,
    pub requested_units: u32,
    pub origin: String,
    /// Virtual milliseconds.
    pub arrival_time: u64,
    pub job_ref: String,
}

impl ResourceClaim {
    pub fn new(
        claim_id: impl Into<String>,
        constraints: Vec<Constraint>,
        requested_units: u32,
        origin: impl Into<String>,
        arrival_time: u64,
        job_ref: impl Into<String>,
    ) -> Self {
        ResourceClaim {
            claim_id: ClaimId(claim_id.into()),
            constraints,
            requested_units,
            origin: origin.into(),
            arrival_time,
            job_ref: job_ref.into(),
        }
    }

    pub fn validate(&self, space: &AttributeSpace) -> Result<(), SpatialError> {
        let err = |m: String| Err(SpatialError::InvalidClaim(format!("{}: {m}", self.claim_id)));
        if self.constraints.len() != space.dim() {
            return err(format!(
                "{} constraints for a {}-dimensional space",
                self.constraints.len(),
                space.dim()
            ));
        }
        if self.requested_units < 1 {
            return err("requested_units must be at least 1".into());
        }
        for (c, d) in self.constraints.iter().zip(space.dims()) {
            match (c, &d.kind) {
                (Constraint::Eq(_), _) => {}
                (_, DimensionKind::Categorical { .. }) => {
                    return err(format!("categorical dimension '{}' admits only equality", d.name));
                }
                (Constraint::Range(lo, hi), _) if lo > hi => {
                    return err(format!("empty range [{lo}, {hi}] on '{}'", d.name));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// A d-dimensional point object advertising a node's attributes and free capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceTicket {
    pub ticket_id: TicketId,
    pub point: Vec<AttrValue>,
    pub available_units: u32,
    pub origin: String,
    /// Virtual milliseconds.
    pub issue_time: u64,
}

impl ResourceTicket {
    pub fn new(
        ticket_id: impl Into<String>,
        point: Vec<AttrValue>,
        available_units: u32,
        origin: impl Into<String>,
        issue_time: u64,
    ) -> Self {
        ResourceTicket {
            ticket_id: TicketId(ticket_id.into()),
            point,
            available_units,
            origin: origin.into(),
            issue_time,
        }
    }

    pub fn validate(&self, space: &AttributeSpace) -> Result<(), SpatialError> {
        if self.point.len() != space.dim() {
            return Err(SpatialError::InvalidTicket(format!(
                "{}: {} coordinates for a {}-dimensional space",
                self.ticket_id,
                self.point.len(),
                space.dim()
            )));
        }
        for (j, v) in self.point.iter().enumerate() {
            space.normalize(j, v)?;
        }
        Ok(())
    }
}
