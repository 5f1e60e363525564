//! Resource discovery index.
//!
//! The normalized attribute space `[0,1]^dim` is divided into `f_min` equal
//! slices per dimension. Each resulting base cell is keyed on the overlay by
//! the SHA-1 of its control point. Claims are range objects and are stored at
//! every base cell they intersect; tickets are points and go to exactly one
//! cell. A matching claim and ticket therefore always meet at the ticket's
//! cell.

mod objects;
mod space;

use std::fmt::Write as _;

use thiserror::Error;

use crate::overlay::{hash_name, NodeId};

pub use objects::{ClaimId, Constraint, ResourceClaim, ResourceTicket, TicketId};
pub use space::{AttrValue, AttributeSpace, DimensionKind, DimensionSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("invalid attribute space: {0}")]
    InvalidSpace(String),
    #[error("no dimension with index {0}")]
    NoSuchDimension(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid claim: {0}")]
    InvalidClaim(String),
    #[error("invalid ticket: {0}")]
    InvalidTicket(String),
}

/// One base cell of the attribute-space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexCell {
    /// Position of the cell in row-major order.
    pub index: usize,
    pub coords: Vec<u32>,
    /// `[coords_j / f_min, (coords_j + 1) / f_min)` per dimension.
    pub bounds: Vec<(f64, f64)>,
    pub control_point: Vec<f64>,
    pub key: NodeId,
}

/// `"cp|"` followed by the coordinates with six fractional digits, comma separated.
pub fn control_point_text(point: &[f64]) -> String {
    let mut out = String::from("cp|");
    for (i, x) in point.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{x:.6}");
    }
    out
}

/// Overlay key of a cell: the hash of its control-point text.
pub fn spatial_hash(cell: &IndexCell) -> NodeId {
    hash_control_point(&cell.control_point)
}

fn hash_control_point(point: &[f64]) -> NodeId {
    hash_name(&control_point_text(point)).expect("control point text is never empty")
}

/// Enumerates the `f_min^dim` base cells in row-major order of their coordinates.
pub fn build_base_cells(space: &AttributeSpace) -> Vec<IndexCell> {
    let f = space.f_min();
    let dim = space.dim();
    let count = space.cell_count().expect("cell count overflows usize");
    let mut cells = Vec::with_capacity(count);
    let mut coords = vec![0u32; dim];
    for index in 0..count {
        let bounds: Vec<(f64, f64)> = coords
            .iter()
            .map(|&c| (space.slice_lo(c), space.slice_hi(c)))
            .collect();
        let control_point: Vec<f64> = coords
            .iter()
            .map(|&c| (2 * c + 1) as f64 / (2 * f) as f64)
            .collect();
        let key = hash_control_point(&control_point);
        cells.push(IndexCell {
            index,
            coords: coords.clone(),
            bounds,
            control_point,
            key,
        });
        // Advance the odometer; the last dimension varies fastest.
        for j in (0..dim).rev() {
            coords[j] += 1;
            if coords[j] < f {
                break;
            }
            coords[j] = 0;
        }
    }
    cells
}

fn row_major_index(coords: &[u32], f: u32) -> usize {
    coords.iter().fold(0usize, |acc, &c| acc * f as usize + c as usize)
}

/// Normalized closed interval per dimension covered by `claim`.
pub fn claim_region(space: &AttributeSpace, claim: &ResourceClaim) -> Result<Vec<(f64, f64)>, SpatialError> {
    claim.validate(space)?;
    claim
        .constraints
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let n = |v: f64| space.normalize(j, &AttrValue::Number(v));
            Ok(match c {
                Constraint::Eq(v) => {
                    let x = space.normalize(j, v)?;
                    (x, x)
                }
                Constraint::Ge(v) => (n(*v)?, 1.0),
                Constraint::Le(v) => (0.0, n(*v)?),
                Constraint::Range(lo, hi) => (n(*lo)?, n(*hi)?),
            })
        })
        .collect()
}

/// Every base cell whose closed bounds intersect the claim's region, in
/// row-major order.
pub fn map_claim<'c>(
    space: &AttributeSpace,
    cells: &'c [IndexCell],
    claim: &ResourceClaim,
) -> Result<Vec<&'c IndexCell>, SpatialError> {
    let region = claim_region(space, claim)?;
    let f = space.f_min();
    let per_dim: Vec<Vec<u32>> = region
        .iter()
        .map(|&(a, b)| {
            (0..f)
                .filter(|&c| space.slice_lo(c) <= b && space.slice_hi(c) >= a)
                .collect()
        })
        .collect();
    assert!(
        per_dim.iter().all(|s| !s.is_empty()),
        "claim region inside the unit cube must meet some cell"
    );

    let mut out = Vec::new();
    let mut pick = vec![0usize; per_dim.len()];
    let mut coords = vec![0u32; per_dim.len()];
    'outer: loop {
        for (j, &p) in pick.iter().enumerate() {
            coords[j] = per_dim[j][p];
        }
        out.push(&cells[row_major_index(&coords, f)]);
        for j in (0..pick.len()).rev() {
            pick[j] += 1;
            if pick[j] < per_dim[j].len() {
                continue 'outer;
            }
            pick[j] = 0;
        }
        break;
    }
    Ok(out)
}

/// The unique base cell containing the ticket's point.
pub fn map_ticket<'c>(
    space: &AttributeSpace,
    cells: &'c [IndexCell],
    ticket: &ResourceTicket,
) -> Result<&'c IndexCell, SpatialError> {
    ticket.validate(space)?;
    let coords: Vec<u32> = ticket
        .point
        .iter()
        .enumerate()
        .map(|(j, v)| space.normalize(j, v).map(|x| space.slice_of(x)))
        .collect::<Result<_, _>>()?;
    Ok(&cells[row_major_index(&coords, space.f_min())])
}

/// Whether every per-dimension constraint of `claim` holds for the ticket's
/// native values. Capacity is not considered.
pub fn matches(claim: &ResourceClaim, ticket: &ResourceTicket) -> bool {
    claim.constraints.len() == ticket.point.len()
        && claim
            .constraints
            .iter()
            .zip(&ticket.point)
            .all(|(c, v)| c.holds(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig10_space() -> AttributeSpace {
        AttributeSpace::new(
            vec![DimensionSpec::numeric("x", 0.0, 1.0), DimensionSpec::numeric("y", 0.0, 1.0)],
            2,
            2,
        )
        .unwrap()
    }

    pub(crate) fn testbed_space() -> AttributeSpace {
        AttributeSpace::new(
            vec![
                DimensionSpec::categorical(
                    "service_type",
                    ["P2PTaskExecution", "P2PThreadExecution", "P2PDataflowExecution"],
                ),
                DimensionSpec::numeric("processors", 0.0, 8.0),
                DimensionSpec::categorical("cpu_type", ["Intel", "AMD", "SPARC"]),
                DimensionSpec::numeric("speed_ghz", 0.0, 4.0),
            ],
            3,
            3,
        )
        .unwrap()
    }

    fn claim(constraints: Vec<Constraint>) -> ResourceClaim {
        ResourceClaim::new("c", constraints, 1, "sched", 0, "job")
    }

    fn ticket(point: Vec<AttrValue>) -> ResourceTicket {
        ResourceTicket::new("t", point, 1, "node", 0)
    }

    #[test]
    fn testbed_has_81_cells() {
        let cells = build_base_cells(&testbed_space());
        assert_eq!(cells.len(), 81);
        for (i, c) in cells.iter().enumerate() {
            assert_eq!(c.index, i);
        }
    }

    #[test]
    fn fig10_has_4_cells_with_4_control_points() {
        let cells = build_base_cells(&fig10_space());
        assert_eq!(cells.len(), 4);
        let cps: Vec<Vec<f64>> = cells.iter().map(|c| c.control_point.clone()).collect();
        assert_eq!(
            cps,
            vec![vec![0.25, 0.25], vec![0.25, 0.75], vec![0.75, 0.25], vec![0.75, 0.75]]
        );
    }

    #[test]
    fn single_cell_space() {
        let s = AttributeSpace::new(vec![DimensionSpec::numeric("x", 0.0, 1.0)], 1, 1).unwrap();
        let cells = build_base_cells(&s);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].bounds, vec![(0.0, 1.0)]);
        assert_eq!(cells[0].control_point, vec![0.5]);
        // SHA-1("cp|0.500000") from an independent implementation.
        assert_eq!(cells[0].key.to_hex(), "da2e75fc542bee54d33363e72404d9039d53ac5a");
    }

    #[test]
    fn control_point_serialization() {
        assert_eq!(
            control_point_text(&[1.0 / 6.0, 0.5, 1.0 / 6.0, 5.0 / 6.0]),
            "cp|0.166667,0.500000,0.166667,0.833333"
        );
        let cells = build_base_cells(&fig10_space());
        assert_eq!(cells[0].key.to_hex(), "72d95cd48d7c8f2639660d68071f84b3c8259c34");
    }

    #[test]
    fn cell_invariants() {
        let s = testbed_space();
        for cell in build_base_cells(&s) {
            for j in 0..4 {
                let (lo, hi) = cell.bounds[j];
                assert_eq!(lo, cell.coords[j] as f64 / 3.0);
                assert_eq!(hi, (cell.coords[j] + 1) as f64 / 3.0);
                assert!((cell.control_point[j] - (lo + hi) / 2.0).abs() < 1e-15);
            }
            assert_eq!(spatial_hash(&cell), cell.key);
        }
    }

    #[test]
    fn all_81_keys_distinct() {
        let cells = build_base_cells(&testbed_space());
        let mut keys: Vec<NodeId> = cells.iter().map(|c| c.key).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 81);
    }

    #[test]
    fn ge_region() {
        let s = AttributeSpace::new(vec![DimensionSpec::numeric("speed", 0.0, 4.0)], 2, 2).unwrap();
        let r = claim_region(&s, &claim(vec![Constraint::Ge(1.5)])).unwrap();
        assert_eq!(r, vec![(0.375, 1.0)]);
    }

    #[test]
    fn point_region_hits_one_cell() {
        let s = testbed_space();
        let cells = build_base_cells(&s);
        let c = claim(vec![
            Constraint::Eq("P2PThreadExecution".into()),
            Constraint::Eq(1.0.into()),
            Constraint::Eq("Intel".into()),
            Constraint::Eq(2.7.into()),
        ]);
        let r = claim_region(&s, &c).unwrap();
        assert!(r.iter().all(|(a, b)| a == b));
        assert_eq!(map_claim(&s, &cells, &c).unwrap().len(), 1);
    }

    #[test]
    fn ge_claim_spans_two_cells() {
        let s = AttributeSpace::new(
            vec![
                DimensionSpec::numeric("speed", 0.0, 4.0),
                DimensionSpec::categorical("kind", ["a", "b"]),
            ],
            2,
            2,
        )
        .unwrap();
        let cells = build_base_cells(&s);
        let c = claim(vec![Constraint::Ge(1.5), Constraint::Eq("a".into())]);
        let hit: Vec<Vec<u32>> = map_claim(&s, &cells, &c)
            .unwrap()
            .iter()
            .map(|c| c.coords.clone())
            .collect();
        assert_eq!(hit, vec![vec![0, 0], vec![1, 0]]);
    }

    #[test]
    fn ticket_at_origin_and_upper_edge() {
        let s = fig10_space();
        let cells = build_base_cells(&s);
        let t0 = ticket(vec![0.0.into(), 0.0.into()]);
        assert_eq!(map_ticket(&s, &cells, &t0).unwrap().coords, vec![0, 0]);
        let t1 = ticket(vec![1.0.into(), 0.2.into()]);
        assert_eq!(map_ticket(&s, &cells, &t1).unwrap().coords, vec![1, 0]);
        let bad = ticket(vec![1.2.into(), 0.2.into()]);
        assert!(map_ticket(&s, &cells, &bad).is_err());
    }

    fn table1() -> Vec<ResourceClaim> {
        let mk = |id: &str, t: u64, svc: &str, speed: f64| {
            ResourceClaim::new(
                id,
                vec![
                    Constraint::Eq(svc.into()),
                    Constraint::Eq(1.0.into()),
                    Constraint::Eq("Intel".into()),
                    Constraint::Ge(speed),
                ],
                1,
                "sched",
                t,
                id,
            )
        };
        vec![
            mk("Claim 1", 300, "P2PThreadExecution", 2.0),
            mk("Claim 2", 400, "P2PTaskExecution", 2.0),
            mk("Claim 3", 500, "P2PThreadExecution", 2.4),
        ]
    }

    fn table2_ticket() -> ResourceTicket {
        ResourceTicket::new(
            "Cloud 2",
            vec!["P2PThreadExecution".into(), 1.0.into(), "Intel".into(), 2.7.into()],
            1,
            "Cloud 2",
            700,
        )
    }

    #[test]
    fn table_claims_against_ticket() {
        let claims = table1();
        let t = table2_ticket();
        assert!(matches(&claims[0], &t));
        assert!(!matches(&claims[1], &t));
        assert!(matches(&claims[2], &t));
    }

    #[test]
    fn identity_claim_matches() {
        let t = table2_ticket();
        let c = claim(t.point.iter().cloned().map(Constraint::Eq).collect());
        assert!(matches(&c, &t));
    }

    #[test]
    fn categorical_range_constraint_rejected() {
        let s = testbed_space();
        let c = claim(vec![
            Constraint::Ge(1.0),
            Constraint::Eq(1.0.into()),
            Constraint::Eq("Intel".into()),
            Constraint::Ge(2.0),
        ]);
        assert!(matches!(claim_region(&s, &c), Err(SpatialError::InvalidClaim(_))));
    }

    /// Exhaustive rendezvous check on the 2x2 grid with a quarter-step lattice
    /// of values, including every slice boundary.
    #[test]
    fn rendezvous_exhaustive_fig10() {
        let s = fig10_space();
        let cells = build_base_cells(&s);
        let grid: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let mut constraints_1d = Vec::new();
        for &a in &grid {
            constraints_1d.push(Constraint::Eq(a.into()));
            constraints_1d.push(Constraint::Ge(a));
            constraints_1d.push(Constraint::Le(a));
            for &b in grid.iter().filter(|&&b| b >= a) {
                constraints_1d.push(Constraint::Range(a, b));
            }
        }
        let mut checked = 0;
        for cx in &constraints_1d {
            for cy in &constraints_1d {
                let c = claim(vec![cx.clone(), cy.clone()]);
                let claim_cells: Vec<usize> = map_claim(&s, &cells, &c).unwrap().iter().map(|c| c.index).collect();
                for &x in &grid {
                    for &y in &grid {
                        let t = ticket(vec![x.into(), y.into()]);
                        if matches(&c, &t) {
                            checked += 1;
                            let home = map_ticket(&s, &cells, &t).unwrap().index;
                            assert!(claim_cells.contains(&home), "{c:?} {t:?}");
                        }
                    }
                }
            }
        }
        assert!(checked > 10_000);
    }
}
