use fedmesh_core::oracle::{rendezvous, rendezvous_exhaustive};
use fedmesh_core::{build_base_cells, map_claim, map_ticket, matches, AttributeSpace, Constraint, DimensionSpec};
use fedmesh_core::{ResourceClaim, ResourceTicket};
use proptest::prelude::*;

#[test]
fn seeded_pairs_per_dimensionality() {
    for dims in 2..=4 {
        let r = rendezvous(2_000, dims, 11);
        assert!(r.passed(), "{r:?}");
        assert!(r.exercised >= 500, "{r:?}");
    }
}

#[test]
fn exhaustive_small_grid() {
    let r = rendezvous_exhaustive();
    assert!(r.passed(), "{r:?}");
}

fn space3() -> AttributeSpace {
    AttributeSpace::new(
        vec![
            DimensionSpec::numeric("a", 0.0, 10.0),
            DimensionSpec::numeric("b", -5.0, 5.0),
            DimensionSpec::categorical("c", ["x", "y", "z"]),
        ],
        3,
        3,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn matching_ticket_lands_in_a_claim_cell(
        lo_a in 0.0f64..10.0, w_a in 0.0f64..10.0,
        ge_b in -5.0f64..5.0,
        label in 0usize..3,
        ta in 0.0f64..=1.0, tb in 0.0f64..=1.0,
    ) {
        let space = space3();
        let cells = build_base_cells(&space);
        let hi_a = (lo_a + w_a).min(10.0);
        let labels = ["x", "y", "z"];
        let claim = ResourceClaim::new(
            "c",
            vec![Constraint::Range(lo_a, hi_a), Constraint::Ge(ge_b), Constraint::Eq(labels[label].into())],
            1, "o", 0, "j",
        );
        // Ticket inside the claim by construction.
        let a = lo_a + (hi_a - lo_a) * ta;
        let b = ge_b + (5.0 - ge_b) * tb;
        let ticket = ResourceTicket::new("t", vec![a.into(), b.into(), labels[label].into()], 1, "n", 0);
        prop_assert!(matches(&claim, &ticket));
        let cell = map_ticket(&space, &cells, &ticket).unwrap().index;
        let claim_cells: Vec<usize> = map_claim(&space, &cells, &claim).unwrap().iter().map(|c| c.index).collect();
        prop_assert!(claim_cells.contains(&cell));
    }
}
