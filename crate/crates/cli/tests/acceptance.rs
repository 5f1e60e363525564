//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use fedmesh_core::coordination::ClaimStore;
use fedmesh_core::experiment::{self, RunOutcome, SweepPoint};
use fedmesh_core::oracle::{self, brute_owner};
use fedmesh_core::{
    build_base_cells, hash_name, job_share_percent, map_claim, map_ticket, AttributeSpace, Constraint,
    DimensionSpec, Membership, Model, ResourceClaim, ResourceTicket, RngStream, Scenario,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit_s: u64) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took <= Duration::from_secs(limit_s), || {
        format!("took {:.1}s, limit {limit_s}s", took.as_secs_f64())
    })
}

fn cell_count() -> Check {
    let start = Instant::now();
    let testbed = Scenario::melbourne_5().space;
    let n = build_base_cells(&testbed).len();
    ensure(testbed.dim() == 4 && testbed.f_min() == 3 && n == 81, || {
        format!("testbed grid has {n} cells")
    })?;
    let small = AttributeSpace::new(
        vec![DimensionSpec::numeric("x", 0.0, 1.0), DimensionSpec::numeric("y", 0.0, 1.0)],
        2,
        2,
    )
    .map_err(|e| e.to_string())?;
    let m = build_base_cells(&small).len();
    ensure(m == 4, || format!("2-dim grid has {m} cells"))?;
    within(start, 1)?;
    Ok(format!("{n} and {m} cells"))
}

fn loads(members: &Membership, space: &AttributeSpace) -> Result<Vec<usize>, String> {
    let ids: Vec<_> = members.ids().collect();
    let mut load = vec![0usize; ids.len()];
    for cell in build_base_cells(space) {
        let owner = members.owner_of(&cell.key).map_err(|e| e.to_string())?;
        load[ids.iter().position(|i| *i == owner).unwrap()] += 1;
    }
    Ok(load)
}

fn cell_distribution() -> Check {
    let start = Instant::now();
    let space = Scenario::melbourne_5().space;
    let mut testbed = Membership::new();
    testbed
        .join_all((1..=5).map(|i| format!("cloud-{i}")).collect::<Vec<_>>().iter().map(String::as_str))
        .map_err(|e| e.to_string())?;
    let l = loads(&testbed, &space)?;
    let mean = l.iter().sum::<usize>() as f64 / 5.0;
    ensure(mean == 16.2, || format!("testbed mean {mean}"))?;

    let mut grand = 0.0;
    let mut max = 0;
    for seed in 0..100 {
        let mut m = Membership::new();
        let names: Vec<String> = (0..5).map(|i| format!("membership-{seed}/peer-{i}")).collect();
        m.join_all(names.iter().map(String::as_str)).map_err(|e| e.to_string())?;
        let l = loads(&m, &space)?;
        let mean = l.iter().sum::<usize>() as f64 / 5.0;
        ensure(mean == 16.2, || format!("membership {seed}: mean {mean}"))?;
        grand += mean;
        max = max.max(*l.iter().max().unwrap());
    }
    grand /= 100.0;
    ensure((grand - 16.2).abs() < 1e-9 && max <= 81, || format!("grand mean {grand}, max {max}"))?;
    within(start, 5)?;
    Ok(format!("testbed loads {l:?}, grand mean {grand:.1}, max {max}"))
}

fn table_replay() -> Check {
    let start = Instant::now();
    let space = Scenario::melbourne_5().space;
    let cells = build_base_cells(&space);
    let claim = |id: &str, t: u64, svc: &str, speed: f64| {
        ResourceClaim::new(
            id,
            vec![
                Constraint::Eq(svc.into()),
                Constraint::Eq(1.0.into()),
                Constraint::Eq("Intel".into()),
                Constraint::Ge(speed),
            ],
            1,
            "scheduler",
            t,
            id,
        )
    };
    let claims = [
        claim("Claim 1", 300, "P2PThreadExecution", 2.0),
        claim("Claim 2", 400, "P2PTaskExecution", 2.0),
        claim("Claim 3", 500, "P2PThreadExecution", 2.4),
    ];
    let mut store = ClaimStore::new();
    for c in &claims {
        for cell in map_claim(&space, &cells, c).map_err(|e| e.to_string())? {
            store.post_claim(cell.index, c.clone());
        }
    }
    let ticket = ResourceTicket::new(
        "Cloud 2",
        vec!["P2PThreadExecution".into(), 1.0.into(), "Intel".into(), 2.7.into()],
        1,
        "Cloud 2",
        700,
    );
    let cell = map_ticket(&space, &cells, &ticket).map_err(|e| e.to_string())?;
    let decisions = store.post_ticket(cell.index, &ticket, 700);
    ensure(decisions.len() == 1 && decisions[0].claim_id.0 == "Claim 1", || {
        format!("decisions {decisions:?}")
    })?;
    ensure(store.holds(&claims[1].claim_id) && store.holds(&claims[2].claim_id), || {
        "claims 2 and 3 should remain stored".into()
    })?;
    within(start, 1)?;
    Ok("one allocation, to Claim 1".into())
}

fn rendezvous() -> Check {
    let start = Instant::now();
    let mut checks = 0;
    for dims in 2..=4 {
        let r = oracle::rendezvous(10_000, dims, 42);
        ensure(r.passed() && r.checks >= 10_000 && r.exercised > 0, || format!("{r:?}"))?;
        checks += r.checks;
    }
    let r = oracle::rendezvous_exhaustive();
    ensure(r.passed(), || format!("{r:?}"))?;
    checks += r.checks;
    within(start, 30)?;
    Ok(format!("{checks} checks, 0 failures"))
}

fn allocation() -> Check {
    let start = Instant::now();
    let r = oracle::allocation(1_000, 42);
    ensure(r.passed() && r.checks >= 1_000, || format!("{r:?}"))?;

    let mut rng = RngStream::new(7, "acceptance/allocation");
    for i in 0..1_000 {
        let inst = oracle::random_allocation_instance(&mut rng);
        let got = oracle::distributed_allocation(&inst)?;
        for t in &inst.tickets {
            let granted = got.iter().filter(|(tid, _)| *tid == t.ticket_id).count() as u32;
            ensure(granted <= t.available_units, || {
                format!("instance {i}: ticket {} granted {granted} of {}", t.ticket_id, t.available_units)
            })?;
        }
    }
    within(start, 30)?;
    Ok(format!("{} instances identical, no over-provisioning", r.checks))
}

fn routing() -> Check {
    let start = Instant::now();
    let mut rng = RngStream::new(42, "acceptance/routing");
    let mut summary = Vec::new();
    for n in [8usize, 32, 128, 256] {
        let mut m = Membership::new();
        let names: Vec<String> = (0..n).map(|i| format!("peer-{n}-{i}")).collect();
        let ids = m.join_all(names.iter().map(String::as_str)).map_err(|e| e.to_string())?;
        let mut hops = 0usize;
        for k in 0..10_000 {
            let key = hash_name(&format!("key-{n}-{k}-{}", rng.uniform_u64(0, u64::MAX).unwrap())).map_err(|e| e.to_string())?;
            let source = ids[rng.uniform_u64(0, ids.len() as u64 - 1).unwrap() as usize];
            let route = m.route(&source, &key).map_err(|e| e.to_string())?;
            let want = brute_owner(&ids, &key);
            ensure(Some(route.owner) == want, || format!("n={n}: key {key} routed to {}", route.owner))?;
            hops += route.hops();
        }
        let mean = hops as f64 / 10_000.0;
        let bound = (n as f64).log(16.0).ceil() + 2.0;
        ensure(mean <= bound, || format!("n={n}: mean hops {mean:.3} > {bound}"))?;
        summary.push(format!("n={n} {mean:.2}"));
    }
    within(start, 60)?;
    Ok(format!("mean hops {}", summary.join(", ")))
}

fn cloud_num(id: &str) -> u32 {
    id.trim_start_matches("cloud-").parse().unwrap_or(0)
}

fn qualitative(points: &[SweepPoint]) -> Check {
    for p in points {
        let recs = p.outcome.records();
        for model in Model::ALL {
            let of = |range: std::ops::RangeInclusive<u32>| {
                recs.iter()
                    .filter(|r| r.model == model && range.contains(&cloud_num(&r.cloud_id)))
                    .collect::<Vec<_>>()
            };
            let (near, far) = (of(1..=2), of(3..=4));
            ensure(!near.is_empty() && !far.is_empty(), || {
                format!("{model} at {}: missing submissions", p.granularity)
            })?;
            for a in &near {
                for b in &far {
                    ensure(a.response_ms < b.response_ms, || {
                        format!(
                            "{model} at {}: {} {}ms not below {} {}ms",
                            p.granularity, a.cloud_id, a.response_ms, b.cloud_id, b.response_ms
                        )
                    })?;
                }
            }
        }
        let share = job_share_percent(&p.outcome.metrics, &p.outcome.clouds);
        let (fast, slow) = (
            share.combined(&["cloud-3", "cloud-4", "cloud-5"]),
            share.combined(&["cloud-1", "cloud-2"]),
        );
        ensure(fast > slow, || format!("at {}: share {fast:.1}% vs {slow:.1}%", p.granularity))?;
        let jobs = |c: &str| p.outcome.metrics.completed_in_cloud(c);
        let top = jobs("cloud-5");
        for c in &p.outcome.clouds {
            ensure(c == "cloud-5" || jobs(c) < top, || {
                format!("at {}: {c} completed {} vs cloud-5 {top}", p.granularity, jobs(c))
            })?;
        }
    }
    let last = &points.last().unwrap().outcome;
    let share = job_share_percent(&last.metrics, &last.clouds);
    Ok(format!(
        "{} sweep points; clouds 3-5 share {:.1}% of 200% at 169 units",
        points.len(),
        share.combined(&["cloud-3", "cloud-4", "cloud-5"])
    ))
}

fn reproduction(runs: &mut Vec<RunOutcome>) -> Check {
    let start = Instant::now();
    let s = Scenario::melbourne_5();
    ensure(s.seed == 42 && s.clouds.iter().all(|c| c.node_count() == 4), || {
        "melbourne-5 should be 5 clouds of 4 nodes, seed 42".into()
    })?;
    // Both models run together at every size, so one sweep covers both.
    let points = experiment::sweep(&s, Model::Task).map_err(|e| e.to_string())?;
    runs.extend(points.iter().map(|p| p.outcome.clone()));
    let msg = qualitative(&points)?;
    within(start, 60)?;
    Ok(msg)
}

fn determinism(scenario: &Path) -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (i, format) in ["csv", "csv", "json", "json"].iter().enumerate() {
        let out = dir.path().join(format!("run-{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_fedmesh"))
            .args(["run", scenario.to_str().unwrap(), "--seed", "42", "--format", format, "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .map_err(|e| e.to_string())?
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    ensure(outputs[0] == outputs[1], || "csv outputs differ".into())?;
    ensure(outputs[2] == outputs[3], || "json outputs differ".into())?;
    ensure(outputs[0].len() == 4 && outputs[2].len() == 4, || "expected four files per run".into())?;
    within(start, 60)?;
    Ok("csv and json outputs byte-identical".into())
}

fn exactly_once(runs: &[RunOutcome]) -> Check {
    for (i, r) in runs.iter().enumerate() {
        r.check_exactly_once().map_err(|e| format!("run {i}: {e}"))?;
        let completed: u64 = Model::ALL.iter().map(|&m| r.metrics.completed_total(m)).sum();
        let submitted: u64 = r.metrics.submitted.values().sum();
        ensure(completed == submitted && completed as usize == r.dispatches.len(), || {
            format!(
                "run {i}: {submitted} submitted, {completed} completed, {} dispatched",
                r.dispatches.len()
            )
        })?;
    }
    let decisions: usize = runs.iter().map(|r| r.decisions.len()).sum();
    Ok(format!("{} runs, {decisions} decisions", runs.len()))
}

fn main() -> ExitCode {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/melbourne-5.toml");
    let mut runs = Vec::new();
    let mut results: Vec<(&str, Check)> = vec![
        ("base cell count", cell_count()),
        ("cell distribution", cell_distribution()),
        ("claim/ticket table replay", table_replay()),
        ("rendezvous oracle", rendezvous()),
        ("allocation oracle", allocation()),
        ("routing", routing()),
    ];
    results.push(("qualitative reproduction", reproduction(&mut runs)));
    results.push(("determinism", determinism(&scenario)));
    let once = experiment::run(&Scenario::melbourne_5())
        .map_err(|e| format!("melbourne-5 run: {e}"))
        .and_then(|r| {
            runs.push(r);
            exactly_once(&runs)
        });
    results.push(("exactly-once service", once));

    let mut failed = 0;
    for (i, (name, res)) in results.iter().enumerate() {
        match res {
            Ok(msg) => println!("criterion {}: PASS {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
