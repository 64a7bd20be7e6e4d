//! Acceptance suite: one test per exit criterion, each printing a pass line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::collections::BTreeSet;
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use rand::Rng;

use common::{oracle_reachable, oracle_select, random_archive, seeded, stub_server};
use gea_core::analysis::{self, ComparisonReport};
use gea_core::archive::{
    AgentId, AgentRecord, Archive, GateStatus, Provenance, TaskSuccessVector, ToolTag,
};
use gea_core::engine::{self, EvolutionMode, RunConfig, WorldSource};
use gea_core::error::{GeaError, RemoteErrorKind};
use gea_core::evaluation::{run_funnel, run_promotion, sanity_gate, StagePlan, StageStyle};
use gea_core::experiment::{run_compare, run_robustness, ExperimentConfig, OutputLayout};
use gea_core::operators::PhaseSchedule;
use gea_core::remote::RemoteOperator;
use gea_core::selection::{
    cosine_distance, knn_novelty, pn_score, rank_by_performance_novelty, select_parent_group,
    SelectionConfig,
};
use gea_core::simenv::{generate_world, SimWorld, TaskSpec};
use gea_core::traces::{self, collect_trace, Directive, DirectiveAction};

fn pass(number: u32, what: &str) {
    println!("[PASS] criterion {number:02}: {what}");
}

/// The 20-seed matched comparison shared by criteria 6-9.
static PAPER_DESK: LazyLock<(ComparisonReport, Duration)> = LazyLock::new(|| {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = OutputLayout::new(dir.path()).expect("layout");
    let experiment = ExperimentConfig::paper_desk();
    let start = Instant::now();
    let report = run_compare(&experiment, &out, 8).expect("paper-desk comparison runs");
    (report, start.elapsed())
});

// ---------------------------------------------------------------------------
// 1. Selection oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_selection_oracle_equivalence() {
    let start = Instant::now();
    let mut checked = 0;
    for seed in 0..50u64 {
        let mut rng = seeded(0x01_0000 + seed);
        for _ in 0..4 {
            let size = rng.random_range(1..=20);
            let dimension = rng.random_range(1..=16);
            let archive = random_archive(&mut rng, size, dimension);
            if archive.selectable_count() == 0 {
                continue;
            }
            let cfg = SelectionConfig {
                group_size: rng.random_range(1..=4),
                neighborhood: rng.random_range(1..=5),
                epsilon: 1e-8,
            };
            let group = select_parent_group(&archive, &cfg).expect("selectable archive");
            let expected = oracle_select(&archive, &cfg);
            let got: Vec<(AgentId, f64)> = group
                .members
                .iter()
                .copied()
                .zip(group.scores.iter().copied())
                .collect();
            assert_eq!(
                got, expected,
                "seed {seed}: selection diverges from the oracle"
            );
            checked += 1;
        }
    }
    assert!(checked >= 190, "enough archives exercised: {checked}");
    let elapsed = start.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "runtime {elapsed:?} under 5 s"
    );
    pass(
        1,
        "select_parent_group matches the exhaustive oracle on 200 random archives",
    );
}

// ---------------------------------------------------------------------------
// 2. Metric property suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_metric_property_suite() {
    let mut rng = seeded(0x02_0000);

    // symmetry, bounds, identity residual, zero-vector: 1000 cases each
    for _ in 0..1000 {
        let dimension = rng.random_range(1..=32);
        let a = common::random_vector(&mut rng, dimension);
        let b = common::random_vector(&mut rng, dimension);
        let eps = 1e-8;
        let d_ab = cosine_distance(&a, &b, eps).unwrap();
        let d_ba = cosine_distance(&b, &a, eps).unwrap();
        assert_eq!(d_ab, d_ba, "distance must be exactly symmetric");
        assert!((0.0..=1.0).contains(&d_ab), "distance {d_ab} out of bounds");

        if a.ones() > 0 {
            let d_aa = cosine_distance(&a, &a, eps).unwrap();
            let bound = eps / a.ones() as f64;
            assert!(
                d_aa <= bound + 1e-12,
                "identity residual {d_aa} above {bound}"
            );
        }
        let zero = TaskSuccessVector::zeros(dimension);
        assert_eq!(cosine_distance(&zero, &a, eps).unwrap(), 1.0);
    }

    // novelty and score bounds over random archives
    for case in 0..1000u64 {
        let mut rng = seeded(0x02_1000 + case);
        let size = rng.random_range(1..=12);
        let dimension = rng.random_range(1..=16);
        let archive = random_archive(&mut rng, size, dimension);
        let Some(record) = archive.selectable().next() else {
            continue;
        };
        let nov = knn_novelty(&archive, record.id, rng.random_range(1..=5), 1e-8).unwrap();
        assert!((0.0..=1.0).contains(&nov), "novelty {nov} out of bounds");
        let score = pn_score(record.performance, nov).unwrap();
        assert!((0.0..=1.0).contains(&score), "score {score} out of bounds");
    }

    // dyadic (exactly representable) entries for the ranking-layer laws
    let dyadic_entries = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<(AgentId, f64, f64)> {
        let n = rng.random_range(2..=20);
        let mut entries = Vec::with_capacity(n);
        let mut seen_products = Vec::new();
        for i in 0..n {
            loop {
                let alpha = rng.random_range(0..=64) as f64 / 64.0;
                let root = rng.random_range(0..=8) as f64;
                let novelty = (root / 8.0) * (root / 8.0);
                let product = alpha * novelty.sqrt();
                // allow exact duplicates of whole entries; avoid accidental
                // cross-entry score ties that scaling could re-round
                let clash = seen_products.iter().zip(entries.iter()).any(
                    |(p, e): (&f64, &(AgentId, f64, f64))| {
                        *p == product && (e.1, e.2) != (alpha, novelty)
                    },
                );
                if !clash {
                    seen_products.push(product);
                    entries.push((AgentId(i as u64), alpha, novelty));
                    break;
                }
            }
        }
        entries
    };

    // alpha-scaling invariance of the ranking, c in {0.1, 10}
    for case in 0..1000u64 {
        let mut rng = seeded(0x02_2000 + case);
        let entries = dyadic_entries(&mut rng);
        let baseline: Vec<AgentId> = rank_by_performance_novelty(&entries)
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        for c in [0.1f64, 10.0] {
            let scaled: Vec<(AgentId, f64, f64)> =
                entries.iter().map(|&(id, a, n)| (id, c * a, n)).collect();
            let got: Vec<AgentId> = rank_by_performance_novelty(&scaled)
                .into_iter()
                .map(|(id, _)| id)
                .collect();
            assert_eq!(got, baseline, "scaling by {c} changed the ranking");
        }
    }

    // alpha-monotonicity: raising one agent's performance never lowers its rank
    for case in 0..1000u64 {
        let mut rng = seeded(0x02_3000 + case);
        let mut entries = dyadic_entries(&mut rng);
        let target = rng.random_range(0..entries.len());
        let id = entries[target].0;
        let before = rank_by_performance_novelty(&entries)
            .iter()
            .position(|(x, _)| *x == id)
            .unwrap();
        entries[target].1 = (entries[target].1 + rng.random_range(1..=16) as f64 / 64.0).min(1.0);
        let after = rank_by_performance_novelty(&entries)
            .iter()
            .position(|(x, _)| *x == id)
            .unwrap();
        assert!(
            after <= before,
            "raising alpha moved agent {id} from {before} to {after}"
        );
    }

    pass(
        2,
        "distance/novelty/score laws hold on 1000 random cases each",
    );
}

// ---------------------------------------------------------------------------
// 3. Determinism / replay
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_determinism_and_replay() {
    let config = RunConfig {
        seed: 420,
        ..RunConfig::default()
    };

    let start = Instant::now();
    let first = engine::run(config.clone()).expect("run");
    let first_elapsed = start.elapsed();
    assert!(
        first_elapsed < Duration::from_secs(10),
        "one run took {first_elapsed:?}"
    );

    let second = engine::run(config).expect("run");
    assert_eq!(first, second, "same config and seed must reproduce exactly");

    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    first.save(&pa).unwrap();
    second.save(&pb).unwrap();
    assert_eq!(
        std::fs::read(&pa).unwrap(),
        std::fs::read(&pb).unwrap(),
        "byte-identical files"
    );

    let (aa, ab) = (
        dir.path().join("a-archive.jsonl"),
        dir.path().join("b-archive.jsonl"),
    );
    first.final_archive().unwrap().save(&aa).unwrap();
    second.final_archive().unwrap().save(&ab).unwrap();
    assert_eq!(std::fs::read(&aa).unwrap(), std::fs::read(&ab).unwrap());

    let report = engine::replay(&first).expect("replay");
    assert!(
        report.is_clean(),
        "replay diff not empty: {:?}",
        report.divergences
    );

    pass(
        3,
        "byte-identical transcripts across reruns and a clean replay diff",
    );
}

// ---------------------------------------------------------------------------
// 4. Loop invariants over full transcripts
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_loop_invariants() {
    for seed in 0..20u64 {
        let mode = if seed % 2 == 0 {
            EvolutionMode::Gea
        } else {
            EvolutionMode::Tree
        };
        let config = RunConfig {
            mode,
            seed,
            iterations: if mode == EvolutionMode::Tree { 20 } else { 10 },
            schedule: if mode == EvolutionMode::Tree {
                PhaseSchedule::default_two_phase(10).scaled(2)
            } else {
                PhaseSchedule::default_two_phase(10)
            },
            ..RunConfig::default()
        };
        let transcript = engine::run(config).expect("run");

        let mut size = transcript.header.initial_records.len();
        let mut best = 0.0f64;
        for it in &transcript.iterations {
            // |offspring| = |G|
            assert_eq!(it.offspring.len(), it.parents.members.len(), "seed {seed}");
            // archive append-only
            size += it.offspring.len();
            assert_eq!(
                it.archive_size, size,
                "seed {seed}: archive shrank or skipped"
            );
            // best-so-far non-decreasing
            assert!(
                it.best_performance >= best,
                "seed {seed}: best curve dropped"
            );
            best = it.best_performance;
            // contributor counts: group size in gea, exactly 1 in tree
            let contributors = it.shared_experience.contributors();
            match mode {
                EvolutionMode::Gea => {
                    assert_eq!(contributors.len(), it.parents.members.len(), "seed {seed}")
                }
                EvolutionMode::Tree => assert_eq!(contributors.len(), 1, "seed {seed}"),
            }
            // every adopt origin is a contributor
            for directive in &it.directives {
                for action in &directive.actions {
                    if let DirectiveAction::AdoptTool { origin, .. } = action {
                        assert!(contributors.contains(origin), "seed {seed}: foreign origin");
                    }
                }
            }
        }
    }
    pass(
        4,
        "offspring counts, append-only archive, best curve, contributor sets, origins",
    );
}

// ---------------------------------------------------------------------------
// 5. Staged evaluation
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_staged_evaluation() {
    let world = generate_world(60, 9, 0).unwrap();
    let plan = StagePlan::default();

    // 0/10 discarded, 1/10 passes
    let mut one = AgentRecord {
        id: AgentId(0),
        framework_parent: None,
        tools: [ToolTag::original("T1")].into_iter().collect(),
        broken_bugs: BTreeSet::new(),
        z: TaskSuccessVector::new(vec![true]),
        performance: 1.0,
        patches: Vec::new(),
        born_iteration: 0,
        gate_status: GateStatus::Passed,
    };
    assert!(sanity_gate(&one, &plan, &world), "1/10 sanity passes");
    let zero = AgentRecord {
        tools: Default::default(),
        ..one.clone()
    };
    assert!(
        !sanity_gate(&zero, &plan, &world),
        "0/10 sanity is discarded"
    );
    one.gate_status = GateStatus::FailedCompile;
    assert!(
        !sanity_gate(&one, &plan, &world),
        "compile failure dominates"
    );
    one.gate_status = GateStatus::Passed;

    // promotion boundary: 0.40 not promoted, 0.41 promoted
    let boundary_world = SimWorld {
        task_count: 100,
        tool_universe: vec!["T1".into(), "T2".into()],
        bug_count: 4,
        seed: 0,
        tasks: (0..100)
            .map(|index| TaskSpec {
                index,
                required_tools: if index < 40 {
                    ["T1".to_string()].into()
                } else if index < 41 {
                    ["T1".to_string(), "T2".to_string()].into()
                } else {
                    ["T2".to_string()].into()
                },
                bug_sensitive: Default::default(),
            })
            .collect(),
    };
    let boundary_plan = StagePlan {
        style: StageStyle::Promotion,
        sanity_set: (0..100).collect(),
        mid_set: (0..100).collect(),
        promote_threshold: 0.40,
        top_n_to_full: 2,
    };
    let mut archive = Archive::new(1, 0);
    // agent 0 solves the 40 T1-only tasks: exactly 0.40
    archive
        .insert(AgentRecord {
            id: AgentId(0),
            framework_parent: None,
            tools: [ToolTag::original("T1")].into_iter().collect(),
            broken_bugs: BTreeSet::new(),
            z: TaskSuccessVector::new(vec![true]),
            performance: 1.0,
            patches: Vec::new(),
            born_iteration: 0,
            gate_status: GateStatus::Passed,
        })
        .unwrap();
    // agent 1 holds both tools and solves everything: clearly promoted
    archive
        .insert(AgentRecord {
            id: AgentId(1),
            framework_parent: Some(AgentId(0)),
            tools: [ToolTag::original("T1"), ToolTag::original("T2")]
                .into_iter()
                .collect(),
            broken_bugs: BTreeSet::new(),
            z: TaskSuccessVector::new(vec![true]),
            performance: 1.0,
            patches: Vec::new(),
            born_iteration: 0,
            gate_status: GateStatus::Passed,
        })
        .unwrap();
    let report = run_promotion(&archive, &boundary_plan, &boundary_world).unwrap();
    let stage1: Vec<_> = report.rows_for_stage(1).collect();
    assert_eq!(stage1[0].score, 0.40);
    assert!(!stage1[0].advanced, "score 0.40 is strictly not above 0.40");
    assert_eq!(stage1[1].score, 1.0);
    assert!(stage1[1].advanced);

    // a 0.41 scorer: tools {T1} plus the pair task needs only checking the
    // arithmetic of strictness; use a dedicated agent in a dedicated world
    let fine_world = SimWorld {
        task_count: 100,
        tool_universe: vec!["T1".into(), "T2".into()],
        bug_count: 4,
        seed: 0,
        tasks: (0..100)
            .map(|index| TaskSpec {
                index,
                required_tools: if index < 41 {
                    ["T1".to_string()].into()
                } else {
                    ["T2".to_string()].into()
                },
                bug_sensitive: Default::default(),
            })
            .collect(),
    };
    let mut fine_archive = Archive::new(1, 0);
    fine_archive
        .insert(AgentRecord {
            id: AgentId(0),
            framework_parent: None,
            tools: [ToolTag::original("T1")].into_iter().collect(),
            broken_bugs: BTreeSet::new(),
            z: TaskSuccessVector::new(vec![true]),
            performance: 1.0,
            patches: Vec::new(),
            born_iteration: 0,
            gate_status: GateStatus::Passed,
        })
        .unwrap();
    let fine = run_promotion(&fine_archive, &boundary_plan, &fine_world).unwrap();
    let row = fine.rows_for_stage(1).next().unwrap();
    assert_eq!(row.score, 0.41);
    assert!(row.advanced, "score 0.41 is promoted");

    // unpromoted agents never touch the medium set
    assert_eq!(report.eval_calls["small"], 200);
    assert_eq!(
        report.eval_calls["medium"], 100,
        "only the promoted agent saw the medium set"
    );

    // funnel advances exactly the top-2, ties to the older id
    let mut funnel_archive = Archive::new(1, 7);
    for (i, tools) in [&["T1"][..], &["T1"], &["T1"], &["T1", "T2"]]
        .iter()
        .enumerate()
    {
        funnel_archive
            .insert(AgentRecord {
                id: AgentId(i as u64),
                framework_parent: (i > 0).then_some(AgentId(0)),
                tools: tools.iter().map(|t| ToolTag::original(*t)).collect(),
                broken_bugs: BTreeSet::new(),
                z: TaskSuccessVector::new(vec![true]),
                performance: 1.0,
                patches: Vec::new(),
                born_iteration: 0,
                gate_status: GateStatus::Passed,
            })
            .unwrap();
    }
    let funnel = run_funnel(&funnel_archive, &plan, &world).unwrap();
    let advanced: Vec<AgentId> = funnel
        .rows_for_stage(2)
        .filter(|r| r.advanced)
        .map(|r| r.agent_id)
        .collect();
    // agent 3 leads on the mid set; agents 0-2 tie and the oldest id wins
    assert_eq!(advanced, vec![AgentId(0), AgentId(3)]);
    assert_eq!(funnel.rows_for_stage(3).count(), 2);

    pass(
        5,
        "sanity gate, strict promotion boundary, top-2 funnel, untouched medium set",
    );
}

// ---------------------------------------------------------------------------
// 6. Main directional result
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_main_directional_result() {
    let (report, elapsed) = &*PAPER_DESK;
    assert_eq!(report.seeds.len(), 20);
    assert!(
        report.wins >= 15,
        "group mode must win at least 15/20 seeds, won {} (losses {}, ties {})",
        report.wins,
        report.losses,
        report.ties
    );
    let p = report.sign_test.p_value.expect("non-degenerate sign test");
    assert!(p < 0.05, "one-sided sign test p = {p}");
    assert!(
        *elapsed < Duration::from_secs(60),
        "20 matched pairs must finish under 60 s, took {elapsed:?}"
    );
    pass(
        6,
        "group final best beats the tree baseline in >= 15/20 matched seeds, p < 0.05",
    );
}

// ---------------------------------------------------------------------------
// 7. Ancestor integration
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_ancestor_integration() {
    let (report, _) = &*PAPER_DESK;
    assert!(
        report.gea.mean_best_ancestors > report.tree.mean_best_ancestors,
        "mean best-agent ancestors: group {} vs tree {}",
        report.gea.mean_best_ancestors,
        report.tree.mean_best_ancestors
    );

    // hand-built provenance fixtures against the reachability oracle
    let mut rng = seeded(0x07_0000);
    for case in 0..50 {
        let size = rng.random_range(2..=12);
        let archive = random_archive(&mut rng, size, 4);
        // edge list: framework parent + tool origins
        let mut edges: Vec<(u64, u64)> = Vec::new();
        for record in archive.records() {
            if let Some(parent) = record.framework_parent {
                edges.push((record.id.0, parent.0));
            }
            for tag in record.tools.iter() {
                if let Provenance::Agent(origin) = tag.origin {
                    edges.push((record.id.0, origin.0));
                }
            }
        }
        for record in archive.records() {
            let got: BTreeSet<u64> = archive
                .experience_ancestors(record.id, gea_core::archive::AncestryMode::Transitive)
                .unwrap()
                .into_iter()
                .map(|id| id.0)
                .collect();
            let expected = oracle_reachable(&edges, record.id.0);
            assert_eq!(got, expected, "case {case}, agent {}", record.id);
        }
    }
    pass(
        7,
        "group best integrates more unique ancestors; closure matches the oracle",
    );
}

// ---------------------------------------------------------------------------
// 8. Population elevation
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_population_elevation() {
    let (report, _) = &*PAPER_DESK;
    let favorable = report
        .gea_top5_worst
        .iter()
        .zip(&report.tree_top1)
        .filter(|(worst5, top1)| worst5 >= top1)
        .count();
    assert!(
        favorable >= 11,
        "group top-5 worst must reach the tree top-1 in a majority of seeds, got {favorable}/20"
    );
    pass(
        8,
        "worst of the group top-5 matches or beats the tree best in a majority of seeds",
    );
}

// ---------------------------------------------------------------------------
// 9. Tool consolidation
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_tool_consolidation() {
    let (report, _) = &*PAPER_DESK;
    assert!(
        report.gea.mean_integrated_tools > report.tree.mean_integrated_tools,
        "mean integrated tools: group {} vs tree {}",
        report.gea.mean_integrated_tools,
        report.tree.mean_integrated_tools
    );

    // integrated >= discovered with zero violations, checked over fresh runs
    for seed in 0..10u64 {
        let transcript = engine::run(RunConfig {
            seed,
            ..RunConfig::default()
        })
        .unwrap();
        let world = transcript.header.config.materialize_world().unwrap();
        let timeline = analysis::tool_timeline(&transcript, &world).unwrap();
        for row in &timeline.rows {
            if let Some(integrated) = row.integrated_iteration {
                let discovered = row
                    .discovered_iteration
                    .expect("integrated implies discovered");
                assert!(
                    integrated >= discovered,
                    "{}: {integrated} < {discovered}",
                    row.tool
                );
            }
        }
    }

    // lineage isolation: some tree-baseline tool is explored in a branch that
    // never reaches the best lineage (discovered, never integrated)
    let mut stranded = 0;
    for seed in 0..5u64 {
        let config = RunConfig {
            seed,
            ..RunConfig::default()
        }
        .tree_counterpart();
        let transcript = engine::run(config).unwrap();
        let world = transcript.header.config.materialize_world().unwrap();
        let timeline = analysis::tool_timeline(&transcript, &world).unwrap();
        stranded += timeline
            .rows
            .iter()
            .filter(|r| r.discovered_iteration.is_some() && r.integrated_iteration.is_none())
            .count();
    }
    assert!(
        stranded > 0,
        "tree baselines strand at least one discovered tool"
    );

    pass(
        9,
        "group integrates more tools into its best agent; timelines stay consistent",
    );
}

// ---------------------------------------------------------------------------
// 10. Robustness
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_robustness_direction() {
    let start = Instant::now();

    // default profiles
    let experiment = ExperimentConfig::paper_desk();
    let report = run_robustness(&experiment, 20, None).expect("robustness trials");
    assert!(
        report.summary.mean_gea < report.summary.mean_tree,
        "mean repair iterations: group {} vs tree {}",
        report.summary.mean_gea,
        report.summary.mean_tree
    );

    // certain shared repair: group mode repairs in exactly one iteration
    let mut certain = ExperimentConfig::paper_desk();
    for phase in &mut certain.run.schedule.phases {
        phase.profile.repair_probability_shared = 1.0;
    }
    let certain_report = run_robustness(&certain, 20, None).expect("certain repair trials");
    for trial in &certain_report.trials {
        if trial.mode == EvolutionMode::Gea {
            assert_eq!(
                trial.repair_iterations,
                Some(1),
                "trial {}: certain shared repair must land in one iteration",
                trial.trial
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed < Duration::from_secs(30),
        "robustness suite took {elapsed:?}"
    );
    pass(
        10,
        "group repairs injected bugs faster; certain shared repair lands in one step",
    );
}

// ---------------------------------------------------------------------------
// 11. Persistence
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_persistence() {
    let dir = tempfile::tempdir().unwrap();

    // 500 random archives, sizes 0..=100
    let mut rng = seeded(0x11_0000);
    for case in 0..500 {
        let size = rng.random_range(0..=100);
        let dimension = rng.random_range(1..=24);
        let archive = random_archive(&mut rng, size, dimension);
        let path = dir.path().join("archive.jsonl");
        archive.save(&path).unwrap();
        let loaded = Archive::load(&path).unwrap();
        assert_eq!(archive, loaded, "archive case {case}");
    }

    // worlds
    for seed in 0..60u64 {
        let world =
            generate_world(10 + (seed as usize % 60), 1 + (seed as usize % 9), seed).unwrap();
        let path = dir.path().join("world.jsonl");
        world.save(&path).unwrap();
        assert_eq!(world, SimWorld::load(&path).unwrap(), "world seed {seed}");
    }

    // transcripts from small runs
    for seed in 0..40u64 {
        let config = RunConfig {
            seed,
            iterations: 4,
            schedule: PhaseSchedule::default_two_phase(4),
            world: WorldSource::Generate {
                task_count: 24,
                n_tools: 4,
                seed: None,
            },
            gate: (0..4).collect(),
            stage_plan: StagePlan {
                style: StageStyle::Funnel,
                sanity_set: (0..4).collect(),
                mid_set: (4..24).collect(),
                promote_threshold: 0.4,
                top_n_to_full: 2,
            },
            mode: if seed % 2 == 0 {
                EvolutionMode::Gea
            } else {
                EvolutionMode::Tree
            },
            ..RunConfig::default()
        };
        let transcript = engine::run(config).unwrap();
        let path = dir.path().join("transcript.jsonl");
        transcript.save(&path).unwrap();
        assert_eq!(
            transcript,
            engine::RunTranscript::load(&path).unwrap(),
            "run seed {seed}"
        );
    }

    // corrupt fixtures: line-accurate errors
    let mut rng = seeded(0x11_9999);
    let archive = random_archive(&mut rng, 5, 8);
    let path = dir.path().join("corrupt.jsonl");
    archive.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    // truncate the final line mid-record
    let truncated: String = {
        let mut t = text.trim_end().to_string();
        t.truncate(t.len() - 10);
        t
    };
    std::fs::write(&path, &truncated).unwrap();
    match Archive::load(&path) {
        Err(GeaError::Parse { line, .. }) => assert_eq!(line, 6, "header + 5 records"),
        other => panic!("expected a parse error at line 6, got {other:?}"),
    }

    // version mismatch
    let versioned = text.replacen("\"format_version\":1", "\"format_version\":9", 1);
    std::fs::write(&path, &versioned).unwrap();
    match Archive::load(&path) {
        Err(GeaError::FormatVersion {
            found: 9,
            expected: 1,
        }) => {}
        other => panic!("expected a version error, got {other:?}"),
    }

    // malformed middle line
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{ not json";
    std::fs::write(&path, lines.join("\n")).unwrap();
    match Archive::load(&path) {
        Err(GeaError::Parse { line: 3, .. }) => {}
        other => panic!("expected a parse error at line 3, got {other:?}"),
    }

    pass(
        11,
        "600 random round trips are exact; corrupt files fail with line numbers",
    );
}

// ---------------------------------------------------------------------------
// 12. Remote operator boundary
// ---------------------------------------------------------------------------

fn remote_fixture() -> (AgentRecord, gea_core::traces::SharedExperience) {
    let world = generate_world(30, 4, 3).unwrap();
    let probe: Vec<usize> = (0..30).collect();
    let mut agent = AgentRecord {
        id: AgentId(0),
        framework_parent: None,
        tools: [ToolTag::original("T1")].into_iter().collect(),
        broken_bugs: BTreeSet::new(),
        z: TaskSuccessVector::zeros(30),
        performance: 0.0,
        patches: Vec::new(),
        born_iteration: 0,
        gate_status: GateStatus::Passed,
    };
    agent.z = world.evaluate_subset(&agent.phenotype(), &probe);
    agent.performance = agent.z.success_rate();
    let mut rng = seeded(99);
    let trace = collect_trace(&agent, &world, &probe, &mut rng);
    (agent, traces::self_only(trace))
}

#[test]
fn criterion_12_remote_operator_boundary() {
    // happy path: empty directive echoed back; request schema checked
    let (agent, shared) = remote_fixture();
    let response =
        r#"{"directive":{"agent":0,"actions":[],"rationale":"nothing to do"}}"#.to_string();
    let (url, rx) = stub_server(200, response, Duration::ZERO);
    let operator = RemoteOperator::new(url, Duration::from_secs(2), Some("sesame".into()));
    let directive = operator
        .reflect(&agent, &shared)
        .expect("empty directive accepted");
    assert!(directive.actions.is_empty());

    let request = rx
        .recv_timeout(Duration::from_secs(2))
        .expect("request captured");
    assert_eq!(request.path, "/reflect");
    let body: serde_json::Value = serde_json::from_str(&request.body).unwrap();
    assert_eq!(body["schema"], "gea-operator/1");
    assert!(
        body["agent"].get("z").is_none(),
        "success-vector internals stay off the wire"
    );
    assert!(body["agent"].get("id").is_some());
    assert!(body.get("shared_experience").is_some());
    assert!(
        request
            .headers
            .iter()
            .any(|h| h.eq_ignore_ascii_case("authorization: Bearer sesame")),
        "bearer token header present: {:?}",
        request.headers
    );

    // schema violation: adopt origin outside the shared experience
    let bad = r#"{"directive":{"agent":0,"actions":[{"action":"adopt-tool","tool":"T2","origin":7}],"rationale":""}}"#;
    let (url, _rx) = stub_server(200, bad.to_string(), Duration::ZERO);
    let operator = RemoteOperator::new(url, Duration::from_secs(2), None);
    match operator.reflect(&agent, &shared) {
        Err(GeaError::RemoteOperator {
            kind: RemoteErrorKind::Schema,
            ..
        }) => {}
        other => panic!("expected a schema error, got {other:?}"),
    }

    // malformed response body
    let (url, _rx) = stub_server(200, "{\"nope\":1}".to_string(), Duration::ZERO);
    let operator = RemoteOperator::new(url, Duration::from_secs(2), None);
    assert!(matches!(
        operator.reflect(&agent, &shared),
        Err(GeaError::RemoteOperator {
            kind: RemoteErrorKind::Schema,
            ..
        })
    ));

    // non-2xx status
    let (url, _rx) = stub_server(500, "{}".to_string(), Duration::ZERO);
    let operator = RemoteOperator::new(url, Duration::from_secs(2), None);
    assert!(matches!(
        operator.reflect(&agent, &shared),
        Err(GeaError::RemoteOperator {
            kind: RemoteErrorKind::Status,
            ..
        })
    ));

    // timeout: server answers after 2 s, client allows 300 ms
    let slow = r#"{"directive":{"agent":0,"actions":[],"rationale":""}}"#.to_string();
    let (url, _rx) = stub_server(200, slow, Duration::from_secs(2));
    let operator = RemoteOperator::new(url, Duration::from_millis(300), None);
    match operator.reflect(&agent, &shared) {
        Err(GeaError::RemoteOperator { kind, .. }) => {
            assert!(
                kind == RemoteErrorKind::Timeout || kind == RemoteErrorKind::Transport,
                "slow server must surface as timeout, got {kind}"
            );
        }
        other => panic!("expected a timeout, got {other:?}"),
    }

    // evolve round trip
    let patches = r#"{"patches":[{"id":0,"kind":{"type":"repair-bug","bug":2},"delta_score":null,"source_agent":"self","ineffective":false}]}"#;
    let (url, rx) = stub_server(200, patches.to_string(), Duration::ZERO);
    let operator = RemoteOperator::new(url, Duration::from_secs(2), None);
    let directive = Directive {
        agent: agent.id,
        actions: vec![],
        rationale: String::new(),
    };
    let got = operator.evolve(&agent, &directive).expect("patches parsed");
    assert_eq!(got.len(), 1);
    let request = rx.recv_timeout(Duration::from_secs(2)).unwrap();
    assert_eq!(request.path, "/evolve");
    let body: serde_json::Value = serde_json::from_str(&request.body).unwrap();
    assert_eq!(body["schema"], "gea-operator/1");
    assert!(body.get("directive").is_some());

    pass(
        12,
        "remote schemas, token, timeout, and origin validation behave at the boundary",
    );
}
