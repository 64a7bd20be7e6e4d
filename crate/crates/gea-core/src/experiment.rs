//! Experiment orchestration behind the CLI: configuration files, multi-seed
//! comparisons, the robustness (bug-injection) harness, transcript analysis,
//! and replay verification. Everything is a pure function of the config, and
//! every output file is byte-stable across reruns.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, ancestor_table, compare, repair_iterations, tool_timeline, BugInjectionRecord,
    ComparisonReport, RobustnessSummary,
};
use crate::archive::{AgentId, AgentRecord, Archive, GateStatus, ToolSet, ToolTag};
use crate::engine::{self, EvolutionMode, ReplayReport, RunConfig, RunTranscript};
use crate::error::{GeaError, Result};
use crate::evaluation::{run_funnel, run_promotion, StageStyle};
use crate::operators::PhaseSchedule;
use crate::persist;
use crate::seeding::{self, STREAM_ROBUSTNESS};
use crate::simenv::{self, SimWorld};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Top-k ranks reported in ancestor tables.
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
    /// Iteration cap for robustness repair runs.
    #[serde(default = "default_robustness_cap")]
    pub robustness_cap: u32,
}

fn default_ranks() -> Vec<usize> {
    vec![1, 3, 5]
}

fn default_robustness_cap() -> u32 {
    25
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            ranks: default_ranks(),
            robustness_cap: default_robustness_cap(),
        }
    }
}

/// A whole experiment: one run config plus the seeds it fans out over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub analysis: AnalysisOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper_desk()
    }
}

impl ExperimentConfig {
    /// The desk-scale preset: a 60-task, 9-tool world, K=2 / M=4 selection,
    /// 30 group iterations against a 60-iteration tree baseline, 20 seeds.
    pub fn paper_desk() -> Self {
        ExperimentConfig {
            run: RunConfig::default(),
            seeds: (0..20).collect(),
            analysis: AnalysisOptions::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| GeaError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(GeaError::InvalidConfig(
                "seeds must be non-empty".to_string(),
            ));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(GeaError::InvalidConfig(
                "seeds must be distinct".to_string(),
            ));
        }
        Ok(())
    }
}

/// Output directory layout shared by all commands.
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["transcripts", "archives", "reports", "curves"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(OutputLayout { root })
    }

    pub fn transcript(&self, name: &str) -> PathBuf {
        self.root.join("transcripts").join(format!("{name}.jsonl"))
    }

    pub fn archive(&self, name: &str) -> PathBuf {
        self.root.join("archives").join(format!("{name}.jsonl"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn curve(&self, name: &str) -> PathBuf {
        self.root.join("curves").join(format!("{name}.csv"))
    }
}

fn run_name(mode: EvolutionMode, seed: u64) -> String {
    let mode = match mode {
        EvolutionMode::Gea => "gea",
        EvolutionMode::Tree => "tree",
    };
    format!("{mode}-seed{seed}")
}

/// Execute one run and persist its transcript and final archive.
pub fn run_single(config: RunConfig, out: &OutputLayout) -> Result<(RunTranscript, PathBuf)> {
    let transcript = engine::run(config)?;
    let name = run_name(transcript.header.config.mode, transcript.header.config.seed);
    let path = out.transcript(&name);
    transcript.save(&path)?;
    transcript.final_archive()?.save(&out.archive(&name))?;
    Ok((transcript, path))
}

fn curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("evolved_agents,best_success\n");
    for (i, v) in curve.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, v);
    }
    out
}

/// Run matched GEA/tree pairs for every seed and assemble the comparison
/// report. Pairs run concurrently up to `jobs`.
pub fn run_compare(
    experiment: &ExperimentConfig,
    out: &OutputLayout,
    jobs: usize,
) -> Result<ComparisonReport> {
    experiment.validate()?;
    let jobs = jobs.max(1);

    let mut pair_configs = Vec::new();
    for &seed in &experiment.seeds {
        let gea = RunConfig {
            mode: EvolutionMode::Gea,
            seed,
            ..experiment.run.clone()
        };
        let tree = gea.tree_counterpart();
        pair_configs.push((gea, tree));
    }

    let mut gea_runs = Vec::new();
    let mut tree_runs = Vec::new();
    for chunk in pair_configs.chunks(jobs) {
        let outcomes: Vec<Result<(RunTranscript, RunTranscript)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(gea, tree)| {
                    scope.spawn(move || -> Result<(RunTranscript, RunTranscript)> {
                        Ok((engine::run(gea.clone())?, engine::run(tree.clone())?))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker does not panic"))
                .collect()
        });
        for outcome in outcomes {
            let (gea, tree) = outcome?;
            gea_runs.push(gea);
            tree_runs.push(tree);
        }
    }

    for (gea, tree) in gea_runs.iter().zip(&tree_runs) {
        let seed = gea.header.config.seed;
        gea.save(&out.transcript(&run_name(EvolutionMode::Gea, seed)))?;
        tree.save(&out.transcript(&run_name(EvolutionMode::Tree, seed)))?;
        persist::write_atomic(
            &out.curve(&run_name(EvolutionMode::Gea, seed)),
            curve_csv(&analysis::best_curve(gea, gea.evolved_count())).as_bytes(),
        )?;
        persist::write_atomic(
            &out.curve(&run_name(EvolutionMode::Tree, seed)),
            curve_csv(&analysis::best_curve(tree, tree.evolved_count())).as_bytes(),
        )?;
    }

    let report = compare(&gea_runs, &tree_runs)?;
    persist::write_atomic(
        &out.report("comparison.json"),
        serde_json::to_string_pretty(&report)
            .map_err(|e| GeaError::InvalidConfig(e.to_string()))?
            .as_bytes(),
    )?;
    persist::write_atomic(
        &out.curve("mean-gea"),
        curve_csv(&report.mean_curve_gea).as_bytes(),
    )?;
    persist::write_atomic(
        &out.curve("mean-tree"),
        curve_csv(&report.mean_curve_tree).as_bytes(),
    )?;

    let mut wins_csv = String::from("seed,gea_final_best,tree_final_best\n");
    for ((seed, g), t) in report
        .seeds
        .iter()
        .zip(&report.gea.final_best)
        .zip(&report.tree.final_best)
    {
        let _ = writeln!(wins_csv, "{seed},{g},{t}");
    }
    persist::write_atomic(&out.report("final-best.csv"), wins_csv.as_bytes())?;
    Ok(report)
}

/// Strip run-specific identity from a record so it can seed a fresh archive.
fn rebase_record(record: &AgentRecord, new_id: AgentId) -> AgentRecord {
    AgentRecord {
        id: new_id,
        framework_parent: None,
        tools: record
            .tools
            .names()
            .map(ToolTag::original)
            .collect::<ToolSet>(),
        broken_bugs: record.broken_bugs.clone(),
        z: record.z.clone(),
        performance: record.performance,
        patches: Vec::new(),
        born_iteration: 0,
        gate_status: GateStatus::Passed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTrial {
    pub trial: usize,
    pub mode: EvolutionMode,
    /// Agent sampled from the base archive.
    pub sampled_agent: AgentId,
    pub injection: BugInjectionRecord,
    pub partner: Option<AgentId>,
    pub repair_iterations: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub trials: Vec<RobustnessTrial>,
    pub summary: RobustnessSummary,
}

/// The bug-injection protocol: sample an agent from a completed group-mode
/// archive, inject a performance-visible bug, then measure repair time under
/// (a) group evolution paired with a bug-free member of its original parent
/// group and (b) isolated self-evolution.
pub fn run_robustness(
    experiment: &ExperimentConfig,
    trials: usize,
    out: Option<&OutputLayout>,
) -> Result<RobustnessReport> {
    experiment.validate()?;
    if trials == 0 {
        return Err(GeaError::InvalidConfig(
            "robustness needs at least one trial".to_string(),
        ));
    }

    // base run to sample faulty agents from
    let base_config = RunConfig {
        mode: EvolutionMode::Gea,
        seed: experiment.seeds[0],
        ..experiment.run.clone()
    };
    let base = engine::run(base_config.clone())?;
    let base_archive = base.final_archive()?;
    let world = base_config.materialize_world()?;
    let probe = base_config.probe_indices(&world);
    let cap = experiment.analysis.robustness_cap;

    let mut all_trials = Vec::new();
    let mut gea_outcomes = Vec::new();
    let mut tree_outcomes = Vec::new();

    for trial in 0..trials {
        for mode in [EvolutionMode::Gea, EvolutionMode::Tree] {
            let mode_tag = match mode {
                EvolutionMode::Gea => 0u64,
                EvolutionMode::Tree => 1u64,
            };
            let trial_seed = seeding::mix(&[
                STREAM_ROBUSTNESS,
                experiment.seeds[0],
                trial as u64,
                mode_tag,
            ]);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);

            let (sampled, faulty, bug) =
                sample_injection(&base, &base_archive, &world, &probe, &mut rng)?;
            let pre_performance = sampled.performance;

            // pick a bug-free agent from the sampled agent's original parent
            // group (group mode only)
            let partner = match mode {
                EvolutionMode::Gea => {
                    let birth = &base.iterations[sampled.born_iteration as usize];
                    let members = &birth.parents.members;
                    Some(members[rng.random_range(0..members.len())])
                }
                EvolutionMode::Tree => None,
            };

            let mut initial = Archive::new(probe.len(), trial_seed);
            let faulty_id;
            match partner {
                Some(partner_id) => {
                    let partner_record = base_archive
                        .get(partner_id)
                        .ok_or(GeaError::AgentNotFound(partner_id))?;
                    initial.insert(rebase_record(partner_record, AgentId(0)))?;
                    faulty_id = AgentId(1);
                    initial.insert(rebase_record(&faulty, faulty_id))?;
                }
                None => {
                    faulty_id = AgentId(0);
                    initial.insert(rebase_record(&faulty, faulty_id))?;
                }
            }

            // pin the world source so the repair transcript references the
            // same world even though its run seed differs
            let repair_config = RunConfig {
                mode,
                iterations: cap,
                schedule: PhaseSchedule::uniform(
                    cap,
                    experiment.run.schedule.phases[0].profile.clone(),
                ),
                seed: trial_seed,
                world: crate::engine::WorldSource::Generate {
                    task_count: world.task_count,
                    n_tools: world.tool_universe.len(),
                    seed: Some(world.seed),
                },
                ..experiment.run.clone()
            };
            let transcript = repair_run(repair_config, &world, &probe, initial)?;

            let injection = BugInjectionRecord {
                faulty_agent: faulty_id,
                bug,
                pre_performance,
            };
            let repaired = repair_iterations(&transcript, &injection)?;

            match mode {
                EvolutionMode::Gea => gea_outcomes.push(repaired),
                EvolutionMode::Tree => tree_outcomes.push(repaired),
            }
            all_trials.push(RobustnessTrial {
                trial,
                mode,
                sampled_agent: sampled.id,
                injection,
                partner,
                repair_iterations: repaired,
            });
        }
    }

    let summary = RobustnessSummary::from_trials(cap, gea_outcomes, tree_outcomes);
    let report = RobustnessReport {
        trials: all_trials,
        summary,
    };

    if let Some(out) = out {
        persist::write_atomic(
            &out.report("robustness.json"),
            serde_json::to_string_pretty(&report)
                .map_err(|e| GeaError::InvalidConfig(e.to_string()))?
                .as_bytes(),
        )?;
        persist::write_atomic(
            &out.report("robustness.csv"),
            report.summary.to_csv().as_bytes(),
        )?;
    }
    Ok(report)
}

/// Iterated group evolution over pinned lineages, the repair protocol's loop:
/// each iteration the group is the latest member of every initial lineage
/// (the faulty line plus, in group mode, the bug-free partner's line), with
/// no re-selection over the growing archive. Returns a normal transcript so
/// repair iterations are measured off the recorded offspring.
fn repair_run(
    config: RunConfig,
    world: &SimWorld,
    probe: &[usize],
    initial: Archive,
) -> Result<RunTranscript> {
    let initial_records = initial.records().to_vec();
    let mut archive = initial;
    let mut lineage_heads: Vec<AgentId> = initial_records.iter().map(|r| r.id).collect();
    let mut next_patch_id = 0u64;
    let mut iterations = Vec::with_capacity(config.iterations as usize);

    for iteration in 0..config.iterations {
        let profile = config.schedule.profile_at(iteration)?.clone();

        let mut collected = Vec::with_capacity(lineage_heads.len());
        for &id in &lineage_heads {
            let record = archive.get(id).ok_or(GeaError::AgentNotFound(id))?.clone();
            let mut rng = seeding::agent_step_rng(config.seed, iteration, id.0);
            let trace = crate::traces::collect_trace(&record, world, probe, &mut rng);
            collected.push((record, trace, rng));
        }
        let shared =
            crate::traces::aggregate(collected.iter().map(|(_, t, _)| t.clone()).collect())?;

        // informational scores for the transcript, same criterion as selection
        let mut scored: Vec<(AgentId, f64)> = Vec::new();
        for (record, _, _) in &collected {
            let nov = crate::selection::knn_novelty(
                &archive,
                record.id,
                config.selection.neighborhood,
                config.selection.epsilon,
            )?;
            scored.push((
                record.id,
                crate::selection::pn_score(record.performance, nov)?,
            ));
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite score")
                .then_with(|| a.0.cmp(&b.0))
        });
        let parents = crate::selection::ParentGroup {
            members: scored.iter().map(|(id, _)| *id).collect(),
            scores: scored.iter().map(|(_, s)| *s).collect(),
        };

        let mut directives = Vec::new();
        let mut offspring = Vec::new();
        let mut new_heads = Vec::with_capacity(lineage_heads.len());
        for (parent, own_trace, mut rng) in collected {
            let experience = match config.mode {
                EvolutionMode::Gea => shared.clone(),
                EvolutionMode::Tree => crate::traces::self_only(own_trace),
            };
            let directive = crate::operators::reflect(&parent, &experience, &profile, &mut rng);
            crate::traces::validate_directive(&directive, &experience)?;
            let mut patches = crate::operators::evolve(
                &parent,
                &directive,
                &experience,
                world,
                &profile,
                &mut next_patch_id,
                &mut rng,
            );
            let outcome = crate::operators::act(&parent, &mut patches, world, probe);

            let mut history = parent.patches.clone();
            history.extend(patches.iter().cloned());
            let mut child = crate::archive::AgentRecord {
                id: archive.next_id(),
                framework_parent: Some(parent.id),
                tools: outcome.phenotype.tools,
                broken_bugs: outcome.phenotype.broken_bugs,
                z: outcome.z,
                performance: outcome.performance,
                patches: history,
                born_iteration: iteration,
                gate_status: GateStatus::Passed,
            };
            if !crate::engine::patch_set_compiles(&patches, world) {
                child.gate_status = GateStatus::FailedCompile;
            } else if !config
                .gate
                .iter()
                .any(|&t| world.task_solved(&child.phenotype(), t))
            {
                child.gate_status = GateStatus::FailedBasic;
            }
            archive.insert(child.clone())?;
            new_heads.push(child.id);
            directives.push(directive);
            offspring.push(child);
        }
        lineage_heads = new_heads;

        let best = archive.best_selectable().ok_or(GeaError::EmptyArchive)?;
        iterations.push(crate::engine::IterationRecord {
            iteration,
            parents,
            shared_experience: shared,
            directives,
            offspring,
            archive_size: archive.len(),
            best_agent: best.id,
            best_performance: best.performance,
        });
    }

    Ok(RunTranscript {
        header: crate::engine::TranscriptHeader {
            format_version: crate::engine::TRANSCRIPT_FORMAT_VERSION,
            config,
            initial_records,
        },
        iterations,
    })
}

/// Sample a non-initial selectable agent and a bug whose injection visibly
/// drops its probe performance.
fn sample_injection(
    base: &RunTranscript,
    archive: &Archive,
    world: &SimWorld,
    probe: &[usize],
    rng: &mut impl Rng,
) -> Result<(AgentRecord, AgentRecord, crate::archive::BugId)> {
    let initial_count = base.header.initial_records.len() as u64;
    let candidates: Vec<&AgentRecord> = archive
        .selectable()
        .filter(|r| r.id.0 >= initial_count)
        .collect();
    if candidates.is_empty() {
        return Err(GeaError::EmptyArchive);
    }
    // bounded resampling: an injection must strictly drop performance
    for _ in 0..1000 {
        let agent = candidates[rng.random_range(0..candidates.len())];
        let bug = crate::archive::BugId(rng.random_range(1..=world.bug_count));
        let faulty = simenv::inject_bug(agent, bug, world, probe)?;
        if faulty.performance < agent.performance {
            return Ok((agent.clone(), faulty, bug));
        }
    }
    Err(GeaError::InvalidConfig(
        "no (agent, bug) pair with a performance-visible injection found".to_string(),
    ))
}

/// Reports produced for one transcript: ancestor table, tool timeline, stage
/// report, and the per-patch score trajectories of the top agents.
pub fn analyze_transcript(path: &Path, ranks: &[usize], out: &OutputLayout) -> Result<()> {
    let transcript = RunTranscript::load(path)?;
    let archive = transcript.final_archive()?;
    let config = &transcript.header.config;
    let world = config.materialize_world()?;

    let ancestors = ancestor_table(&transcript, ranks)?;
    persist::write_atomic(&out.report("ancestors.csv"), ancestors.to_csv().as_bytes())?;
    persist::write_atomic(
        &out.report("ancestors.json"),
        serde_json::to_string_pretty(&ancestors)
            .map_err(|e| GeaError::InvalidConfig(e.to_string()))?
            .as_bytes(),
    )?;

    let timeline = tool_timeline(&transcript, &world)?;
    persist::write_atomic(
        &out.report("tool-timeline.csv"),
        timeline.to_csv().as_bytes(),
    )?;

    let stage_report = match config.stage_plan.style {
        StageStyle::Funnel => run_funnel(&archive, &config.stage_plan, &world)?,
        StageStyle::Promotion => run_promotion(&archive, &config.stage_plan, &world)?,
    };
    persist::write_atomic(&out.report("stages.csv"), stage_report.to_csv().as_bytes())?;
    persist::write_atomic(
        &out.report("stages.json"),
        serde_json::to_string_pretty(&stage_report)
            .map_err(|e| GeaError::InvalidConfig(e.to_string()))?
            .as_bytes(),
    )?;

    persist::write_atomic(
        &out.report("patch-trajectories.csv"),
        patch_trajectories_csv(&archive).as_bytes(),
    )?;

    persist::write_atomic(
        &out.curve("best"),
        curve_csv(&analysis::best_curve(
            &transcript,
            transcript.evolved_count(),
        ))
        .as_bytes(),
    )?;
    Ok(())
}

/// Per-patch score trajectories of the top-3 agents, one row per patch.
fn patch_trajectories_csv(archive: &Archive) -> String {
    let mut ranked: Vec<&AgentRecord> = archive.selectable().collect();
    ranked.sort_by(|a, b| {
        b.performance
            .partial_cmp(&a.performance)
            .expect("finite performance")
            .then_with(|| a.id.cmp(&b.id))
    });
    let mut out = String::from("rank,agent_id,patch_id,description,delta_score\n");
    for (rank, agent) in ranked.iter().take(3).enumerate() {
        for patch in &agent.patches {
            let delta = patch
                .delta_score
                .map(|d| d.to_string())
                .unwrap_or_else(|| "unmeasured".to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                rank + 1,
                agent.id,
                patch.id,
                patch.kind,
                delta
            );
        }
    }
    out
}

/// Replay a transcript file and report divergences.
pub fn replay_transcript(path: &Path) -> Result<ReplayReport> {
    let transcript = RunTranscript::load(path)?;
    engine::replay(&transcript)
}
