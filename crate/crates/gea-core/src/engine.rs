//! The open-ended evolution loops and their replayable transcripts.
//!
//! Group mode selects a parent group each iteration and shares every
//! member's trace with every member; tree mode selects a single parent that
//! sees only its own trace, the matched-budget baseline. All offspring are
//! archived (gate failures flagged, non-selectable), and every stochastic
//! draw comes from a seed-derived stream, so a run is a pure function of its
//! config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archive::{AgentId, AgentRecord, Archive, GateStatus, Patch, PatchKind, ToolTag};
use crate::error::{GeaError, Result};
use crate::evaluation::{StagePlan, StageStyle};
use crate::operators::{self, PhaseSchedule};
use crate::persist;
use crate::remote::RemoteOperator;
use crate::seeding;
use crate::selection::{self, ParentGroup, SelectionConfig};
use crate::simenv::{self, SimWorld};
use crate::traces::{self, SharedExperience};

pub const TRANSCRIPT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolutionMode {
    Gea,
    Tree,
}

/// Where the run's world comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorldSource {
    Generate {
        #[serde(rename = "D")]
        task_count: usize,
        n_tools: usize,
        /// Defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    File {
        path: String,
    },
}

/// Which task set defines the selection-time success vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ZSource {
    /// The evolution-stage set: mid set for funnel plans, small set for
    /// promotion plans.
    #[default]
    EvolutionStage,
    /// The whole task set.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "backend", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorBackend {
    #[default]
    Scripted,
    Remote {
        base_url: String,
        timeout_ms: u64,
    },
}

fn default_gate() -> Vec<usize> {
    (0..10).collect()
}

/// Everything one evolution run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: EvolutionMode,
    #[serde(default)]
    pub selection: SelectionConfig,
    pub schedule: PhaseSchedule,
    pub iterations: u32,
    pub world: WorldSource,
    pub seed: u64,
    /// Sanity-set task indices for the offspring gate.
    #[serde(default = "default_gate")]
    pub gate: Vec<usize>,
    #[serde(default)]
    pub stage_plan: StagePlan,
    #[serde(default)]
    pub operator: OperatorBackend,
    #[serde(default)]
    pub z_source: ZSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: EvolutionMode::Gea,
            selection: SelectionConfig::default(),
            schedule: PhaseSchedule::default_two_phase(30),
            iterations: 30,
            world: WorldSource::Generate {
                task_count: 60,
                n_tools: 9,
                seed: None,
            },
            seed: 0,
            gate: default_gate(),
            stage_plan: StagePlan::default(),
            operator: OperatorBackend::default(),
            z_source: ZSource::default(),
        }
    }
}

impl RunConfig {
    /// The matched-budget baseline config: tree mode, iterations and phase
    /// boundaries scaled by the group size.
    pub fn tree_counterpart(&self) -> RunConfig {
        let factor = self.selection.group_size as u32;
        RunConfig {
            mode: EvolutionMode::Tree,
            iterations: self.iterations * factor,
            schedule: self.schedule.scaled(factor),
            ..self.clone()
        }
    }

    pub fn materialize_world(&self) -> Result<SimWorld> {
        match &self.world {
            WorldSource::Generate {
                task_count,
                n_tools,
                seed,
            } => simenv::generate_world(*task_count, *n_tools, seed.unwrap_or(self.seed)),
            WorldSource::File { path } => SimWorld::load(Path::new(path)),
        }
    }

    /// Task indices whose success bits form the selection-time vector.
    pub fn probe_indices(&self, world: &SimWorld) -> Vec<usize> {
        match self.z_source {
            ZSource::Full => (0..world.task_count).collect(),
            ZSource::EvolutionStage => match self.stage_plan.style {
                StageStyle::Funnel => self.stage_plan.mid_set.clone(),
                StageStyle::Promotion => self.stage_plan.sanity_set.clone(),
            },
        }
    }

    pub fn validate(&self, world: &SimWorld) -> Result<()> {
        self.selection.validate()?;
        if self.iterations < 1 {
            return Err(GeaError::InvalidConfig(
                "iterations must be at least 1".to_string(),
            ));
        }
        self.schedule.validate(self.iterations)?;
        if self.gate.is_empty() {
            return Err(GeaError::InvalidConfig(
                "gate sanity set is empty".to_string(),
            ));
        }
        for &t in &self.gate {
            if t >= world.task_count {
                return Err(GeaError::InvalidConfig(format!(
                    "gate task index {t} outside world of {} tasks",
                    world.task_count
                )));
            }
        }
        self.stage_plan.validate(world)?;
        if self.probe_indices(world).is_empty() {
            return Err(GeaError::InvalidConfig(
                "selection probe set is empty".to_string(),
            ));
        }
        Ok(())
    }
}

/// Everything recorded about one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationRecord {
    pub iteration: u32,
    pub parents: ParentGroup,
    pub shared_experience: SharedExperience,
    pub directives: Vec<traces::Directive>,
    pub offspring: Vec<AgentRecord>,
    pub archive_size: usize,
    pub best_agent: AgentId,
    pub best_performance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptHeader {
    pub format_version: u32,
    pub config: RunConfig,
    /// The archive contents before iteration 0 (the seed agent for normal
    /// runs; robustness harnesses start from a prepared pair).
    pub initial_records: Vec<AgentRecord>,
}

/// The full, replayable record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTranscript {
    pub header: TranscriptHeader,
    pub iterations: Vec<IterationRecord>,
}

impl RunTranscript {
    /// Rebuild the final archive from the initial records plus all offspring.
    pub fn final_archive(&self) -> Result<Archive> {
        let dimension = self
            .header
            .initial_records
            .first()
            .map(|r| r.z.len())
            .unwrap_or_default();
        let mut archive = Archive::new(dimension, self.header.config.seed);
        for record in &self.header.initial_records {
            archive.insert(record.clone())?;
        }
        for iteration in &self.iterations {
            for record in &iteration.offspring {
                archive.insert(record.clone())?;
            }
        }
        Ok(archive)
    }

    /// Total number of evolved agents (offspring across all iterations).
    pub fn evolved_count(&self) -> usize {
        self.iterations.iter().map(|i| i.offspring.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::write_jsonl(path, &self.header, self.iterations.iter())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, iterations): (TranscriptHeader, Vec<IterationRecord>) =
            persist::read_jsonl(path)?;
        if header.format_version != TRANSCRIPT_FORMAT_VERSION {
            return Err(GeaError::FormatVersion {
                found: header.format_version,
                expected: TRANSCRIPT_FORMAT_VERSION,
            });
        }
        Ok(RunTranscript { header, iterations })
    }
}

/// A live run: the world, probe definition, archive, and patch-id counter.
pub struct Engine {
    config: RunConfig,
    world: SimWorld,
    probe: Vec<usize>,
    archive: Archive,
    next_patch_id: u64,
    remote: Option<RemoteOperator>,
}

impl Engine {
    /// Set up a run from scratch: generate the world and seed agent 0 with
    /// the starter tool.
    pub fn new(config: RunConfig) -> Result<Self> {
        let world = config.materialize_world()?;
        config.validate(&world)?;
        let probe = config.probe_indices(&world);

        let mut seed_tools = crate::archive::ToolSet::new();
        seed_tools.insert(ToolTag::original(world.starter_tool()));
        let phenotype = crate::archive::Phenotype {
            tools: seed_tools.clone(),
            broken_bugs: Default::default(),
        };
        let z = world.evaluate_subset(&phenotype, &probe);
        let performance = z.success_rate();
        let seed_agent = AgentRecord {
            id: AgentId(0),
            framework_parent: None,
            tools: seed_tools,
            broken_bugs: Default::default(),
            z,
            performance,
            patches: Vec::new(),
            born_iteration: 0,
            gate_status: GateStatus::Passed,
        };

        let mut archive = Archive::new(probe.len(), config.seed);
        archive.insert(seed_agent)?;
        Self::with_archive(config, world, archive)
    }

    /// Set up a run over a prepared initial archive (robustness harness).
    pub fn with_archive(config: RunConfig, world: SimWorld, archive: Archive) -> Result<Self> {
        config.validate(&world)?;
        let probe = config.probe_indices(&world);
        if archive.dimension() != probe.len() {
            return Err(GeaError::DimensionMismatch {
                left: archive.dimension(),
                right: probe.len(),
            });
        }
        let remote = match &config.operator {
            OperatorBackend::Scripted => None,
            OperatorBackend::Remote {
                base_url,
                timeout_ms,
            } => Some(RemoteOperator::from_env(
                base_url.clone(),
                std::time::Duration::from_millis(*timeout_ms),
            )),
        };
        Ok(Engine {
            config,
            world,
            probe,
            archive,
            next_patch_id: 0,
            remote,
        })
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn probe(&self) -> &[usize] {
        &self.probe
    }

    fn gate_offspring(&self, patches: &[Patch], record: &AgentRecord) -> GateStatus {
        if !patch_set_compiles(patches, &self.world) {
            return GateStatus::FailedCompile;
        }
        let solved = self
            .config
            .gate
            .iter()
            .filter(|&&t| self.world.task_solved(&record.phenotype(), t))
            .count();
        if solved == 0 {
            GateStatus::FailedBasic
        } else {
            GateStatus::Passed
        }
    }

    /// One full iteration: select, trace, share, reflect/evolve/act per
    /// parent, gate, and archive the offspring group.
    pub fn step(&mut self, iteration: u32) -> Result<IterationRecord> {
        let profile = self.config.schedule.profile_at(iteration)?.clone();

        let parents = match self.config.mode {
            EvolutionMode::Gea => {
                selection::select_parent_group(&self.archive, &self.config.selection)?
            }
            EvolutionMode::Tree => {
                let single =
                    selection::select_single_parent(&self.archive, &self.config.selection)?;
                let k1 = SelectionConfig {
                    group_size: 1,
                    ..self.config.selection.clone()
                };
                // re-derive the score for the transcript
                let group = selection::select_parent_group(&self.archive, &k1)?;
                debug_assert_eq!(group.members[0], single);
                group
            }
        };

        // Per-parent pipelines run over the same archive snapshot; processing
        // in ascending parent id keeps offspring ids deterministic.
        let mut parent_ids = parents.members.clone();
        parent_ids.sort();

        let mut collected = Vec::with_capacity(parent_ids.len());
        for &pid in &parent_ids {
            let record = self
                .archive
                .get(pid)
                .ok_or(GeaError::AgentNotFound(pid))?
                .clone();
            let mut rng = seeding::agent_step_rng(self.config.seed, iteration, pid.0);
            let trace = traces::collect_trace(&record, &self.world, &self.probe, &mut rng);
            collected.push((record, trace, rng));
        }

        let shared = traces::aggregate(collected.iter().map(|(_, t, _)| t.clone()).collect())?;

        let mut directives = Vec::with_capacity(collected.len());
        let mut offspring = Vec::with_capacity(collected.len());
        for (parent, own_trace, mut rng) in collected {
            let experience = match self.config.mode {
                EvolutionMode::Gea => shared.clone(),
                EvolutionMode::Tree => traces::self_only(own_trace),
            };

            let directive = match &self.remote {
                None => operators::reflect(&parent, &experience, &profile, &mut rng),
                Some(remote) => remote.reflect(&parent, &experience)?,
            };
            traces::validate_directive(&directive, &experience)?;
            if directive.agent != parent.id {
                return Err(GeaError::InvalidDirective(format!(
                    "directive for agent {} returned while evolving agent {}",
                    directive.agent, parent.id
                )));
            }

            let mut patches = match &self.remote {
                None => operators::evolve(
                    &parent,
                    &directive,
                    &experience,
                    &self.world,
                    &profile,
                    &mut self.next_patch_id,
                    &mut rng,
                ),
                Some(remote) => {
                    let mut remote_patches = remote.evolve(&parent, &directive)?;
                    for patch in &mut remote_patches {
                        patch.id = self.next_patch_id;
                        self.next_patch_id += 1;
                    }
                    remote_patches
                }
            };

            let outcome = operators::act(&parent, &mut patches, &self.world, &self.probe);

            let mut history = parent.patches.clone();
            history.extend(patches.iter().cloned());
            let mut child = AgentRecord {
                id: self.archive.next_id(),
                framework_parent: Some(parent.id),
                tools: outcome.phenotype.tools,
                broken_bugs: outcome.phenotype.broken_bugs,
                z: outcome.z,
                performance: outcome.performance,
                patches: history,
                born_iteration: iteration,
                gate_status: GateStatus::Passed,
            };
            child.gate_status = self.gate_offspring(&patches, &child);

            self.archive.insert(child.clone())?;
            directives.push(directive);
            offspring.push(child);
        }

        let best = self
            .archive
            .best_selectable()
            .ok_or(GeaError::EmptyArchive)?;
        Ok(IterationRecord {
            iteration,
            parents,
            shared_experience: shared,
            directives,
            offspring,
            archive_size: self.archive.len(),
            best_agent: best.id,
            best_performance: best.performance,
        })
    }

    /// Run every iteration and assemble the transcript.
    pub fn run(mut self) -> Result<RunTranscript> {
        let initial_records = self.archive.records().to_vec();
        let mut iterations = Vec::with_capacity(self.config.iterations as usize);
        for i in 0..self.config.iterations {
            iterations.push(self.step(i)?);
        }
        Ok(RunTranscript {
            header: TranscriptHeader {
                format_version: TRANSCRIPT_FORMAT_VERSION,
                config: self.config,
                initial_records,
            },
            iterations,
        })
    }
}

/// Structural validity of a patch list: non-empty, known tools, sane names.
/// Scripted operators always satisfy this; fault injection and misbehaving
/// remote operators are what trip it.
pub fn patch_set_compiles(patches: &[Patch], world: &SimWorld) -> bool {
    if patches.is_empty() {
        return false;
    }
    patches.iter().all(|p| match &p.kind {
        PatchKind::AddTool { tool } => {
            !tool.name.is_empty() && world.tool_universe.contains(&tool.name)
        }
        PatchKind::RemoveTool { name } => !name.is_empty(),
        PatchKind::RepairBug { bug } => bug.0 >= 1 && bug.0 <= world.bug_count,
        PatchKind::Noop => true,
    })
}

/// Convenience: build and run in one call.
pub fn run(config: RunConfig) -> Result<RunTranscript> {
    Engine::new(config)?.run()
}

/// Continue a partial run from a transcript prefix at an iteration boundary.
///
/// Every stochastic draw is keyed by (run seed, iteration, agent id), so the
/// completed transcript is identical to one produced in a single sitting.
/// Scripted operators only.
pub fn resume(prefix: &RunTranscript) -> Result<RunTranscript> {
    if !matches!(prefix.header.config.operator, OperatorBackend::Scripted) {
        return Err(GeaError::InvalidConfig(
            "resume requires a scripted operator backend".to_string(),
        ));
    }
    let config = prefix.header.config.clone();
    let done = prefix.iterations.len() as u32;
    if done > config.iterations {
        return Err(GeaError::InvalidConfig(format!(
            "prefix has {done} iterations but the config runs {}",
            config.iterations
        )));
    }

    let world = config.materialize_world()?;
    let archive = prefix.final_archive()?;
    let next_patch_id = archive
        .records()
        .iter()
        .flat_map(|r| r.patches.iter().map(|p| p.id))
        .max()
        .map_or(0, |max| max + 1);

    let mut engine = Engine::with_archive(config.clone(), world, archive)?;
    engine.next_patch_id = next_patch_id;

    let mut iterations = prefix.iterations.clone();
    for i in done..config.iterations {
        iterations.push(engine.step(i)?);
    }
    Ok(RunTranscript { header: prefix.header.clone(), iterations })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub iteration: u32,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub divergences: Vec<Divergence>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Re-execute a transcript's config and diff every recorded field.
///
/// Only scripted-operator transcripts can be replayed; a remote backend is
/// not a function of the seed.
pub fn replay(transcript: &RunTranscript) -> Result<ReplayReport> {
    if !matches!(transcript.header.config.operator, OperatorBackend::Scripted) {
        return Err(GeaError::InvalidConfig(
            "replay requires a scripted operator backend".to_string(),
        ));
    }
    let config = transcript.header.config.clone();
    let world = config.materialize_world()?;
    let probe = config.probe_indices(&world);

    let mut initial = Archive::new(probe.len(), config.seed);
    for record in &transcript.header.initial_records {
        initial.insert(record.clone())?;
    }
    let fresh = Engine::with_archive(config, world, initial)?.run()?;

    let mut divergences = Vec::new();
    if fresh.header != transcript.header {
        divergences.push(Divergence {
            iteration: 0,
            field: "header".to_string(),
        });
    }
    let n = fresh.iterations.len().max(transcript.iterations.len());
    for i in 0..n {
        match (transcript.iterations.get(i), fresh.iterations.get(i)) {
            (Some(original), Some(replayed)) => {
                diff_iteration(original, replayed, &mut divergences);
            }
            _ => divergences.push(Divergence {
                iteration: i as u32,
                field: "iteration-count".to_string(),
            }),
        }
    }
    Ok(ReplayReport { divergences })
}

fn diff_iteration(
    original: &IterationRecord,
    replayed: &IterationRecord,
    out: &mut Vec<Divergence>,
) {
    let fields: [(&str, bool); 7] = [
        ("parents", original.parents == replayed.parents),
        (
            "shared_experience",
            original.shared_experience == replayed.shared_experience,
        ),
        ("directives", original.directives == replayed.directives),
        ("offspring", original.offspring == replayed.offspring),
        (
            "archive_size",
            original.archive_size == replayed.archive_size,
        ),
        ("best_agent", original.best_agent == replayed.best_agent),
        (
            "best_performance",
            original.best_performance == replayed.best_performance,
        ),
    ];
    for (field, equal) in fields {
        if !equal {
            out.push(Divergence {
                iteration: original.iteration,
                field: field.to_string(),
            });
        }
    }
}
