//! The Reflect / Evolve / Act operator pipeline.
//!
//! The scripted implementation is a pure function of its inputs and generator
//! state; phase schedules swap operator profiles so later iterations act with
//! a stronger profile, mirroring the weak-to-strong model schedule the runs
//! are modeled after. A remote HTTP implementation lives in [`crate::remote`].

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::archive::{
    AgentRecord, Patch, PatchKind, Phenotype, Provenance, TaskSuccessVector, ToolTag,
};
use crate::error::{GeaError, Result};
use crate::simenv::{self, SimWorld};
use crate::traces::{Directive, DirectiveAction, SharedExperience};

/// Behavior knobs for one evolution phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorProfile {
    pub name: String,
    pub adopt_probability: f64,
    pub discover_probability: f64,
    pub repair_probability_shared: f64,
    pub repair_probability_self: f64,
    pub max_actions_per_step: usize,
}

impl OperatorProfile {
    /// Default profile for the first two thirds of a run.
    pub fn early() -> Self {
        OperatorProfile {
            name: "early".to_string(),
            adopt_probability: 0.25,
            discover_probability: 0.08,
            repair_probability_shared: 0.5,
            repair_probability_self: 0.1,
            max_actions_per_step: 2,
        }
    }

    /// Default profile for the final third of a run.
    pub fn late() -> Self {
        OperatorProfile {
            name: "late".to_string(),
            adopt_probability: 0.4,
            discover_probability: 0.12,
            repair_probability_shared: 0.9,
            repair_probability_self: 0.2,
            max_actions_per_step: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("adopt_probability", self.adopt_probability),
            ("discover_probability", self.discover_probability),
            ("repair_probability_shared", self.repair_probability_shared),
            ("repair_probability_self", self.repair_probability_self),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GeaError::InvalidConfig(format!(
                    "{what} must lie in [0,1], got {v}"
                )));
            }
        }
        if self.repair_probability_shared < self.repair_probability_self {
            return Err(GeaError::InvalidConfig(
                "repair_probability_shared must be at least repair_probability_self".to_string(),
            ));
        }
        if self.max_actions_per_step < 1 {
            return Err(GeaError::InvalidConfig(
                "max_actions_per_step must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// One contiguous iteration range driven by a single profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub start: u32,
    /// Exclusive.
    pub end: u32,
    pub profile: OperatorProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSchedule {
    pub phases: Vec<Phase>,
}

impl PhaseSchedule {
    /// Early profile for the first two thirds of the run, late for the rest.
    pub fn default_two_phase(iterations: u32) -> Self {
        let split = iterations * 2 / 3;
        let mut phases = Vec::new();
        if split > 0 {
            phases.push(Phase {
                start: 0,
                end: split,
                profile: OperatorProfile::early(),
            });
        }
        if split < iterations {
            phases.push(Phase {
                start: split,
                end: iterations,
                profile: OperatorProfile::late(),
            });
        }
        PhaseSchedule { phases }
    }

    /// Single profile across the whole run.
    pub fn uniform(iterations: u32, profile: OperatorProfile) -> Self {
        PhaseSchedule {
            phases: vec![Phase {
                start: 0,
                end: iterations,
                profile,
            }],
        }
    }

    /// Stretch phase boundaries by an integer factor, for matched-budget
    /// baselines that run `factor` times as many iterations.
    pub fn scaled(&self, factor: u32) -> Self {
        PhaseSchedule {
            phases: self
                .phases
                .iter()
                .map(|p| Phase {
                    start: p.start * factor,
                    end: p.end * factor,
                    profile: p.profile.clone(),
                })
                .collect(),
        }
    }

    /// Ranges must be contiguous from 0 and cover [0, total).
    pub fn validate(&self, total_iterations: u32) -> Result<()> {
        if self.phases.is_empty() {
            return Err(GeaError::InvalidConfig(
                "schedule has no phases".to_string(),
            ));
        }
        let mut cursor = 0u32;
        for phase in &self.phases {
            if phase.start != cursor || phase.end <= phase.start {
                return Err(GeaError::InvalidConfig(format!(
                    "phase [{}, {}) leaves the schedule non-contiguous at {cursor}",
                    phase.start, phase.end
                )));
            }
            phase.profile.validate()?;
            cursor = phase.end;
        }
        if cursor != total_iterations {
            return Err(GeaError::InvalidConfig(format!(
                "schedule covers [0, {cursor}) but the run has {total_iterations} iterations"
            )));
        }
        Ok(())
    }

    pub fn profile_at(&self, iteration: u32) -> Result<&OperatorProfile> {
        self.phases
            .iter()
            .find(|p| iteration >= p.start && iteration < p.end)
            .map(|p| &p.profile)
            .ok_or_else(|| {
                GeaError::InvalidConfig(format!("no phase covers iteration {iteration}"))
            })
    }
}

/// Analyze the shared experience and produce an evolution directive.
///
/// Scripted rule: every tool present in another contributor's trace but
/// absent from the agent is an adoption candidate (probability
/// `adopt_probability`, origin = lowest contributor id whose trace teaches
/// it); a trace teaches both the tools its owner deployed and the tools its
/// failed attempt invoked, so a group mines its members' failures for
/// improvement directions, while an agent's own trace teaches it nothing. One
/// discovery is proposed with probability `discover_probability`; each broken
/// bug is proposed for repair with the shared probability when some
/// contributor is free of it, otherwise with the self probability.
pub fn reflect(
    agent: &AgentRecord,
    shared: &SharedExperience,
    profile: &OperatorProfile,
    rng: &mut impl Rng,
) -> Directive {
    let mut actions = Vec::new();

    // adoption candidates, by ascending tool name
    for (trace_tool, origin) in shared.teachable_tools(agent.id) {
        if agent.tools.contains(&trace_tool) {
            continue;
        }
        if rng.random::<f64>() < profile.adopt_probability {
            actions.push(DirectiveAction::AdoptTool {
                tool: trace_tool,
                origin,
            });
        }
    }

    if rng.random::<f64>() < profile.discover_probability {
        actions.push(DirectiveAction::DiscoverTool);
    }

    for bug in &agent.broken_bugs {
        let healthy = shared
            .traces
            .iter()
            .find(|t| t.agent != agent.id && !t.shows_fault(*bug))
            .map(|t| t.agent);
        let (p, origin) = match healthy {
            Some(contributor) => (profile.repair_probability_shared, contributor),
            None => (profile.repair_probability_self, agent.id),
        };
        if rng.random::<f64>() < p {
            actions.push(DirectiveAction::RepairBug { bug: *bug, origin });
        }
    }

    let rationale = describe_actions(&actions);
    Directive {
        agent: agent.id,
        actions,
        rationale,
    }
}

fn describe_actions(actions: &[DirectiveAction]) -> String {
    if actions.is_empty() {
        return "no useful change visible in shared experience".to_string();
    }
    let parts: Vec<String> = actions
        .iter()
        .map(|a| match a {
            DirectiveAction::AdoptTool { tool, origin } => {
                format!("adopt {tool} from agent {origin}")
            }
            DirectiveAction::DiscoverTool => "probe for new tooling".to_string(),
            DirectiveAction::RepairBug { bug, origin } => {
                format!("repair {bug} guided by agent {origin}")
            }
        })
        .collect();
    parts.join("; ")
}

fn action_priority(action: &DirectiveAction) -> u8 {
    match action {
        DirectiveAction::RepairBug { .. } => 0,
        DirectiveAction::AdoptTool { .. } => 1,
        DirectiveAction::DiscoverTool => 2,
    }
}

/// Translate a directive into framework patches.
///
/// Actions are applied in priority order (repair > adopt > discover) and
/// truncated to the profile's action budget. Discovery picks uniformly from
/// the universe tools absent from both the shared experience and the agent;
/// an empty directive (or one whose actions all collapse) becomes a single
/// noop patch.
pub fn evolve(
    agent: &AgentRecord,
    directive: &Directive,
    shared: &SharedExperience,
    world: &SimWorld,
    profile: &OperatorProfile,
    next_patch_id: &mut u64,
    rng: &mut impl Rng,
) -> Vec<Patch> {
    debug_assert_eq!(directive.agent, agent.id);
    let mut ordered: Vec<&DirectiveAction> = directive.actions.iter().collect();
    ordered.sort_by_key(|a| action_priority(a));
    ordered.truncate(profile.max_actions_per_step);

    let mut patches = Vec::new();
    for action in ordered {
        match action {
            DirectiveAction::RepairBug { bug, origin } => {
                let source = if *origin == agent.id {
                    Provenance::Original
                } else {
                    Provenance::Agent(*origin)
                };
                patches.push(Patch::new(
                    *next_patch_id,
                    PatchKind::RepairBug { bug: *bug },
                    source,
                ));
                *next_patch_id += 1;
            }
            DirectiveAction::AdoptTool { tool, origin } => {
                let tag = ToolTag::adopted(tool.clone(), *origin);
                patches.push(Patch::new(
                    *next_patch_id,
                    PatchKind::AddTool { tool: tag },
                    Provenance::Agent(*origin),
                ));
                *next_patch_id += 1;
            }
            DirectiveAction::DiscoverTool => {
                let visible = shared.visible_tools();
                let candidates: Vec<&String> = world
                    .tool_universe
                    .iter()
                    .filter(|t| !visible.contains(*t) && !agent.tools.contains(t))
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let pick = candidates[rng.random_range(0..candidates.len())].clone();
                patches.push(Patch::new(
                    *next_patch_id,
                    PatchKind::AddTool {
                        tool: ToolTag::original(pick),
                    },
                    Provenance::Original,
                ));
                *next_patch_id += 1;
            }
        }
    }

    if patches.is_empty() {
        patches.push(Patch::noop(*next_patch_id));
        *next_patch_id += 1;
    }
    patches
}

/// Result of acting with a patched framework.
#[derive(Debug, Clone, PartialEq)]
pub struct ActOutcome {
    pub phenotype: Phenotype,
    pub z: TaskSuccessVector,
    pub performance: f64,
}

/// Apply the step's patches one at a time (in the order evolve produced) and
/// re-evaluate after each, so the step's total performance change is
/// attributed patch by patch. Fills `delta_score` and `ineffective` in place.
pub fn act(
    parent: &AgentRecord,
    patches: &mut [Patch],
    world: &SimWorld,
    probe: &[usize],
) -> ActOutcome {
    let mut phenotype = parent.phenotype();
    let mut z = world.evaluate_subset(&phenotype, probe);
    let mut alpha = z.success_rate();
    debug_assert_eq!(alpha, parent.performance);

    for patch in patches.iter_mut() {
        patch.ineffective = simenv::apply_patch(&mut phenotype, &patch.kind);
        z = world.evaluate_subset(&phenotype, probe);
        let next_alpha = z.success_rate();
        patch.delta_score = Some(next_alpha - alpha);
        alpha = next_alpha;
    }

    ActOutcome {
        phenotype,
        z,
        performance: alpha,
    }
}
