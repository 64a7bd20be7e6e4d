//! Evolutionary traces and group-level shared experience.
//!
//! Each parent contributes a four-part trace: its applied patch history, an
//! attempt at one randomly sampled unsolved task, the execution log of that
//! attempt, and the outcome with its failure modes. A group's traces are
//! aggregated into the shared experience every member reflects on.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{AgentId, AgentRecord, BugId, Patch, PatchKind, ToolTag};
use crate::error::{GeaError, Result};
use crate::simenv::SimWorld;

/// One event in a simulated task attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LogEvent {
    WorkflowStep {
        name: String,
    },
    /// Emitted once per active framework bug at the start of every attempt;
    /// reflection reads these to spot contributors free of a given bug.
    FrameworkFault {
        bug: BugId,
    },
    ToolInvocation {
        tool: String,
        available: bool,
    },
}

/// The attempt artifact: which tools the agent brought to the task, and
/// whether it solved it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskAttempt {
    pub deployed_tools: Vec<ToolTag>,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttemptOutcome {
    pub solved: bool,
    pub missing_tools: Vec<String>,
    pub suppressed_by: Vec<BugId>,
}

/// The four-part evolutionary trace of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionTrace {
    pub agent: AgentId,
    pub applied_patches: Vec<Patch>,
    /// World index of the sampled unsolved probe task; None when the agent
    /// solves everything, in which case the attempt fields stay empty.
    pub sampled_task: Option<usize>,
    pub predicted_patch: Option<TaskAttempt>,
    pub execution_log: Vec<LogEvent>,
    pub outcome: Option<AttemptOutcome>,
}

impl EvolutionTrace {
    /// Capabilities this trace demonstrates: the deployed inventory of the
    /// attempt plus every add-tool patch in the applied history.
    pub fn visible_tools(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(attempt) = &self.predicted_patch {
            out.extend(attempt.deployed_tools.iter().map(|t| t.name.clone()));
        }
        for patch in &self.applied_patches {
            if let PatchKind::AddTool { tool } = &patch.kind {
                out.insert(tool.name.clone());
            }
        }
        out
    }

    /// Everything the trace teaches about tooling: demonstrated capabilities
    /// plus every tool the attempt invoked, including ones the contributor
    /// lacked. A failed attempt names exactly the tools its task needs, and
    /// that is the improvement direction other group members read out of it.
    pub fn taught_tools(&self) -> BTreeSet<String> {
        let mut out = self.visible_tools();
        for event in &self.execution_log {
            if let LogEvent::ToolInvocation { tool, .. } = event {
                out.insert(tool.clone());
            }
        }
        out
    }

    /// Whether the trace shows evidence of the given active bug.
    pub fn shows_fault(&self, bug: BugId) -> bool {
        self.execution_log
            .iter()
            .any(|e| matches!(e, LogEvent::FrameworkFault { bug: b } if *b == bug))
    }
}

/// The union of the parent group's traces (self-only in baseline mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedExperience {
    /// Sorted by contributing agent id; one trace per contributor.
    pub traces: Vec<EvolutionTrace>,
}

impl SharedExperience {
    pub fn contributors(&self) -> BTreeSet<AgentId> {
        self.traces.iter().map(|t| t.agent).collect()
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.traces.iter().any(|t| t.agent == id)
    }

    pub fn trace_of(&self, id: AgentId) -> Option<&EvolutionTrace> {
        self.traces.iter().find(|t| t.agent == id)
    }

    /// Union of capabilities demonstrated in any contributor's trace.
    pub fn visible_tools(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for trace in &self.traces {
            out.extend(trace.visible_tools());
        }
        out
    }

    /// Tools another contributor's trace can teach the given agent, mapped to
    /// the lowest contributor id teaching each. An agent's own trace teaches
    /// it nothing it does not already know.
    pub fn teachable_tools(&self, reader: AgentId) -> std::collections::BTreeMap<String, AgentId> {
        let mut out = std::collections::BTreeMap::new();
        for trace in &self.traces {
            if trace.agent == reader {
                continue;
            }
            for tool in trace.taught_tools() {
                out.entry(tool).or_insert(trace.agent);
            }
        }
        out
    }
}

/// A suggested evolution plan produced by reflection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Directive {
    pub agent: AgentId,
    pub actions: Vec<DirectiveAction>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DirectiveAction {
    AdoptTool { tool: String, origin: AgentId },
    DiscoverTool,
    RepairBug { bug: BugId, origin: AgentId },
}

/// Boundary check applied to every directive, scripted or remote: origins
/// must be shared-experience contributors and at most one discovery is
/// suggested per step.
pub fn validate_directive(directive: &Directive, shared: &SharedExperience) -> Result<()> {
    let contributors = shared.contributors();
    let mut discoveries = 0usize;
    for action in &directive.actions {
        match action {
            DirectiveAction::AdoptTool { tool, origin } => {
                if !contributors.contains(origin) {
                    return Err(GeaError::InvalidDirective(format!(
                        "adopt-tool {tool} names origin {origin}, not a shared-experience contributor"
                    )));
                }
            }
            DirectiveAction::RepairBug { bug, origin } => {
                if !contributors.contains(origin) {
                    return Err(GeaError::InvalidDirective(format!(
                        "repair-bug {bug} names origin {origin}, not a shared-experience contributor"
                    )));
                }
            }
            DirectiveAction::DiscoverTool => discoveries += 1,
        }
    }
    if discoveries > 1 {
        return Err(GeaError::InvalidDirective(format!(
            "{discoveries} discover-tool actions in one directive"
        )));
    }
    Ok(())
}

/// Collect the four-part trace of one agent. The unsolved task is drawn
/// uniformly with the caller-provided generator, so traces replay exactly.
pub fn collect_trace(
    agent: &AgentRecord,
    world: &SimWorld,
    probe: &[usize],
    rng: &mut impl Rng,
) -> EvolutionTrace {
    debug_assert_eq!(agent.z.len(), probe.len());
    let unsolved: Vec<usize> = probe
        .iter()
        .enumerate()
        .filter(|(k, _)| !agent.z.get(*k))
        .map(|(_, &t)| t)
        .collect();

    if unsolved.is_empty() {
        return EvolutionTrace {
            agent: agent.id,
            applied_patches: agent.patches.clone(),
            sampled_task: None,
            predicted_patch: None,
            execution_log: Vec::new(),
            outcome: None,
        };
    }

    let task_index = unsolved[rng.random_range(0..unsolved.len())];
    let task = world.task(task_index);

    let mut log = vec![LogEvent::WorkflowStep {
        name: format!("attempt task {task_index}"),
    }];
    for bug in &agent.broken_bugs {
        log.push(LogEvent::FrameworkFault { bug: *bug });
    }
    // the workflow aborts at the first missing tool, so a failed attempt
    // exposes only the blocker it actually hit
    let mut missing = Vec::new();
    for tool in &task.required_tools {
        let available = agent.tools.contains(tool);
        log.push(LogEvent::ToolInvocation {
            tool: tool.clone(),
            available,
        });
        if !available {
            missing.push(tool.clone());
            break;
        }
    }
    if missing.is_empty() {
        log.push(LogEvent::WorkflowStep {
            name: "submit".to_string(),
        });
    } else {
        log.push(LogEvent::WorkflowStep {
            name: "abort".to_string(),
        });
    }

    let suppressed: Vec<BugId> = task
        .bug_sensitive
        .intersection(&agent.broken_bugs)
        .copied()
        .collect();

    EvolutionTrace {
        agent: agent.id,
        applied_patches: agent.patches.clone(),
        sampled_task: Some(task_index),
        predicted_patch: Some(TaskAttempt {
            deployed_tools: agent.tools.iter().collect(),
            solved: false,
        }),
        execution_log: log,
        outcome: Some(AttemptOutcome {
            solved: false,
            missing_tools: missing,
            suppressed_by: suppressed,
        }),
    }
}

/// Union of the group's traces; order-independent, one trace per contributor.
pub fn aggregate(traces: Vec<EvolutionTrace>) -> Result<SharedExperience> {
    let mut sorted = traces;
    sorted.sort_by_key(|t| t.agent);
    for pair in sorted.windows(2) {
        if pair[0].agent == pair[1].agent {
            return Err(GeaError::DuplicateContributor(pair[0].agent));
        }
    }
    Ok(SharedExperience { traces: sorted })
}

/// Baseline experience: an agent sees only its own trace.
pub fn self_only(trace: EvolutionTrace) -> SharedExperience {
    SharedExperience {
        traces: vec![trace],
    }
}
