//! Deterministic synthetic coding environment.
//!
//! A world is a fixed task set over a small tool universe. A task is solved
//! exactly when the agent holds every required tool and none of the agent's
//! active bugs suppress it. Evaluation has no randomness at all, and world
//! generation draws integers only, so worlds are identical across platforms.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{AgentRecord, BugId, Patch, PatchKind, Phenotype, TaskSuccessVector};
use crate::error::{GeaError, Result};
use crate::persist;
use crate::seeding;

pub const WORLD_FORMAT_VERSION: u32 = 1;

/// Number of bugs in every world's catalog; each suppresses one contiguous
/// slice of roughly 10% of the tasks.
pub const BUG_CATALOG_SIZE: u32 = 4;

/// Share of tasks that require only the starter tool, in percent. Calibrated
/// so a fresh agent lands in the [0.15, 0.45] success band at the default
/// world size.
const STARTER_ONLY_PERCENT: usize = 30;

/// One probe task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub index: usize,
    pub required_tools: BTreeSet<String>,
    pub bug_sensitive: BTreeSet<BugId>,
}

/// The immutable task universe an evolution run is evaluated against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimWorld {
    #[serde(rename = "D")]
    pub task_count: usize,
    pub tool_universe: Vec<String>,
    pub bug_count: u32,
    pub seed: u64,
    pub tasks: Vec<TaskSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldHeader {
    format_version: u32,
    #[serde(rename = "D")]
    task_count: usize,
    n_tools: usize,
    bug_count: u32,
    seed: u64,
    tool_universe: Vec<String>,
}

impl SimWorld {
    /// The tool every fresh agent starts with.
    pub fn starter_tool(&self) -> &str {
        &self.tool_universe[0]
    }

    pub fn bug_catalog(&self) -> impl Iterator<Item = BugId> {
        (1..=self.bug_count).map(BugId)
    }

    pub fn task(&self, index: usize) -> &TaskSpec {
        &self.tasks[index]
    }

    /// Single-task check; staged evaluation counts calls to this to keep
    /// held-out sets untouched.
    pub fn task_solved(&self, phenotype: &Phenotype, index: usize) -> bool {
        let task = &self.tasks[index];
        task.required_tools
            .iter()
            .all(|t| phenotype.tools.contains(t))
            && task.bug_sensitive.is_disjoint(&phenotype.broken_bugs)
    }

    /// Success bits over an arbitrary task-index subset, in subset order.
    pub fn evaluate_subset(&self, phenotype: &Phenotype, indices: &[usize]) -> TaskSuccessVector {
        indices
            .iter()
            .map(|&i| self.task_solved(phenotype, i))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = WorldHeader {
            format_version: WORLD_FORMAT_VERSION,
            task_count: self.task_count,
            n_tools: self.tool_universe.len(),
            bug_count: self.bug_count,
            seed: self.seed,
            tool_universe: self.tool_universe.clone(),
        };
        persist::write_jsonl(path, &header, self.tasks.iter())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, tasks): (WorldHeader, Vec<TaskSpec>) = persist::read_jsonl(path)?;
        if header.format_version != WORLD_FORMAT_VERSION {
            return Err(GeaError::FormatVersion {
                found: header.format_version,
                expected: WORLD_FORMAT_VERSION,
            });
        }
        if tasks.len() != header.task_count {
            return Err(GeaError::Parse {
                line: tasks.len() + 1,
                message: format!(
                    "expected {} task lines, found {}",
                    header.task_count,
                    tasks.len()
                ),
            });
        }
        Ok(SimWorld {
            task_count: header.task_count,
            tool_universe: header.tool_universe,
            bug_count: header.bug_count,
            seed: header.seed,
            tasks,
        })
    }
}

/// Evaluate an agent on the full task set.
pub fn evaluate(agent: &AgentRecord, world: &SimWorld) -> TaskSuccessVector {
    let phenotype = agent.phenotype();
    let indices: Vec<usize> = (0..world.task_count).collect();
    world.evaluate_subset(&phenotype, &indices)
}

/// Apply one patch to a phenotype in place. Returns true when the patch was
/// ineffective (removing an absent tool, repairing an absent bug, re-adding a
/// held tool); those are warnings, not errors.
pub fn apply_patch(phenotype: &mut Phenotype, kind: &PatchKind) -> bool {
    match kind {
        PatchKind::AddTool { tool } => !phenotype.tools.insert(tool.clone()),
        PatchKind::RemoveTool { name } => !phenotype.tools.remove(name),
        PatchKind::RepairBug { bug } => !phenotype.broken_bugs.remove(bug),
        PatchKind::Noop => false,
    }
}

/// Apply a whole patch list to a copy of the agent, recording per-patch
/// ineffectiveness. The returned record keeps the agent's id and history;
/// callers re-evaluate and re-identify it.
pub fn apply_patches(agent: &AgentRecord, patches: &mut [Patch]) -> AgentRecord {
    let mut child = agent.clone();
    let mut phenotype = agent.phenotype();
    for patch in patches.iter_mut() {
        patch.ineffective = apply_patch(&mut phenotype, &patch.kind);
    }
    child.tools = phenotype.tools;
    child.broken_bugs = phenotype.broken_bugs;
    child
}

/// Copy of the agent with `bug` active, re-evaluated on `probe`.
pub fn inject_bug(
    agent: &AgentRecord,
    bug: BugId,
    world: &SimWorld,
    probe: &[usize],
) -> Result<AgentRecord> {
    if bug.0 == 0 || bug.0 > world.bug_count {
        return Err(GeaError::UnknownBug(bug.0));
    }
    let mut faulty = agent.clone();
    faulty.broken_bugs.insert(bug);
    faulty.z = world.evaluate_subset(&faulty.phenotype(), probe);
    faulty.performance = faulty.z.success_rate();
    Ok(faulty)
}

/// Build a world from a seed.
///
/// Layout: task 0 and a fixed ~30% share of tasks require only the starter
/// tool (the fresh agent's foothold); every other tool anchors one single-tool
/// task where room allows; the remaining tasks need 2-3 tools drawn from the
/// whole universe. Bug b suppresses the contiguous slice
/// [(b-1)*len, b*len) with len = max(1, D/10).
pub fn generate_world(task_count: usize, n_tools: usize, seed: u64) -> Result<SimWorld> {
    if task_count < 1 {
        return Err(GeaError::InfeasibleWorld(
            "task count must be at least 1".to_string(),
        ));
    }
    if n_tools < 1 {
        return Err(GeaError::InfeasibleWorld(
            "tool count must be at least 1".to_string(),
        ));
    }

    let tool_universe: Vec<String> = (1..=n_tools).map(|i| format!("T{i}")).collect();
    let slice_len = (task_count / 10).max(1);
    let bug_sensitive = |index: usize| -> BTreeSet<BugId> {
        (1..=BUG_CATALOG_SIZE)
            .filter(|b| {
                let lo = (*b as usize - 1) * slice_len;
                index >= lo && index < lo + slice_len
            })
            .map(BugId)
            .collect()
    };

    if n_tools == 1 {
        // Degenerate universe: every task needs the one tool.
        let tasks = (0..task_count)
            .map(|index| TaskSpec {
                index,
                required_tools: [tool_universe[0].clone()].into(),
                bug_sensitive: bug_sensitive(index),
            })
            .collect();
        return Ok(SimWorld {
            task_count,
            tool_universe,
            bug_count: BUG_CATALOG_SIZE,
            seed,
            tasks,
        });
    }

    let starter_only = ((task_count * STARTER_ONLY_PERCENT + 50) / 100).max(1);
    let open_slots = 3 * (task_count - starter_only);
    if open_slots < n_tools - 1 {
        return Err(GeaError::InfeasibleWorld(format!(
            "{task_count} tasks cannot cover {n_tools} tools"
        )));
    }

    let mut rng = seeding::world_rng(seed);

    // Starter-only positions: task 0 always, the rest drawn from 1..D.
    let mut pool: Vec<usize> = (1..task_count).collect();
    let mut starter_tasks: BTreeSet<usize> = [0].into();
    for _ in 1..starter_only {
        let pick = rng.random_range(0..pool.len());
        starter_tasks.insert(pool.swap_remove(pick));
    }

    let mut required: Vec<BTreeSet<String>> = vec![BTreeSet::new(); task_count];
    for &t in &starter_tasks {
        required[t].insert(tool_universe[0].clone());
    }

    // Coverage pass: spread the non-starter tools over the remaining tasks.
    // When each tool can take a task of its own, the anchor task requires
    // exactly that tool, giving every tool an immediate payoff somewhere.
    let mut open_tasks: Vec<usize> = (0..task_count)
        .filter(|t| !starter_tasks.contains(t))
        .collect();
    // seeded shuffle
    for i in (1..open_tasks.len()).rev() {
        let j = rng.random_range(0..=i);
        open_tasks.swap(i, j);
    }
    let mut anchored: BTreeSet<usize> = BTreeSet::new();
    for (i, tool) in tool_universe.iter().enumerate().skip(1) {
        let task = open_tasks[(i - 1) % open_tasks.len()];
        required[task].insert(tool.clone());
        if n_tools - 1 <= open_tasks.len() {
            anchored.insert(task);
        }
    }

    // Fill the rest with 2-3 tool requirements.
    for &task in &open_tasks {
        if anchored.contains(&task) {
            continue;
        }
        let target = if rng.random_range(0..100) < 55 {
            2usize
        } else {
            3
        };
        let target = target.min(n_tools);
        while required[task].len() < target {
            let tool = &tool_universe[rng.random_range(0..n_tools)];
            required[task].insert(tool.clone());
        }
    }

    let tasks: Vec<TaskSpec> = (0..task_count)
        .map(|index| TaskSpec {
            index,
            required_tools: std::mem::take(&mut required[index]),
            bug_sensitive: bug_sensitive(index),
        })
        .collect();

    debug_assert!(tool_universe
        .iter()
        .all(|tool| tasks.iter().any(|t| t.required_tools.contains(tool))));

    Ok(SimWorld {
        task_count,
        tool_universe,
        bug_count: BUG_CATALOG_SIZE,
        seed,
        tasks,
    })
}
