//! Staged evaluation pipelines: the three-stage funnel and the promotion rule.
//!
//! Stage scoring evaluates one task at a time and tallies per-set evaluation
//! counts, so a report can prove that held-out sets were never touched by
//! unpromoted agents.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::archive::{AgentId, Archive, Phenotype};
use crate::error::{GeaError, Result};
use crate::simenv::SimWorld;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStyle {
    Funnel,
    Promotion,
}

/// The staged-evaluation layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagePlan {
    pub style: StageStyle,
    /// The small set: funnel sanity check, promotion evolution set.
    pub sanity_set: Vec<usize>,
    /// The mid set: funnel evolution set, promotion held-out set.
    pub mid_set: Vec<usize>,
    /// Promotion style: small-set success must exceed this, strictly.
    pub promote_threshold: f64,
    /// Funnel style: how many stage-2 survivors reach the full set.
    pub top_n_to_full: usize,
}

impl Default for StagePlan {
    fn default() -> Self {
        StagePlan {
            style: StageStyle::Funnel,
            sanity_set: (0..10).collect(),
            mid_set: (10..60).collect(),
            promote_threshold: 0.40,
            top_n_to_full: 2,
        }
    }
}

impl StagePlan {
    pub fn validate(&self, world: &SimWorld) -> Result<()> {
        for (name, set) in [("sanity_set", &self.sanity_set), ("mid_set", &self.mid_set)] {
            if set.is_empty() {
                return Err(GeaError::InvalidConfig(format!("{name} is empty")));
            }
            for &t in set.iter() {
                if t >= world.task_count {
                    return Err(GeaError::InvalidConfig(format!(
                        "{name} index {t} outside world of {} tasks",
                        world.task_count
                    )));
                }
            }
        }
        if self.promote_threshold.is_nan()
            || self.promote_threshold <= 0.0
            || self.promote_threshold >= 1.0
        {
            return Err(GeaError::InvalidConfig(format!(
                "promote_threshold must lie in (0,1), got {}",
                self.promote_threshold
            )));
        }
        if self.top_n_to_full < 1 {
            return Err(GeaError::InvalidConfig(
                "top_n_to_full must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Overlapping sanity and mid sets are tolerated (tiny worlds) but worth
    /// flagging.
    pub fn overlap_warning(&self) -> Option<String> {
        let sanity: std::collections::BTreeSet<usize> = self.sanity_set.iter().copied().collect();
        let shared: Vec<usize> = self
            .mid_set
            .iter()
            .copied()
            .filter(|t| sanity.contains(t))
            .collect();
        if shared.is_empty() {
            None
        } else {
            Some(format!(
                "mid_set overlaps sanity_set on {} task(s)",
                shared.len()
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub agent_id: AgentId,
    pub stage: u32,
    pub set_name: String,
    pub solved: usize,
    pub total: usize,
    pub score: f64,
    pub advanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub style: StageStyle,
    pub rows: Vec<StageRow>,
    /// Per-set count of single-task evaluations performed while building the
    /// report.
    pub eval_calls: BTreeMap<String, u64>,
}

impl StageReport {
    pub fn rows_for_stage(&self, stage: u32) -> impl Iterator<Item = &StageRow> {
        self.rows.iter().filter(move |r| r.stage == stage)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent_id,stage,set_name,solved,total,score,advanced\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.agent_id,
                row.stage,
                row.set_name,
                row.solved,
                row.total,
                row.score,
                row.advanced
            );
        }
        out
    }
}

struct CountingScorer<'a> {
    world: &'a SimWorld,
    eval_calls: BTreeMap<String, u64>,
}

impl<'a> CountingScorer<'a> {
    fn new(world: &'a SimWorld) -> Self {
        CountingScorer {
            world,
            eval_calls: BTreeMap::new(),
        }
    }

    fn score(&mut self, phenotype: &Phenotype, set_name: &str, indices: &[usize]) -> (usize, f64) {
        let mut solved = 0usize;
        for &t in indices {
            *self.eval_calls.entry(set_name.to_string()).or_insert(0) += 1;
            if self.world.task_solved(phenotype, t) {
                solved += 1;
            }
        }
        (solved, solved as f64 / indices.len() as f64)
    }
}

/// Basic-functionality gate: an agent fails when it could not compile or
/// solves none of the sanity tasks.
pub fn sanity_gate(
    agent: &crate::archive::AgentRecord,
    plan: &StagePlan,
    world: &SimWorld,
) -> bool {
    if agent.gate_status == crate::archive::GateStatus::FailedCompile {
        return false;
    }
    let phenotype = agent.phenotype();
    plan.sanity_set
        .iter()
        .any(|&t| world.task_solved(&phenotype, t))
}

/// Three-stage funnel: sanity gate, mid-set scoring, full-set scoring for the
/// top survivors (ties at the cut break toward the older agent).
pub fn run_funnel(archive: &Archive, plan: &StagePlan, world: &SimWorld) -> Result<StageReport> {
    if archive.is_empty() {
        return Err(GeaError::EmptyArchive);
    }
    let mut scorer = CountingScorer::new(world);
    let mut rows = Vec::new();

    // stage 1: sanity gate
    let mut survivors = Vec::new();
    for record in archive.records() {
        let phenotype = record.phenotype();
        let (solved, score) = scorer.score(&phenotype, "sanity", &plan.sanity_set);
        let passed = record.gate_status != crate::archive::GateStatus::FailedCompile && solved > 0;
        rows.push(StageRow {
            agent_id: record.id,
            stage: 1,
            set_name: "sanity".to_string(),
            solved,
            total: plan.sanity_set.len(),
            score,
            advanced: passed,
        });
        if passed {
            survivors.push(record);
        }
    }

    // stage 2: mid set
    let mut mid_scores: Vec<(AgentId, usize, f64)> = Vec::new();
    for record in &survivors {
        let (solved, score) = scorer.score(&record.phenotype(), "mid", &plan.mid_set);
        mid_scores.push((record.id, solved, score));
    }
    let mut ranked = mid_scores.clone();
    ranked.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .expect("finite score")
            .then_with(|| a.0.cmp(&b.0))
    });
    let cut = plan.top_n_to_full.min(ranked.len());
    let mut finalists: Vec<AgentId> = ranked[..cut].iter().map(|(id, _, _)| *id).collect();
    // report rows assemble in ascending id order
    finalists.sort();
    for (id, solved, score) in &mid_scores {
        rows.push(StageRow {
            agent_id: *id,
            stage: 2,
            set_name: "mid".to_string(),
            solved: *solved,
            total: plan.mid_set.len(),
            score: *score,
            advanced: finalists.contains(id),
        });
    }

    // stage 3: the full set for the finalists
    let full: Vec<usize> = (0..world.task_count).collect();
    for id in &finalists {
        let record = archive.get(*id).expect("finalist comes from the archive");
        let (solved, score) = scorer.score(&record.phenotype(), "full", &full);
        rows.push(StageRow {
            agent_id: *id,
            stage: 3,
            set_name: "full".to_string(),
            solved,
            total: full.len(),
            score,
            advanced: false,
        });
    }

    Ok(StageReport {
        style: StageStyle::Funnel,
        rows,
        eval_calls: scorer.eval_calls,
    })
}

/// Promotion rule: agents strictly above the threshold on the small set are
/// scored on the held-out mid set; everyone else never touches it.
pub fn run_promotion(archive: &Archive, plan: &StagePlan, world: &SimWorld) -> Result<StageReport> {
    let mut scorer = CountingScorer::new(world);
    let mut rows = Vec::new();

    let mut promoted = Vec::new();
    for record in archive.records() {
        let (solved, score) = scorer.score(&record.phenotype(), "small", &plan.sanity_set);
        let advanced = score > plan.promote_threshold;
        rows.push(StageRow {
            agent_id: record.id,
            stage: 1,
            set_name: "small".to_string(),
            solved,
            total: plan.sanity_set.len(),
            score,
            advanced,
        });
        if advanced {
            promoted.push(record);
        }
    }

    for record in &promoted {
        let (solved, score) = scorer.score(&record.phenotype(), "medium", &plan.mid_set);
        rows.push(StageRow {
            agent_id: record.id,
            stage: 2,
            set_name: "medium".to_string(),
            solved,
            total: plan.mid_set.len(),
            score,
            advanced: false,
        });
    }

    Ok(StageReport {
        style: StageStyle::Promotion,
        rows,
        eval_calls: scorer.eval_calls,
    })
}
