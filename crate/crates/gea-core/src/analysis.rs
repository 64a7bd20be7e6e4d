//! Post-hoc measurement over transcripts: ancestor integration, top-k
//! worst-case success, tool discovery/integration timelines, matched-budget
//! method comparison, and repair-iteration measurement for robustness runs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::archive::{AgentId, AgentRecord, AncestryMode, Archive, BugId};
use crate::engine::RunTranscript;
use crate::error::{GeaError, Result};
use crate::simenv::SimWorld;

/// Ranked view of the final selectable archive: descending performance,
/// ties to the older agent.
fn ranked_selectable(archive: &Archive) -> Vec<&AgentRecord> {
    let mut agents: Vec<&AgentRecord> = archive.selectable().collect();
    agents.sort_by(|a, b| {
        b.performance
            .partial_cmp(&a.performance)
            .expect("finite performance")
            .then_with(|| a.id.cmp(&b.id))
    });
    agents
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncestorRow {
    pub rank: usize,
    /// Minimum performance among the top-k agents.
    pub worst_case_success: f64,
    /// Maximum experience-ancestor count among the top-k (for k=1 this is
    /// the best agent's count).
    pub ancestor_count: usize,
    /// ancestor_count over the number of evolved agents.
    pub fraction: f64,
    /// Per-agent counts so other readings of the top-k semantics can be
    /// recovered.
    pub per_agent: Vec<(AgentId, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncestorTable {
    pub rows: Vec<AncestorRow>,
    pub omitted: Vec<String>,
}

impl AncestorTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,worst_case_success,ancestor_count,fraction\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                row.rank, row.worst_case_success, row.ancestor_count, row.fraction
            );
        }
        out
    }
}

/// Top-k worst-case success and ancestor integration over the final archive.
pub fn ancestor_table(transcript: &RunTranscript, ranks: &[usize]) -> Result<AncestorTable> {
    let archive = transcript.final_archive()?;
    let ranked = ranked_selectable(&archive);
    let evolved = transcript.evolved_count();

    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for &k in ranks {
        if k == 0 || ranked.len() < k {
            omitted.push(format!(
                "top-{k} omitted: only {} selectable agents",
                ranked.len()
            ));
            continue;
        }
        let top = &ranked[..k];
        let worst = top.last().expect("k >= 1").performance;
        let mut per_agent = Vec::with_capacity(k);
        for agent in top {
            let count = archive
                .experience_ancestors(agent.id, AncestryMode::Transitive)?
                .len();
            per_agent.push((agent.id, count));
        }
        let ancestor_count = per_agent.iter().map(|(_, c)| *c).max().unwrap_or(0);
        let fraction = if evolved == 0 {
            0.0
        } else {
            ancestor_count as f64 / evolved as f64
        };
        rows.push(AncestorRow {
            rank: k,
            worst_case_success: worst,
            ancestor_count,
            fraction,
            per_agent,
        });
    }
    Ok(AncestorTable { rows, omitted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolTimelineRow {
    pub tool: String,
    /// First iteration at which any archived agent holds the tool.
    pub discovered_iteration: Option<u32>,
    /// First iteration at which the then-best selectable agent holds it.
    pub integrated_iteration: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolTimeline {
    pub rows: Vec<ToolTimelineRow>,
}

impl ToolTimeline {
    pub fn integrated_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.integrated_iteration.is_some())
            .count()
    }

    pub fn discovered_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.discovered_iteration.is_some())
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tool,discovered_iteration,integrated_iteration\n");
        for row in &self.rows {
            let fmt = |v: Option<u32>| {
                v.map(|x| x.to_string())
                    .unwrap_or_else(|| "none".to_string())
            };
            let _ = writeln!(
                out,
                "{},{},{}",
                row.tool,
                fmt(row.discovered_iteration),
                fmt(row.integrated_iteration)
            );
        }
        out
    }
}

/// When each tool first existed anywhere in the archive versus when it first
/// reached the best agent. Iteration i covers the archive state after step i;
/// the initial records count as iteration 0 discoveries.
pub fn tool_timeline(transcript: &RunTranscript, world: &SimWorld) -> Result<ToolTimeline> {
    let archive = transcript.final_archive()?;
    let mut rows: Vec<ToolTimelineRow> = world
        .tool_universe
        .iter()
        .map(|tool| ToolTimelineRow {
            tool: tool.clone(),
            discovered_iteration: None,
            integrated_iteration: None,
        })
        .collect();

    for it in &transcript.iterations {
        // archive contents after this iteration
        let visible = archive
            .records()
            .iter()
            .filter(|r| r.born_iteration <= it.iteration || is_initial(transcript, r.id));
        let mut held: BTreeSet<&str> = BTreeSet::new();
        for record in visible {
            held.extend(record.tools.names());
        }
        let best = archive
            .get(it.best_agent)
            .ok_or(GeaError::AgentNotFound(it.best_agent))?;
        for row in rows.iter_mut() {
            if row.discovered_iteration.is_none() && held.contains(row.tool.as_str()) {
                row.discovered_iteration = Some(it.iteration);
            }
            if row.integrated_iteration.is_none() && best.tools.contains(&row.tool) {
                row.integrated_iteration = Some(it.iteration);
            }
        }
    }
    Ok(ToolTimeline { rows })
}

fn is_initial(transcript: &RunTranscript, id: AgentId) -> bool {
    transcript.header.initial_records.iter().any(|r| r.id == id)
}

/// Exact one-sided binomial tail P[X >= wins] for X ~ Binomial(n, 1/2).
pub fn binomial_tail(n: u64, wins: u64) -> f64 {
    if wins > n {
        return 0.0;
    }
    // sum C(n, j) for j in wins..=n, over 2^n; exact in f64 for n <= 50
    let mut numerator = 0.0f64;
    for j in wins..=n {
        numerator += choose(n, j);
    }
    numerator / 2f64.powi(n as i32)
}

fn choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut result = 1.0f64;
    for i in 0..k {
        result = result * (n - i) as f64 / (i + 1) as f64;
    }
    result.round()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided exact binomial tail over the non-tied pairs; None when every
    /// pair tied.
    pub p_value: Option<f64>,
    /// Set when the test cannot say anything: every pair tied, or fewer than
    /// two pairs were supplied.
    pub degenerate: bool,
}

/// Paired one-sided sign test for "left beats right".
pub fn sign_test(left: &[f64], right: &[f64]) -> SignTest {
    let mut wins = 0usize;
    let mut losses = 0usize;
    let mut ties = 0usize;
    for (l, r) in left.iter().zip(right) {
        if l > r {
            wins += 1;
        } else if l < r {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    if n == 0 {
        return SignTest {
            wins,
            losses,
            ties,
            p_value: None,
            degenerate: true,
        };
    }
    SignTest {
        wins,
        losses,
        ties,
        p_value: Some(binomial_tail(n as u64, wins as u64)),
        degenerate: left.len() < 2,
    }
}

/// Best-so-far performance indexed by evolved-agent count 1..=budget.
/// Offspring land at the iteration barrier, so counts inside an iteration
/// carry the previous best forward.
pub fn best_curve(transcript: &RunTranscript, budget: usize) -> Vec<f64> {
    let mut curve = Vec::with_capacity(budget);
    let mut best = initial_best(transcript);
    for it in &transcript.iterations {
        let count_after = curve.len() + it.offspring.len();
        while curve.len() + 1 < count_after && curve.len() < budget {
            curve.push(best);
        }
        best = best.max(it.best_performance);
        if curve.len() < budget {
            curve.push(best);
        }
        if curve.len() >= budget {
            break;
        }
    }
    while curve.len() < budget {
        curve.push(best);
    }
    curve
}

fn initial_best(transcript: &RunTranscript) -> f64 {
    transcript
        .header
        .initial_records
        .iter()
        .filter(|r| r.gate_status.is_selectable())
        .map(|r| r.performance)
        .fold(0.0, f64::max)
}

pub fn final_best(transcript: &RunTranscript) -> f64 {
    transcript
        .iterations
        .last()
        .map(|it| it.best_performance)
        .unwrap_or_else(|| initial_best(transcript))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregates {
    pub final_best: Vec<f64>,
    pub mean_final_best: f64,
    pub mean_best_ancestors: f64,
    pub mean_integrated_tools: f64,
    pub mean_discovered_tools: f64,
    pub top_k_worst: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub cap: u32,
    pub gea_repair_iterations: Vec<Option<u32>>,
    pub tree_repair_iterations: Vec<Option<u32>>,
    /// Means with unrepaired trials counted at the cap.
    pub mean_gea: f64,
    pub mean_tree: f64,
    pub unrepaired_gea: usize,
    pub unrepaired_tree: usize,
}

impl RobustnessSummary {
    /// One row per method, trial columns E1..EN then the average.
    pub fn to_csv(&self) -> String {
        let n = self
            .gea_repair_iterations
            .len()
            .max(self.tree_repair_iterations.len());
        let mut out = String::from("method");
        for i in 1..=n {
            let _ = write!(out, ",E{i}");
        }
        out.push_str(",Avg\n");
        let fmt_row = |name: &str, values: &[Option<u32>], mean: f64, out: &mut String| {
            out.push_str(name);
            for v in values {
                match v {
                    Some(x) => {
                        let _ = write!(out, ",{x}");
                    }
                    None => out.push_str(",none"),
                }
            }
            let _ = writeln!(out, ",{mean}");
        };
        fmt_row(
            "tree",
            &self.tree_repair_iterations,
            self.mean_tree,
            &mut out,
        );
        fmt_row("gea", &self.gea_repair_iterations, self.mean_gea, &mut out);
        out
    }

    pub fn from_trials(
        cap: u32,
        gea: Vec<Option<u32>>,
        tree: Vec<Option<u32>>,
    ) -> RobustnessSummary {
        let capped_mean = |v: &[Option<u32>]| {
            if v.is_empty() {
                return 0.0;
            }
            v.iter().map(|x| x.unwrap_or(cap) as f64).sum::<f64>() / v.len() as f64
        };
        RobustnessSummary {
            cap,
            mean_gea: capped_mean(&gea),
            mean_tree: capped_mean(&tree),
            unrepaired_gea: gea.iter().filter(|x| x.is_none()).count(),
            unrepaired_tree: tree.iter().filter(|x| x.is_none()).count(),
            gea_repair_iterations: gea,
            tree_repair_iterations: tree,
        }
    }
}

/// Matched GEA-versus-baseline comparison across seed pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    /// Evolved-agent budget every curve is indexed by.
    pub budget: usize,
    pub gea: MethodAggregates,
    pub tree: MethodAggregates,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub sign_test: SignTest,
    pub mean_curve_gea: Vec<f64>,
    pub mean_curve_tree: Vec<f64>,
    pub gea_curves: Vec<Vec<f64>>,
    pub tree_curves: Vec<Vec<f64>>,
    /// Per seed: worst performance among GEA's top-5 vs the tree final best.
    pub gea_top5_worst: Vec<f64>,
    pub tree_top1: Vec<f64>,
    pub robustness: Option<RobustnessSummary>,
}

struct PerRunStats {
    final_best: f64,
    best_ancestors: usize,
    integrated: usize,
    discovered: usize,
    top_k_worst: Vec<(usize, Option<f64>)>,
}

fn per_run_stats(transcript: &RunTranscript, ranks: &[usize]) -> Result<PerRunStats> {
    let archive = transcript.final_archive()?;
    let ranked = ranked_selectable(&archive);
    let best_ancestors = match ranked.first() {
        Some(best) => archive
            .experience_ancestors(best.id, AncestryMode::Transitive)?
            .len(),
        None => 0,
    };
    let world = transcript.header.config.materialize_world()?;
    let timeline = tool_timeline(transcript, &world)?;
    let top_k_worst = ranks
        .iter()
        .map(|&k| {
            (
                k,
                (ranked.len() >= k && k > 0).then(|| ranked[k - 1].performance),
            )
        })
        .collect();
    Ok(PerRunStats {
        final_best: final_best(transcript),
        best_ancestors,
        integrated: timeline.integrated_count(),
        discovered: timeline.discovered_count(),
        top_k_worst,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        return 0.0;
    }
    collected.iter().sum::<f64>() / collected.len() as f64
}

fn aggregate_method(
    transcripts: &[RunTranscript],
    budget: usize,
    ranks: &[usize],
) -> Result<(MethodAggregates, Vec<Vec<f64>>, Vec<f64>)> {
    let mut stats = Vec::with_capacity(transcripts.len());
    let mut curves = Vec::with_capacity(transcripts.len());
    for transcript in transcripts {
        stats.push(per_run_stats(transcript, ranks)?);
        curves.push(best_curve(transcript, budget));
    }
    let top_k_worst: Vec<(usize, f64)> = ranks
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, mean(stats.iter().filter_map(|s| s.top_k_worst[i].1))))
        .collect();
    let top5: Vec<f64> = stats
        .iter()
        .map(|s| {
            s.top_k_worst
                .iter()
                .find(|(k, _)| *k == 5)
                .and_then(|(_, v)| *v)
                .unwrap_or(s.final_best)
        })
        .collect();
    let aggregates = MethodAggregates {
        final_best: stats.iter().map(|s| s.final_best).collect(),
        mean_final_best: mean(stats.iter().map(|s| s.final_best)),
        mean_best_ancestors: mean(stats.iter().map(|s| s.best_ancestors as f64)),
        mean_integrated_tools: mean(stats.iter().map(|s| s.integrated as f64)),
        mean_discovered_tools: mean(stats.iter().map(|s| s.discovered as f64)),
        top_k_worst,
    };
    Ok((aggregates, curves, top5))
}

fn mean_curve(curves: &[Vec<f64>], budget: usize) -> Vec<f64> {
    (0..budget)
        .map(|i| mean(curves.iter().map(|c| c[i])))
        .collect()
}

/// Compare matched GEA/tree transcript pairs.
///
/// Budgets must match per pair up to the group-mode bootstrap deficit: a run
/// seeded with a single agent selects an undersized first group, so its
/// realized offspring count may fall short of the nominal budget by at most
/// K-1. Curves carry their last value across any deficit.
pub fn compare(gea: &[RunTranscript], tree: &[RunTranscript]) -> Result<ComparisonReport> {
    if gea.is_empty() || gea.len() != tree.len() {
        return Err(GeaError::InvalidConfig(format!(
            "need matched transcript pairs, got {} vs {}",
            gea.len(),
            tree.len()
        )));
    }
    for (g, t) in gea.iter().zip(tree) {
        let allowance = g.header.config.selection.group_size.saturating_sub(1);
        if g.evolved_count().abs_diff(t.evolved_count()) > allowance {
            return Err(GeaError::BudgetMismatch {
                left: g.evolved_count(),
                right: t.evolved_count(),
            });
        }
    }
    let budget = gea[0].evolved_count().max(tree[0].evolved_count());
    let ranks = [1usize, 3, 5];

    let (gea_agg, gea_curves, gea_top5) = aggregate_method(gea, budget, &ranks)?;
    let (tree_agg, tree_curves, _) = aggregate_method(tree, budget, &ranks)?;

    let test = sign_test(&gea_agg.final_best, &tree_agg.final_best);
    Ok(ComparisonReport {
        seeds: gea.iter().map(|t| t.header.config.seed).collect(),
        budget,
        wins: test.wins,
        losses: test.losses,
        ties: test.ties,
        sign_test: test,
        mean_curve_gea: mean_curve(&gea_curves, budget),
        mean_curve_tree: mean_curve(&tree_curves, budget),
        tree_top1: tree_agg.final_best.clone(),
        gea: gea_agg,
        tree: tree_agg,
        gea_curves,
        tree_curves,
        gea_top5_worst: gea_top5,
        robustness: None,
    })
}

/// What the robustness harness records about one injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugInjectionRecord {
    /// Agent id of the faulty copy inside the repair run's archive.
    pub faulty_agent: AgentId,
    pub bug: BugId,
    /// Performance of the original agent before injection.
    pub pre_performance: f64,
}

/// Iterations from injection until some framework descendant of the faulty
/// agent runs bug-free at (or above) pre-injection performance; None when the
/// run never repairs it.
pub fn repair_iterations(
    transcript: &RunTranscript,
    injection: &BugInjectionRecord,
) -> Result<Option<u32>> {
    if !transcript
        .header
        .initial_records
        .iter()
        .any(|r| r.id == injection.faulty_agent)
    {
        return Err(GeaError::InvalidConfig(format!(
            "injection record names agent {}, absent from the run's initial archive",
            injection.faulty_agent
        )));
    }
    let archive = transcript.final_archive()?;
    for it in &transcript.iterations {
        for child in &it.offspring {
            if !child.gate_status.is_selectable() {
                continue;
            }
            let lineage = archive.framework_lineage(child.id)?;
            if !lineage.contains(&injection.faulty_agent) {
                continue;
            }
            if !child.broken_bugs.contains(&injection.bug)
                && child.performance >= injection.pre_performance
            {
                return Ok(Some(it.iteration + 1));
            }
        }
    }
    Ok(None)
}
