//! Parent selection: cosine-distance KNN novelty and the combined
//! performance-novelty score, plus the single-parent baseline selector.
//!
//! All operations are pure functions over an archive snapshot. Neighbor
//! averages are summed in ascending neighbor-id order so results do not
//! depend on evaluation order.

use serde::{Deserialize, Serialize};

use crate::archive::{AgentId, AgentRecord, Archive, TaskSuccessVector};
use crate::error::{GeaError, Result};

/// Parameters of the selection criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    /// Parent group size.
    #[serde(rename = "K")]
    pub group_size: usize,
    /// Nearest-neighbor count for novelty.
    #[serde(rename = "M")]
    pub neighborhood: usize,
    /// Denominator stabilizer in the cosine distance.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1e-8
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            group_size: 2,
            neighborhood: 4,
            epsilon: default_epsilon(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 1 {
            return Err(GeaError::InvalidConfig("K must be at least 1".to_string()));
        }
        if self.neighborhood < 1 {
            return Err(GeaError::InvalidConfig("M must be at least 1".to_string()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(GeaError::InvalidConfig(
                "epsilon must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// The selected parents, ordered by descending score (ties: older id first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParentGroup {
    pub members: Vec<AgentId>,
    pub scores: Vec<f64>,
}

/// Cosine dissimilarity of two success vectors: 1 - z_i.z_j / (|z_i||z_j| + eps).
pub fn cosine_distance(a: &TaskSuccessVector, b: &TaskSuccessVector, epsilon: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GeaError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(GeaError::OutOfRange {
            what: "epsilon",
            value: epsilon,
        });
    }
    Ok(1.0 - a.dot(b) as f64 / (a.norm() * b.norm() + epsilon))
}

/// Combined ranking score: performance * sqrt(novelty).
pub fn pn_score(performance: f64, novelty: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&performance) {
        return Err(GeaError::OutOfRange {
            what: "performance",
            value: performance,
        });
    }
    if !(0.0..=1.0).contains(&novelty) {
        return Err(GeaError::OutOfRange {
            what: "novelty",
            value: novelty,
        });
    }
    Ok(performance * novelty.sqrt())
}

/// Mean distance from `records[idx]` to its `m` most similar peers.
/// With no peers at all the agent is maximally novel (1.0).
fn novelty_among(records: &[&AgentRecord], idx: usize, m: usize, epsilon: f64) -> Result<f64> {
    let me = records[idx];
    let mut distances: Vec<(AgentId, f64)> = Vec::with_capacity(records.len().saturating_sub(1));
    for (j, other) in records.iter().enumerate() {
        if j == idx {
            continue;
        }
        distances.push((other.id, cosine_distance(&me.z, &other.z, epsilon)?));
    }
    if distances.is_empty() {
        return Ok(1.0);
    }
    // records arrive in ascending id order, so a stable sort keeps distance
    // ties on the older neighbor.
    distances.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distance"));
    let take = m.min(distances.len());
    let mut chosen = distances[..take].to_vec();
    chosen.sort_by_key(|(id, _)| *id);
    let sum: f64 = chosen.iter().map(|(_, d)| d).sum();
    Ok(sum / take as f64)
}

fn selectable_sorted(archive: &Archive) -> Vec<&AgentRecord> {
    // records() is already in id order
    archive.selectable().collect()
}

/// KNN novelty of one gate-passed agent against the selectable archive.
pub fn knn_novelty(
    archive: &Archive,
    id: AgentId,
    neighborhood: usize,
    epsilon: f64,
) -> Result<f64> {
    let records = selectable_sorted(archive);
    let idx = records
        .iter()
        .position(|r| r.id == id)
        .ok_or(GeaError::AgentNotFound(id))?;
    novelty_among(&records, idx, neighborhood, epsilon)
}

/// Rank (id, performance, novelty) entries by performance * sqrt(novelty),
/// descending, with ties broken by ascending id. No range validation: this is
/// the shared ranking core, and scale invariance of the ranking is one of its
/// tested properties.
pub fn rank_by_performance_novelty(entries: &[(AgentId, f64, f64)]) -> Vec<(AgentId, f64)> {
    let mut scored: Vec<(AgentId, f64)> = entries
        .iter()
        .map(|&(id, alpha, nov)| (id, alpha * nov.sqrt()))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite score")
            .then_with(|| a.0.cmp(&b.0))
    });
    scored
}

/// Top-K parents by the performance-novelty criterion. Returns fewer than K
/// members when the selectable archive is smaller than K.
pub fn select_parent_group(archive: &Archive, cfg: &SelectionConfig) -> Result<ParentGroup> {
    cfg.validate()?;
    let records = selectable_sorted(archive);
    if records.is_empty() {
        return Err(GeaError::EmptyArchive);
    }
    let mut entries = Vec::with_capacity(records.len());
    for idx in 0..records.len() {
        let nov = novelty_among(&records, idx, cfg.neighborhood, cfg.epsilon)?;
        entries.push((records[idx].id, records[idx].performance, nov));
    }
    let ranked = rank_by_performance_novelty(&entries);
    let take = cfg.group_size.min(ranked.len());
    let (members, scores) = ranked[..take].iter().copied().unzip();
    Ok(ParentGroup { members, scores })
}

/// Baseline selector: the same criterion with K forced to 1.
pub fn select_single_parent(archive: &Archive, cfg: &SelectionConfig) -> Result<AgentId> {
    let single = SelectionConfig {
        group_size: 1,
        ..cfg.clone()
    };
    let group = select_parent_group(archive, &single)?;
    Ok(group.members[0])
}
