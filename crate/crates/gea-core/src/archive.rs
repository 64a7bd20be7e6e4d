//! Domain types, the append-only agent archive, and lineage/provenance queries.
//!
//! Records are immutable once inserted: evolving an agent always creates a new
//! record, so the archive doubles as a complete history of the run.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{GeaError, Result};
use crate::persist;

pub const ARCHIVE_FORMAT_VERSION: u32 = 1;

/// Sequential agent identifier; id order is birth order within one run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Framework bug identifier (1-based within a world's catalog).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct BugId(pub u32);

impl fmt::Display for BugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0)
    }
}

/// Where a tool or patch came from: adopted from another agent's trace, or
/// produced by the agent itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    /// Original discovery / self-sourced work (the SELF sentinel).
    Original,
    /// Adopted from the given agent's shared trace.
    Agent(AgentId),
}

impl Provenance {
    pub fn agent(&self) -> Option<AgentId> {
        match self {
            Provenance::Original => None,
            Provenance::Agent(id) => Some(*id),
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Original => f.write_str("self"),
            Provenance::Agent(id) => write!(f, "agent {id}"),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Provenance::Original => serializer.serialize_str("self"),
            Provenance::Agent(id) => serializer.serialize_u64(id.0),
        }
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ProvenanceVisitor;

        impl Visitor<'_> for ProvenanceVisitor {
            type Value = Provenance;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"self\" or an agent id")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Provenance, E> {
                if v == "self" {
                    Ok(Provenance::Original)
                } else {
                    Err(E::custom(format!("expected \"self\", got {v:?}")))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Provenance, E> {
                Ok(Provenance::Agent(AgentId(v)))
            }
        }

        deserializer.deserialize_any(ProvenanceVisitor)
    }
}

/// One tool-level capability plus the trace it was adopted from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ToolTag {
    pub name: String,
    pub origin: Provenance,
}

impl ToolTag {
    pub fn original(name: impl Into<String>) -> Self {
        ToolTag {
            name: name.into(),
            origin: Provenance::Original,
        }
    }

    pub fn adopted(name: impl Into<String>, from: AgentId) -> Self {
        ToolTag {
            name: name.into(),
            origin: Provenance::Agent(from),
        }
    }
}

/// An agent's tool inventory, keyed by tool name.
///
/// Serialized as an array sorted by tool name so archive files are byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ToolSet(std::collections::BTreeMap<String, Provenance>);

impl ToolSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn origin_of(&self, name: &str) -> Option<Provenance> {
        self.0.get(name).copied()
    }

    /// Returns false (and leaves the set unchanged) when the name is taken.
    pub fn insert(&mut self, tag: ToolTag) -> bool {
        if self.0.contains_key(&tag.name) {
            return false;
        }
        self.0.insert(tag.name, tag.origin);
        true
    }

    pub fn remove(&mut self, name: &str) -> bool {
        self.0.remove(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = ToolTag> + '_ {
        self.0.iter().map(|(name, origin)| ToolTag {
            name: name.clone(),
            origin: *origin,
        })
    }
}

impl FromIterator<ToolTag> for ToolSet {
    fn from_iter<I: IntoIterator<Item = ToolTag>>(iter: I) -> Self {
        let mut set = ToolSet::new();
        for tag in iter {
            set.insert(tag);
        }
        set
    }
}

impl Serialize for ToolSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for tag in self.iter() {
            seq.serialize_element(&tag)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ToolSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let tags = Vec::<ToolTag>::deserialize(deserializer)?;
        let mut set = ToolSet::new();
        for tag in tags {
            let name = tag.name.clone();
            if !set.insert(tag) {
                return Err(de::Error::custom(format!("duplicate tool {name:?}")));
            }
        }
        Ok(set)
    }
}

/// Binary success vector over the probe task set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaskSuccessVector(Vec<bool>);

impl TaskSuccessVector {
    pub fn new(bits: Vec<bool>) -> Self {
        TaskSuccessVector(bits)
    }

    pub fn zeros(len: usize) -> Self {
        TaskSuccessVector(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Inner product of two binary vectors. Callers check dimensions.
    pub fn dot(&self, other: &TaskSuccessVector) -> u64 {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .filter(|(a, b)| **a && **b)
            .count() as u64
    }

    pub fn norm(&self) -> f64 {
        (self.ones() as f64).sqrt()
    }

    /// Success rate: share of solved probe tasks.
    pub fn success_rate(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.ones() as f64 / self.0.len() as f64
    }
}

impl FromIterator<bool> for TaskSuccessVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        TaskSuccessVector(iter.into_iter().collect())
    }
}

impl Serialize for TaskSuccessVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let s: String = self.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        serializer.serialize_str(&s)
    }
}

impl<'de> Deserialize<'de> for TaskSuccessVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => {
                    return Err(de::Error::custom(format!(
                        "invalid bit {other:?} in success vector"
                    )))
                }
            }
        }
        Ok(TaskSuccessVector(bits))
    }
}

/// One framework-level modification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PatchKind {
    AddTool { tool: ToolTag },
    RemoveTool { name: String },
    RepairBug { bug: BugId },
    Noop,
}

impl fmt::Display for PatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchKind::AddTool { tool } => match tool.origin {
                Provenance::Original => write!(f, "add tool {} (discovered)", tool.name),
                Provenance::Agent(id) => write!(f, "add tool {} (from agent {id})", tool.name),
            },
            PatchKind::RemoveTool { name } => write!(f, "remove tool {name}"),
            PatchKind::RepairBug { bug } => write!(f, "repair bug {bug}"),
            PatchKind::Noop => f.write_str("noop"),
        }
    }
}

/// A recorded patch: what changed, where it came from, and what it bought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Patch {
    pub id: u64,
    pub kind: PatchKind,
    /// Performance change measured by the Act step; None until evaluated.
    pub delta_score: Option<f64>,
    pub source_agent: Provenance,
    /// Set when the patch had no effect (e.g. repairing an absent bug).
    pub ineffective: bool,
}

impl Patch {
    pub fn new(id: u64, kind: PatchKind, source_agent: Provenance) -> Self {
        Patch {
            id,
            kind,
            delta_score: None,
            source_agent,
            ineffective: false,
        }
    }

    pub fn noop(id: u64) -> Self {
        Patch::new(id, PatchKind::Noop, Provenance::Original)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateStatus {
    Passed,
    FailedCompile,
    FailedBasic,
}

impl GateStatus {
    pub fn is_selectable(self) -> bool {
        self == GateStatus::Passed
    }
}

/// Framework state of an agent: its tool inventory and any active bugs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Phenotype {
    pub tools: ToolSet,
    pub broken_bugs: BTreeSet<BugId>,
}

/// One evolved agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRecord {
    pub id: AgentId,
    pub framework_parent: Option<AgentId>,
    pub tools: ToolSet,
    pub broken_bugs: BTreeSet<BugId>,
    pub z: TaskSuccessVector,
    pub performance: f64,
    pub patches: Vec<Patch>,
    pub born_iteration: u32,
    pub gate_status: GateStatus,
}

impl AgentRecord {
    pub fn phenotype(&self) -> Phenotype {
        Phenotype {
            tools: self.tools.clone(),
            broken_bugs: self.broken_bugs.clone(),
        }
    }
}

/// Whether provenance queries chase adopted material recursively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncestryMode {
    /// Transitive closure: an adopted tool carries its originator's ancestry.
    Transitive,
    /// Only agents referenced directly by this record.
    DirectOnly,
}

/// Append-only store of every agent discovered during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    dimension: usize,
    run_seed: u64,
    records: Vec<AgentRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveHeader {
    format_version: u32,
    #[serde(rename = "D")]
    dimension: usize,
    run_seed: u64,
}

impl Archive {
    /// An empty archive for agents whose success vectors have `dimension` bits.
    pub fn new(dimension: usize, run_seed: u64) -> Self {
        Archive {
            dimension,
            run_seed,
            records: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn run_seed(&self) -> u64 {
        self.run_seed
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn next_id(&self) -> AgentId {
        AgentId(self.records.len() as u64)
    }

    pub fn get(&self, id: AgentId) -> Option<&AgentRecord> {
        self.records.get(id.0 as usize)
    }

    pub fn records(&self) -> &[AgentRecord] {
        &self.records
    }

    pub fn selectable(&self) -> impl Iterator<Item = &AgentRecord> {
        self.records
            .iter()
            .filter(|r| r.gate_status.is_selectable())
    }

    pub fn selectable_count(&self) -> usize {
        self.selectable().count()
    }

    /// Highest-performance selectable agent; ties go to the oldest id.
    pub fn best_selectable(&self) -> Option<&AgentRecord> {
        let mut best: Option<&AgentRecord> = None;
        for record in self.selectable() {
            match best {
                Some(b) if record.performance <= b.performance => {}
                _ => best = Some(record),
            }
        }
        best
    }

    /// Append a record. Ids must arrive sequentially; records are validated
    /// against the archive invariants so corruption surfaces at the boundary.
    pub fn insert(&mut self, record: AgentRecord) -> Result<()> {
        let expected = self.records.len() as u64;
        if record.id.0 < expected {
            return Err(GeaError::DuplicateId(record.id));
        }
        if record.id.0 > expected {
            return Err(GeaError::NonSequentialId {
                id: record.id,
                expected,
            });
        }
        if record.z.len() != self.dimension {
            return Err(GeaError::DimensionMismatch {
                left: record.z.len(),
                right: self.dimension,
            });
        }
        if let Some(parent) = record.framework_parent {
            if parent.0 >= record.id.0 {
                return Err(GeaError::InvalidRecord(format!(
                    "agent {} lists framework parent {parent} born no earlier than itself",
                    record.id
                )));
            }
        }
        let recomputed = record.z.success_rate();
        if recomputed != record.performance {
            return Err(GeaError::InvalidRecord(format!(
                "agent {} stores performance {} but its success vector gives {}",
                record.id, record.performance, recomputed
            )));
        }
        for tag in record.tools.iter() {
            if let Some(origin) = tag.origin.agent() {
                if origin.0 >= record.id.0 {
                    return Err(GeaError::InvalidRecord(format!(
                        "agent {} adopted tool {} from {origin}, which is not an earlier agent",
                        record.id, tag.name
                    )));
                }
            }
        }
        for patch in &record.patches {
            if let Some(source) = patch.source_agent.agent() {
                if source.0 >= record.id.0 {
                    return Err(GeaError::InvalidRecord(format!(
                        "agent {} carries patch {} sourced from {source}, which is not an earlier agent",
                        record.id, patch.id
                    )));
                }
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Chain of framework parents from `id` back to its root, inclusive.
    pub fn framework_lineage(&self, id: AgentId) -> Result<Vec<AgentId>> {
        let mut record = self.get(id).ok_or(GeaError::AgentNotFound(id))?;
        let mut chain = vec![record.id];
        while let Some(parent) = record.framework_parent {
            record = self.get(parent).ok_or(GeaError::AgentNotFound(parent))?;
            chain.push(record.id);
        }
        Ok(chain)
    }

    fn direct_sources(record: &AgentRecord) -> BTreeSet<AgentId> {
        let mut out = BTreeSet::new();
        if let Some(parent) = record.framework_parent {
            out.insert(parent);
        }
        for tag in record.tools.iter() {
            if let Some(origin) = tag.origin.agent() {
                out.insert(origin);
            }
        }
        for patch in &record.patches {
            if let Some(source) = patch.source_agent.agent() {
                out.insert(source);
            }
        }
        out
    }

    /// Unique historical agents whose experience reached this agent, through
    /// framework lineage and adopted material. Excludes `id` itself.
    pub fn experience_ancestors(
        &self,
        id: AgentId,
        mode: AncestryMode,
    ) -> Result<BTreeSet<AgentId>> {
        let record = self.get(id).ok_or(GeaError::AgentNotFound(id))?;
        let direct = Self::direct_sources(record);
        if mode == AncestryMode::DirectOnly {
            return Ok(direct);
        }
        let mut seen = BTreeSet::new();
        let mut frontier: Vec<AgentId> = direct.into_iter().collect();
        while let Some(next) = frontier.pop() {
            if !seen.insert(next) {
                continue;
            }
            let ancestor = self.get(next).ok_or(GeaError::AgentNotFound(next))?;
            for source in Self::direct_sources(ancestor) {
                if !seen.contains(&source) {
                    frontier.push(source);
                }
            }
        }
        Ok(seen)
    }

    /// Write as newline-delimited records: a header line, then one agent per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ArchiveHeader {
            format_version: ARCHIVE_FORMAT_VERSION,
            dimension: self.dimension,
            run_seed: self.run_seed,
        };
        persist::write_jsonl(path, &header, self.records.iter())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, records): (ArchiveHeader, Vec<AgentRecord>) = persist::read_jsonl(path)?;
        if header.format_version != ARCHIVE_FORMAT_VERSION {
            return Err(GeaError::FormatVersion {
                found: header.format_version,
                expected: ARCHIVE_FORMAT_VERSION,
            });
        }
        let mut archive = Archive::new(header.dimension, header.run_seed);
        for (line, record) in records.into_iter().enumerate() {
            archive.insert(record).map_err(|e| GeaError::Parse {
                // header is line 1, first record line 2
                line: line + 2,
                message: e.to_string(),
            })?;
        }
        Ok(archive)
    }
}
