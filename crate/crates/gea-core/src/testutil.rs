//! Construction helpers shared by unit tests.

use crate::archive::{AgentId, AgentRecord, GateStatus, TaskSuccessVector, ToolSet, ToolTag};

pub fn simple_record(id: u64, parent: Option<u64>, bits: &[bool]) -> AgentRecord {
    record_with(id, parent, bits, Vec::new())
}

pub fn record_with(
    id: u64,
    parent: Option<u64>,
    bits: &[bool],
    tools: Vec<ToolTag>,
) -> AgentRecord {
    let z = TaskSuccessVector::new(bits.to_vec());
    let performance = z.success_rate();
    AgentRecord {
        id: AgentId(id),
        framework_parent: parent.map(AgentId),
        tools: tools.into_iter().collect::<ToolSet>(),
        broken_bugs: Default::default(),
        z,
        performance,
        patches: Vec::new(),
        born_iteration: 0,
        gate_status: GateStatus::Passed,
    }
}
