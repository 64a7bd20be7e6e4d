//! Optional HTTP backend for the reflect/evolve operators.
//!
//! The wire contract is a thin JSON boundary: POST {base_url}/reflect and
//! {base_url}/evolve with a `gea-operator/1` envelope. Any transport or
//! schema failure surfaces as an error; the engine never falls back to the
//! scripted operators silently.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::archive::{AgentId, AgentRecord, GateStatus, Patch, ToolSet};
use crate::error::{GeaError, RemoteErrorKind, Result};
use crate::traces::{validate_directive, Directive, SharedExperience};

pub const OPERATOR_SCHEMA: &str = "gea-operator/1";
pub const TOKEN_ENV_VAR: &str = "GEA_OPERATOR_TOKEN";

/// Agent view sent over the wire: the record minus its success-vector
/// internals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireAgent {
    pub id: AgentId,
    pub framework_parent: Option<AgentId>,
    pub tools: ToolSet,
    pub broken_bugs: Vec<crate::archive::BugId>,
    pub performance: f64,
    pub patches: Vec<Patch>,
    pub born_iteration: u32,
    pub gate_status: GateStatus,
}

impl From<&AgentRecord> for WireAgent {
    fn from(record: &AgentRecord) -> Self {
        WireAgent {
            id: record.id,
            framework_parent: record.framework_parent,
            tools: record.tools.clone(),
            broken_bugs: record.broken_bugs.iter().copied().collect(),
            performance: record.performance,
            patches: record.patches.clone(),
            born_iteration: record.born_iteration,
            gate_status: record.gate_status,
        }
    }
}

#[derive(Serialize)]
struct ReflectRequest<'a> {
    schema: &'static str,
    agent: WireAgent,
    shared_experience: &'a SharedExperience,
}

#[derive(Serialize)]
struct EvolveRequest<'a> {
    schema: &'static str,
    agent: WireAgent,
    directive: &'a Directive,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReflectResponse {
    directive: Directive,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvolveResponse {
    patches: Vec<Patch>,
}

pub struct RemoteOperator {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl RemoteOperator {
    pub fn new(base_url: String, timeout: Duration, token: Option<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        RemoteOperator {
            base_url,
            token,
            agent: config.into(),
        }
    }

    /// Bearer token read from GEA_OPERATOR_TOKEN when present.
    pub fn from_env(base_url: String, timeout: Duration) -> Self {
        Self::new(base_url, timeout, std::env::var(TOKEN_ENV_VAR).ok())
    }

    fn post(&self, endpoint: &str, body: String) -> Result<String> {
        let url = format!("{}/{}", self.base_url.trim_end_matches('/'), endpoint);
        let mut request = self
            .agent
            .post(&url)
            .header("content-type", "application/json");
        if let Some(token) = &self.token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => GeaError::RemoteOperator {
                kind: RemoteErrorKind::Timeout,
                detail: e.to_string(),
            },
            ureq::Error::StatusCode(code) => GeaError::RemoteOperator {
                kind: RemoteErrorKind::Status,
                detail: format!("server answered {code}"),
            },
            other => GeaError::RemoteOperator {
                kind: RemoteErrorKind::Transport,
                detail: other.to_string(),
            },
        })?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| GeaError::RemoteOperator {
                kind: RemoteErrorKind::Transport,
                detail: e.to_string(),
            })
    }

    /// Remote reflection. The returned directive is boundary-checked against
    /// the shared experience before it is accepted.
    pub fn reflect(&self, agent: &AgentRecord, shared: &SharedExperience) -> Result<Directive> {
        let request = ReflectRequest {
            schema: OPERATOR_SCHEMA,
            agent: WireAgent::from(agent),
            shared_experience: shared,
        };
        let body = serde_json::to_string(&request).expect("request serializes");
        let text = self.post("reflect", body)?;
        let response: ReflectResponse =
            serde_json::from_str(&text).map_err(|e| GeaError::RemoteOperator {
                kind: RemoteErrorKind::Schema,
                detail: format!("malformed reflect response: {e}"),
            })?;
        validate_directive(&response.directive, shared).map_err(|e| GeaError::RemoteOperator {
            kind: RemoteErrorKind::Schema,
            detail: e.to_string(),
        })?;
        if response.directive.agent != agent.id {
            return Err(GeaError::RemoteOperator {
                kind: RemoteErrorKind::Schema,
                detail: format!(
                    "directive addressed to agent {}, expected {}",
                    response.directive.agent, agent.id
                ),
            });
        }
        Ok(response.directive)
    }

    /// Remote evolution: translate a directive into patches server-side.
    pub fn evolve(&self, agent: &AgentRecord, directive: &Directive) -> Result<Vec<Patch>> {
        let request = EvolveRequest {
            schema: OPERATOR_SCHEMA,
            agent: WireAgent::from(agent),
            directive,
        };
        let body = serde_json::to_string(&request).expect("request serializes");
        let text = self.post("evolve", body)?;
        let response: EvolveResponse =
            serde_json::from_str(&text).map_err(|e| GeaError::RemoteOperator {
                kind: RemoteErrorKind::Schema,
                detail: format!("malformed evolve response: {e}"),
            })?;
        Ok(response.patches)
    }
}
