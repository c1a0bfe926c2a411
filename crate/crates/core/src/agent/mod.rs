//! Role-configured agents: prompt assembly, transport and envelope parsing.

mod backend;
mod envelope;
mod prompt;
mod retrieval;
mod roles;

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use backend::{
    send_turn, BackendError, ChatBackend, ChatRequest, Exchange, HttpBackend, HttpConfig,
    RecordedRequest, ScriptedBackend, TranscriptEntry,
};
pub use envelope::{parse_envelope, Envelope, EnvelopeError, EnvelopeStatus};
pub use prompt::{render_checklist, render_prompt, PromptArtifact};
pub use retrieval::{retrieve_context, retrieve_from_dir, Retrieval, Snippet, SnippetCorpus};
pub use roles::{AgentRole, AgentTask};

/// Default number of corrective re-prompts before a guardrail failure.
pub const DEFAULT_MAX_REPROMPT: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub agent_id: AgentRole,
    pub task: AgentTask,
    pub role_text: String,
    pub guardrail_checklist: Vec<String>,
    pub temperature: f64,
    pub max_reprompt: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("role text must not be empty")]
    EmptyRoleText,
    #[error("temperature {0} is outside [0, 2]")]
    Temperature(f64),
}

impl AgentConfig {
    /// The built-in configuration for `task`.
    pub fn for_task(task: AgentTask) -> Self {
        AgentConfig {
            agent_id: task.role(),
            task,
            role_text: format!(
                "{}\n{}",
                task.system_message(),
                task.envelope_instructions()
            ),
            guardrail_checklist: task.checklist().iter().map(|s| s.to_string()).collect(),
            temperature: task.default_temperature(),
            max_reprompt: DEFAULT_MAX_REPROMPT,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.role_text.trim().is_empty() {
            return Err(ConfigError::EmptyRoleText);
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        Ok(())
    }
}

/// One configuration per agent task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSet {
    configs: Vec<AgentConfig>,
}

impl Default for AgentSet {
    fn default() -> Self {
        AgentSet {
            configs: AgentTask::ALL
                .into_iter()
                .map(AgentConfig::for_task)
                .collect(),
        }
    }
}

impl AgentSet {
    pub fn get(&self, task: AgentTask) -> &AgentConfig {
        self.configs
            .iter()
            .find(|c| c.task == task)
            .expect("agent set holds every task")
    }

    pub fn get_mut(&mut self, task: AgentTask) -> &mut AgentConfig {
        self.configs
            .iter_mut()
            .find(|c| c.task == task)
            .expect("agent set holds every task")
    }

    /// Sets the re-prompt budget of every task.
    pub fn with_max_reprompt(mut self, max_reprompt: u32) -> Self {
        for c in &mut self.configs {
            c.max_reprompt = max_reprompt;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub speaker: Speaker,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl ConversationTurn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        ConversationTurn {
            speaker,
            text: text.into(),
            timestamp: now_millis(),
        }
    }
}

pub(crate) fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_configs_are_valid() {
        let set = AgentSet::default();
        for task in AgentTask::ALL {
            let c = set.get(task);
            c.validate().unwrap();
            assert_eq!(c.task, task);
            assert!(
                c.role_text.contains("\"status\""),
                "{task:?} must instruct the envelope"
            );
            assert_eq!(c.max_reprompt, 2);
        }
    }

    #[test]
    fn default_temperatures() {
        let set = AgentSet::default();
        assert_eq!(set.get(AgentTask::ProblemDefinition).temperature, 0.7);
        assert_eq!(set.get(AgentTask::ComputeSpecification).temperature, 0.7);
        assert_eq!(set.get(AgentTask::Preprocessing).temperature, 0.4);
        assert_eq!(set.get(AgentTask::PipelineGeneration).temperature, 0.4);
        assert_eq!(set.get(AgentTask::CodeGeneration).temperature, 0.2);
        assert_eq!(set.get(AgentTask::CodeRepair).temperature, 0.2);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = AgentConfig::for_task(AgentTask::CodeRepair);
        c.temperature = 2.5;
        assert_eq!(c.validate(), Err(ConfigError::Temperature(2.5)));
        c.temperature = 0.0;
        c.role_text = "  ".into();
        assert_eq!(c.validate(), Err(ConfigError::EmptyRoleText));
    }
}
