use std::fmt::Write as _;

use super::{AgentConfig, ConversationTurn, Snippet, Speaker};
use crate::artifact::ArtifactKind;

/// A prior artifact as it appears in a prompt: its exact stored bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptArtifact {
    pub kind: ArtifactKind,
    pub text: String,
}

impl PromptArtifact {
    pub fn new(kind: ArtifactKind, text: impl Into<String>) -> Self {
        PromptArtifact {
            kind,
            text: text.into(),
        }
    }
}

/// Renders the guardrail checklist as numbered constraints.
pub fn render_checklist(items: &[String]) -> String {
    let mut out = String::from("Constraints:");
    for (i, item) in items.iter().enumerate() {
        let _ = write!(out, "\n{}. {item}", i + 1);
    }
    out
}

/// Assembles the full prompt for one agent turn.
///
/// Sections appear in a fixed order: role text, numbered constraints, one
/// section per prior artifact, one context section per snippet, then the
/// conversation so far. Artifact text is embedded verbatim.
pub fn render_prompt(
    config: &AgentConfig,
    prior_artifacts: &[PromptArtifact],
    snippets: &[Snippet],
    conversation: &[ConversationTurn],
) -> String {
    let mut out = config.role_text.clone();
    if !config.guardrail_checklist.is_empty() {
        out.push_str("\n\n");
        out.push_str(&render_checklist(&config.guardrail_checklist));
    }
    for artifact in prior_artifacts {
        let _ = write!(
            out,
            "\n\n=== Artifact: {} ({}) ===\n{}",
            artifact.kind.label(),
            artifact.kind,
            artifact.text
        );
    }
    for snippet in snippets {
        let _ = write!(
            out,
            "\n\n=== Context: {} (score {}) ===\n{}",
            snippet.source_id, snippet.score, snippet.text
        );
    }
    if !conversation.is_empty() {
        out.push_str("\n\n=== Conversation ===");
        for turn in conversation {
            let tag = match turn.speaker {
                Speaker::System => "system",
                Speaker::User => "user",
                Speaker::Agent => "agent",
            };
            let _ = write!(out, "\n[{tag}] {}", turn.text);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentTask;
    use crate::artifact::canonical_json;
    use crate::fixtures;

    const GOLDEN: &str = include_str!("../../fixtures/golden/pipeline_designer_prompt.txt");

    #[test]
    fn empty_context_is_role_text_plus_checklist() {
        let config = AgentConfig::for_task(AgentTask::ProblemDefinition);
        let prompt = render_prompt(&config, &[], &[], &[]);
        assert_eq!(
            prompt,
            format!(
                "{}\n\n{}",
                config.role_text,
                render_checklist(&config.guardrail_checklist)
            )
        );
    }

    #[test]
    fn checklist_is_numbered() {
        let items = vec!["first".to_string(), "second".to_string()];
        assert_eq!(
            render_checklist(&items),
            "Constraints:\n1. first\n2. second"
        );
    }

    #[test]
    fn compute_prompt_contains_serialized_problem_definition() {
        let config = AgentConfig::for_task(AgentTask::ComputeSpecification);
        let a1 = canonical_json(&fixtures::problem_definition());
        let turns = vec![
            ConversationTurn::new(Speaker::User, "Let's set up compute."),
            ConversationTurn::new(Speaker::Agent, "Cloud or on premises?"),
        ];
        let prompt = render_prompt(
            &config,
            &[PromptArtifact::new(
                ArtifactKind::ProblemDefinition,
                a1.clone(),
            )],
            &[],
            &turns,
        );
        assert!(prompt.contains(&a1));
        assert!(prompt.ends_with("[user] Let's set up compute.\n[agent] Cloud or on premises?"));
    }

    fn designer_inputs() -> (AgentConfig, Vec<PromptArtifact>, Vec<Snippet>) {
        let config = AgentConfig::for_task(AgentTask::PipelineGeneration);
        let artifacts = vec![
            PromptArtifact::new(
                ArtifactKind::ProblemDefinition,
                canonical_json(&fixtures::problem_definition()),
            ),
            PromptArtifact::new(
                ArtifactKind::ComputeSpec,
                canonical_json(&fixtures::compute_spec()),
            ),
            PromptArtifact::new(
                ArtifactKind::PreprocessingPlan,
                canonical_json(&fixtures::preprocessing_plan()),
            ),
        ];
        let snippets = vec![
            Snippet {
                source_id: "transfer_learning.md".into(),
                text:
                    "Transfer learning from ImageNet backbones works well for small image datasets."
                        .into(),
                score: 2.0,
            },
            Snippet {
                source_id: "class_imbalance.md".into(),
                text: "Use class weights or stratified splits for imbalanced classification."
                    .into(),
                score: 1.0,
            },
        ];
        (config, artifacts, snippets)
    }

    #[test]
    fn pipeline_designer_prompt_matches_golden_file() {
        let (config, artifacts, snippets) = designer_inputs();
        let prompt = render_prompt(&config, &artifacts, &snippets, &[]);
        assert_eq!(prompt, GOLDEN);
        assert_eq!(prompt.matches("=== Artifact: ").count(), 3);
        assert_eq!(prompt.matches("=== Context: ").count(), 2);
    }

    #[test]
    fn sections_appear_in_order() {
        let (config, artifacts, snippets) = designer_inputs();
        let turns = vec![ConversationTurn::new(Speaker::System, "go")];
        let prompt = render_prompt(&config, &artifacts, &snippets, &turns);
        let pos = |needle: &str| {
            prompt
                .find(needle)
                .unwrap_or_else(|| panic!("{needle} missing"))
        };
        let order = [
            pos("Constraints:"),
            pos("(problem_definition)"),
            pos("(compute_spec)"),
            pos("(preprocessing_plan)"),
            pos("transfer_learning.md"),
            pos("class_imbalance.md"),
            pos("=== Conversation ==="),
        ];
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
    }
}
