//! System messages and guardrail checklists for each agent task.

use serde::{Deserialize, Serialize};

/// The four agents, one per artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    ProblemDefiner,
    ComputeSpecifier,
    PipelineDesigner,
    CodeGenerator,
}

/// One kind of agent interaction. Preprocessing and pipeline design are both
/// handled by the pipeline designer, code generation and repair by the code
/// generator, each with its own system message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentTask {
    ProblemDefinition,
    ComputeSpecification,
    Preprocessing,
    PipelineGeneration,
    CodeGeneration,
    CodeRepair,
}

impl AgentTask {
    pub const ALL: [AgentTask; 6] = [
        AgentTask::ProblemDefinition,
        AgentTask::ComputeSpecification,
        AgentTask::Preprocessing,
        AgentTask::PipelineGeneration,
        AgentTask::CodeGeneration,
        AgentTask::CodeRepair,
    ];

    pub fn role(self) -> AgentRole {
        match self {
            AgentTask::ProblemDefinition => AgentRole::ProblemDefiner,
            AgentTask::ComputeSpecification => AgentRole::ComputeSpecifier,
            AgentTask::Preprocessing | AgentTask::PipelineGeneration => AgentRole::PipelineDesigner,
            AgentTask::CodeGeneration | AgentTask::CodeRepair => AgentRole::CodeGenerator,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentTask::ProblemDefinition => "problem_definition",
            AgentTask::ComputeSpecification => "compute_spec",
            AgentTask::Preprocessing => "preprocessing",
            AgentTask::PipelineGeneration => "pipeline_generation",
            AgentTask::CodeGeneration => "code_generation",
            AgentTask::CodeRepair => "code_repair",
        }
    }

    pub(crate) fn default_temperature(self) -> f64 {
        match self.role() {
            AgentRole::ProblemDefiner | AgentRole::ComputeSpecifier => 0.7,
            AgentRole::PipelineDesigner => 0.4,
            AgentRole::CodeGenerator => 0.2,
        }
    }

    pub(crate) fn system_message(self) -> &'static str {
        match self {
            AgentTask::ProblemDefinition => PROBLEM_DEFINITION,
            AgentTask::ComputeSpecification => COMPUTE_SPECIFICATION,
            AgentTask::Preprocessing => PREPROCESSING,
            AgentTask::PipelineGeneration => PIPELINE_GENERATION,
            AgentTask::CodeGeneration => CODE_GENERATION,
            AgentTask::CodeRepair => CODE_REPAIR,
        }
    }

    pub(crate) fn checklist(self) -> &'static [&'static str] {
        match self {
            AgentTask::ProblemDefinition => &[
                "Establish the researcher's domain and level of machine-learning expertise, and adapt vocabulary to it.",
                "Identify the task type: classification, regression, clustering or other.",
                "State the objective in one or two sentences the researcher agrees with.",
                "Characterize the data: modality, number of records, features and target.",
                "Record constraints such as regulation, deadlines, interpretability or deployment limits.",
                "Agree on the metrics that define success.",
                "Ask one question at a time and never skip an item above.",
            ],
            AgentTask::ComputeSpecification => &[
                "Establish where the work will run: on premises, cloud or hybrid.",
                "List the available accelerators (GPU, TPU, or CPU only) with counts and memory.",
                "Record the available storage capacity in gigabytes.",
                "Record the budget, or that it is unconstrained.",
                "Record the preferred machine-learning platform.",
                "Check the resources against the data volume in the problem definition.",
                "Ask one question at a time and never skip an item above.",
            ],
            AgentTask::Preprocessing => &[
                "Base every step on the data characteristics in the problem definition.",
                "Cover missing values, normalization, feature engineering and data transformations where relevant.",
                "Respect the compute environment when proposing expensive steps.",
                "Give every step a unique name, a description and a rationale.",
            ],
            AgentTask::PipelineGeneration => &[
                "Produce exactly five candidate pipelines indexed 1 to 5.",
                "Give every candidate at least one pro and at least one con.",
                "Reference preprocessing steps only by their names in the preprocessing plan.",
                "Keep every candidate feasible on the stated compute environment and platform.",
                "Choose evaluation metrics consistent with the agreed success metrics.",
            ],
            AgentTask::CodeGeneration => &[
                "Implement only the selected candidate pipeline.",
                "Target the preferred platform from the compute environment specification.",
                "Return complete files, never fragments or placeholders.",
                "Name an entrypoint file that runs the whole pipeline.",
                "Report the agreed evaluation metrics when the program finishes.",
            ],
            AgentTask::CodeRepair => &[
                "Fix the error shown in the execution output.",
                "Keep the pipeline design unchanged unless the error requires otherwise.",
                "Return the complete corrected file set with its entrypoint.",
            ],
        }
    }
}

const ENVELOPE_DIALOGUE: &str = r#"
Every reply must be exactly one JSON object and nothing else, with no markdown fences:
{"status": "question" | "final", "message": "<text shown to the researcher>", "payload": {...}}
Use "question" to ask one clarifying question; omit "payload".
Use "final" only when every required item has been covered; "payload" must then hold the complete document."#;

const ENVELOPE_ONE_SHOT: &str = r#"
Reply with exactly one JSON object and nothing else, with no markdown fences:
{"status": "final", "message": "<short summary for the researcher>", "payload": {...}}
This is a single exchange: do not ask questions."#;

const PROBLEM_DEFINITION: &str = concat!(
    "You are a research methodologist who helps scientists turn an idea into a well-defined AI task. ",
    "Guide the researcher through a short dialogue, reasoning step by step about what is still missing.\n",
    "The payload is a problem definition with fields: domain (string), user_expertise (novice | intermediate | expert), ",
    "task_type (classification | regression | clustering | other), objective (string), ",
    "data_description {modality (image | text | tabular | time_series | mixed), record_count (integer), ",
    "feature_summary (string), target_description (string)}, constraints (list of strings), ",
    "success_metrics (non-empty list of metric names).",
);

const COMPUTE_SPECIFICATION: &str = concat!(
    "You are an ML infrastructure engineer who captures the compute environment available for a research project. ",
    "Use the problem definition to ask about resources that matter for this task.\n",
    "The payload is a compute specification with fields: location (on_premises | cloud | hybrid), ",
    "accelerators (non-empty list of {kind (gpu | tpu | cpu_only), count (positive integer), memory_gb (number)}), ",
    "storage_gb (number >= 0), budget ({amount, currency} or \"unconstrained\"), preferred_ml_platform (string).",
);

const PREPROCESSING: &str = concat!(
    "You are a data preparation specialist. Propose the preprocessing strategy for the task described ",
    "in the problem definition, within the compute environment given.\n",
    "The payload is a preprocessing plan: {steps: [{name, description, rationale}]} with at least one step and unique names.",
);

const PIPELINE_GENERATION: &str = concat!(
    "You are an AI pipeline specialist. Using the problem definition, compute environment and preprocessing plan, ",
    "design five alternative end-to-end pipelines, reasoning step by step about their trade-offs.\n",
    "The payload is {candidates: [{index (1-5), name, description, preprocessing_refs (step names), model_family, ",
    "training_procedure, evaluation_metrics, pros (non-empty list), cons (non-empty list)}]} with exactly five candidates.",
);

const CODE_GENERATION: &str = concat!(
    "You are a code generation expert. Implement the selected pipeline candidate as a complete, runnable program ",
    "for the preferred platform, consistent with every upstream artifact.\n",
    "The payload is {files: [{relative_path, content}], entrypoint (one of the relative paths)}.",
);

const CODE_REPAIR: &str = concat!(
    "You are a code generation expert repairing a program that failed to run. ",
    "Read the code and its error output, find the cause and return a corrected program.\n",
    "The payload is {files: [{relative_path, content}], entrypoint (one of the relative paths)}.",
);

impl AgentTask {
    pub(crate) fn envelope_instructions(self) -> &'static str {
        match self {
            AgentTask::ProblemDefinition | AgentTask::ComputeSpecification => ENVELOPE_DIALOGUE,
            _ => ENVELOPE_ONE_SHOT,
        }
    }
}
