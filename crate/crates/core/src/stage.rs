use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::artifact::ArtifactKind;

/// Workflow stages in their only permitted order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ProblemDefinition,
    ComputeSpec,
    PipelineGeneration,
    CodeGeneration,
    Done,
}

impl Stage {
    pub const ORDER: [Stage; 5] = [
        Stage::ProblemDefinition,
        Stage::ComputeSpec,
        Stage::PipelineGeneration,
        Stage::CodeGeneration,
        Stage::Done,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::ProblemDefinition => "problem_definition",
            Stage::ComputeSpec => "compute_spec",
            Stage::PipelineGeneration => "pipeline_generation",
            Stage::CodeGeneration => "code_generation",
            Stage::Done => "done",
        }
    }

    pub fn next(self) -> Option<Stage> {
        let i = Stage::ORDER.iter().position(|s| *s == self)?;
        Stage::ORDER.get(i + 1).copied()
    }

    /// The stage whose completion produces artifacts of `kind`.
    pub fn producing(kind: ArtifactKind) -> Stage {
        match kind {
            ArtifactKind::ProblemDefinition => Stage::ProblemDefinition,
            ArtifactKind::ComputeSpec => Stage::ComputeSpec,
            ArtifactKind::PreprocessingPlan | ArtifactKind::PipelineSet => {
                Stage::PipelineGeneration
            }
            ArtifactKind::CodeArtifact => Stage::CodeGeneration,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ORDER
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}
