//! Filesystem artifact store.
//!
//! Layout under the store root:
//!
//! ```text
//! sessions/<session_id>/session.json
//! sessions/<session_id>/artifacts/a1_problem.json
//! sessions/<session_id>/artifacts/a2_compute.json
//! sessions/<session_id>/artifacts/a3_preprocessing.json
//! sessions/<session_id>/artifacts/a3_pipelines.json
//! sessions/<session_id>/artifacts/a4_code_<k>/manifest.json   (+ code files)
//! sessions/<session_id>/artifacts/a4_code_<k>_r<n>/...         (repairs)
//! sessions/<session_id>/logs/<step>.jsonl
//! ```
//!
//! Documents are written in canonical form (sorted keys, compact), so the
//! SHA-256 of the file bytes is the content hash. Every write goes to a
//! temporary file in the target directory and is renamed into place.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::artifact::{canonical_json, stamp, validate_artifact, ArtifactKind, ValidationReport};

/// Points at one persisted artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub session_id: String,
    pub artifact_kind: ArtifactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_index: Option<u8>,
    /// Path relative to the store root, `/`-separated.
    pub path: String,
    pub content_hash: String,
}

impl ArtifactRef {
    /// Slot name inside the session's artifact directory, e.g. `a4_code_2_r1`.
    pub fn slot(&self) -> &str {
        let rel = self
            .path
            .rsplit_once("/artifacts/")
            .map(|(_, r)| r)
            .unwrap_or(&self.path);
        let first = rel.split('/').next().unwrap_or(rel);
        first.strip_suffix(".json").unwrap_or(first)
    }

    /// Stable textual id, `<session_id>:<slot>`, used by the API and CLI.
    pub fn id(&self) -> String {
        format!("{}:{}", self.session_id, self.slot())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("document failed validation: {0}")]
    Invalid(ValidationReport),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{path} is corrupt: expected hash {expected}, found {actual}")]
    Corrupt {
        path: String,
        expected: String,
        actual: String,
    },
    #[error("malformed artifact reference `{0}`")]
    BadRef(String),
    #[error("storage I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("stored JSON is unreadable: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Session ids become directory names, so they are restricted to a safe alphabet.
pub fn is_valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn slot_for(kind: ArtifactKind, candidate: Option<u8>, repair_count: u64) -> String {
    match kind {
        ArtifactKind::ProblemDefinition => "a1_problem".into(),
        ArtifactKind::ComputeSpec => "a2_compute".into(),
        ArtifactKind::PreprocessingPlan => "a3_preprocessing".into(),
        ArtifactKind::PipelineSet => "a3_pipelines".into(),
        ArtifactKind::CodeArtifact => {
            let k = candidate.unwrap_or(0);
            if repair_count == 0 {
                format!("a4_code_{k}")
            } else {
                format!("a4_code_{k}_r{repair_count}")
            }
        }
    }
}

fn parse_slot(slot: &str) -> Option<(ArtifactKind, Option<u8>)> {
    let kind = match slot {
        "a1_problem" => ArtifactKind::ProblemDefinition,
        "a2_compute" => ArtifactKind::ComputeSpec,
        "a3_preprocessing" => ArtifactKind::PreprocessingPlan,
        "a3_pipelines" => ArtifactKind::PipelineSet,
        _ => {
            let rest = slot.strip_prefix("a4_code_")?;
            let (k, repair) = match rest.split_once("_r") {
                Some((k, r)) => (k, Some(r)),
                None => (rest, None),
            };
            let k: u8 = k.parse().ok().filter(|k| (1..=5).contains(k))?;
            if let Some(r) = repair {
                r.parse::<u32>().ok().filter(|r| *r > 0)?;
            }
            return Some((ArtifactKind::CodeArtifact, Some(k)));
        }
    };
    Some((kind, None))
}

fn file_rel(slot: &str, kind: ArtifactKind) -> String {
    match kind {
        ArtifactKind::CodeArtifact => format!("{slot}/manifest.json"),
        _ => format!("{slot}.json"),
    }
}

/// Writes `bytes` to `path` via a temporary sibling and a rename. `before_rename`
/// runs after the temporary file is complete; an error from it aborts the write
/// and leaves `path` untouched.
fn write_atomic_with(
    path: &Path,
    bytes: &[u8],
    before_rename: impl FnOnce() -> io::Result<()>,
) -> io::Result<()> {
    let dir = path.parent().expect("artifact paths have a parent");
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    before_rename()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ArtifactStore { root: root.into() }
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        write_atomic_with(path, bytes, || Ok(()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_rel(session_id: &str) -> String {
        format!("sessions/{session_id}")
    }

    pub fn session_dir(&self, session_id: &str) -> PathBuf {
        self.root.join(Self::session_rel(session_id))
    }

    pub fn artifacts_dir(&self, session_id: &str) -> PathBuf {
        self.session_dir(session_id).join("artifacts")
    }

    pub fn absolute(&self, r: &ArtifactRef) -> PathBuf {
        self.root.join(&r.path)
    }

    fn check_session(&self, session_id: &str) -> Result<(), StoreError> {
        if is_valid_session_id(session_id) {
            Ok(())
        } else {
            Err(StoreError::BadRef(session_id.to_string()))
        }
    }

    /// Validates and stores `document` for `session_id`.
    ///
    /// Code artifacts get their own directory holding `manifest.json` (the
    /// full document) and every file verbatim. Re-persisting identical
    /// content yields an identical ref.
    pub fn persist_artifact(
        &self,
        session_id: &str,
        kind: ArtifactKind,
        document: &Value,
    ) -> Result<ArtifactRef, StoreError> {
        self.check_session(session_id)?;
        let report = validate_artifact(kind, document);
        if !report.valid {
            return Err(StoreError::Invalid(report));
        }
        let stamped = stamp(kind, document);
        let bytes = canonical_json(&stamped);
        let candidate = stamped
            .get("candidate_index")
            .and_then(Value::as_u64)
            .map(|k| k as u8);
        let repair_count = stamped
            .get("repair_count")
            .and_then(Value::as_u64)
            .unwrap_or(0);
        let candidate = (kind == ArtifactKind::CodeArtifact)
            .then_some(candidate)
            .flatten();
        let slot = slot_for(kind, candidate, repair_count);
        let rel = format!(
            "{}/artifacts/{}",
            Self::session_rel(session_id),
            file_rel(&slot, kind)
        );
        let path = self.root.join(&rel);

        if kind == ArtifactKind::CodeArtifact {
            self.write_code_dir(&path, &stamped, &bytes)?;
        } else {
            self.write_atomic(&path, bytes.as_bytes())?;
        }
        Ok(ArtifactRef {
            session_id: session_id.to_string(),
            artifact_kind: kind,
            candidate_index: candidate,
            path: rel,
            content_hash: sha256_hex(bytes.as_bytes()),
        })
    }

    fn write_code_dir(
        &self,
        manifest_path: &Path,
        doc: &Value,
        manifest: &str,
    ) -> Result<(), StoreError> {
        let target = manifest_path
            .parent()
            .expect("manifest lives in a slot directory");
        if fs::read(manifest_path)
            .map(|b| b == manifest.as_bytes())
            .unwrap_or(false)
        {
            return Ok(());
        }
        let parent = target.parent().expect("slot directory has a parent");
        fs::create_dir_all(parent)?;
        let staging = tempfile::Builder::new()
            .prefix(".tmp-")
            .tempdir_in(parent)?;
        for file in doc["files"].as_array().into_iter().flatten() {
            let rel = file["relative_path"].as_str().unwrap_or_default();
            let dest = staging.path().join(rel);
            if let Some(dir) = dest.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(&dest, file["content"].as_str().unwrap_or_default())?;
        }
        fs::write(staging.path().join("manifest.json"), manifest)?;
        let staged = staging.keep();
        if target.exists() {
            let trash = tempfile::Builder::new()
                .prefix(".old-")
                .tempdir_in(parent)?
                .keep();
            fs::rename(target, trash.join("slot"))?;
            fs::rename(&staged, target)?;
            fs::remove_dir_all(trash)?;
        } else {
            fs::rename(&staged, target)?;
        }
        Ok(())
    }

    /// Reads the stored bytes of `r`, checking them against its content hash.
    pub fn load_text(&self, r: &ArtifactRef) -> Result<String, StoreError> {
        let path = self.absolute(r);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(r.path.clone()))
            }
            Err(e) => return Err(e.into()),
        };
        let actual = sha256_hex(&bytes);
        if actual != r.content_hash {
            return Err(StoreError::Corrupt {
                path: r.path.clone(),
                expected: r.content_hash.clone(),
                actual,
            });
        }
        String::from_utf8(bytes).map_err(|_| StoreError::Corrupt {
            path: r.path.clone(),
            expected: r.content_hash.clone(),
            actual: "invalid UTF-8".into(),
        })
    }

    /// Loads and parses the document behind `r` (storage header included).
    pub fn load_artifact(&self, r: &ArtifactRef) -> Result<Value, StoreError> {
        Ok(serde_json::from_str(&self.load_text(r)?)?)
    }

    /// Builds a ref from its textual id by reading the stored file.
    pub fn resolve(&self, id: &str) -> Result<ArtifactRef, StoreError> {
        let (session_id, slot) = id
            .split_once(':')
            .ok_or_else(|| StoreError::BadRef(id.to_string()))?;
        self.check_session(session_id)?;
        let (kind, candidate) =
            parse_slot(slot).ok_or_else(|| StoreError::BadRef(id.to_string()))?;
        let rel = format!(
            "{}/artifacts/{}",
            Self::session_rel(session_id),
            file_rel(slot, kind)
        );
        let bytes = match fs::read(self.root.join(&rel)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        Ok(ArtifactRef {
            session_id: session_id.to_string(),
            artifact_kind: kind,
            candidate_index: candidate,
            path: rel,
            content_hash: sha256_hex(&bytes),
        })
    }

    /// Every artifact stored for a session, in slot order.
    pub fn list(&self, session_id: &str) -> Result<Vec<ArtifactRef>, StoreError> {
        self.check_session(session_id)?;
        let dir = self.artifacts_dir(session_id);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut slots = Vec::new();
        for entry in entries {
            let name = entry?.file_name().to_string_lossy().into_owned();
            let slot = name.strip_suffix(".json").unwrap_or(&name).to_string();
            if parse_slot(&slot).is_some() {
                slots.push(slot);
            }
        }
        slots.sort();
        slots
            .iter()
            .map(|slot| self.resolve(&format!("{session_id}:{slot}")))
            .collect()
    }

    /// Copies the stored bytes of `source` into `target_session` unchanged.
    pub fn copy_artifact(
        &self,
        source: &ArtifactRef,
        target_session: &str,
    ) -> Result<ArtifactRef, StoreError> {
        self.check_session(target_session)?;
        let text = self.load_text(source)?;
        let doc: Value = serde_json::from_str(&text)?;
        let report = validate_artifact(source.artifact_kind, &doc);
        if !report.valid {
            return Err(StoreError::Invalid(report));
        }
        let slot = source.slot().to_string();
        let rel = format!(
            "{}/artifacts/{}",
            Self::session_rel(target_session),
            file_rel(&slot, source.artifact_kind)
        );
        let dest = self.root.join(&rel);
        if source.artifact_kind == ArtifactKind::CodeArtifact {
            self.write_code_dir(&dest, &doc, &text)?;
        } else {
            self.write_atomic(&dest, text.as_bytes())?;
        }
        Ok(ArtifactRef {
            session_id: target_session.to_string(),
            path: rel,
            ..source.clone()
        })
    }

    /// Appends JSON records to `logs/<name>.jsonl` of a session.
    pub fn append_log<T: Serialize>(
        &self,
        session_id: &str,
        name: &str,
        records: &[T],
    ) -> Result<(), StoreError> {
        if records.is_empty() {
            return Ok(());
        }
        self.check_session(session_id)?;
        let dir = self.session_dir(session_id).join("logs");
        fs::create_dir_all(&dir)?;
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(format!("{name}.jsonl")))?;
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r)?);
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_log(&self, session_id: &str, name: &str) -> Result<Vec<Value>, StoreError> {
        let path = self
            .session_dir(session_id)
            .join("logs")
            .join(format!("{name}.jsonl"));
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(StoreError::from))
            .collect()
    }

    pub(crate) fn write_session_file(
        &self,
        session_id: &str,
        bytes: &[u8],
    ) -> Result<(), StoreError> {
        self.check_session(session_id)?;
        self.write_atomic(&self.session_dir(session_id).join("session.json"), bytes)?;
        Ok(())
    }

    pub(crate) fn read_session_file(&self, session_id: &str) -> Result<Vec<u8>, StoreError> {
        self.check_session(session_id)
            .map_err(|_| StoreError::NotFound(format!("session {session_id}")))?;
        match fs::read(self.session_dir(session_id).join("session.json")) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(StoreError::NotFound(format!("session {session_id}")))
            }
            Err(e) => Err(e.into()),
        }
    }
}
