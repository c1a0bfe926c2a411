use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    ArtifactKind, UnknownKind, CANDIDATE_COUNT, KIND_FIELD, SCHEMA_VERSION, VERSION_FIELD,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field_path: String,
    pub message: String,
}

/// Outcome of checking a document. `valid` is true iff `violations` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        ValidationReport {
            valid: violations.is_empty(),
            violations,
        }
    }

    pub fn violation_at(&self, path: &str) -> Option<&Violation> {
        self.violations.iter().find(|v| v.field_path == path)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.valid {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            let path = if v.field_path.is_empty() {
                "<root>"
            } else {
                &v.field_path
            };
            write!(f, "{path}: {}", v.message)?;
        }
        Ok(())
    }
}

/// Checks `document` against the schema for `kind` and lists every violation.
pub fn validate_artifact(kind: ArtifactKind, document: &Value) -> ValidationReport {
    let mut c = Checker::default();
    let Some(obj) = document.as_object() else {
        c.push("", "expected a JSON object");
        return ValidationReport::from_violations(c.violations);
    };
    check_header(&mut c, kind, obj);
    match kind {
        ArtifactKind::ProblemDefinition => problem_definition(&mut c, "", obj),
        ArtifactKind::ComputeSpec => compute_spec(&mut c, "", obj),
        ArtifactKind::PreprocessingPlan => {
            preprocessing_plan(&mut c, "", obj);
        }
        ArtifactKind::PipelineSet => pipeline_set(&mut c, obj),
        ArtifactKind::CodeArtifact => code_artifact(&mut c, obj),
    }
    ValidationReport::from_violations(c.violations)
}

/// Like [`validate_artifact`] but with the kind given by name.
pub fn validate_named(kind: &str, document: &Value) -> Result<ValidationReport, UnknownKind> {
    Ok(validate_artifact(kind.parse()?, document))
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
}

fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

impl Checker {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field_path: path.into(),
            message: message.into(),
        });
    }

    fn field<'a>(
        &mut self,
        obj: &'a Map<String, Value>,
        prefix: &str,
        name: &str,
    ) -> Option<&'a Value> {
        match obj.get(name) {
            Some(v) => Some(v),
            None => {
                self.push(join(prefix, name), "required field is missing");
                None
            }
        }
    }

    fn string<'a>(
        &mut self,
        obj: &'a Map<String, Value>,
        prefix: &str,
        name: &str,
        nonempty: bool,
    ) -> Option<&'a str> {
        let v = self.field(obj, prefix, name)?;
        match v.as_str() {
            Some(s) if nonempty && s.trim().is_empty() => {
                self.push(join(prefix, name), "must not be empty");
                None
            }
            Some(s) => Some(s),
            None => {
                self.push(join(prefix, name), "expected a string");
                None
            }
        }
    }

    fn one_of(&mut self, obj: &Map<String, Value>, prefix: &str, name: &str, allowed: &[&str]) {
        let Some(v) = self.field(obj, prefix, name) else {
            return;
        };
        match v.as_str() {
            Some(s) if allowed.contains(&s) => {}
            _ => self.push(
                join(prefix, name),
                format!("expected one of {}", allowed.join(", ")),
            ),
        }
    }

    fn nonneg_integer(
        &mut self,
        obj: &Map<String, Value>,
        prefix: &str,
        name: &str,
    ) -> Option<u64> {
        let v = self.field(obj, prefix, name)?;
        match v.as_u64() {
            Some(n) => Some(n),
            None => {
                self.push(join(prefix, name), "expected a nonnegative integer");
                None
            }
        }
    }

    fn nonneg_number(&mut self, obj: &Map<String, Value>, prefix: &str, name: &str) {
        let Some(v) = self.field(obj, prefix, name) else {
            return;
        };
        match v.as_f64() {
            Some(x) if x >= 0.0 => {}
            Some(_) => self.push(join(prefix, name), "must be >= 0"),
            None => self.push(join(prefix, name), "expected a number"),
        }
    }

    fn index_in_range(&mut self, obj: &Map<String, Value>, prefix: &str, name: &str) -> Option<u8> {
        let v = self.field(obj, prefix, name)?;
        match v.as_u64() {
            Some(n @ 1..=5) => Some(n as u8),
            _ => {
                self.push(join(prefix, name), "expected an integer in 1..=5");
                None
            }
        }
    }

    /// A list of strings. Elements must be nonempty; the list itself must be
    /// nonempty when `nonempty` is set.
    fn string_list<'a>(
        &mut self,
        obj: &'a Map<String, Value>,
        prefix: &str,
        name: &str,
        nonempty: bool,
    ) -> Vec<&'a str> {
        let path = join(prefix, name);
        let Some(v) = self.field(obj, prefix, name) else {
            return Vec::new();
        };
        let Some(items) = v.as_array() else {
            self.push(path, "expected a list of strings");
            return Vec::new();
        };
        if nonempty && items.is_empty() {
            self.push(path.clone(), "must contain at least one entry");
        }
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            match item.as_str() {
                Some(s) if !s.trim().is_empty() => out.push(s),
                Some(_) => self.push(format!("{path}[{i}]"), "must not be empty"),
                None => self.push(format!("{path}[{i}]"), "expected a string"),
            }
        }
        out
    }

    fn object<'a>(
        &mut self,
        obj: &'a Map<String, Value>,
        prefix: &str,
        name: &str,
    ) -> Option<&'a Map<String, Value>> {
        let v = self.field(obj, prefix, name)?;
        match v.as_object() {
            Some(o) => Some(o),
            None => {
                self.push(join(prefix, name), "expected an object");
                None
            }
        }
    }

    fn array<'a>(
        &mut self,
        obj: &'a Map<String, Value>,
        prefix: &str,
        name: &str,
    ) -> Option<&'a Vec<Value>> {
        let v = self.field(obj, prefix, name)?;
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.push(join(prefix, name), "expected a list");
                None
            }
        }
    }
}

fn check_header(c: &mut Checker, kind: ArtifactKind, obj: &Map<String, Value>) {
    if let Some(v) = obj.get(KIND_FIELD) {
        if v.as_str() != Some(kind.as_str()) {
            c.push(KIND_FIELD, format!("expected `{}`", kind.as_str()));
        }
    }
    if let Some(v) = obj.get(VERSION_FIELD) {
        if v.as_u64() != Some(SCHEMA_VERSION) {
            c.push(
                VERSION_FIELD,
                format!("unsupported schema version (expected {SCHEMA_VERSION})"),
            );
        }
    }
}

fn problem_definition(c: &mut Checker, p: &str, obj: &Map<String, Value>) {
    c.string(obj, p, "domain", false);
    c.one_of(
        obj,
        p,
        "user_expertise",
        &["novice", "intermediate", "expert"],
    );
    c.one_of(
        obj,
        p,
        "task_type",
        &["classification", "regression", "clustering", "other"],
    );
    c.string(obj, p, "objective", true);
    if let Some(data) = c.object(obj, p, "data_description") {
        let dp = join(p, "data_description");
        c.one_of(
            data,
            &dp,
            "modality",
            &["image", "text", "tabular", "time_series", "mixed"],
        );
        c.nonneg_integer(data, &dp, "record_count");
        c.string(data, &dp, "feature_summary", false);
        c.string(data, &dp, "target_description", false);
    }
    c.string_list(obj, p, "constraints", false);
    c.string_list(obj, p, "success_metrics", true);
}

fn compute_spec(c: &mut Checker, p: &str, obj: &Map<String, Value>) {
    c.one_of(obj, p, "location", &["on_premises", "cloud", "hybrid"]);
    if let Some(accels) = c.array(obj, p, "accelerators") {
        if accels.is_empty() {
            c.push(
                join(p, "accelerators"),
                "must contain at least one entry (use kind cpu_only when no accelerator)",
            );
        }
        for (i, a) in accels.iter().enumerate() {
            let ap = format!("{}[{i}]", join(p, "accelerators"));
            let Some(a) = a.as_object() else {
                c.push(ap, "expected an object");
                continue;
            };
            c.one_of(a, &ap, "kind", &["gpu", "tpu", "cpu_only"]);
            if let Some(0) = c.nonneg_integer(a, &ap, "count") {
                c.push(join(&ap, "count"), "must be a positive integer");
            }
            c.nonneg_number(a, &ap, "memory_gb");
        }
    }
    c.nonneg_number(obj, p, "storage_gb");
    if let Some(budget) = c.field(obj, p, "budget") {
        let bp = join(p, "budget");
        match budget {
            Value::String(s) if s == "unconstrained" => {}
            Value::Object(b) => {
                c.nonneg_number(b, &bp, "amount");
                c.string(b, &bp, "currency", true);
            }
            _ => c.push(bp, "expected {amount, currency} or \"unconstrained\""),
        }
    }
    c.string(obj, p, "preferred_ml_platform", true);
}

/// Returns the step names so callers can check references into the plan.
fn preprocessing_plan(c: &mut Checker, p: &str, obj: &Map<String, Value>) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    let Some(steps) = c.array(obj, p, "steps") else {
        return names;
    };
    let sp = join(p, "steps");
    if steps.is_empty() {
        c.push(sp.clone(), "must contain at least one step");
    }
    for (i, step) in steps.iter().enumerate() {
        let ip = format!("{sp}[{i}]");
        let Some(step) = step.as_object() else {
            c.push(ip, "expected an object");
            continue;
        };
        if let Some(name) = c.string(step, &ip, "name", true) {
            if !names.insert(name.to_string()) {
                c.push(join(&ip, "name"), format!("duplicate step name `{name}`"));
            }
        }
        c.string(step, &ip, "description", false);
        c.string(step, &ip, "rationale", false);
    }
    names
}

fn pipeline_set(c: &mut Checker, obj: &Map<String, Value>) {
    let step_names = c
        .object(obj, "", "preprocessing")
        .map(|plan| preprocessing_plan(c, "preprocessing", plan));
    let Some(candidates) = c.array(obj, "", "candidates") else {
        return;
    };
    if candidates.len() != CANDIDATE_COUNT {
        c.push(
            "candidates",
            format!(
                "expected exactly {CANDIDATE_COUNT} candidates, received {}",
                candidates.len()
            ),
        );
    }
    let mut seen = BTreeSet::new();
    for (i, cand) in candidates.iter().enumerate() {
        let cp = format!("candidates[{i}]");
        let Some(cand) = cand.as_object() else {
            c.push(cp, "expected an object");
            continue;
        };
        if let Some(index) = c.index_in_range(cand, &cp, "index") {
            if !seen.insert(index) {
                c.push(
                    join(&cp, "index"),
                    format!("duplicate candidate index {index}"),
                );
            }
        }
        c.string(cand, &cp, "name", true);
        c.string(cand, &cp, "description", false);
        let refs = c.string_list(cand, &cp, "preprocessing_refs", false);
        if let Some(names) = &step_names {
            for (j, r) in refs.iter().enumerate() {
                if !names.contains(*r) {
                    c.push(
                        format!("{cp}.preprocessing_refs[{j}]"),
                        format!("`{r}` is not a step of the preprocessing plan"),
                    );
                }
            }
        }
        c.string(cand, &cp, "model_family", false);
        c.string(cand, &cp, "training_procedure", false);
        c.string_list(cand, &cp, "evaluation_metrics", false);
        c.string_list(cand, &cp, "pros", true);
        c.string_list(cand, &cp, "cons", true);
    }
}

/// Paths must stay inside the workspace they are materialized into.
pub(crate) fn check_relative_path(path: &str) -> Result<(), &'static str> {
    if path.trim().is_empty() {
        return Err("must not be empty");
    }
    if path.starts_with('/') || path.starts_with('\\') || path.contains(':') {
        return Err("must be a relative path");
    }
    if path
        .split(['/', '\\'])
        .any(|seg| seg == ".." || seg.is_empty())
    {
        return Err("must not contain `..` or empty segments");
    }
    if path == "manifest.json" {
        return Err("`manifest.json` is reserved");
    }
    Ok(())
}

fn code_artifact(c: &mut Checker, obj: &Map<String, Value>) {
    c.index_in_range(obj, "", "candidate_index");
    let mut paths = BTreeSet::new();
    if let Some(files) = c.array(obj, "", "files") {
        if files.is_empty() {
            c.push("files", "must contain at least one file");
        }
        for (i, file) in files.iter().enumerate() {
            let fp = format!("files[{i}]");
            let Some(file) = file.as_object() else {
                c.push(fp, "expected an object");
                continue;
            };
            if let Some(path) = c.string(file, &fp, "relative_path", true) {
                if let Err(msg) = check_relative_path(path) {
                    c.push(join(&fp, "relative_path"), msg);
                } else if !paths.insert(path.to_string()) {
                    c.push(
                        join(&fp, "relative_path"),
                        format!("duplicate path `{path}`"),
                    );
                }
            }
            c.string(file, &fp, "content", false);
        }
    }
    if let Some(entry) = c.string(obj, "", "entrypoint", true) {
        if !paths.contains(entry) {
            c.push(
                "entrypoint",
                format!("`{entry}` does not name one of the files"),
            );
        }
    }
    c.string(obj, "", "platform", false);
    c.nonneg_integer(obj, "", "repair_count");
}
