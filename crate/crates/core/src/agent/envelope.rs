use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeStatus {
    Question,
    Final,
}

/// The structured wrapper every agent reply must use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub status: EnvelopeStatus,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Map<String, Value>>,
}

impl Envelope {
    pub fn payload_value(&self) -> Option<Value> {
        self.payload.clone().map(Value::Object)
    }
}

/// A reply that does not follow the envelope wire format.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed envelope: {reason}")]
pub struct EnvelopeError {
    pub reason: String,
    pub raw: String,
}

/// Parses one agent reply.
///
/// The accepted form is a single JSON object with a `status` of
/// `"question"` or `"final"`, a string `message` and an optional object
/// `payload`. Surrounding whitespace is allowed; any other field, any
/// text outside the object, or a wrongly typed field is rejected.
pub fn parse_envelope(raw: &str) -> Result<Envelope, EnvelopeError> {
    let fail = |reason: String| EnvelopeError {
        reason,
        raw: raw.to_string(),
    };
    let value: Value =
        serde_json::from_str(raw).map_err(|e| fail(format!("not a single JSON object ({e})")))?;
    let Value::Object(mut obj) = value else {
        return Err(fail("top level must be a JSON object".into()));
    };
    if let Some(extra) = obj
        .keys()
        .find(|k| !matches!(k.as_str(), "status" | "message" | "payload"))
    {
        return Err(fail(format!("unexpected field `{extra}`")));
    }
    let status = match obj.get("status").and_then(Value::as_str) {
        Some("question") => EnvelopeStatus::Question,
        Some("final") => EnvelopeStatus::Final,
        Some(other) => {
            return Err(fail(format!(
                "status must be \"question\" or \"final\", got \"{other}\""
            )))
        }
        None => return Err(fail("missing string field `status`".into())),
    };
    let message = match obj.remove("message") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(fail("`message` must be a string".into())),
        None => return Err(fail("missing string field `message`".into())),
    };
    let payload = match obj.remove("payload") {
        None => None,
        Some(Value::Object(p)) => Some(p),
        Some(_) => return Err(fail("`payload` must be a JSON object".into())),
    };
    Ok(Envelope {
        status,
        message,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn question_envelope() {
        let env =
            parse_envelope(r#"{"status":"question","message":"What is the image resolution?"}"#)
                .unwrap();
        assert_eq!(env.status, EnvelopeStatus::Question);
        assert_eq!(env.message, "What is the image resolution?");
        assert!(env.payload.is_none());
    }

    #[test]
    fn final_envelope_with_payload() {
        let raw = format!(
            r#"{{"status":"final","message":"done","payload":{}}}"#,
            crate::fixtures::problem_definition()
        );
        let env = parse_envelope(&raw).unwrap();
        assert_eq!(env.status, EnvelopeStatus::Final);
        assert_eq!(
            env.payload_value().unwrap(),
            crate::fixtures::problem_definition()
        );
    }

    #[test]
    fn prose_is_rejected_with_raw_text() {
        let err = parse_envelope("Sure! Here is the definition you asked for.").unwrap_err();
        assert_eq!(err.raw, "Sure! Here is the definition you asked for.");
    }

    #[test]
    fn wire_format_is_strict() {
        for bad in [
            r#"{"status":"answer","message":"x"}"#,
            r#"{"status":"final"}"#,
            r#"{"message":"x"}"#,
            r#"{"status":"final","message":3}"#,
            r#"{"status":"final","message":"x","payload":[1]}"#,
            r#"{"status":"final","message":"x","payload":null}"#,
            r#"{"status":"final","message":"x","extra":1}"#,
            r#"{"status":"question","message":"x"} trailing"#,
            "```json\n{\"status\":\"question\",\"message\":\"x\"}\n```",
            r#"["status","question"]"#,
            "",
        ] {
            assert!(parse_envelope(bad).is_err(), "accepted {bad:?}");
        }
        assert!(parse_envelope("  \n{\"status\":\"question\",\"message\":\"x\"}\n").is_ok());
    }

    proptest! {
        // Whatever the input, the parser never invents a payload.
        #[test]
        fn never_fabricates_payload(raw in ".{0,200}") {
            if let Ok(env) = parse_envelope(&raw) {
                prop_assert!(raw.contains("payload") || env.payload.is_none());
            }
        }

        #[test]
        fn serialized_envelopes_parse_back(
            question in any::<bool>(),
            message in "[ -~]{0,40}",
            key in "[a-z]{1,8}",
            val in any::<i32>(),
        ) {
            let env = Envelope {
                status: if question { EnvelopeStatus::Question } else { EnvelopeStatus::Final },
                message,
                payload: (!question).then(|| {
                    let mut m = Map::new();
                    m.insert(key, Value::from(val));
                    m
                }),
            };
            let raw = serde_json::to_string(&env).unwrap();
            prop_assert_eq!(parse_envelope(&raw).unwrap(), env);
        }
    }
}
