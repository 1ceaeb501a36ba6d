//! Wire types. Every message is one JSON object per line carrying `"v": 1`.

use std::fmt;
use std::str::FromStr;

use corpus_agent_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    LoadModel,
    Start,
    Stop,
    Restart,
    Mute,
    SetMode,
    SetParam,
    SetWeights,
    SetTriggerMode,
    Subscribe,
    QueryState,
}

impl Op {
    pub const ALL: [Op; 11] = [
        Op::LoadModel,
        Op::Start,
        Op::Stop,
        Op::Restart,
        Op::Mute,
        Op::SetMode,
        Op::SetParam,
        Op::SetWeights,
        Op::SetTriggerMode,
        Op::Subscribe,
        Op::QueryState,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::LoadModel => "load_model",
            Op::Start => "start",
            Op::Stop => "stop",
            Op::Restart => "restart",
            Op::Mute => "mute",
            Op::SetMode => "set_mode",
            Op::SetParam => "set_param",
            Op::SetWeights => "set_weights",
            Op::SetTriggerMode => "set_trigger_mode",
            Op::Subscribe => "subscribe",
            Op::QueryState => "query_state",
        }
    }
}

impl FromStr for Op {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Op::ALL.into_iter().find(|op| op.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    NodePlayed,
    SceneBoundary,
    StateSnapshot,
    VizFrame,
    Error,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::NodePlayed,
        EventKind::SceneBoundary,
        EventKind::StateSnapshot,
        EventKind::VizFrame,
        EventKind::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::NodePlayed => "node_played",
            EventKind::SceneBoundary => "scene_boundary",
            EventKind::StateSnapshot => "state_snapshot",
            EventKind::VizFrame => "viz_frame",
            EventKind::Error => "error",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

/// A parsed control message.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: Value,
    pub op: Op,
    pub args: Map<String, Value>,
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<String>,
}

impl ErrorBody {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ErrorBody {
            code: code.to_string(),
            field: None,
            message: message.into(),
            range: None,
        }
    }

    pub fn field(code: &str, field: &str, message: impl Into<String>, range: Option<&str>) -> Self {
        ErrorBody {
            code: code.to_string(),
            field: Some(field.to_string()),
            message: message.into(),
            range: range.map(str::to_string),
        }
    }

    pub fn invalid(field: &str, message: impl Into<String>, range: Option<&str>) -> Self {
        ErrorBody::field("invalid_parameter", field, message, range)
    }
}

impl From<CoreError> for ErrorBody {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::InvalidParameter { field, message } => ErrorBody::invalid(
                field,
                message.clone(),
                corpus_agent_core::synth::param_range(field),
            ),
            CoreError::ZeroWeights => ErrorBody::field(
                e.code(),
                "weights",
                e.to_string(),
                Some("each >= 0, at least one > 0"),
            ),
            CoreError::UnsupportedTriggerMode(_) => ErrorBody::field(
                e.code(),
                "mode",
                e.to_string(),
                Some("beat | loop | cont | bow | fence"),
            ),
            _ => ErrorBody::new(e.code(), e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub v: u64,
    pub id: Value,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Response {
    pub fn ok(id: Value, result: Value) -> Self {
        Response {
            v: PROTOCOL_VERSION,
            id,
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn err(id: Value, error: ErrorBody) -> Self {
        Response {
            v: PROTOCOL_VERSION,
            id,
            ok: false,
            result: None,
            error: Some(error),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// An engine event as sent to subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMessage {
    pub v: u64,
    pub event: EventKind,
    /// Engine time in seconds.
    pub t: f64,
    /// Engine-wide event counter, increasing by one per generated event.
    pub seq: u64,
    pub data: Value,
}

impl EventMessage {
    pub fn new(event: EventKind, t: f64, seq: u64, data: Value) -> Self {
        EventMessage {
            v: PROTOCOL_VERSION,
            event,
            t,
            seq,
            data,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Parses one line. On failure returns the response to send back (with the
/// request id when it could be recovered).
pub fn parse_request(line: &str) -> Result<Request, Response> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Response::err(Value::Null, ErrorBody::new("parse_error", e.to_string())))?;
    let Value::Object(mut obj) = value else {
        return Err(Response::err(
            Value::Null,
            ErrorBody::new("parse_error", "message must be a JSON object"),
        ));
    };
    let id = obj.remove("id").unwrap_or(Value::Null);
    match obj.get("v").and_then(Value::as_u64) {
        Some(PROTOCOL_VERSION) => {}
        Some(other) => {
            return Err(Response::err(
                id,
                ErrorBody::field(
                    "unsupported_version",
                    "v",
                    format!("protocol version {other} is not supported"),
                    Some("1"),
                ),
            ))
        }
        None => {
            return Err(Response::err(
                id,
                ErrorBody::field("unsupported_version", "v", "missing protocol version", Some("1")),
            ))
        }
    }
    let op_name = match obj.get("op") {
        Some(Value::String(s)) => s.clone(),
        _ => {
            return Err(Response::err(
                id,
                ErrorBody::field("unknown_op", "op", "missing op", None),
            ))
        }
    };
    let op = op_name.parse::<Op>().map_err(|_| {
        Response::err(
            id.clone(),
            ErrorBody::field("unknown_op", "op", format!("unknown op {op_name}"), None),
        )
    })?;
    let args = match obj.remove("args") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m,
        Some(_) => {
            return Err(Response::err(
                id,
                ErrorBody::field("invalid_parameter", "args", "args must be an object", None),
            ))
        }
    };
    let token = obj.get("token").and_then(Value::as_str).map(str::to_string);
    Ok(Request {
        id,
        op,
        args,
        token,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_valid_request() {
        let r = parse_request(r#"{"v":1,"id":7,"op":"set_param","args":{"tempo":90}}"#).unwrap();
        assert_eq!(r.id, json!(7));
        assert_eq!(r.op, Op::SetParam);
        assert_eq!(r.args["tempo"], json!(90));
    }

    #[test]
    fn rejects_bad_messages_with_id() {
        let e = parse_request(r#"{"v":1,"id":"a","op":"dance"}"#).unwrap_err();
        assert_eq!(e.id, json!("a"));
        assert_eq!(e.error.unwrap().code, "unknown_op");
        let e = parse_request(r#"{"v":2,"id":3,"op":"stop"}"#).unwrap_err();
        assert_eq!(e.error.unwrap().code, "unsupported_version");
        let e = parse_request("not json").unwrap_err();
        assert_eq!(e.id, Value::Null);
        assert_eq!(e.error.unwrap().code, "parse_error");
    }

    #[test]
    fn op_and_kind_names_round_trip() {
        for op in Op::ALL {
            assert_eq!(op.as_str().parse::<Op>(), Ok(op));
            assert_eq!(serde_json::to_value(op).unwrap(), json!(op.as_str()));
        }
        for k in EventKind::ALL {
            assert_eq!(k.as_str().parse::<EventKind>(), Ok(k));
        }
    }

    #[test]
    fn core_errors_carry_field_and_range() {
        let e: ErrorBody = corpus_agent_core::synth::check_param("tempo", -5.0).unwrap_err().into();
        assert_eq!(e.field.as_deref(), Some("tempo"));
        assert_eq!(e.message, "tempo must be > 0");
        assert_eq!(e.range.as_deref(), Some("(0, 1000]"));
    }
}
