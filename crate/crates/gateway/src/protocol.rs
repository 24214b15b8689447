//! Session wire messages: JSON text objects carrying `"v"` and a `"type"` tag.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use warpbci_core::online::ArtifactEvent;
use warpbci_core::speller::{LayoutKind, Snapshot};

pub const PROTOCOL_VERSION: u64 = 1;

/// Client to server. `Tick` is honored only when the server runs on an
/// injected clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ClientMsg {
    InjectEvent { event: ArtifactEvent },
    StartReplay { fixture: String },
    SetLayout { layout: LayoutKind },
    Reset,
    Tick { ms: u64 },
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMsg {
    Snapshot { snapshot: Snapshot },
    Spoken { words: Vec<String> },
    /// A replay ran out of samples; `events` is everything its engine emitted.
    ReplayEnded { fixture: String, events: Vec<ArtifactEvent> },
    Error { message: String },
}

impl ServerMsg {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMsg::Error { message: message.into() }
    }

    /// One JSON object with the protocol version first.
    pub fn to_json(&self) -> String {
        versioned(serde_json::to_string(self).expect("server messages serialize"))
    }
}

impl ClientMsg {
    pub fn to_json(&self) -> String {
        versioned(serde_json::to_string(self).expect("client messages serialize"))
    }
}

/// Prefixes a serialized tagged object (never empty) with the version.
fn versioned(object: String) -> String {
    format!("{{\"v\":{PROTOCOL_VERSION},{}", &object[1..])
}

/// Parses one client frame. A missing `"v"` means version 1.
pub fn decode_client(text: &str) -> Result<ClientMsg, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object_mut().ok_or("message must be a JSON object")?;
    match obj.remove("v") {
        None => {}
        Some(Value::Number(n)) if n.as_u64() == Some(PROTOCOL_VERSION) => {}
        Some(Value::Number(n)) if n.as_u64().is_some_and(|v| v > PROTOCOL_VERSION) => {
            return Err(format!("unsupported protocol version {n}; this server speaks {PROTOCOL_VERSION}"));
        }
        Some(v) => return Err(format!("invalid protocol version {v}")),
    }
    let kind = match obj.get("type") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("\"type\" must be a string".into()),
        None => return Err("message has no \"type\"".into()),
    };
    const KNOWN: [&str; 5] = ["InjectEvent", "StartReplay", "SetLayout", "Reset", "Tick"];
    if !KNOWN.contains(&kind.as_str()) {
        return Err(format!("unknown message type {kind:?}"));
    }
    let given: Vec<String> = obj.keys().cloned().collect();
    let msg: ClientMsg = serde_json::from_value(value).map_err(|e| format!("invalid {kind} message: {e}"))?;
    // unit variants ignore stray fields, so compare against the canonical form
    if let Value::Object(canon) = serde_json::to_value(&msg).expect("client messages serialize") {
        if let Some(extra) = given.iter().find(|k| !canon.contains_key(*k)) {
            return Err(format!("invalid {kind} message: unknown field {extra:?}"));
        }
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_every_client_type() {
        let cases = [
            (r#"{"v":1,"type":"InjectEvent","event":{"kind":"Blink","count":2}}"#, ClientMsg::InjectEvent { event: ArtifactEvent::blink(2) }),
            (r#"{"v":1,"type":"StartReplay","fixture":"blink-demo"}"#, ClientMsg::StartReplay { fixture: "blink-demo".into() }),
            (r#"{"v":1,"type":"SetLayout","layout":"ABC"}"#, ClientMsg::SetLayout { layout: LayoutKind::Abc }),
            (r#"{"type":"Reset"}"#, ClientMsg::Reset),
            (r#"{"v":1,"type":"Tick","ms":100}"#, ClientMsg::Tick { ms: 100 }),
        ];
        for (text, msg) in cases {
            assert_eq!(decode_client(text).unwrap(), msg);
            assert_eq!(decode_client(&msg.to_json()).unwrap(), msg);
        }
    }

    #[test]
    fn rejects_bad_frames() {
        for (text, needle) in [
            ("{oops", "malformed"),
            ("[1]", "object"),
            (r#"{"v":1}"#, "no \"type\""),
            (r#"{"v":1,"type":"Dance"}"#, "unknown message type"),
            (r#"{"v":2,"type":"Reset"}"#, "unsupported protocol version 2"),
            (r#"{"v":"1","type":"Reset"}"#, "invalid protocol version"),
            (r#"{"v":1,"type":"SetLayout","layout":"Dvorak"}"#, "invalid SetLayout"),
            (r#"{"v":1,"type":"Reset","extra":1}"#, "invalid Reset"),
        ] {
            let err = decode_client(text).unwrap_err();
            assert!(err.contains(needle), "{text}: {err}");
        }
    }

    #[test]
    fn server_messages_lead_with_version() {
        let json = ServerMsg::Spoken { words: vec!["good".into()] }.to_json();
        assert_eq!(json, r#"{"v":1,"type":"Spoken","words":["good"]}"#);
    }
}
