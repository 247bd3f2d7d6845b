//! Newline-delimited JSON protocol between the trainer and worker processes.
//!
//! One message per line, UTF-8 JSON with a `type` tag. The handshake is the
//! first message in each direction; every `evaluate` is answered by exactly
//! one `result` or `error` echoing its indices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("protocol error on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unexpected message on line {line}: expected {expected}")]
    Unexpected { line: usize, expected: &'static str },
    #[error("protocol version mismatch: ours {ours}, theirs {theirs}")]
    VersionMismatch { ours: u32, theirs: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Handshake {
        protocol_version: u32,
        action_dim: usize,
        env_name: String,
    },
    Evaluate {
        episode: u64,
        env_index: usize,
        action: Vec<f64>,
    },
    Result {
        episode: u64,
        env_index: usize,
        reward: f64,
    },
    Error {
        episode: u64,
        env_index: usize,
        message: String,
    },
}

/// Encodes a message as a single JSON line (no trailing newline).
pub fn encode(msg: &WireMessage) -> String {
    serde_json::to_string(msg).expect("wire messages always serialize")
}

/// Decodes one line, reporting the 1-based line number on failure.
pub fn decode(line: &str, line_no: usize) -> Result<WireMessage, ProtocolError> {
    serde_json::from_str(line).map_err(|e| ProtocolError::Malformed {
        line: line_no,
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evaluate_wire_format_is_pinned() {
        let msg = WireMessage::Evaluate {
            episode: 3,
            env_index: 1,
            action: vec![0.5, -0.2],
        };
        assert_eq!(
            encode(&msg),
            r#"{"type":"evaluate","episode":3,"env_index":1,"action":[0.5,-0.2]}"#
        );
        assert_eq!(decode(&encode(&msg), 1).unwrap(), msg);
    }

    #[test]
    fn reward_round_trips_bit_exactly() {
        let msg = WireMessage::Result {
            episode: 0,
            env_index: 0,
            reward: -1.93,
        };
        let back = decode(&encode(&msg), 1).unwrap();
        match back {
            WireMessage::Result { reward, .. } => {
                assert_eq!(reward.to_bits(), (-1.93f64).to_bits())
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn bogus_type_is_a_protocol_error() {
        let err = decode(r#"{"type":"bogus"}"#, 7).unwrap_err();
        match err {
            ProtocolError::Malformed { line, .. } => assert_eq!(line, 7),
            _ => panic!("wrong error"),
        }
    }

    #[test]
    fn truncated_line_is_a_protocol_error() {
        assert!(decode(r#"{"type":"evaluate","episode":3"#, 2).is_err());
        assert!(decode("", 1).is_err());
    }

    fn arb_message() -> impl Strategy<Value = WireMessage> {
        let finite = any::<f64>().prop_filter("finite", |x| x.is_finite());
        prop_oneof![
            (any::<u32>(), any::<usize>(), "[a-z0-9_]{0,12}").prop_map(|(v, d, n)| {
                WireMessage::Handshake {
                    protocol_version: v,
                    action_dim: d,
                    env_name: n,
                }
            }),
            (
                any::<u64>(),
                any::<usize>(),
                proptest::collection::vec(finite.clone(), 0..6)
            )
                .prop_map(|(e, i, a)| WireMessage::Evaluate {
                    episode: e,
                    env_index: i,
                    action: a,
                }),
            (any::<u64>(), any::<usize>(), finite).prop_map(|(e, i, r)| WireMessage::Result {
                episode: e,
                env_index: i,
                reward: r,
            }),
            (any::<u64>(), any::<usize>(), ".{0,40}").prop_map(|(e, i, m)| {
                WireMessage::Error {
                    episode: e,
                    env_index: i,
                    message: m,
                }
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn decode_encode_is_identity(msg in arb_message()) {
            let back = decode(&encode(&msg), 1).unwrap();
            prop_assert_eq!(back, msg);
        }
    }
}
