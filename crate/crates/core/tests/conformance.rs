//! Shared vectors in `conformance/`: quantization tables and wire frames.
//! `conformance/reference.py check` runs the same files on the server side.

use serde_json::Value;

use ppress::container::sha256;
use ppress::model::QuantizedDistribution;
use ppress::protocol::{Opcode, OpenInfo, Reply, Request, Status};

fn load(name: &str) -> Value {
    let path = format!("{}/../../conformance/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(&path).expect(&path)).unwrap()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Vec<u8> {
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

fn formula(f: &Value) -> Vec<f64> {
    let n = f["n"].as_u64().unwrap() as usize;
    match f["kind"].as_str().unwrap() {
        "harmonic" => (0..n).map(|i| 1.0 / (i + 1) as f64).collect(),
        "inverse_square" => (0..n)
            .map(|i| 1.0 / ((i + 1) as f64 * (i + 1) as f64))
            .collect(),
        "ones_then_zeros" => {
            let ones = f["ones"].as_u64().unwrap() as usize;
            (0..n).map(|i| if i < ones { 1.0 } else { 0.0 }).collect()
        }
        other => panic!("unknown formula {other}"),
    }
}

#[test]
fn quantization_vectors() {
    let doc = load("quantize.json");
    assert_eq!(doc["total"], 65536);
    let cases = doc["cases"].as_array().unwrap();
    assert!(cases.len() >= 30);
    for case in cases {
        let name = case["name"].as_str().unwrap();
        if let Some(f) = case.get("formula") {
            let q = QuantizedDistribution::quantize_slice(&formula(f)).unwrap();
            assert_eq!(
                hex(&sha256(&q.to_u16_le())),
                case["freqs_sha256"].as_str().unwrap(),
                "{name}"
            );
        } else {
            let probs: Vec<f64> = case["probs"]
                .as_array()
                .unwrap()
                .iter()
                .map(|h| f64::from_bits(u64::from_str_radix(h.as_str().unwrap(), 16).unwrap()))
                .collect();
            let want: Vec<u32> = case["freqs"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap() as u32)
                .collect();
            let q = QuantizedDistribution::quantize_slice(&probs).unwrap();
            assert_eq!(q.freqs(), &want[..], "{name}");
        }
    }
}

fn ids(v: &Value) -> Vec<u32> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap() as u32)
        .collect()
}

fn request(f: &Value) -> Request {
    let session = || f["session"].as_u64().unwrap();
    match f["op"].as_str().unwrap() {
        "open" => Request::Open {
            model_id: f["model_id"].as_str().unwrap().into(),
        },
        "close" => Request::Close { session: session() },
        "reset" => Request::Reset { session: session() },
        "tokenize" => Request::Tokenize {
            session: session(),
            text: unhex(f["text_hex"].as_str().unwrap()),
        },
        "detokenize" => Request::Detokenize {
            session: session(),
            ids: ids(&f["ids"]),
        },
        "predict" => Request::Predict {
            session: session(),
            commit: f["commit"].as_u64().map(|t| t as u32),
        },
        other => panic!("{other}"),
    }
}

fn reply(f: &Value) -> Reply {
    match f["op"].as_str().unwrap() {
        "open" => Reply::Opened(OpenInfo {
            session: f["session"].as_u64().unwrap(),
            vocab_size: f["vocab_size"].as_u64().unwrap() as u32,
            context_window: f["context_window"].as_u64().unwrap() as u32,
            flags: f["flags"].as_u64().unwrap() as u8,
            tokenizer_fingerprint: unhex(f["fingerprint_hex"].as_str().unwrap())
                .try_into()
                .unwrap(),
        }),
        "close" => Reply::Closed,
        "reset" => Reply::Reset,
        "tokenize" => Reply::Tokens(ids(&f["ids"])),
        "detokenize" => Reply::Text(unhex(f["text_hex"].as_str().unwrap())),
        "predict" => Reply::Distribution(ids(&f["freqs"]).into_iter().map(|x| x as u16).collect()),
        "error" => Reply::Error {
            opcode: Opcode::from_u8(f["request_op"].as_u64().unwrap() as u8).unwrap(),
            status: Status::from_code(f["status"].as_u64().unwrap() as u16),
        },
        other => panic!("{other}"),
    }
}

#[test]
fn wire_vectors() {
    let doc = load("wire.json");
    let cases = doc["cases"].as_array().unwrap();
    let mut malformed = 0;
    for case in cases {
        let name = case["name"].as_str().unwrap();
        let frame = unhex(case["frame_hex"].as_str().unwrap());
        let len = u32::from_le_bytes(frame[..4].try_into().unwrap()) as usize;
        assert_eq!(len, frame.len() - 4, "{name}");
        let body = &frame[4..];
        let is_request = case["kind"] == "request";
        if case["malformed"] == true {
            malformed += 1;
            let ok = if is_request {
                Request::from_body(body).is_err()
            } else {
                Reply::from_body(body).is_err()
            };
            assert!(ok, "{name} should be rejected");
            continue;
        }
        if is_request {
            let want = request(&case["fields"]);
            assert_eq!(Request::from_body(body).unwrap(), want, "{name}");
            assert_eq!(want.to_frame(), frame, "{name}");
        } else {
            let want = reply(&case["fields"]);
            assert_eq!(Reply::from_body(body).unwrap(), want, "{name}");
            assert_eq!(want.to_frame(), frame, "{name}");
        }
    }
    assert!(malformed >= 3);
}

#[test]
fn status_codes_are_stable() {
    for (code, status) in [
        (1, Status::ModelNotLoaded),
        (2, Status::SessionUnknown),
        (3, Status::ContextOverflow),
        (4, Status::NotInvertible),
        (5, Status::UnknownModel),
        (6, Status::BadRequest),
    ] {
        assert_eq!(status.code(), code);
        assert_eq!(Status::from_code(code), status);
    }
}
