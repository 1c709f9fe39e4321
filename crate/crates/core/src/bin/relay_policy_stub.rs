//! Scripted external policy for protocol tests.
//!
//! `relay-policy-stub still` answers every request with the stand-still
//! action. `relay-policy-stub cycle` walks through all discrete
//! `(motion, steer)` pairs, one per request, in row-major order.

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};

fn main() {
    let mode = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "still".to_string());
    if mode != "still" && mode != "cycle" {
        eprintln!("usage: relay-policy-stub [still|cycle]");
        std::process::exit(2);
    }
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut discrete = true;
    let mut counter = 0usize;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let Ok(msg) = serde_json::from_str::<Value>(&line) else {
            eprintln!("stub: malformed message {line:?}");
            std::process::exit(1);
        };
        let reply = match msg.get("type").and_then(Value::as_str) {
            Some("hello") => {
                discrete = msg.get("action_mode").and_then(Value::as_str) != Some("continuous");
                json!({"protocol": 1})
            }
            Some("bye") => break,
            _ if mode == "cycle" && discrete => {
                let (motion, steer) = (counter / 3 % 9, counter % 3);
                counter += 1;
                json!({"motion": motion, "steer": steer})
            }
            _ if discrete => json!({"motion": 8, "steer": 1}),
            _ => json!({"dp": [0.0, 0.0], "dphi": 0.0}),
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}
