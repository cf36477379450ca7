//! Reference external recreate worker.
//!
//! Reads one JSON request per line on stdin and answers one JSON response
//! per line on stdout. The mode argument selects the behaviour:
//!
//! * `savings`: solve the request with parallel savings,
//! * `drop-one`: like `savings` but omit the last node (infeasible reply),
//! * `garbage`: reply with a line that is not JSON,
//! * `sleep`: never reply.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use nrr_core::construct::savings_init;
use nrr_core::recreate::{ExternalRequest, ExternalResponse};

fn main() -> ExitCode {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "savings".into());
    if !matches!(mode.as_str(), "savings" | "drop-one" | "garbage" | "sleep") {
        eprintln!("usage: nrr-worker [savings|drop-one|garbage|sleep]");
        return ExitCode::from(2);
    }
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let reply = match mode.as_str() {
            "garbage" => "this is not json".to_string(),
            "sleep" => loop {
                thread::sleep(Duration::from_secs(3600));
            },
            _ => {
                let req: ExternalRequest = match serde_json::from_str(&line) {
                    Ok(r) => r,
                    Err(e) => {
                        eprintln!("nrr-worker: bad request: {e}");
                        return ExitCode::from(1);
                    }
                };
                let inst = match req.to_instance() {
                    Ok(i) => i,
                    Err(e) => {
                        eprintln!("nrr-worker: {e}");
                        return ExitCode::from(1);
                    }
                };
                let mut resp = ExternalResponse::from_solution(&savings_init(&inst));
                if mode == "drop-one" {
                    let last = inst.len() - 1;
                    for t in &mut resp.tours {
                        t.retain(|&v| v != last);
                    }
                }
                serde_json::to_string(&resp).expect("response serializes")
            }
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
