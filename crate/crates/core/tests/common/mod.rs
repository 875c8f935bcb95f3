//! Shared helpers for integration tests: a fixture-replaying HTTP mock
//! server and a degenerate bandit environment with a known optimal action.

// Each integration test target compiles this module and uses a different
// subset of it.
#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use prompt_policy::backend::EnvironmentPort;
use prompt_policy::domain::{Outcome, QueryState};
use prompt_policy::Result;

/// One recorded request->response pair, as stored in line-delimited JSON.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Fixture {
    pub path: String,
    #[serde(default = "default_status")]
    pub status: u16,
    pub response: serde_json::Value,
}

fn default_status() -> u16 {
    200
}

/// Parse fixtures from line-delimited JSON.
pub fn parse_fixtures(jsonl: &str) -> Vec<Fixture> {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("fixture line parses"))
        .collect()
}

pub fn load_fixtures(path: &str) -> Vec<Fixture> {
    parse_fixtures(&std::fs::read_to_string(path).expect("fixture file readable"))
}

/// Minimal HTTP/1.1 server replaying recorded fixtures.
///
/// Responses are replayed per path in recorded order; when a path's queue is
/// exhausted it cycles from the start, so deterministic trainers can make
/// arbitrarily many calls against a finite recording.
pub struct MockServer {
    pub base_url: String,
    requests: Arc<Mutex<Vec<(String, String)>>>,
    stop: Arc<AtomicBool>,
}

impl MockServer {
    pub fn start(fixtures: Vec<Fixture>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().expect("local addr");
        let requests: Arc<Mutex<Vec<(String, String)>>> = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));

        let mut by_path: HashMap<String, Vec<Fixture>> = HashMap::new();
        for f in fixtures {
            by_path.entry(f.path.clone()).or_default().push(f);
        }

        let requests_thread = Arc::clone(&requests);
        let stop_thread = Arc::clone(&stop);
        std::thread::spawn(move || {
            let mut cursors: HashMap<String, usize> = HashMap::new();
            for stream in listener.incoming() {
                if stop_thread.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                if let Some((path, body)) = read_request(&stream) {
                    requests_thread
                        .lock()
                        .expect("request log")
                        .push((path.clone(), body));
                    let reply = match by_path.get(&path) {
                        Some(queue) if !queue.is_empty() => {
                            let cursor = cursors.entry(path.clone()).or_insert(0);
                            let fixture = &queue[*cursor % queue.len()];
                            *cursor += 1;
                            (fixture.status, fixture.response.to_string())
                        }
                        _ => (404, format!("{{\"error\":\"no fixture for {path}\"}}")),
                    };
                    write_response(&stream, reply.0, &reply.1);
                }
            }
        });

        Self {
            base_url: format!("http://{addr}"),
            requests,
            stop,
        }
    }

    pub fn requests(&self) -> Vec<(String, String)> {
        self.requests.lock().expect("request log").clone()
    }

    pub fn request_count(&self, path: &str) -> usize {
        self.requests().iter().filter(|(p, _)| p == path).count()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop so the thread can exit.
        if let Ok(addr) = self.base_url.trim_start_matches("http://").parse() {
            let _ = TcpStream::connect_timeout(&addr, std::time::Duration::from_millis(100));
        }
    }
}

fn read_request(stream: &TcpStream) -> Option<(String, String)> {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(value) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = value.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body).ok()?;
    }
    Some((path, String::from_utf8_lossy(&body).into_owned()))
}

fn write_response(mut stream: &TcpStream, status: u16, body: &str) {
    let reason = if status == 200 { "OK" } else { "ERR" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

/// Build a chat-completion fixture whose answer text and token usage are
/// given directly.
pub fn completion_fixture(text: &str, completion_tokens: u64) -> Fixture {
    Fixture {
        path: "/v1/chat/completions".into(),
        status: 200,
        response: serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"completion_tokens": completion_tokens, "prompt_tokens": 10},
        }),
    }
}

/// Build an embeddings fixture for a fixed vector.
pub fn embedding_fixture(vector: &[f64]) -> Fixture {
    Fixture {
        path: "/v1/embeddings".into(),
        status: 200,
        response: serde_json::json!({
            "data": [{"embedding": vector}],
        }),
    }
}

/// Bandit with one rewarded action: accuracy 1 on `good_action`, 0 anywhere
/// else, every action costing exactly 1.
pub struct DegenerateBandit {
    pub good_action: usize,
    pub n_actions: usize,
    pub feature_dim: usize,
    cursor: u64,
}

impl DegenerateBandit {
    pub fn new(good_action: usize, n_actions: usize, feature_dim: usize) -> Self {
        Self {
            good_action,
            n_actions,
            feature_dim,
            cursor: 0,
        }
    }
}

impl EnvironmentPort for DegenerateBandit {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn next_query(&mut self) -> Result<QueryState> {
        let seed = self.cursor;
        self.cursor += 1;
        let features = (0..self.feature_dim)
            .map(|k| ((seed as f64 + 1.3) * (k as f64 + 0.7)).sin())
            .collect();
        Ok(QueryState {
            latent_difficulty: 0.5,
            features,
            seed,
        })
    }

    fn execute(&self, _query: &QueryState, action: usize) -> Result<Outcome> {
        Ok(Outcome {
            accuracy: if action == self.good_action { 1.0 } else { 0.0 },
            observed_cost: 1.0,
        })
    }
}
