//! Chain-of-thought backends.
//!
//! A [`CotBackend`] turns a generation request — question, known answer,
//! required groundings, a scaffold response, and optionally a rendered
//! bird's-eye view — into a full response text. The driver validates
//! whatever comes back, so a backend is free to rewrite the reasoning as
//! long as it keeps the groundings and the answer.
//!
//! Two implementations ship: [`MockCotBackend`] echoes the scaffold (always
//! valid, fully offline), and [`HttpCotBackend`] POSTs the request as JSON
//! to a configurable endpoint.
//!
//! # HTTP protocol
//!
//! Request body:
//!
//! ```json
//! {
//!   "question": "…",
//!   "options": ["left", "right"],
//!   "answer": "A",
//!   "groundings": [{"name": "table", "count": 1, "boxes": [{"min": […], "max": […]}]}],
//!   "scaffold": "<think>…</think>\n<answer>A</answer>",
//!   "bev_ppm_base64": "UDYK…"
//! }
//! ```
//!
//! Expected reply: `{"response": "<think>…</think>\n<answer>A</answer>"}`.
//! Transport failures, HTTP 429, and HTTP 5xx are retried with exponential
//! backoff; other statuses and malformed replies fail immediately.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;

use super::bev::BevImage;
use crate::respond::Grounding;

/// Errors from a chain-of-thought backend.
#[derive(Debug, Error)]
pub enum CotError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {0}: {1}")]
    Status(u16, String),
    #[error("malformed endpoint reply: {0}")]
    Protocol(String),
}

impl CotError {
    fn retryable(&self) -> bool {
        match self {
            CotError::Transport(_) => true,
            CotError::Status(code, _) => *code == 429 || *code >= 500,
            CotError::Protocol(_) => false,
        }
    }
}

/// Everything a backend may use to write the response.
#[derive(Debug, Clone)]
pub struct CotRequest<'a> {
    pub question: String,
    pub options: Option<Vec<String>>,
    /// The ground-truth answer text the response must end with.
    pub answer: String,
    /// Groundings the response must preserve verbatim.
    pub groundings: Vec<Grounding>,
    /// A complete, already-valid response the backend may rewrite.
    pub scaffold: String,
    pub bev: Option<&'a BevImage>,
}

pub trait CotBackend {
    fn generate(&self, request: &CotRequest<'_>) -> Result<String, CotError>;
}

/// Offline backend: answers with the scaffold itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockCotBackend;

impl CotBackend for MockCotBackend {
    fn generate(&self, request: &CotRequest<'_>) -> Result<String, CotError> {
        Ok(request.scaffold.clone())
    }
}

/// HTTP backend speaking the JSON protocol described in the module docs.
pub struct HttpCotBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    retries: u32,
    backoff: Duration,
}

impl HttpCotBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(60))
                .build(),
            url: url.into(),
            api_key,
            retries: 3,
            backoff: Duration::from_millis(250),
        }
    }

    /// Overrides the retry count and initial backoff delay.
    pub fn with_policy(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    fn send(&self, body: &serde_json::Value) -> Result<String, CotError> {
        let mut req = self
            .agent
            .post(&self.url)
            .set("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => {
                let value: serde_json::Value = resp
                    .into_json()
                    .map_err(|e| CotError::Protocol(format!("reply is not JSON: {e}")))?;
                value
                    .get("response")
                    .and_then(|v| v.as_str())
                    .map(str::to_string)
                    .ok_or_else(|| {
                        CotError::Protocol("reply lacks a string \"response\" field".into())
                    })
            }
            Err(ureq::Error::Status(code, resp)) => {
                Err(CotError::Status(code, resp.status_text().to_string()))
            }
            Err(ureq::Error::Transport(t)) => Err(CotError::Transport(t.to_string())),
        }
    }
}

impl CotBackend for HttpCotBackend {
    fn generate(&self, request: &CotRequest<'_>) -> Result<String, CotError> {
        let body = serde_json::json!({
            "question": request.question,
            "options": request.options,
            "answer": request.answer,
            "groundings": request.groundings,
            "scaffold": request.scaffold,
            "bev_ppm_base64": request.bev.map(|b| BASE64.encode(b.to_ppm())),
        });
        let mut attempt = 0u32;
        loop {
            match self.send(&body) {
                Ok(text) => return Ok(text),
                Err(e) if attempt < self.retries && e.retryable() => {
                    std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::thread;

    fn request() -> CotRequest<'static> {
        CotRequest {
            question: "Which way?".into(),
            options: Some(vec!["left".into(), "right".into()]),
            answer: "A".into(),
            groundings: Vec::new(),
            scaffold: "<think>scaffold</think>\n<answer>A</answer>".into(),
            bev: None,
        }
    }

    #[test]
    fn mock_backend_echoes_the_scaffold() {
        let req = request();
        assert_eq!(MockCotBackend.generate(&req).unwrap(), req.scaffold);
    }

    /// Reads one HTTP request and returns its body.
    fn read_request(stream: &mut TcpStream) -> Vec<u8> {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 1024];
        let header_end = loop {
            let n = stream.read(&mut chunk).unwrap();
            assert!(n > 0, "client closed before sending a full request");
            buf.extend_from_slice(&chunk[..n]);
            if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                break pos + 4;
            }
        };
        let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
        let content_length: usize = headers
            .lines()
            .find_map(|l| l.strip_prefix("content-length:"))
            .map(|v| v.trim().parse().unwrap())
            .unwrap_or(0);
        while buf.len() < header_end + content_length {
            let n = stream.read(&mut chunk).unwrap();
            assert!(n > 0, "client closed mid-body");
            buf.extend_from_slice(&chunk[..n]);
        }
        buf[header_end..header_end + content_length].to_vec()
    }

    fn write_response(stream: &mut TcpStream, status: &str, body: &str) {
        let msg = format!(
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(msg.as_bytes()).unwrap();
        stream.flush().unwrap();
    }

    #[test]
    fn http_backend_posts_json_and_reads_the_reply() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let body = read_request(&mut stream);
            write_response(
                &mut stream,
                "200 OK",
                "{\"response\": \"<think>from server</think>\\n<answer>A</answer>\"}",
            );
            body
        });
        let backend = HttpCotBackend::new(format!("http://{addr}/cot"), Some("k".into()))
            .with_policy(0, Duration::from_millis(1));
        let out = backend.generate(&request()).unwrap();
        assert_eq!(out, "<think>from server</think>\n<answer>A</answer>");
        let sent: serde_json::Value = serde_json::from_slice(&server.join().unwrap()).unwrap();
        assert_eq!(sent["question"], "Which way?");
        assert_eq!(sent["answer"], "A");
        assert!(sent["bev_ppm_base64"].is_null());
        assert_eq!(sent["scaffold"], request().scaffold);
    }

    #[test]
    fn http_backend_retries_server_errors_then_succeeds() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            for attempt in 0..2 {
                let (mut stream, _) = listener.accept().unwrap();
                let _ = read_request(&mut stream);
                if attempt == 0 {
                    write_response(&mut stream, "500 Internal Server Error", "{}");
                } else {
                    write_response(&mut stream, "200 OK", "{\"response\": \"ok\"}");
                }
            }
        });
        let backend = HttpCotBackend::new(format!("http://{addr}/cot"), None)
            .with_policy(2, Duration::from_millis(5));
        assert_eq!(backend.generate(&request()).unwrap(), "ok");
        server.join().unwrap();
    }

    #[test]
    fn http_backend_does_not_retry_client_errors() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let _ = read_request(&mut stream);
            write_response(&mut stream, "404 Not Found", "{}");
            // A second accept would hang the test; the listener is dropped
            // here, so a retry would surface as a transport error instead.
        });
        let backend = HttpCotBackend::new(format!("http://{addr}/cot"), None)
            .with_policy(3, Duration::from_millis(5));
        match backend.generate(&request()) {
            Err(CotError::Status(404, _)) => {}
            other => panic!("expected a 404 error, got {other:?}"),
        }
        server.join().unwrap();
    }

    #[test]
    fn malformed_reply_is_a_protocol_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let _ = read_request(&mut stream);
            write_response(&mut stream, "200 OK", "{\"unexpected\": 1}");
        });
        let backend = HttpCotBackend::new(format!("http://{addr}/cot"), None)
            .with_policy(3, Duration::from_millis(5));
        match backend.generate(&request()) {
            Err(CotError::Protocol(_)) => {}
            other => panic!("expected a protocol error, got {other:?}"),
        }
        server.join().unwrap();
    }
}
