//! Minimal HTTP/1.1 server standing in for a chat-completions endpoint.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};

pub struct StubRequest {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

impl StubRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn messages(&self) -> &[Value] {
        self.body["messages"].as_array().map_or(&[], Vec::as_slice)
    }

    pub fn last_content(&self) -> &str {
        self.messages().last().and_then(|m| m["content"].as_str()).unwrap_or("")
    }
}

pub struct StubResponse {
    pub status: u16,
    pub body: String,
}

impl StubResponse {
    pub fn completion(content: &str) -> Self {
        StubResponse {
            status: 200,
            body: json!({
                "id": "stub",
                "object": "chat.completion",
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop"
                }]
            })
            .to_string(),
        }
    }

    pub fn status(status: u16, body: &str) -> Self {
        StubResponse {
            status,
            body: body.to_string(),
        }
    }
}

type Handler = dyn Fn(&StubRequest) -> StubResponse + Send + Sync;

pub struct StubServer {
    pub base_url: String,
    pub requests: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
}

impl StubServer {
    pub fn start(handler: impl Fn(&StubRequest) -> StubResponse + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handler: Arc<Handler> = Arc::new(handler);
        let requests = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        {
            let requests = requests.clone();
            let stop = stop.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let handler = handler.clone();
                    let requests = requests.clone();
                    thread::spawn(move || serve(stream, &*handler, &requests));
                }
            });
        }
        StubServer {
            base_url: format!("http://{addr}/v1"),
            requests,
            stop,
            addr,
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn serve(stream: TcpStream, handler: &Handler, requests: &AtomicUsize) {
    let _ = stream.set_nodelay(true);
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
        let mut headers = Vec::new();
        let mut len = 0;
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h).unwrap_or(0) == 0 {
                return;
            }
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                let (k, v) = (k.trim().to_string(), v.trim().to_string());
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.parse().unwrap_or(0);
                }
                headers.push((k, v));
            }
        }
        let mut body = vec![0; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        requests.fetch_add(1, Ordering::SeqCst);
        let req = StubRequest {
            path,
            headers,
            body: serde_json::from_slice(&body).unwrap_or(Value::Null),
        };
        let resp = handler(&req);
        let head = format!(
            "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            resp.status,
            reason(resp.status),
            resp.body.len()
        );
        if writer.write_all(head.as_bytes()).is_err() || writer.write_all(resp.body.as_bytes()).is_err() {
            return;
        }
        let _ = writer.flush();
    }
}

/// FNV-1a, used to derive scripted replies from prompt text.
pub fn text_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn menu_len(user_prompt: &str) -> u64 {
    user_prompt
        .split("Possible actions:")
        .nth(1)
        .map_or(0, |menu| menu.lines().filter(|l| l.contains(" ) ")).count() as u64)
}

/// Deterministic chat model: each prompt is answered directly, after the
/// corrective re-ask, or never, depending on its hash.
pub fn scripted_model(req: &StubRequest) -> StubResponse {
    let msgs = req.messages();
    let user = msgs.get(1).and_then(|m| m["content"].as_str()).unwrap_or("");
    let h = text_hash(user);
    let n = menu_len(user).max(1);
    let pick = h / 3 % n + 1;
    let reask = msgs.len() > 2;
    let reply = match (h % 3, reask) {
        (0, _) => format!("<reasoning> Stacking is interesting. </reasoning>\n\nSelected action is : {pick}"),
        (1, false) => "<reasoning> Every option looks equally good. </reasoning>".to_string(),
        (1, true) => pick.to_string(),
        _ => "I would rather not choose.".to_string(),
    };
    StubResponse::completion(&reply)
}
