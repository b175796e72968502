//! The mocks behind a real local socket, speaking the two OpenAI-compatible
//! routes.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::llm_gateway::{ChatRequest, PromptTemplate};

use super::mock::{mock_embed, mock_rewrite, mock_transport_fault};
use super::MockProfile;

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    pub profile: MockProfile,
    /// Used to recover the caption from the user message.
    pub template: PromptTemplate,
    /// Answer every request with this status instead of serving it.
    pub force_status: Option<u16>,
    /// Sleep before answering, to provoke client timeouts.
    pub delay: Option<Duration>,
}

#[derive(Default)]
struct State {
    chat_requests: AtomicU64,
    embed_requests: AtomicU64,
    /// caption -> (requests seen, successful completions)
    captions: Mutex<HashMap<String, (u32, u32)>>,
    last_authorization: Mutex<Option<String>>,
}

/// A mock endpoint on `127.0.0.1` with an OS-assigned port. Shuts down on drop.
///
/// Rewrite attempts are counted per caption on the server side.
pub struct MockServer {
    url: String,
    server: Arc<Server>,
    state: Arc<State>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(options: ServerOptions) -> std::io::Result<Self> {
        let server = Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("server has no IP address"))?;
        let server = Arc::new(server);
        let state = Arc::new(State::default());
        let options = Arc::new(options);

        let handle = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            thread::spawn(move || {
                for request in server.incoming_requests() {
                    let state = Arc::clone(&state);
                    let options = Arc::clone(&options);
                    thread::spawn(move || handle(request, &state, &options));
                }
            })
        };
        Ok(MockServer {
            url: format!("http://127.0.0.1:{port}"),
            server,
            state,
            handle: Some(handle),
        })
    }

    /// Server root, e.g. `http://127.0.0.1:41234`.
    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn chat_requests(&self) -> u64 {
        self.state.chat_requests.load(Ordering::SeqCst)
    }

    pub fn embed_requests(&self) -> u64 {
        self.state.embed_requests.load(Ordering::SeqCst)
    }

    pub fn last_authorization(&self) -> Option<String> {
        self.state.last_authorization.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn json_response(status: u16, body: &Value) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_data(serde_json::to_vec(body).expect("json")).with_status_code(status).with_header(header)
}

fn handle(mut request: Request, state: &State, options: &ServerOptions) {
    if let Some(auth) = request.headers().iter().find(|h| h.field.equiv("Authorization")) {
        *state.last_authorization.lock().unwrap_or_else(|e| e.into_inner()) = Some(auth.value.to_string());
    }
    let mut body = String::new();
    let read = request.as_reader().read_to_string(&mut body);
    let path = request.url().to_string();
    let is_post = *request.method() == Method::Post;

    match path.as_str() {
        "/v1/chat/completions" => state.chat_requests.fetch_add(1, Ordering::SeqCst),
        "/v1/embeddings" => state.embed_requests.fetch_add(1, Ordering::SeqCst),
        _ => 0,
    };
    if let Some(d) = options.delay {
        thread::sleep(d);
    }

    let (status, reply) = if let Some(code) = options.force_status {
        (code, json!({"error": {"message": "forced status"}}))
    } else if read.is_err() || !is_post {
        (400, json!({"error": {"message": "bad request"}}))
    } else {
        match path.as_str() {
            "/v1/chat/completions" => chat(&body, state, options),
            "/v1/embeddings" => embeddings(&body),
            _ => (404, json!({"error": {"message": "no such route"}})),
        }
    };
    let _ = request.respond(json_response(status, &reply));
}

fn chat(body: &str, state: &State, options: &ServerOptions) -> (u16, Value) {
    let Ok(req) = serde_json::from_str::<ChatRequest>(body) else {
        return (400, json!({"error": {"message": "invalid chat request"}}));
    };
    let Some(user) = req.user_content() else {
        return (400, json!({"error": {"message": "no user message"}}));
    };
    let caption = options.template.extract_caption(user).unwrap_or(user).to_string();

    let (attempt, transport_try) = {
        let mut captions = state.captions.lock().unwrap_or_else(|e| e.into_inner());
        let entry = captions.entry(caption.clone()).or_default();
        entry.0 += 1;
        (entry.1 + 1, entry.0)
    };
    if mock_transport_fault(&caption, attempt, transport_try, &options.profile) {
        return (503, json!({"error": {"message": "injected fault"}}));
    }
    state
        .captions
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .entry(caption.clone())
        .or_default()
        .1 += 1;
    let content = mock_rewrite(&caption, attempt, &options.profile);
    (
        200,
        json!({
            "id": format!("chatcmpl-mock-{transport_try}"),
            "object": "chat.completion",
            "model": req.model,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": content},
                "finish_reason": "stop"
            }]
        }),
    )
}

fn embeddings(body: &str) -> (u16, Value) {
    let Ok(req) = serde_json::from_str::<Value>(body) else {
        return (400, json!({"error": {"message": "invalid embedding request"}}));
    };
    let inputs: Vec<String> = match req.get("input") {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(xs)) => xs.iter().filter_map(|x| x.as_str().map(str::to_owned)).collect(),
        _ => return (400, json!({"error": {"message": "missing input"}})),
    };
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"object": "embedding", "index": i, "embedding": mock_embed(t)}))
        .collect();
    (200, json!({"object": "list", "data": data, "model": req.get("model")}))
}
