use std::io::Read;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::json;

use super::cache::ValueCache;
use super::exec::{execute, ExecError, ExecOptions, QueryResult};
use super::graph::Query;
use super::load::Loader;
use super::protocol::{decode_request, decode_response, encode_request, encode_response, Response};

/// Shared evaluator state: one cache for every connection and session.
#[derive(Debug)]
pub struct Runtime {
    pub cache: Arc<ValueCache>,
    pub loader: Loader,
    pub options: ExecOptions,
    /// Added to every query before it returns.
    pub latency: Duration,
}

impl Runtime {
    pub fn new(cache: ValueCache, loader: Loader) -> Runtime {
        Runtime {
            cache: Arc::new(cache),
            loader,
            options: ExecOptions::default(),
            latency: Duration::ZERO,
        }
    }

    pub fn execute(&self, query: &Query) -> Result<QueryResult, ExecError> {
        let result = execute(query, &self.cache, &self.loader, self.options);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        result
    }

    pub fn handle_request(&self, bytes: &[u8]) -> Vec<u8> {
        let result = decode_request(bytes)
            .map_err(|message| ExecError { node: None, message })
            .and_then(|q| self.execute(&q));
        encode_response(&result)
    }

    pub fn stats_json(&self) -> Vec<u8> {
        let s = self.cache.stats();
        let doc = json!({
            "entries": s.entries,
            "bytes": s.bytes,
            "capacity": s.capacity,
            "hits": s.hits,
            "misses": s.misses,
        });
        serde_json::to_vec(&doc).expect("json serializes")
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub cache_bytes: usize,
    pub data_root: PathBuf,
    pub inject_latency_ms: u64,
    pub no_url_cache: bool,
    /// Write cache entries through to this directory and reload them on
    /// startup.
    pub persist_dir: Option<PathBuf>,
    pub threads: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            port: 0,
            cache_bytes: 1 << 30,
            data_root: PathBuf::from("."),
            inject_latency_ms: 0,
            no_url_cache: false,
            persist_dir: None,
            threads: 8,
        }
    }
}

impl ServeConfig {
    pub fn runtime(&self) -> std::io::Result<Runtime> {
        let cache = match &self.persist_dir {
            Some(dir) => ValueCache::persistent(self.cache_bytes, dir)?,
            None => ValueCache::new(self.cache_bytes),
        };
        let mut rt = Runtime::new(cache, Loader::new(&self.data_root));
        rt.options.no_url_cache = self.no_url_cache;
        rt.latency = Duration::from_millis(self.inject_latency_ms);
        Ok(rt)
    }
}

/// A running HTTP service: `POST /query` and `GET /stats`.
pub struct Server {
    http: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
    pub runtime: Arc<Runtime>,
}

impl Server {
    pub fn addr(&self) -> SocketAddr {
        self.http.server_addr().to_ip().expect("bound to a TCP address")
    }

    /// Block until the workers exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.http.unblock();
        for _ in 1..self.workers.len() {
            self.http.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn respond(http: &tiny_http::Server, runtime: &Runtime) {
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    loop {
        let Ok(mut req) = http.recv() else {
            return;
        };
        let response = match (req.method(), req.url()) {
            (tiny_http::Method::Post, "/query") => {
                let mut body = Vec::new();
                let bytes = match req.as_reader().read_to_end(&mut body) {
                    Ok(_) => runtime.handle_request(&body),
                    Err(e) => encode_response(&Err(ExecError {
                        node: None,
                        message: format!("malformed request: {e}"),
                    })),
                };
                tiny_http::Response::from_data(bytes)
            }
            (tiny_http::Method::Get, "/stats") => tiny_http::Response::from_data(runtime.stats_json()),
            _ => tiny_http::Response::from_data(b"{\"type\":\"error\",\"message\":\"not found\",\"node\":null}".to_vec())
                .with_status_code(404),
        };
        let _ = req.respond(response.with_header(header.clone()));
    }
}

pub fn serve(config: &ServeConfig) -> std::io::Result<Server> {
    let runtime = Arc::new(config.runtime()?);
    let http = tiny_http::Server::http((config.host.as_str(), config.port))
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
    let http = Arc::new(http);
    let workers = (0..config.threads.max(1))
        .map(|_| {
            let http = Arc::clone(&http);
            let runtime = Arc::clone(&runtime);
            std::thread::spawn(move || respond(&http, &runtime))
        })
        .collect();
    Ok(Server { http, workers, runtime })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EndpointError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("runtime error at node {node:?}: {message}", node = .0.node, message = .0.message)]
    Remote(ExecError),
}

/// Where a session sends its queries.
pub trait Endpoint {
    fn query(&self, query: &Query) -> Result<QueryResult, EndpointError>;
}

/// In-process runtime.
#[derive(Debug, Clone)]
pub struct Embedded(pub Arc<Runtime>);

impl Endpoint for Embedded {
    fn query(&self, query: &Query) -> Result<QueryResult, EndpointError> {
        self.0.execute(query).map_err(EndpointError::Remote)
    }
}

/// A runtime service reached over HTTP.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    base: String,
    agent: ureq::Agent,
}

impl HttpEndpoint {
    /// `addr` is `host:port` or a full `http://` base url.
    pub fn new(addr: &str) -> HttpEndpoint {
        let base = if addr.contains("://") {
            addr.trim_end_matches('/').to_string()
        } else {
            format!("http://{addr}")
        };
        HttpEndpoint {
            base,
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    pub fn stats(&self) -> Result<serde_json::Value, EndpointError> {
        self.agent
            .get(&format!("{}/stats", self.base))
            .call()
            .map_err(|e| EndpointError::Transport(e.to_string()))?
            .into_string()
            .map_err(|e| EndpointError::Transport(e.to_string()))
            .and_then(|body| serde_json::from_str(&body).map_err(|e| EndpointError::Transport(e.to_string())))
    }
}

impl Endpoint for HttpEndpoint {
    fn query(&self, query: &Query) -> Result<QueryResult, EndpointError> {
        let transport = |e: String| EndpointError::Transport(e);
        let resp = self
            .agent
            .post(&format!("{}/query", self.base))
            .set("Content-Type", "application/json")
            .send_bytes(&encode_request(query))
            .map_err(|e| transport(e.to_string()))?;
        let mut body = Vec::new();
        resp.into_reader()
            .read_to_end(&mut body)
            .map_err(|e| transport(e.to_string()))?;
        match decode_response(&body).map_err(transport)? {
            Response::Result(r) => Ok(r),
            Response::Error(e) => Err(EndpointError::Remote(e)),
        }
    }
}
