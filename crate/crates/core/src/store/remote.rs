//! Minimal object protocol over HTTP.
//!
//! | request                 | success          | missing | backend down |
//! |-------------------------|------------------|---------|--------------|
//! | `PUT /blobs/{name}`     | 200              | -       | 503          |
//! | `GET /blobs/{name}`     | 200 + body       | 404     | 503          |
//! | `DELETE /blobs/{name}`  | 200              | 404     | 503          |
//! | `GET /blobs`            | 200 + names, one per line | - | 503        |
//!
//! Invalid names get 400. A 503 may carry `Retry-After` in seconds.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use tiny_http::{Header, Method, Response, Server};

use super::{validate_name, BlobStore, StoreError};

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone)]
pub struct RemoteBlobStore {
    base: String,
    agent: ureq::Agent,
}

impl RemoteBlobStore {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_owned(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    /// Fails with `BackendUnavailable` unless the server answers a listing.
    pub fn ping(&self) -> Result<(), StoreError> {
        self.list().map(|_| ())
    }

    fn url(&self, name: &str) -> Result<String, StoreError> {
        validate_name(name)?;
        Ok(format!("{}/blobs/{}", self.base, name))
    }

    fn map_err(&self, name: &str, err: ureq::Error) -> StoreError {
        match err {
            ureq::Error::Status(404, _) => StoreError::NotFound(name.to_owned()),
            ureq::Error::Status(400, _) => StoreError::NameInvalid(name.to_owned()),
            ureq::Error::Status(code, resp) => StoreError::BackendUnavailable {
                message: format!("{} answered HTTP {code}", self.base),
                retry_after: resp
                    .header("Retry-After")
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs),
            },
            ureq::Error::Transport(t) => StoreError::BackendUnavailable {
                message: format!("{}: {t}", self.base),
                retry_after: Some(Duration::from_secs(1)),
            },
        }
    }
}

impl BlobStore for RemoteBlobStore {
    fn put(&self, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
        let url = self.url(name)?;
        self.agent
            .put(&url)
            .send_bytes(bytes)
            .map_err(|e| self.map_err(name, e))?;
        Ok(())
    }

    fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        let url = self.url(name)?;
        let resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| self.map_err(name, e))?;
        let mut body = Vec::new();
        resp.into_reader()
            .read_to_end(&mut body)
            .map_err(|e| StoreError::unavailable(format!("reading {name}: {e}")))?;
        Ok(body)
    }

    fn delete(&self, name: &str) -> Result<bool, StoreError> {
        let url = self.url(name)?;
        match self.agent.delete(&url).call() {
            Ok(_) => Ok(true),
            Err(ureq::Error::Status(404, _)) => Ok(false),
            Err(e) => Err(self.map_err(name, e)),
        }
    }

    fn list(&self) -> Result<Vec<String>, StoreError> {
        let url = format!("{}/blobs", self.base);
        let body = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| self.map_err("", e))?
            .into_string()
            .map_err(|e| StoreError::unavailable(e.to_string()))?;
        Ok(body
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect())
    }
}

/// Loopback blob server backed by any [`BlobStore`]. Stops on drop.
pub struct BlobServer {
    server: Arc<Server>,
    addr: SocketAddr,
    handle: Option<JoinHandle<()>>,
}

impl BlobServer {
    pub fn start(listen: &str, store: Arc<dyn BlobStore>) -> std::io::Result<Self> {
        let server = Arc::new(Server::http(listen).map_err(std::io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let worker = server.clone();
        let handle = std::thread::spawn(move || {
            for request in worker.incoming_requests() {
                handle_request(request, store.as_ref());
            }
        });
        Ok(Self {
            server,
            addr,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for BlobServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn error_response(err: &StoreError) -> Response<std::io::Cursor<Vec<u8>>> {
    let (code, retry) = match err {
        StoreError::NotFound(_) => (404, None),
        StoreError::NameInvalid(_) => (400, None),
        StoreError::BackendUnavailable { retry_after, .. } => (503, *retry_after),
        _ => (503, None),
    };
    let mut resp = Response::from_string(err.to_string()).with_status_code(code);
    if let Some(d) = retry {
        resp.add_header(
            Header::from_bytes("Retry-After", d.as_secs().to_string()).expect("valid header"),
        );
    }
    resp
}

fn handle_request(mut request: tiny_http::Request, store: &dyn BlobStore) {
    let url = request.url().to_owned();
    let method = request.method().clone();
    let response = match (method, url.strip_prefix("/blobs")) {
        (Method::Get, Some("") | Some("/")) => match store.list() {
            Ok(names) => Response::from_string(names.join("\n")),
            Err(e) => error_response(&e),
        },
        (Method::Put, Some(rest)) if rest.starts_with('/') => {
            let mut body = Vec::new();
            match request.as_reader().read_to_end(&mut body) {
                Ok(_) => match store.put(&rest[1..], &body) {
                    Ok(()) => Response::from_string(""),
                    Err(e) => error_response(&e),
                },
                Err(_) => Response::from_string("bad body").with_status_code(400),
            }
        }
        (Method::Get, Some(rest)) if rest.starts_with('/') => match store.get(&rest[1..]) {
            Ok(bytes) => Response::from_data(bytes),
            Err(e) => error_response(&e),
        },
        (Method::Delete, Some(rest)) if rest.starts_with('/') => match store.delete(&rest[1..]) {
            Ok(true) => Response::from_string(""),
            Ok(false) => error_response(&StoreError::NotFound(rest[1..].to_owned())),
            Err(e) => error_response(&e),
        },
        _ => Response::from_string("not found").with_status_code(404),
    };
    let _ = request.respond(response);
}
