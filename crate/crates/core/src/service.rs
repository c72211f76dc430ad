//! HTTP front end for a [`Gateway`].
//!
//! Every request names its actor in `X-Actor` and authenticates with
//! `Authorization: Bearer <token>`.
//!
//! | request                                  | effect                              |
//! |------------------------------------------|-------------------------------------|
//! | `POST /resources/{id}`                   | upload body; `Classification`, `Grant-Roles` (comma separated) |
//! | `GET /resources/{id}`                    | download                            |
//! | `POST /resources/{id}/grants/{role}`     | grant a role                        |
//! | `DELETE /resources/{id}/grants/{role}`   | revoke a role                       |
//! | `POST /resources/{id}/rotate`            | rotate the data key                 |
//! | `POST /override/{id}`                    | break-glass read; `Reason`          |
//! | `GET /status?window=S&recent=N`          | status report                       |
//!
//! Errors come back as `{"error": code, "message": text}` with a status that
//! follows [`GatewayError::http_status`].

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::gateway::{unix_now, Gateway, GatewayError, SessionContext};
use crate::store::{Classification, ResourceMeta, StoreError};

const WORKERS: usize = 4;

type HttpResponse = Response<std::io::Cursor<Vec<u8>>>;

/// What the API reports about a stored resource.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ResourceSummary {
    pub resource_id: String,
    pub owner: String,
    pub classification: Classification,
    pub version: u64,
    pub size_bytes: u64,
    pub plaintext_sha256: String,
    pub granted_roles: Vec<String>,
}

impl From<&ResourceMeta> for ResourceSummary {
    fn from(m: &ResourceMeta) -> Self {
        Self {
            resource_id: m.resource_id.clone(),
            owner: m.owner.to_string(),
            classification: m.classification,
            version: m.version,
            size_bytes: m.size_bytes,
            plaintext_sha256: m.plaintext_sha256.clone(),
            granted_roles: m.wrapped_keys.keys().map(|r| r.to_string()).collect(),
        }
    }
}

/// Serves the API on a small worker pool. Stops on drop.
pub struct ApiServer {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ApiServer {
    pub fn start(listen: &str, gateway: Arc<Gateway>) -> std::io::Result<Self> {
        let server = Arc::new(Server::http(listen).map_err(std::io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let workers = (0..WORKERS)
            .map(|_| {
                let server = server.clone();
                let gateway = gateway.clone();
                std::thread::spawn(move || {
                    for request in server.incoming_requests() {
                        handle(request, &gateway);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            addr,
            workers,
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the workers exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ApiServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn header<'a>(req: &'a Request, name: &str) -> Option<&'a str> {
    req.headers()
        .iter()
        .find(|h| h.field.as_str().as_str().eq_ignore_ascii_case(name))
        .map(|h| h.value.as_str())
}

fn json_response<T: Serialize>(status: u16, body: &T) -> HttpResponse {
    let bytes = serde_json::to_vec(body).unwrap_or_default();
    Response::from_data(bytes)
        .with_status_code(status)
        .with_header(Header::from_bytes("Content-Type", "application/json").expect("valid header"))
}

fn error_response(err: &GatewayError) -> HttpResponse {
    let body = serde_json::json!({ "error": err.code(), "message": err.to_string() });
    let mut resp = json_response(err.http_status(), &body);
    if let GatewayError::Store(StoreError::BackendUnavailable {
        retry_after: Some(d),
        ..
    }) = err
    {
        resp.add_header(
            Header::from_bytes("Retry-After", d.as_secs().to_string()).expect("valid header"),
        );
    }
    resp
}

fn bad_request(msg: &str) -> HttpResponse {
    error_response(&GatewayError::InvalidRequest(msg.to_owned()))
}

fn percent_decode(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

fn query_param(query: &str, key: &str) -> Option<String> {
    query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| percent_decode(v))
}

fn handle(mut req: Request, gw: &Gateway) {
    let response = route(&mut req, gw);
    let _ = req.respond(response);
}

fn route(req: &mut Request, gw: &Gateway) -> HttpResponse {
    let (Some(actor), Some(token)) = (
        header(req, "X-Actor").map(str::to_owned),
        header(req, "Authorization")
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::to_owned),
    ) else {
        return error_response(&GatewayError::Unauthenticated("missing credentials".into()));
    };
    let ctx = SessionContext::new(actor, token, unix_now());
    let url = req.url().to_owned();
    let (path, query) = url.split_once('?').unwrap_or((&url, ""));
    let Some(segments) = path
        .trim_start_matches('/')
        .split('/')
        .map(percent_decode)
        .collect::<Option<Vec<String>>>()
    else {
        return bad_request("malformed path");
    };
    let segs: Vec<&str> = segments.iter().map(String::as_str).collect();
    let method = req.method().clone();

    let result: Result<HttpResponse, GatewayError> = match (&method, segs.as_slice()) {
        (Method::Post, ["resources", id]) => {
            let classification = match header(req, "Classification").unwrap_or("public").parse() {
                Ok(c) => c,
                Err(_) => return bad_request("Classification must be public or confidential"),
            };
            let roles_header = header(req, "Grant-Roles").unwrap_or("").to_owned();
            let roles: Vec<&str> = roles_header
                .split(',')
                .map(str::trim)
                .filter(|r| !r.is_empty())
                .collect();
            let mut body = Vec::new();
            if req.as_reader().read_to_end(&mut body).is_err() {
                return bad_request("unreadable body");
            }
            gw.upload(&ctx, id, &body, classification, &roles)
                .map(|m| json_response(201, &ResourceSummary::from(&m)))
        }
        (Method::Get, ["resources", id]) => gw.download(&ctx, id).map(Response::from_data),
        (Method::Post, ["resources", id, "grants", role]) => gw
            .grant_resource_access(&ctx, id, role)
            .map(|()| json_response(200, &serde_json::json!({ "granted": role }))),
        (Method::Delete, ["resources", id, "grants", role]) => gw
            .revoke_resource_access(&ctx, id, role)
            .map(|()| json_response(200, &serde_json::json!({ "revoked": role }))),
        (Method::Post, ["resources", id, "rotate"]) => gw
            .rotate_resource_key(&ctx, id)
            .map(|m| json_response(200, &ResourceSummary::from(&m))),
        (Method::Post, ["override", id]) => {
            let why = header(req, "Reason").unwrap_or("").to_owned();
            gw.override_download(&ctx, id, &why)
                .map(Response::from_data)
        }
        (Method::Get, ["status"]) => {
            let window = query_param(query, "window").and_then(|v| v.parse().ok());
            let recent = query_param(query, "recent")
                .and_then(|v| v.parse().ok())
                .unwrap_or(20);
            gw.status(&ctx, window, recent)
                .map(|s| json_response(200, &s))
        }
        _ => Ok(json_response(
            404,
            &serde_json::json!({ "error": "NoRoute", "message": format!("{method} {path}") }),
        )),
    };
    result.unwrap_or_else(|e| error_response(&e))
}
