//! Request/response contract shared by every service, and the two transports
//! that carry it: an in-process dispatcher and plain HTTP.
//!
//! Services implement [`Handler`]; callers talk to other services only through
//! a [`Transport`] using absolute URLs, so the same service code runs behind
//! either transport unchanged.

mod http;
mod inprocess;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{ProtocolError, TransportError};

pub use http::{HttpServer, HttpTransport};
pub use inprocess::InProcessNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Delete => "DELETE",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub method: Method,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub body: Option<Value>,
}

impl Request {
    pub fn new(method: Method, path: impl Into<String>) -> Self {
        Request {
            method,
            path: path.into(),
            query: BTreeMap::new(),
            body: None,
        }
    }

    pub fn with_body(mut self, body: Value) -> Self {
        self.body = Some(body);
        self
    }

    pub fn segments(&self) -> Vec<&str> {
        self.path.split('/').filter(|s| !s.is_empty()).collect()
    }

    pub fn json<T: DeserializeOwned>(&self) -> Result<T, ProtocolError> {
        let body = self
            .body
            .clone()
            .ok_or_else(|| ProtocolError::BadRequest("missing request body".into()))?;
        serde_json::from_value(body).map_err(|e| ProtocolError::BadRequest(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: Option<Value>,
}

impl Response {
    pub fn new(status: u16, body: Option<Value>) -> Self {
        Response { status, body }
    }

    pub fn ok(body: impl Serialize) -> Self {
        Response::new(200, Some(serde_json::to_value(body).expect("serializable body")))
    }

    pub fn created(uri: &str) -> Self {
        Response::new(201, Some(json!({ "uri": uri })))
    }

    pub fn empty(status: u16) -> Self {
        Response::new(status, None)
    }

    pub fn not_found(path: &str) -> Self {
        ProtocolError::NotFound(path.to_string()).into()
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn json<T: DeserializeOwned>(&self) -> Result<T, TransportError> {
        let body = self.body.clone().unwrap_or(Value::Null);
        serde_json::from_value(body).map_err(|e| TransportError::Io(format!("bad response body: {e}")))
    }

    /// `error` field of an error response, or an empty string.
    pub fn message(&self) -> String {
        self.body
            .as_ref()
            .and_then(|b| b.get("error"))
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string()
    }
}

impl From<ProtocolError> for Response {
    fn from(err: ProtocolError) -> Self {
        Response::new(err.status(), Some(json!({ "error": err.to_string() })))
    }
}

impl<T: Serialize> From<Result<T, ProtocolError>> for Response {
    fn from(result: Result<T, ProtocolError>) -> Self {
        match result {
            Ok(body) => Response::ok(body),
            Err(e) => e.into(),
        }
    }
}

pub trait Handler: Send + Sync {
    fn handle(&self, request: Request) -> Response;
}

pub trait Transport: Send + Sync {
    fn send(&self, method: Method, url: &str, body: Option<&Value>) -> Result<Response, TransportError>;

    fn get(&self, url: &str) -> Result<Response, TransportError> {
        self.send(Method::Get, url, None)
    }

    fn put(&self, url: &str, body: &Value) -> Result<Response, TransportError> {
        self.send(Method::Put, url, Some(body))
    }

    fn post(&self, url: &str, body: &Value) -> Result<Response, TransportError> {
        self.send(Method::Post, url, Some(body))
    }

    fn delete(&self, url: &str) -> Result<Response, TransportError> {
        self.send(Method::Delete, url, None)
    }
}

pub type SharedTransport = Arc<dyn Transport>;

/// Splits an absolute URL into its authority (`host[:port]`) and a request
/// carrying path and query.
pub(crate) fn split_url(url: &str, method: Method) -> Result<(String, Request), TransportError> {
    let parsed = url::Url::parse(url).map_err(|_| TransportError::InvalidUrl(url.to_string()))?;
    let host = parsed
        .host_str()
        .ok_or_else(|| TransportError::InvalidUrl(url.to_string()))?;
    let authority = match parsed.port() {
        Some(port) => format!("{host}:{port}"),
        None => host.to_string(),
    };
    let path = parsed
        .path()
        .split('/')
        .map(|seg| percent_encoding::percent_decode_str(seg).decode_utf8_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/");
    let mut request = Request::new(method, path);
    request.query = parsed.query_pairs().into_owned().collect();
    Ok((authority, request))
}

/// Strips `base` from `uri` if present, leaving a service-local path.
pub fn local_path<'a>(base: &str, uri: &'a str) -> &'a str {
    uri.strip_prefix(base.trim_end_matches('/')).unwrap_or(uri)
}
