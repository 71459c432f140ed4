use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::Value;
use socket2::{Domain, Protocol, Socket, Type};

use super::{split_url, Handler, Method, Request, Response, Transport};
use crate::error::TransportError;

/// Blocking JSON-over-HTTP client.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new() -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(5))
            .timeout_read(Duration::from_secs(120))
            .build();
        HttpTransport { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

fn read_response(response: ureq::Response) -> Result<Response, TransportError> {
    let status = response.status();
    let text = response
        .into_string()
        .map_err(|e| TransportError::Io(e.to_string()))?;
    let body = if text.trim().is_empty() {
        None
    } else {
        Some(serde_json::from_str(&text).map_err(|e| TransportError::Io(format!("bad JSON from peer: {e}")))?)
    };
    Ok(Response::new(status, body))
}

impl Transport for HttpTransport {
    fn send(&self, method: Method, url: &str, body: Option<&Value>) -> Result<Response, TransportError> {
        let request = self.agent.request(&method.to_string(), url);
        let result = match body {
            Some(b) => request.send_json(b),
            None => request.call(),
        };
        match result {
            Ok(response) | Err(ureq::Error::Status(_, response)) => read_response(response),
            Err(ureq::Error::Transport(t)) => match t.kind() {
                ureq::ErrorKind::ConnectionFailed | ureq::ErrorKind::Dns => {
                    Err(TransportError::Unreachable(url.to_string()))
                }
                ureq::ErrorKind::InvalidUrl | ureq::ErrorKind::UnknownScheme => {
                    Err(TransportError::InvalidUrl(url.to_string()))
                }
                _ => Err(TransportError::Io(t.to_string())),
            },
        }
    }
}

/// Serves one [`Handler`] over HTTP. Every request runs on its own thread so
/// that a handler may call back into its own server while still serving.
pub struct HttpServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    accept: Option<JoinHandle<()>>,
}

impl HttpServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts serving.
    pub fn serve(addr: &str, handler: Arc<dyn Handler>) -> Result<Self, TransportError> {
        let server = tiny_http::Server::from_listener(listen(addr)?, None).map_err(|e| TransportError::Io(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| TransportError::Io("server bound to a non-IP address".into()))?;
        let server = Arc::new(server);
        let accept_server = Arc::clone(&server);
        let accept = thread::Builder::new()
            .name(format!("http-{addr}"))
            .spawn(move || {
                for request in accept_server.incoming_requests() {
                    let handler = Arc::clone(&handler);
                    thread::spawn(move || respond(handler.as_ref(), request));
                }
            })
            .map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(HttpServer {
            addr,
            server,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks the calling thread until the server stops.
    pub fn join(mut self) {
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }
}

/// A listener whose accepted sockets inherit `TCP_NODELAY`. tiny_http writes
/// responses in 1 KiB pieces, and with Nagle on every response larger than
/// that waits out the peer's delayed ACK.
fn listen(addr: &str) -> Result<std::net::TcpListener, TransportError> {
    let io = |e: std::io::Error| TransportError::Io(format!("{addr}: {e}"));
    let sock_addr = addr
        .to_socket_addrs()
        .map_err(io)?
        .next()
        .ok_or_else(|| TransportError::InvalidUrl(addr.to_string()))?;
    let socket = Socket::new(Domain::for_address(sock_addr), Type::STREAM, Some(Protocol::TCP)).map_err(io)?;
    socket.set_nodelay(true).map_err(io)?;
    socket.bind(&sock_addr.into()).map_err(io)?;
    socket.listen(128).map_err(io)?;
    Ok(socket.into())
}

fn method_of(method: &tiny_http::Method) -> Option<Method> {
    match method {
        tiny_http::Method::Get => Some(Method::Get),
        tiny_http::Method::Post => Some(Method::Post),
        tiny_http::Method::Put => Some(Method::Put),
        tiny_http::Method::Delete => Some(Method::Delete),
        _ => None,
    }
}

fn parse_request(request: &mut tiny_http::Request) -> Result<Request, Response> {
    let method = method_of(request.method()).ok_or_else(|| Response::empty(405))?;
    let (_, mut parsed) = split_url(&format!("http://local{}", request.url()), method)
        .map_err(|e| Response::from(crate::error::ProtocolError::BadRequest(e.to_string())))?;
    let mut text = String::new();
    request
        .as_reader()
        .read_to_string(&mut text)
        .map_err(|e| Response::from(crate::error::ProtocolError::BadRequest(e.to_string())))?;
    if !text.trim().is_empty() {
        parsed.body = Some(
            serde_json::from_str(&text)
                .map_err(|e| Response::from(crate::error::ProtocolError::BadRequest(e.to_string())))?,
        );
    }
    Ok(parsed)
}

fn respond(handler: &dyn Handler, mut request: tiny_http::Request) {
    let response = match parse_request(&mut request) {
        Ok(parsed) => handler.handle(parsed),
        Err(response) => response,
    };
    let body = response
        .body
        .as_ref()
        .map(|b| b.to_string())
        .unwrap_or_default();
    let mut out = tiny_http::Response::from_string(body).with_status_code(response.status);
    if response.body.is_some() {
        let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
            .expect("static header");
        out = out.with_header(header);
    }
    if let Err(e) = request.respond(out) {
        tracing::debug!("client went away before response: {e}");
    }
}
