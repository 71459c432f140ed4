use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde_json::Value;

use super::{split_url, Handler, Method, Response, Transport};
use crate::error::TransportError;

/// Dispatches requests straight to mounted handlers, keyed by URL authority.
/// No sockets, no threads: a request runs on the caller's stack.
#[derive(Default)]
pub struct InProcessNetwork {
    hosts: RwLock<HashMap<String, Arc<dyn Handler>>>,
}

impl InProcessNetwork {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Mounts `handler` under `base_url` (e.g. `http://road.sim`).
    pub fn mount(&self, base_url: &str, handler: Arc<dyn Handler>) -> Result<(), TransportError> {
        let (authority, _) = split_url(base_url, Method::Get)?;
        self.hosts.write().expect("host table poisoned").insert(authority, handler);
        Ok(())
    }

    pub fn unmount(&self, base_url: &str) {
        if let Ok((authority, _)) = split_url(base_url, Method::Get) {
            self.hosts.write().expect("host table poisoned").remove(&authority);
        }
    }

    /// Drops every mounted handler, breaking reference cycles between the
    /// network and services holding it.
    pub fn clear(&self) {
        self.hosts.write().expect("host table poisoned").clear();
    }
}

impl Transport for InProcessNetwork {
    fn send(&self, method: Method, url: &str, body: Option<&Value>) -> Result<Response, TransportError> {
        let (authority, mut request) = split_url(url, method)?;
        let handler = self
            .hosts
            .read()
            .expect("host table poisoned")
            .get(&authority)
            .cloned()
            .ok_or(TransportError::Unreachable(authority))?;
        request.body = body.cloned();
        Ok(handler.handle(request))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Request;

    struct Echo;

    impl Handler for Echo {
        fn handle(&self, request: Request) -> Response {
            Response::ok(serde_json::json!({
                "method": request.method.to_string(),
                "path": request.path,
                "body": request.body,
            }))
        }
    }

    #[test]
    fn routes_by_authority() {
        let net = InProcessNetwork::new();
        net.mount("http://echo.sim", Arc::new(Echo)).unwrap();
        let resp = net.put("http://echo.sim/a/b", &serde_json::json!({"x": 1})).unwrap();
        assert_eq!(resp.status, 200);
        let body = resp.body.unwrap();
        assert_eq!(body["method"], "PUT");
        assert_eq!(body["path"], "/a/b");
        assert_eq!(body["body"]["x"], 1);
    }

    #[test]
    fn unknown_host_is_unreachable() {
        let net = InProcessNetwork::new();
        assert!(matches!(net.get("http://nobody.sim/x"), Err(TransportError::Unreachable(_))));
        net.mount("http://echo.sim", Arc::new(Echo)).unwrap();
        net.unmount("http://echo.sim");
        assert!(net.get("http://echo.sim/x").is_err());
    }
}
