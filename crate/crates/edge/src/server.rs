use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use xrflux_core::node::{EdgeNode, RemoteStore};
use xrflux_core::ObjectId;

use crate::api::{
    ErrorBody, PrefetchRequest, PrefetchResponse, PrefetchResult, ResetRequest, ResetResponse, CACHE_HEADER,
    DELAY_HEADER,
};
use crate::config::{DelayMode, ServiceConfig};
use crate::error::EdgeError;

struct AppState {
    /// Every lookup, admission, eviction and counter update happens under
    /// this lock, so decisions depend only on arrival order.
    node: Mutex<EdgeNode>,
    store: RemoteStore,
    catalog_size: u32,
    mode: DelayMode,
}

impl AppState {
    fn node(&self) -> MutexGuard<'_, EdgeNode> {
        // A panic inside the critical section cannot leave the node half
        // updated, so a poisoned lock is still usable.
        self.node.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

pub fn router(cfg: &ServiceConfig) -> Result<Router, EdgeError> {
    cfg.validate()?;
    let store = RemoteStore {
        payload_bytes: cfg.payload_bytes,
    };
    let state = Arc::new(AppState {
        node: Mutex::new(EdgeNode::new(cfg.policy, cfg.capacity, &cfg.delays, store)?),
        store,
        catalog_size: cfg.catalog_size,
        mode: cfg.mode,
    });
    Ok(Router::new()
        .route("/v1/objects/{id}", get(get_object))
        .route("/v1/prefetch", post(prefetch))
        .route("/v1/stats", get(stats))
        .route("/v1/admin/reset", post(reset))
        .with_state(state))
}

async fn get_object(
    State(state): State<Arc<AppState>>,
    Path(raw): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Response {
    let Ok(id) = raw.parse::<ObjectId>() else {
        return error(StatusCode::BAD_REQUEST, format!("malformed object id `{raw}`"));
    };
    let user = query.get("user").map(|u| u.parse::<u32>());
    if let Some(Err(_)) = user {
        return error(StatusCode::BAD_REQUEST, "malformed user id");
    }
    if id >= state.catalog_size {
        return error(StatusCode::NOT_FOUND, format!("object {id} not in catalog"));
    }
    let outcome = state.node().demand(id);
    tracing::debug!(object = id, user = ?user.and_then(Result::ok), access = ?outcome.access, "demand");
    if state.mode == DelayMode::RealSleep {
        tokio::time::sleep(Duration::from_secs_f64(outcome.delay_ms / 1000.0)).await;
    }
    let cache = if outcome.access.is_hit() { "HIT" } else { "MISS" };
    let mut resp = state.store.payload(id).into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"));
    headers.insert(CACHE_HEADER, HeaderValue::from_static(cache));
    // Shortest round-trip form, so clients parse back the exact sample.
    headers.insert(
        DELAY_HEADER,
        HeaderValue::from_str(&outcome.delay_ms.to_string()).expect("float text is a valid header"),
    );
    resp
}

async fn prefetch(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: PrefetchRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid prefetch body: {e}")),
    };
    let unknown: Vec<ObjectId> = req
        .object_ids
        .iter()
        .copied()
        .filter(|&id| id >= state.catalog_size)
        .collect();
    if !unknown.is_empty() {
        return error(StatusCode::BAD_REQUEST, format!("objects not in catalog: {unknown:?}"));
    }
    let results = {
        let mut node = state.node();
        req.object_ids
            .iter()
            .map(|&object_id| PrefetchResult {
                object_id,
                outcome: node.prefetch(object_id),
            })
            .collect()
    };
    Json(PrefetchResponse {
        user_id: req.user_id,
        results,
    })
    .into_response()
}

async fn stats(State(state): State<Arc<AppState>>) -> Response {
    let snapshot = state.node().stats();
    Json(snapshot).into_response()
}

async fn reset(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req = if body.iter().all(u8::is_ascii_whitespace) {
        ResetRequest::default()
    } else {
        match serde_json::from_slice::<ResetRequest>(&body) {
            Ok(r) => r,
            Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid reset body: {e}")),
        }
    };
    let mut node = state.node();
    match node.reset(req.capacity) {
        Ok(()) => Json(ResetResponse {
            ok: true,
            capacity: node.capacity(),
        })
        .into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

/// A server running on the current tokio runtime.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Runs until the server stops on its own.
    pub async fn wait(self) -> Result<(), EdgeError> {
        let _keep_open = self.shutdown;
        join(self.handle).await
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(self) -> Result<(), EdgeError> {
        let _ = self.shutdown.send(());
        join(self.handle).await
    }
}

async fn join(handle: JoinHandle<std::io::Result<()>>) -> Result<(), EdgeError> {
    match handle.await {
        Ok(r) => r.map_err(EdgeError::Serve),
        Err(e) => Err(EdgeError::Serve(std::io::Error::other(e))),
    }
}

/// Binds `cfg.listen` (port 0 picks a free port) and serves in the background.
pub async fn spawn(cfg: &ServiceConfig) -> Result<RunningServer, EdgeError> {
    let app = router(cfg)?;
    let listener = TcpListener::bind(cfg.listen).await.map_err(|source| EdgeError::Bind {
        addr: cfg.listen.to_string(),
        source,
    })?;
    let addr = listener.local_addr().map_err(EdgeError::Serve)?;
    let (tx, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, capacity = cfg.capacity, mode = %cfg.mode, "edge service listening");
    Ok(RunningServer {
        addr,
        shutdown: tx,
        handle,
    })
}
