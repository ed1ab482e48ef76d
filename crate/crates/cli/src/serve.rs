//! HTTP wrapper around [`Api`].

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::header::{CACHE_CONTROL, CONTENT_TYPE};
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use discourse_core::api::Api;
use tower_http::services::ServeDir;

async fn answer(State(api): State<Arc<Api>>, uri: Uri) -> Response {
    let r = api.handle(uri.path(), uri.query());
    let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    // the bundle never changes while served
    let cache = if r.status == 200 {
        "public, max-age=3600"
    } else {
        "no-store"
    };
    (
        status,
        [(CONTENT_TYPE, "application/json"), (CACHE_CONTROL, cache)],
        r.body,
    )
        .into_response()
}

pub fn router(api: Api, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new()
        .route("/api", get(answer))
        .route("/api/{*rest}", get(answer))
        .with_state(Arc::new(api));
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(|| async { (StatusCode::NOT_FOUND, "not found") }),
    }
}

/// Binds, prints the bound address on stdout, then serves until Ctrl-C.
pub async fn serve(api: Api, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    {
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
    }
    axum::serve(listener, router(api, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
