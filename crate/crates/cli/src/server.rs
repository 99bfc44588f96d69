use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use policy_frames::api::respond;
use policy_frames::json;
use policy_frames::pipeline::ResultBundle;
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

/// `None` or `*` allows any origin; anything else must be an exact origin.
pub fn cors_layer(origin: Option<&str>) -> anyhow::Result<CorsLayer> {
    let allow = match origin {
        None | Some("*") => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o)?),
    };
    Ok(CorsLayer::new().allow_origin(allow).allow_methods([Method::GET, Method::HEAD]))
}

fn json_response(status: u16, body: &serde_json::Value) -> Response {
    let bytes = json::to_vec(body).expect("response bodies serialize");
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn handle(State(bundle): State<Arc<ResultBundle>>, method: Method, uri: Uri) -> Response {
    if method != Method::GET && method != Method::HEAD {
        let body = json!({
            "schema_version": bundle.schema_version,
            "error": {"status": 405, "code": "method_not_allowed", "message": format!("{method} is not supported; the API is read-only")},
        });
        return json_response(405, &body);
    }
    let r = respond(&bundle, uri.path(), uri.query().unwrap_or(""));
    log::debug!("{} {} -> {}", method, uri, r.status);
    json_response(r.status, &r.body)
}

/// Every path goes through [`respond`]; the bundle is shared read-only.
pub fn router(bundle: Arc<ResultBundle>, cors: CorsLayer) -> Router {
    Router::new().fallback(handle).with_state(bundle).layer(cors)
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> anyhow::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    log::info!("serving on http://{addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
