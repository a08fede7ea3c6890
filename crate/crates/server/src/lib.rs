//! HTTP front end for a tagatar session store.
//!
//! Every handler delegates to `tagatar-core`; the service adds request
//! parsing, server-assigned timestamps, static file serving and a closed set
//! of error codes. Reports are rendered with the same serializer the CLI
//! uses, so both produce identical bytes.

mod error;
mod handlers;

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::HeaderMap;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use tower_http::services::ServeDir;

use tagatar_core::matcher::load_assets;
use tagatar_core::schema::{bundled_default_schema, load_schema};
use tagatar_core::session::{filter_manifest, read_manifest_csv, ImageManifestEntry};
use tagatar_core::{AvatarAsset, MatchError, SchemaError, SessionError, SessionStore, TagSchema};

pub use error::{ApiError, ErrorCode};
pub use handlers::{
    BatchImage, BatchListing, BatchSource, CreateSessionRequest, MatchRequest, SubmitAnnotation,
};

/// Header carrying the shared token when one is configured.
pub const TOKEN_HEADER: &str = "x-tagatar-token";

/// Name of the pool built from the configured manifest.
pub const MANIFEST_POOL: &str = "manifest";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub store_dir: PathBuf,
    /// Bundled schema when absent.
    pub schema_path: Option<PathBuf>,
    pub assets_path: Option<PathBuf>,
    /// Image manifest; entries at or above `threshold` become the
    /// `manifest` batch pool.
    pub manifest_path: Option<PathBuf>,
    pub threshold: f64,
    pub images_dir: Option<PathBuf>,
    pub reference_dir: Option<PathBuf>,
    pub token: Option<String>,
}

impl ServerConfig {
    pub fn new(store_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store_dir: store_dir.into(),
            schema_path: None,
            assets_path: None,
            manifest_path: None,
            threshold: tagatar_core::session::DEFAULT_CONFIDENCE_THRESHOLD,
            images_dir: None,
            reference_dir: None,
            token: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema: {0}")]
    Schema(#[from] SchemaError),
    #[error("store: {0}")]
    Store(#[from] SessionError),
    #[error("asset database: {0}")]
    Assets(#[from] MatchError),
    #[error("{0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

/// Shared state behind every handler.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub schema: Arc<TagSchema>,
    pub assets: Arc<Vec<AvatarAsset>>,
    pub pools: Arc<BTreeMap<String, Vec<ImageManifestEntry>>>,
    pub token: Option<Arc<str>>,
}

fn read(path: &Path) -> Result<String, StartupError> {
    std::fs::read_to_string(path).map_err(|source| StartupError::Read {
        path: path.to_path_buf(),
        source,
    })
}

impl AppState {
    /// Loads schema, assets and manifest, then opens (and locks) the store.
    pub fn load(config: &ServerConfig) -> Result<Self, StartupError> {
        let schema = match &config.schema_path {
            Some(path) => load_schema(&read(path)?)?,
            None => bundled_default_schema(),
        };
        let assets = match &config.assets_path {
            Some(path) => load_assets(&read(path)?, &schema)?,
            None => Vec::new(),
        };
        let mut pools = BTreeMap::new();
        if let Some(path) = &config.manifest_path {
            let text = read(path)?;
            let entries = read_manifest_csv(text.as_bytes())?;
            pools.insert(
                MANIFEST_POOL.to_string(),
                filter_manifest(&entries, config.threshold)?,
            );
        }
        for dir in [&config.images_dir, &config.reference_dir].into_iter().flatten() {
            if !dir.is_dir() {
                return Err(StartupError::Config(format!(
                    "static directory {} does not exist",
                    dir.display()
                )));
            }
        }
        let store = SessionStore::open(&config.store_dir)?;
        store.put_schema(&schema)?;
        Ok(AppState {
            store: Arc::new(store),
            schema: Arc::new(schema),
            assets: Arc::new(assets),
            pools: Arc::new(pools),
            token: config.token.as_deref().map(Arc::from),
        })
    }
}

async fn require_token(
    State(state): State<AppState>,
    headers: HeaderMap,
    request: Request,
    next: Next,
) -> Result<Response, ApiError> {
    if let Some(token) = &state.token {
        let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(&**token) {
            return Err(ApiError::new(
                ErrorCode::Unauthorized,
                format!("missing or wrong `{TOKEN_HEADER}` header"),
            ));
        }
    }
    Ok(next.run(request).await)
}

/// Builds the full router: `/api/...` plus optional static directories.
pub fn router(state: AppState, config: &ServerConfig) -> Router {
    let api = Router::new()
        .route("/schema", get(handlers::get_schema))
        .route(
            "/sessions",
            get(handlers::list_sessions).post(handlers::create_session),
        )
        .route("/sessions/{id}", get(handlers::get_session))
        .route("/sessions/{id}/batch", get(handlers::get_batch))
        .route("/sessions/{id}/annotations", post(handlers::submit_annotation))
        .route("/sessions/{id}/report", get(handlers::get_report))
        .route("/match", post(handlers::post_match))
        .route("/assets", get(handlers::get_assets))
        .route("/eval", post(handlers::post_eval))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .method_not_allowed_fallback(handlers::method_not_allowed);

    let mut app = Router::new().nest("/api", api);
    if let Some(dir) = &config.images_dir {
        app = app.nest_service("/static/images", ServeDir::new(dir));
    }
    if let Some(dir) = &config.reference_dir {
        app = app.nest_service("/static/reference", ServeDir::new(dir));
    }
    app.fallback(handlers::no_route).with_state(state)
}

/// Runs the service until `shutdown` resolves, then stops accepting
/// connections and waits for in-flight requests (and their store writes) to
/// finish. The store lock is released on return.
pub async fn serve<F>(config: ServerConfig, shutdown: F) -> Result<(), StartupError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let state = AppState::load(&config)?;
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| StartupError::Bind {
            addr: config.bind,
            source,
        })?;
    serve_on(listener, state, &config, shutdown).await
}

pub async fn serve_on<F>(
    listener: tokio::net::TcpListener,
    state: AppState,
    config: &ServerConfig,
    shutdown: F,
) -> Result<(), StartupError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let app = router(state, config);
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| StartupError::Bind {
            addr: config.bind,
            source,
        })
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}
