//! JSON-over-HTTP sessions around compiled programs: compile, evaluate,
//! submit vertex edits, and apply gallery options.

mod error;
pub mod payload;
mod session;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dcad_core::model::Model;
use dcad_core::models;
use dcad_core::objectives::ObjectiveConfig;
use dcad_core::sync::{apply_option, synchronize, SyncOptions};

pub use error::ApiError;
use payload::*;
use session::{check_feasible, params_with, EditRecord, EditState, SessionHandle};
pub use session::{Session, SessionStore};

/// Schema version written into every response body.
pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Idle time after which a session is dropped.
    pub ttl: Duration,
    /// How long an edit request waits for its solve before answering 202.
    pub sync_wait: Duration,
    pub sync: SyncOptions,
    /// Objective settings an edit starts from before its own overrides.
    pub objectives: ObjectiveConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            ttl: Duration::from_secs(3600),
            sync_wait: Duration::from_secs(1),
            sync: SyncOptions::default(),
            objectives: ObjectiveConfig::default(),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub sessions: Arc<SessionStore>,
    pub config: Arc<ServerConfig>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self {
            sessions: Arc::new(SessionStore::new(config.ttl)),
            config: Arc::new(config),
        }
    }

    fn feas_tol(&self) -> f64 {
        self.config.sync.solver.feas_tol
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions.evict_expired();
        self.sessions.get(id)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/programs", post(create_program))
        .route(
            "/programs/{id}",
            get(get_program).put(update_program).delete(delete_program),
        )
        .route("/programs/{id}/params", axum::routing::put(update_params))
        .route("/programs/{id}/mesh", get(get_mesh))
        .route("/programs/{id}/tape", get(get_tape))
        .route("/programs/{id}/dump", get(get_dump))
        .route("/programs/{id}/edits", post(submit_edit))
        .route("/programs/{id}/edits/{eid}", get(get_edit))
        .route("/programs/{id}/edits/{eid}/select", post(select_option))
        .with_state(state)
}

/// Serves until the process exits, evicting idle sessions once a minute.
pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let state = AppState::new(config);
    let sessions = state.sessions.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sessions.evict_expired();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

fn body<T>(json: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    json.map(|Json(t)| t)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

fn compile(text: &str) -> Result<Model, ApiError> {
    Ok(Model::compile(text)?)
}

async fn list_models() -> Json<ModelList> {
    let models = models::ALL
        .iter()
        .map(|(n, t)| BundledModel {
            name: n.to_string(),
            text: t.to_string(),
        })
        .collect();
    Json(ModelList {
        v: API_VERSION,
        models,
    })
}

async fn create_program(
    State(state): State<AppState>,
    req: Result<Json<CreateProgram>, JsonRejection>,
) -> Result<(StatusCode, Json<ProgramPayload>), ApiError> {
    let req = body(req)?;
    let model = compile(&req.text)?;
    let params = params_with(&model, &model.initial_params, &req.params)?;
    check_feasible(&model, &params, state.feas_tol())?;
    let session = Session::new(model, params);
    let payload = session.payload()?;
    state.sessions.insert(session);
    Ok((StatusCode::CREATED, Json(payload)))
}

async fn get_program(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<ProgramPayload>, ApiError> {
    let h = state.session(&id)?;
    let s = h.session.lock().await;
    Ok(Json(s.payload()?))
}

async fn update_program(
    State(state): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<UpdateProgram>, JsonRejection>,
) -> Result<Json<ProgramPayload>, ApiError> {
    let req = body(req)?;
    let h = state.session(&id)?;
    let mut s = h.session.lock().await;
    let model = compile(&req.text)?;
    let params = model.initial_params.clone();
    check_feasible(&model, &params, state.feas_tol())?;
    s.text = model.source_with_params(&params);
    s.model = model;
    s.params = params;
    s.revision += 1;
    Ok(Json(s.payload()?))
}

async fn delete_program(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    if state.sessions.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::session(&id))
    }
}

async fn update_params(
    State(state): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<BTreeMap<String, f64>>, JsonRejection>,
) -> Result<Json<ProgramPayload>, ApiError> {
    let values = body(req)?;
    let h = state.session(&id)?;
    let mut s = h.session.lock().await;
    let params = params_with(&s.model, &s.params, &values)?;
    s.set_params(params, state.feas_tol())?;
    Ok(Json(s.payload()?))
}

async fn get_mesh(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<MeshPayload>, ApiError> {
    let h = state.session(&id)?;
    let s = h.session.lock().await;
    Ok(Json(s.mesh()?))
}

async fn get_tape(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let h = state.session(&id)?;
    let s = h.session.lock().await;
    Ok((
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        s.model.tape.dump(),
    )
        .into_response())
}

async fn get_dump(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionDump>, ApiError> {
    let h = state.session(&id)?;
    let s = h.session.lock().await;
    let edits = h
        .edits
        .lock()
        .unwrap()
        .iter()
        .map(|(eid, r)| edit_payload(&id, eid, r))
        .collect();
    Ok(Json(SessionDump {
        v: API_VERSION,
        id: s.id.clone(),
        revision: s.revision,
        text: s.text.clone(),
        params: s
            .param_entries()
            .into_iter()
            .map(|e| (e.name, e.value))
            .collect(),
        edits,
    }))
}

fn edit_payload(id: &str, eid: &str, r: &EditRecord) -> EditPayload {
    let (status, gallery, error) = match &r.state {
        EditState::Pending => (EditStatus::Pending, None, None),
        EditState::Done(g) => (EditStatus::Done, Some((**g).clone()), None),
        EditState::Failed(e) => (EditStatus::Failed, None, Some(e.clone())),
    };
    EditPayload {
        v: API_VERSION,
        edit_id: eid.to_string(),
        revision: r.revision,
        status,
        poll: format!("/programs/{id}/edits/{eid}"),
        gallery,
        error,
    }
}

fn edit_response(id: &str, eid: &str, r: &EditRecord) -> Response {
    let p = edit_payload(id, eid, r);
    let code = match p.status {
        EditStatus::Pending => StatusCode::ACCEPTED,
        EditStatus::Done => StatusCode::OK,
        EditStatus::Failed => StatusCode::UNPROCESSABLE_ENTITY,
    };
    let location = p.poll.clone();
    (code, [(header::LOCATION, location)], Json(p)).into_response()
}

async fn submit_edit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<EditRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(req)?;
    let h = state.session(&id)?;
    let mut s = h.session.clone().lock_owned().await;
    if let Some(r) = req.revision {
        if r != s.revision {
            return Err(ApiError::Conflict(format!(
                "edit was made against revision {r} but the program is at revision {}; reload before editing",
                s.revision
            )));
        }
    }
    let edit = req.document.edit.clone();
    edit.validate(s.model.num_vertices())
        .map_err(dcad_core::Error::from)?;
    let config = req.document.config(&state.config.objectives);
    config.validate().map_err(ApiError::BadRequest)?;

    let eid = format!("e{}", s.next_edit);
    s.next_edit += 1;
    let revision = s.revision;
    h.edits.lock().unwrap().insert(
        eid.clone(),
        EditRecord {
            revision,
            state: EditState::Pending,
        },
    );

    let (tape, topology, names, p0) = (
        s.model.tape.clone(),
        s.model.topology.clone(),
        s.model.param_names.clone(),
        s.params.clone(),
    );
    let opts = state.config.sync.clone();
    let edits = h.edits.clone();
    let key = eid.clone();
    // The session stays locked until the solve finishes, so later requests
    // on it queue behind the edit.
    let mut task = tokio::spawn(async move {
        let result = tokio::task::spawn_blocking(move || {
            synchronize(tape, topology, &names, &p0, &edit, &config, &opts)
        })
        .await;
        let state = match result {
            Ok(Ok(g)) => EditState::Done(Arc::new(g)),
            Ok(Err(e)) => EditState::Failed(e.to_string()),
            Err(e) => EditState::Failed(format!("solver task failed: {e}")),
        };
        edits
            .lock()
            .unwrap()
            .insert(key, EditRecord { revision, state });
        drop(s);
    });
    let _ = tokio::time::timeout(state.config.sync_wait, &mut task).await;
    let record = h.edits.lock().unwrap()[&eid].clone();
    Ok(edit_response(&id, &eid, &record))
}

async fn get_edit(
    State(state): State<AppState>,
    Path((id, eid)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let h = state.session(&id)?;
    let record = h
        .edits
        .lock()
        .unwrap()
        .get(&eid)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("no edit `{eid}`")))?;
    Ok(edit_response(&id, &eid, &record))
}

async fn select_option(
    State(state): State<AppState>,
    Path((id, eid)): Path<(String, String)>,
    req: Result<Json<SelectRequest>, JsonRejection>,
) -> Result<Json<SelectPayload>, ApiError> {
    let req = body(req)?;
    let h = state.session(&id)?;
    let record = h
        .edits
        .lock()
        .unwrap()
        .get(&eid)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("no edit `{eid}`")))?;
    let mut s = h.session.lock().await;
    let gallery = match record.state {
        EditState::Done(g) => g,
        EditState::Pending => {
            return Err(ApiError::Conflict(format!("edit `{eid}` is still running")))
        }
        EditState::Failed(e) => {
            return Err(ApiError::Conflict(format!("edit `{eid}` failed: {e}")))
        }
    };
    if record.revision != s.revision {
        return Err(ApiError::Conflict(format!(
            "edit `{eid}` was solved at revision {} but the program is at revision {}",
            record.revision, s.revision
        )));
    }
    let (params, _) = apply_option(&gallery, req.index)?;
    s.set_params(params, state.feas_tol())?;
    Ok(Json(SelectPayload {
        v: API_VERSION,
        revision: s.revision,
        params: s.param_entries(),
        text: s.text.clone(),
        mesh: s.mesh()?,
    }))
}
