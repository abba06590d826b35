use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex as StdMutex};
use std::time::{Duration, Instant};

use dcad_core::dsl::{Diagnostic, Severity};
use dcad_core::model::Model;
use dcad_core::sync::OptionGallery;
use tokio::sync::Mutex;

use crate::error::ApiError;
use crate::payload::{MeshPayload, ParamEntry, ProgramPayload};
use crate::API_VERSION;

/// A compiled program, its current parameters, and nothing stale: text
/// changes recompile before they are accepted.
#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub revision: u64,
    /// Current text, with parameter literals matching `params`.
    pub text: String,
    pub model: Model,
    pub params: Vec<f64>,
    pub next_edit: u64,
}

#[derive(Debug, Clone)]
pub enum EditState {
    Pending,
    Done(Arc<OptionGallery>),
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct EditRecord {
    pub revision: u64,
    pub state: EditState,
}

pub type EditTable = Arc<StdMutex<BTreeMap<String, EditRecord>>>;

/// Handles to one session. The edit table lives outside the session lock
/// so results can be polled while a solve holds the session.
#[derive(Clone)]
pub struct SessionHandle {
    pub session: Arc<Mutex<Session>>,
    pub edits: EditTable,
}

struct Slot {
    handle: SessionHandle,
    last_used: Instant,
}

pub struct SessionStore {
    slots: StdMutex<HashMap<String, Slot>>,
    ttl: Duration,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            slots: StdMutex::new(HashMap::new()),
            ttl,
        }
    }

    pub fn insert(&self, session: Session) -> SessionHandle {
        let id = session.id.clone();
        let handle = SessionHandle {
            session: Arc::new(Mutex::new(session)),
            edits: Default::default(),
        };
        self.slots.lock().unwrap().insert(
            id,
            Slot {
                handle: handle.clone(),
                last_used: Instant::now(),
            },
        );
        handle
    }

    pub fn get(&self, id: &str) -> Result<SessionHandle, ApiError> {
        let mut slots = self.slots.lock().unwrap();
        let slot = slots.get_mut(id).ok_or_else(|| ApiError::session(id))?;
        slot.last_used = Instant::now();
        Ok(slot.handle.clone())
    }

    pub fn remove(&self, id: &str) -> bool {
        self.slots.lock().unwrap().remove(id).is_some()
    }

    /// Drops sessions idle for longer than the TTL. Sessions that are busy
    /// (their lock is held) are kept.
    pub fn evict_expired(&self) -> usize {
        let now = Instant::now();
        let mut slots = self.slots.lock().unwrap();
        let before = slots.len();
        slots.retain(|_, s| {
            now.duration_since(s.last_used) <= self.ttl || s.handle.session.try_lock().is_err()
        });
        before - slots.len()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Session {
    pub fn new(model: Model, params: Vec<f64>) -> Self {
        let text = model.source_with_params(&params);
        Self {
            id: uuid::Uuid::new_v4().simple().to_string(),
            revision: 0,
            text,
            model,
            params,
            next_edit: 0,
        }
    }

    pub fn param_entries(&self) -> Vec<ParamEntry> {
        self.model
            .param_names
            .iter()
            .zip(&self.params)
            .map(|(n, &v)| ParamEntry {
                name: n.clone(),
                value: v,
            })
            .collect()
    }

    pub fn mesh(&self) -> Result<MeshPayload, ApiError> {
        let positions = self
            .model
            .positions(&self.params)
            .map_err(dcad_core::Error::from)?;
        Ok(MeshPayload::new(&self.model.topology, positions))
    }

    pub fn payload(&self) -> Result<ProgramPayload, ApiError> {
        Ok(ProgramPayload {
            v: API_VERSION,
            id: self.id.clone(),
            revision: self.revision,
            text: self.text.clone(),
            params: self.param_entries(),
            diagnostics: self.model.warnings.clone(),
            mesh: self.mesh()?,
        })
    }

    /// Replaces the parameters after checking them against the constraints.
    pub fn set_params(&mut self, params: Vec<f64>, feas_tol: f64) -> Result<(), ApiError> {
        check_feasible(&self.model, &params, feas_tol)?;
        self.text = self.model.source_with_params(&params);
        self.params = params;
        Ok(())
    }
}

/// Parameter vector from the program literals overridden by `values`.
pub fn params_with(
    model: &Model,
    base: &[f64],
    values: &BTreeMap<String, f64>,
) -> Result<Vec<f64>, ApiError> {
    let mut p = base.to_vec();
    for (name, &v) in values {
        let i = model
            .param_index(name)
            .ok_or_else(|| ApiError::BadRequest(format!("unknown parameter `{name}`")))?;
        if !v.is_finite() {
            return Err(ApiError::BadRequest(format!(
                "parameter `{name}` must be finite"
            )));
        }
        p[i] = v;
    }
    Ok(p)
}

/// Rejects parameter vectors whose mesh would violate a constraint.
pub fn check_feasible(model: &Model, params: &[f64], feas_tol: f64) -> Result<(), ApiError> {
    let g = model
        .constraint_values(params)
        .map_err(dcad_core::Error::from)?;
    let diagnostics: Vec<Diagnostic> = g
        .iter()
        .zip(&model.constraints)
        .filter(|(v, _)| **v < -feas_tol)
        .map(|(v, c)| Diagnostic {
            severity: Severity::Error,
            message: format!("{} (violated by {:e})", c.description, -v),
            line: c.span.line,
            col: c.span.col,
        })
        .collect();
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(ApiError::Unprocessable {
            message: format!("{} constraint(s) violated", diagnostics.len()),
            diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session() -> Session {
        let model = Model::compile(dcad_core::models::BOX).unwrap();
        let p = model.initial_params.clone();
        Session::new(model, p)
    }

    #[test]
    fn eviction_skips_busy_sessions() {
        let store = SessionStore::new(Duration::ZERO);
        let busy = store.insert(session());
        store.insert(session());
        std::thread::sleep(Duration::from_millis(2));
        let guard = busy.session.try_lock().unwrap();
        assert_eq!(store.evict_expired(), 1);
        assert_eq!(store.len(), 1);
        drop(guard);
        assert_eq!(store.evict_expired(), 1);
        assert!(store.is_empty());
    }

    #[test]
    fn unknown_and_non_finite_params_are_rejected() {
        let s = session();
        let mut v = BTreeMap::new();
        v.insert("w".to_string(), 2.0);
        assert_eq!(params_with(&s.model, &s.params, &v).unwrap()[0], 2.0);
        v.insert("w".to_string(), f64::NAN);
        assert!(matches!(
            params_with(&s.model, &s.params, &v),
            Err(ApiError::BadRequest(_))
        ));
        let mut v = BTreeMap::new();
        v.insert("nope".to_string(), 1.0);
        assert!(matches!(
            params_with(&s.model, &s.params, &v),
            Err(ApiError::BadRequest(_))
        ));
    }
}
