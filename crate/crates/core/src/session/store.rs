//! Directory-backed session store.
//!
//! Layout under the store root:
//!
//! ```text
//! LOCK                          held while a process has the store open
//! schemas/<hex(version)>.json   schema snapshot per version
//! sessions/<id>/session.json    session document, replaced atomically
//! sessions/<id>/records.jsonl   append-only annotation log
//! ```
//!
//! Each session's state sits behind its own `RwLock`: submissions to one
//! session are serialized, reports and reads share the lock, and different
//! sessions never contend. A submission is acknowledged only after its log
//! line has been synced. On open, an unterminated last line (a write cut
//! short by a crash) is truncated away, so a record is either fully present
//! or absent.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::agreement::{AgreementTracker, SessionReport};
use crate::record::AnnotationRecord;
use crate::schema::{schema_to_json, TagSchema};

use super::{
    is_valid_session_id, CreatedSession, NewSession, Session, SessionError, SessionStatus,
    RECOMMENDED_ANNOTATORS,
};

const LOCK_FILE: &str = "LOCK";
const SESSION_FILE: &str = "session.json";
const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgment {
    pub session_id: String,
    pub image_id: String,
    /// Records now held for the image, one per (annotator, category).
    pub image_record_count: u32,
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub records: usize,
    pub replaced: usize,
    pub sessions: Vec<String>,
}

type RecordKey = (String, String, String);

fn record_key(r: &AnnotationRecord) -> RecordKey {
    (r.annotator_id.clone(), r.image_id.clone(), r.category_id.clone())
}

struct SessionState {
    session: Session,
    schema: Arc<TagSchema>,
    // latest record per key, in order of first submission
    records: Vec<AnnotationRecord>,
    positions: HashMap<RecordKey, usize>,
    tracker: AgreementTracker,
    log: File,
    dir: PathBuf,
}

impl SessionState {
    fn validate(&self, record: &AnnotationRecord) -> Result<(), SessionError> {
        let s = &self.session;
        if !s.is_open() {
            return Err(SessionError::Closed(s.session_id.clone()));
        }
        if !s.contains_image(&record.image_id) {
            return Err(SessionError::InvalidReference(format!(
                "image `{}` is not in the batch of session `{}`",
                record.image_id, s.session_id
            )));
        }
        if record.annotator_id.is_empty() {
            return Err(SessionError::InvalidReference("annotator id is empty".into()));
        }
        if !s.annotator_ids.is_empty() && !s.annotator_ids.contains(&record.annotator_id) {
            return Err(SessionError::InvalidReference(format!(
                "annotator `{}` is not registered in session `{}`",
                record.annotator_id, s.session_id
            )));
        }
        AgreementTracker::check(&self.schema, record)
            .map_err(|e| SessionError::InvalidReference(e.to_string()))
    }

    fn apply_in_memory(&mut self, record: AnnotationRecord) -> Acknowledgment {
        let applied = self
            .tracker
            .apply(&self.schema, &record)
            .expect("record validated before apply");
        let key = record_key(&record);
        let ack = Acknowledgment {
            session_id: record.session_id.clone(),
            image_id: record.image_id.clone(),
            image_record_count: applied.image_record_count,
            replaced: applied.replaced.is_some(),
        };
        match self.positions.get(&key) {
            Some(&pos) => self.records[pos] = record,
            None => {
                self.positions.insert(key, self.records.len());
                self.records.push(record);
            }
        }
        ack
    }

    fn append(&mut self, record: AnnotationRecord) -> Result<Acknowledgment, SessionError> {
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.sync_data()?;
        Ok(self.apply_in_memory(record))
    }

    fn write_session_doc(&self) -> Result<(), SessionError> {
        write_atomic(
            &self.dir.join(SESSION_FILE),
            &to_pretty_json(&self.session),
        )
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("document serializes");
    text.push('\n');
    text
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), SessionError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Handle to an open store. Dropping it releases the store lock.
pub struct SessionStore {
    root: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<RwLock<SessionState>>>>,
    schemas: RwLock<HashMap<String, Arc<TagSchema>>>,
    // serializes session creation so ids stay unique
    create_lock: std::sync::Mutex<()>,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore").field("root", &self.root).finish()
    }
}

impl Drop for SessionStore {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK_FILE));
    }
}

fn schema_file_name(version: &str) -> String {
    format!("{}.json", hex::encode(version.as_bytes()))
}

impl SessionStore {
    /// Opens the store at `root`, creating the directory if needed, and
    /// takes its lock.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, SessionError> {
        let root = root.as_ref().to_path_buf();
        if root.exists() && !root.is_dir() {
            return Err(SessionError::Validation(format!(
                "store path {} is not a directory",
                root.display()
            )));
        }
        fs::create_dir_all(root.join("sessions"))?;
        fs::create_dir_all(root.join("schemas"))?;
        let lock_path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(SessionError::Locked(root));
            }
            Err(e) => return Err(e.into()),
        }
        let store = SessionStore {
            root,
            sessions: RwLock::new(BTreeMap::new()),
            schemas: RwLock::new(HashMap::new()),
            create_lock: std::sync::Mutex::new(()),
        };
        // on failure `store` drops and releases the lock
        store.load()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn load(&self) -> Result<(), SessionError> {
        let mut schemas = HashMap::new();
        for entry in fs::read_dir(self.root.join("schemas"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let schema: TagSchema =
                serde_json::from_str(&text).map_err(|e| SessionError::Corrupt {
                    path: path.clone(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
            schemas.insert(schema.version.clone(), Arc::new(schema));
        }

        let mut sessions = BTreeMap::new();
        for entry in fs::read_dir(self.root.join("sessions"))? {
            let dir = entry?.path();
            if !dir.is_dir() {
                continue;
            }
            let doc = dir.join(SESSION_FILE);
            if !doc.exists() {
                continue;
            }
            let text = fs::read_to_string(&doc)?;
            let session: Session =
                serde_json::from_str(&text).map_err(|e| SessionError::Corrupt {
                    path: doc.clone(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
            let schema = schemas
                .get(&session.schema_version)
                .cloned()
                .ok_or_else(|| SessionError::Corrupt {
                    path: doc.clone(),
                    line: 0,
                    message: format!("no schema snapshot for version `{}`", session.schema_version),
                })?;
            let state = Self::replay(dir, session, schema)?;
            sessions.insert(
                state.session.session_id.clone(),
                Arc::new(RwLock::new(state)),
            );
        }
        *self.schemas.write().unwrap() = schemas;
        *self.sessions.write().unwrap() = sessions;
        Ok(())
    }

    fn replay(dir: PathBuf, session: Session, schema: Arc<TagSchema>) -> Result<SessionState, SessionError> {
        let log_path = dir.join(RECORDS_FILE);
        if !log_path.exists() {
            File::create(&log_path)?;
        }
        truncate_torn_tail(&log_path)?;
        let mut state = SessionState {
            log: OpenOptions::new().append(true).open(&log_path)?,
            session,
            schema,
            records: Vec::new(),
            positions: HashMap::new(),
            tracker: AgreementTracker::new(),
            dir,
        };
        let reader = BufReader::new(File::open(&log_path)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: AnnotationRecord =
                serde_json::from_str(&line).map_err(|e| SessionError::Corrupt {
                    path: log_path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            AgreementTracker::check(&state.schema, &record).map_err(|e| SessionError::Corrupt {
                path: log_path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            state.apply_in_memory(record);
        }
        Ok(state)
    }

    /// Stores a snapshot of `schema` under its version.
    ///
    /// Re-registering an identical schema is a no-op; a different schema
    /// under an existing version is a conflict.
    pub fn put_schema(&self, schema: &TagSchema) -> Result<Arc<TagSchema>, SessionError> {
        let mut schemas = self.schemas.write().unwrap();
        if let Some(existing) = schemas.get(&schema.version) {
            if **existing == *schema {
                return Ok(existing.clone());
            }
            return Err(SessionError::Conflict(format!(
                "schema version `{}` already stored with different content",
                schema.version
            )));
        }
        let path = self
            .root
            .join("schemas")
            .join(schema_file_name(&schema.version));
        write_atomic(&path, &schema_to_json(schema))?;
        let schema = Arc::new(schema.clone());
        schemas.insert(schema.version.clone(), schema.clone());
        Ok(schema)
    }

    pub fn schema(&self, version: &str) -> Option<Arc<TagSchema>> {
        self.schemas.read().unwrap().get(version).cloned()
    }

    fn entry(&self, session_id: &str) -> Result<Arc<RwLock<SessionState>>, SessionError> {
        self.sessions
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(session_id.to_string()))
    }

    pub fn create_session(
        &self,
        schema: &TagSchema,
        new: NewSession,
    ) -> Result<CreatedSession, SessionError> {
        if new.batch.is_empty() {
            return Err(SessionError::Validation("session batch is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for image in &new.batch {
            if !seen.insert(image.as_str()) {
                return Err(SessionError::Validation(format!(
                    "image `{image}` appears twice in the batch"
                )));
            }
        }
        let _guard = self.create_lock.lock().unwrap();
        let session_id = match new.session_id {
            Some(id) => {
                if !is_valid_session_id(&id) {
                    return Err(SessionError::Validation(format!("invalid session id `{id}`")));
                }
                if self.sessions.read().unwrap().contains_key(&id) {
                    return Err(SessionError::Conflict(format!("session `{id}` already exists")));
                }
                id
            }
            None => {
                let sessions = self.sessions.read().unwrap();
                (1..)
                    .map(|n| format!("session-{n:04}"))
                    .find(|id| !sessions.contains_key(id))
                    .expect("unbounded id space")
            }
        };
        let annotator_ids: std::collections::BTreeSet<String> =
            new.annotators.into_iter().collect();
        let mut warnings = Vec::new();
        let (lo, hi) = RECOMMENDED_ANNOTATORS;
        if annotator_ids.len() < lo || annotator_ids.len() > hi {
            warnings.push(format!(
                "session has {} annotators; {lo}-{hi} are recommended",
                annotator_ids.len()
            ));
        }
        let schema = self.put_schema(schema)?;
        let session = Session {
            session_id: session_id.clone(),
            schema_version: schema.version.clone(),
            batch: new.batch,
            annotator_ids,
            seed: new.seed,
            created_at: Utc::now(),
            status: SessionStatus::Open,
            image_paths: new.image_paths,
        };
        let dir = self.root.join("sessions").join(&session_id);
        fs::create_dir_all(&dir)?;
        let log_path = dir.join(RECORDS_FILE);
        File::create(&log_path)?;
        let state = SessionState {
            log: OpenOptions::new().append(true).open(&log_path)?,
            session: session.clone(),
            schema,
            records: Vec::new(),
            positions: HashMap::new(),
            tracker: AgreementTracker::new(),
            dir,
        };
        // session.json last: a directory without it is ignored on load
        state.write_session_doc()?;
        self.sessions
            .write()
            .unwrap()
            .insert(session_id, Arc::new(RwLock::new(state)));
        Ok(CreatedSession { session, warnings })
    }

    pub fn session(&self, session_id: &str) -> Result<Session, SessionError> {
        Ok(self.entry(session_id)?.read().unwrap().session.clone())
    }

    pub fn sessions(&self) -> Vec<Session> {
        let entries: Vec<_> = self.sessions.read().unwrap().values().cloned().collect();
        entries
            .iter()
            .map(|e| e.read().unwrap().session.clone())
            .collect()
    }

    pub fn session_schema(&self, session_id: &str) -> Result<Arc<TagSchema>, SessionError> {
        Ok(self.entry(session_id)?.read().unwrap().schema.clone())
    }

    /// Durably appends one record and returns the running count for its image.
    pub fn record_annotation(
        &self,
        record: AnnotationRecord,
    ) -> Result<Acknowledgment, SessionError> {
        let entry = self.entry(&record.session_id)?;
        let mut state = entry.write().unwrap();
        state.validate(&record)?;
        state.append(record)
    }

    /// Imports records for any number of sessions. Every record is checked
    /// before the first one is written, so a bad file changes nothing.
    pub fn import_records(
        &self,
        records: Vec<AnnotationRecord>,
    ) -> Result<ImportSummary, SessionError> {
        let mut by_session: BTreeMap<String, Vec<(usize, AnnotationRecord)>> = BTreeMap::new();
        for (i, r) in records.into_iter().enumerate() {
            by_session.entry(r.session_id.clone()).or_default().push((i, r));
        }
        let mut entries = Vec::new();
        for (session_id, records) in by_session {
            let entry = self.entry(&session_id).map_err(|e| match e {
                SessionError::NotFound(id) => SessionError::InvalidReference(format!(
                    "record {}: unknown session `{id}`",
                    records[0].0 + 1
                )),
                other => other,
            })?;
            entries.push((entry, records));
        }
        let mut guards: Vec<_> = entries
            .iter()
            .map(|(entry, records)| (entry.write().unwrap(), records))
            .collect();
        for (state, records) in &guards {
            for (i, r) in records.iter() {
                state.validate(r).map_err(|e| match e {
                    SessionError::InvalidReference(msg) => {
                        SessionError::InvalidReference(format!("record {}: {msg}", i + 1))
                    }
                    other => other,
                })?;
            }
        }
        let mut summary = ImportSummary {
            records: 0,
            replaced: 0,
            sessions: Vec::new(),
        };
        for (state, records) in guards.iter_mut() {
            summary.sessions.push(state.session.session_id.clone());
            for (_, r) in records.iter() {
                let ack = state.append(r.clone())?;
                summary.records += 1;
                summary.replaced += usize::from(ack.replaced);
            }
        }
        Ok(summary)
    }

    pub fn close_session(&self, session_id: &str) -> Result<Session, SessionError> {
        let entry = self.entry(session_id)?;
        let mut state = entry.write().unwrap();
        if state.session.status == SessionStatus::Closed {
            return Ok(state.session.clone());
        }
        state.session.status = SessionStatus::Closed;
        if let Err(e) = state.write_session_doc() {
            state.session.status = SessionStatus::Open;
            return Err(e);
        }
        Ok(state.session.clone())
    }

    /// Current records of a session: the latest per (annotator, image, category).
    pub fn records(&self, session_id: &str) -> Result<Vec<AnnotationRecord>, SessionError> {
        Ok(self.entry(session_id)?.read().unwrap().records.clone())
    }

    /// Live agreement report from the incrementally maintained tallies.
    pub fn report(&self, session_id: &str) -> Result<SessionReport, SessionError> {
        let entry = self.entry(session_id)?;
        let state = entry.read().unwrap();
        Ok(state.tracker.report(session_id, &state.schema))
    }
}

fn truncate_torn_tail(path: &Path) -> Result<(), SessionError> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes
        .iter()
        .rposition(|&b| b == b'\n')
        .map(|p| p + 1)
        .unwrap_or(0);
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    f.sync_all()?;
    Ok(())
}
