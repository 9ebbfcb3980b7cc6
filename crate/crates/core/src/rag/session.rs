use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use super::RagError;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Starts at a fixed instant and advances one second per reading.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    ticks: AtomicI64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self { start, ticks: AtomicI64::new(0) }
    }
}

impl Default for SteppingClock {
    fn default() -> Self {
        Self::new(DateTime::<Utc>::UNIX_EPOCH)
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        self.start + TimeDelta::seconds(self.ticks.fetch_add(1, Ordering::SeqCst))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: TurnRole,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub space: String,
    pub k: usize,
    pub turns: Vec<ChatTurn>,
    pub condensed_history: String,
    /// Number of turns already folded into `condensed_history`.
    pub condensed_through: usize,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>, space: impl Into<String>, k: usize) -> Self {
        Self {
            session_id: session_id.into(),
            space: space.into(),
            k,
            turns: Vec::new(),
            condensed_history: String::new(),
            condensed_through: 0,
        }
    }

    /// Completed user/assistant exchanges.
    pub fn exchanges(&self) -> usize {
        self.turns.iter().filter(|t| t.role == TurnRole::Assistant).count()
    }

    /// Appends a turn, keeping timestamps strictly increasing.
    pub(crate) fn push_turn(&mut self, role: TurnRole, text: String, clock: &dyn Clock) {
        let mut timestamp = clock.now();
        if let Some(last) = self.turns.last() {
            if timestamp <= last.timestamp {
                timestamp = last.timestamp + TimeDelta::milliseconds(1);
            }
        }
        self.turns.push(ChatTurn { role, text, timestamp });
    }
}

pub fn is_valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum SessionEvent {
    Created { session_id: String, space: String, k: usize },
    Turn { session_id: String, turn: ChatTurn },
    Condensed { session_id: String, text: String, through: usize },
}

pub type SharedSession = Arc<Mutex<ChatSession>>;

/// All chat sessions. Each session has its own lock so that operations on
/// one session are serialized while others proceed. With a log path, every
/// change is appended to a JSON-lines log and replayed on open.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SharedSession>>,
    log: Option<Mutex<File>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, RagError> {
        let path = path.as_ref();
        let mut sessions: HashMap<String, ChatSession> = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: SessionEvent = serde_json::from_str(&line)
                    .map_err(|e| RagError::Io(std::io::Error::other(format!("session log line {}: {e}", i + 1))))?;
                match event {
                    SessionEvent::Created { session_id, space, k } => {
                        sessions.insert(session_id.clone(), ChatSession::new(session_id, space, k));
                    }
                    SessionEvent::Turn { session_id, turn } => {
                        if let Some(s) = sessions.get_mut(&session_id) {
                            s.turns.push(turn);
                        }
                    }
                    SessionEvent::Condensed { session_id, text, through } => {
                        if let Some(s) = sessions.get_mut(&session_id) {
                            s.condensed_history = text;
                            s.condensed_through = through;
                        }
                    }
                }
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            sessions: Mutex::new(sessions.into_iter().map(|(k, v)| (k, Arc::new(Mutex::new(v)))).collect()),
            log: Some(Mutex::new(file)),
        })
    }

    pub fn get(&self, id: &str) -> Option<SharedSession> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn get_or_create(&self, id: &str, space: &str, k: usize) -> Result<SharedSession, RagError> {
        if !is_valid_session_id(id) {
            return Err(RagError::BadRequest(format!("invalid session id {id:?}")));
        }
        let mut sessions = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = sessions.get(id) {
            return Ok(s.clone());
        }
        self.append(&[SessionEvent::Created { session_id: id.into(), space: space.into(), k }])?;
        let s = Arc::new(Mutex::new(ChatSession::new(id, space, k)));
        sessions.insert(id.to_string(), s.clone());
        Ok(s)
    }

    /// Logs what changed between two states of one session.
    pub fn record(&self, before: &ChatSession, after: &ChatSession) -> Result<(), RagError> {
        let id = &after.session_id;
        let mut events = Vec::new();
        if after.condensed_history != before.condensed_history || after.condensed_through != before.condensed_through {
            events.push(SessionEvent::Condensed {
                session_id: id.clone(),
                text: after.condensed_history.clone(),
                through: after.condensed_through,
            });
        }
        for turn in after.turns.iter().skip(before.turns.len()) {
            events.push(SessionEvent::Turn { session_id: id.clone(), turn: turn.clone() });
        }
        self.append(&events)
    }

    fn append(&self, events: &[SessionEvent]) -> Result<(), RagError> {
        let Some(log) = &self.log else { return Ok(()) };
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).map_err(std::io::Error::other)?;
            buf.push(b'\n');
        }
        let mut f = log.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&buf)?;
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_strictly_increase() {
        struct Frozen;
        impl Clock for Frozen {
            fn now(&self) -> DateTime<Utc> {
                DateTime::<Utc>::UNIX_EPOCH
            }
        }
        let mut s = ChatSession::new("a", "mock", 8);
        s.push_turn(TurnRole::User, "q".into(), &Frozen);
        s.push_turn(TurnRole::Assistant, "a".into(), &Frozen);
        assert!(s.turns[0].timestamp < s.turns[1].timestamp);
        assert_eq!(s.exchanges(), 1);
    }

    #[test]
    fn log_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sessions.jsonl");
        let clock = SteppingClock::default();
        {
            let store = SessionStore::open(&path).unwrap();
            let shared = store.get_or_create("s1", "mock", 8).unwrap();
            let mut s = shared.lock().unwrap();
            let before = s.clone();
            s.push_turn(TurnRole::User, "hello".into(), &clock);
            s.push_turn(TurnRole::Assistant, "hi".into(), &clock);
            s.condensed_history = "summary".into();
            s.condensed_through = 2;
            store.record(&before, &s).unwrap();
        }
        let store = SessionStore::open(&path).unwrap();
        let s = store.get("s1").unwrap();
        let s = s.lock().unwrap();
        assert_eq!(s.turns.len(), 2);
        assert_eq!(s.condensed_history, "summary");
        assert_eq!(store.ids(), vec!["s1"]);
    }

    #[test]
    fn session_id_rules() {
        let store = SessionStore::in_memory();
        assert!(store.get_or_create("ok-1_2.x", "m", 8).is_ok());
        assert!(matches!(store.get_or_create("bad id", "m", 8), Err(RagError::BadRequest(_))));
        assert!(matches!(store.get_or_create("", "m", 8), Err(RagError::BadRequest(_))));
    }
}
