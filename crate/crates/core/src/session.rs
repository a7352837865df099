//! In-memory session registry with idle expiry.
//!
//! Each session value sits behind its own mutex, so requests to one session
//! are serialized while different sessions proceed in parallel. Expired ids
//! are remembered (up to a bound) to tell "expired" apart from "never
//! existed".

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime};

use thiserror::Error;

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);
const TOMBSTONE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("session `{0}` has expired")]
    Expired(String),
}

struct Entry<T> {
    value: Arc<Mutex<T>>,
    created_at: SystemTime,
    last_active: Instant,
}

struct Inner<T> {
    live: HashMap<String, Entry<T>>,
    expired: HashSet<String>,
    expired_order: VecDeque<String>,
}

pub struct SessionStore<T> {
    inner: Mutex<Inner<T>>,
    idle_timeout: Duration,
}

impl<T> SessionStore<T> {
    pub fn new(idle_timeout: Duration) -> Self {
        SessionStore {
            inner: Mutex::new(Inner {
                live: HashMap::new(),
                expired: HashSet::new(),
                expired_order: VecDeque::new(),
            }),
            idle_timeout,
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner<T>> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn idle_timeout(&self) -> Duration {
        self.idle_timeout
    }

    pub fn create(&self, value: T) -> String {
        self.create_at(value, Instant::now())
    }

    pub fn create_at(&self, value: T, now: Instant) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.lock().live.insert(
            id.clone(),
            Entry {
                value: Arc::new(Mutex::new(value)),
                created_at: SystemTime::now(),
                last_active: now,
            },
        );
        id
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<T>>, SessionError> {
        self.get_at(id, Instant::now())
    }

    /// Looks a session up and marks it active at `now`.
    pub fn get_at(&self, id: &str, now: Instant) -> Result<Arc<Mutex<T>>, SessionError> {
        let mut inner = self.lock();
        let idle = self.idle_timeout;
        if let Some(e) = inner.live.get_mut(id) {
            if now.saturating_duration_since(e.last_active) <= idle {
                e.last_active = now;
                return Ok(e.value.clone());
            }
            inner.live.remove(id);
            bury(&mut inner, id);
            return Err(SessionError::Expired(id.to_string()));
        }
        if inner.expired.contains(id) {
            Err(SessionError::Expired(id.to_string()))
        } else {
            Err(SessionError::NotFound(id.to_string()))
        }
    }

    pub fn created_at(&self, id: &str) -> Option<SystemTime> {
        self.lock().live.get(id).map(|e| e.created_at)
    }

    /// Removes a live session; returns whether it existed.
    pub fn remove(&self, id: &str) -> bool {
        self.lock().live.remove(id).is_some()
    }

    /// Drops every session idle for longer than the timeout at `now`.
    pub fn sweep_at(&self, now: Instant) -> usize {
        let mut inner = self.lock();
        let idle = self.idle_timeout;
        let stale: Vec<String> = inner
            .live
            .iter()
            .filter(|(_, e)| now.saturating_duration_since(e.last_active) > idle)
            .map(|(k, _)| k.clone())
            .collect();
        for id in &stale {
            inner.live.remove(id);
            bury(&mut inner, id);
        }
        stale.len()
    }

    pub fn len(&self) -> usize {
        self.lock().live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn bury<T>(inner: &mut Inner<T>, id: &str) {
    if inner.expired.insert(id.to_string()) {
        inner.expired_order.push_back(id.to_string());
    }
    while inner.expired_order.len() > TOMBSTONE_LIMIT {
        if let Some(old) = inner.expired_order.pop_front() {
            inner.expired.remove(&old);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle() {
        let store: SessionStore<u32> = SessionStore::new(Duration::from_secs(60));
        let t0 = Instant::now();
        let a = store.create_at(1, t0);
        let b = store.create_at(2, t0);
        assert_ne!(a, b);
        *store.get_at(&a, t0).unwrap().lock().unwrap() += 10;
        assert_eq!(*store.get_at(&a, t0).unwrap().lock().unwrap(), 11);
        assert_eq!(*store.get_at(&b, t0).unwrap().lock().unwrap(), 2);
        assert_eq!(store.get("nope").unwrap_err(), SessionError::NotFound("nope".into()));
        assert!(store.remove(&b));
        assert!(matches!(store.get_at(&b, t0), Err(SessionError::NotFound(_))));
    }

    #[test]
    fn idle_expiry() {
        let store: SessionStore<()> = SessionStore::new(Duration::from_secs(60));
        let t0 = Instant::now();
        let a = store.create_at((), t0);
        let c = store.create_at((), t0);
        // Activity keeps a session alive.
        store.get_at(&a, t0 + Duration::from_secs(50)).unwrap();
        store.get_at(&a, t0 + Duration::from_secs(100)).unwrap();
        assert_eq!(
            store.get_at(&a, t0 + Duration::from_secs(161)).unwrap_err(),
            SessionError::Expired(a.clone())
        );
        assert!(matches!(store.get_at(&a, t0), Err(SessionError::Expired(_))));
        assert_eq!(store.sweep_at(t0 + Duration::from_secs(61)), 1);
        assert!(matches!(store.get_at(&c, t0), Err(SessionError::Expired(_))));
        assert!(store.is_empty());
    }
}
