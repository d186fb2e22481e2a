use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use crate::arena::{compute_leaderboard, Arena, LeaderboardFilter, LeaderboardPayload};
use crate::ServiceError;

/// Cached payload per filter, tagged with the log length it was computed at.
type LeaderboardCache = HashMap<LeaderboardFilter, (usize, Arc<LeaderboardPayload>)>;

/// Thread-safe handle: one writer at a time, leaderboards fitted outside the
/// lock on a snapshot and cached by log length.
#[derive(Debug, Clone)]
pub struct SharedArena {
    inner: Arc<Mutex<Arena>>,
    cache: Arc<Mutex<LeaderboardCache>>,
}

impl SharedArena {
    pub fn new(arena: Arena) -> Self {
        Self { inner: Arc::new(Mutex::new(arena)), cache: Arc::default() }
    }

    pub fn lock(&self) -> MutexGuard<'_, Arena> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn leaderboard(&self, filter: &LeaderboardFilter) -> Result<Arc<LeaderboardPayload>, ServiceError> {
        let (log_length, records, alpha) = {
            let arena = self.lock();
            let (len, records) = arena.leaderboard_snapshot(filter)?;
            (len, records, arena.config().alpha)
        };
        if let Some((len, payload)) = self.cache.lock().unwrap().get(filter) {
            if *len == log_length {
                return Ok(payload.clone());
            }
        }
        let payload = Arc::new(compute_leaderboard(filter, log_length, &records, alpha)?);
        self.cache.lock().unwrap().insert(filter.clone(), (log_length, payload.clone()));
        Ok(payload)
    }
}
