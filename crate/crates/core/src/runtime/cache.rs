//! Byte-bounded LRU cache keyed by fingerprint, with single-flight.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex, MutexGuard};

use super::graph::Fingerprint;
use super::NodeValue;

#[derive(Debug)]
struct Entry {
    value: NodeValue,
    size: usize,
    stamp: u64,
}

#[derive(Debug, Default)]
struct State {
    entries: HashMap<Fingerprint, Entry>,
    lru: BTreeMap<u64, Fingerprint>,
    bytes: usize,
    next_stamp: u64,
    in_flight: HashSet<Fingerprint>,
    hits: u64,
    misses: u64,
    max_bytes_seen: usize,
}

impl State {
    fn touch(&mut self, fp: Fingerprint) -> Option<NodeValue> {
        let stamp = self.next_stamp;
        let entry = self.entries.get_mut(&fp)?;
        self.lru.remove(&entry.stamp);
        entry.stamp = stamp;
        self.lru.insert(stamp, fp);
        self.next_stamp += 1;
        Some(entry.value.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: usize,
    pub capacity: usize,
    pub hits: u64,
    pub misses: u64,
    /// Largest byte total observed after any insertion.
    pub max_bytes_seen: usize,
}

/// How a value was obtained from [`ValueCache::get_or_compute`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Computed,
    /// Another thread computed it while this one waited.
    Waited,
}

#[derive(Debug)]
pub struct ValueCache {
    capacity: usize,
    state: Mutex<State>,
    ready: Condvar,
    persist_dir: Option<PathBuf>,
}

impl ValueCache {
    pub fn new(capacity: usize) -> ValueCache {
        ValueCache {
            capacity,
            state: Mutex::new(State::default()),
            ready: Condvar::new(),
            persist_dir: None,
        }
    }

    /// A cache that writes entries through to `dir` and starts from the
    /// entries already there. Files are named by the hex fingerprint.
    pub fn persistent(capacity: usize, dir: impl Into<PathBuf>) -> std::io::Result<ValueCache> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut cache = ValueCache::new(capacity);
        let mut files: Vec<(std::time::SystemTime, Fingerprint, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name();
            let Some(fp) = name.to_str().and_then(Fingerprint::from_hex) else {
                continue;
            };
            let modified = entry.metadata()?.modified()?;
            files.push((modified, fp, entry.path()));
        }
        files.sort();
        for (_, fp, path) in files {
            let bytes = fs::read(&path)?;
            match NodeValue::from_cache_bytes(&bytes) {
                Some(value) => {
                    cache.insert_locked(&mut cache.state.lock().expect("cache lock"), fp, value);
                }
                None => fs::remove_file(&path)?,
            }
        }
        cache.persist_dir = Some(dir);
        Ok(cache)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn stats(&self) -> CacheStats {
        let s = self.lock();
        CacheStats {
            entries: s.entries.len(),
            bytes: s.bytes,
            capacity: self.capacity,
            hits: s.hits,
            misses: s.misses,
            max_bytes_seen: s.max_bytes_seen,
        }
    }

    pub fn contains(&self, fp: Fingerprint) -> bool {
        self.lock().entries.contains_key(&fp)
    }

    /// Look up without computing; counts a hit or a miss.
    pub fn get(&self, fp: Fingerprint) -> Option<NodeValue> {
        let mut s = self.lock();
        let v = s.touch(fp);
        if v.is_some() {
            s.hits += 1;
        } else {
            s.misses += 1;
        }
        v
    }

    pub fn insert(&self, fp: Fingerprint, value: NodeValue) {
        let mut s = self.lock();
        self.insert_locked(&mut s, fp, value);
    }

    fn insert_locked(&self, s: &mut State, fp: Fingerprint, value: NodeValue) {
        let size = value.size();
        if size > self.capacity || s.entries.contains_key(&fp) {
            return;
        }
        while s.bytes + size > self.capacity {
            let (_, victim) = s.lru.pop_first().expect("bytes > 0 implies entries");
            let entry = s.entries.remove(&victim).expect("lru and entries agree");
            s.bytes -= entry.size;
            if let Some(dir) = &self.persist_dir {
                let _ = fs::remove_file(dir.join(victim.to_hex()));
            }
        }
        if let Some(dir) = &self.persist_dir {
            let _ = fs::write(dir.join(fp.to_hex()), value.to_cache_bytes());
        }
        let stamp = s.next_stamp;
        s.next_stamp += 1;
        s.lru.insert(stamp, fp);
        s.entries.insert(fp, Entry { value, size, stamp });
        s.bytes += size;
        s.max_bytes_seen = s.max_bytes_seen.max(s.bytes);
    }

    /// Return the cached value for `fp`, or run `compute` and cache its
    /// result. Concurrent callers for the same fingerprint wait for the
    /// first one instead of computing again.
    pub fn get_or_compute<E>(
        &self,
        fp: Fingerprint,
        compute: impl FnOnce() -> Result<NodeValue, E>,
    ) -> Result<(NodeValue, Lookup), E> {
        let mut s = self.lock();
        let mut waited = false;
        loop {
            if let Some(v) = s.touch(fp) {
                s.hits += 1;
                return Ok((v, if waited { Lookup::Waited } else { Lookup::Hit }));
            }
            if !s.in_flight.contains(&fp) {
                break;
            }
            waited = true;
            s = self.ready.wait(s).unwrap_or_else(|e| e.into_inner());
        }
        s.misses += 1;
        s.in_flight.insert(fp);
        drop(s);

        struct Release<'a>(&'a ValueCache, Fingerprint);
        impl Drop for Release<'_> {
            fn drop(&mut self) {
                self.0.lock().in_flight.remove(&self.1);
                self.0.ready.notify_all();
            }
        }
        let release = Release(self, fp);
        let result = compute();
        if let Ok(v) = &result {
            self.insert(fp, v.clone());
        }
        drop(release);
        // a value too large to cache is still returned to this caller
        result.map(|v| (v, Lookup::Computed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn scalar(n: usize) -> NodeValue {
        // serialized length n: a string of n-2 characters plus quotes
        NodeValue::Scalar(Value::Str("x".repeat(n - 2)))
    }

    #[test]
    fn lru_eviction_by_bytes() {
        let c = ValueCache::new(30);
        c.insert(Fingerprint(1), scalar(10));
        c.insert(Fingerprint(2), scalar(10));
        c.insert(Fingerprint(3), scalar(10));
        assert!(c.get(Fingerprint(1)).is_some());
        c.insert(Fingerprint(4), scalar(10));
        assert!(!c.contains(Fingerprint(2)));
        assert!(c.contains(Fingerprint(1)) && c.contains(Fingerprint(3)) && c.contains(Fingerprint(4)));
        assert_eq!(c.stats().bytes, 30);
        c.insert(Fingerprint(5), scalar(31));
        assert!(!c.contains(Fingerprint(5)));
        assert_eq!(c.stats().max_bytes_seen, 30);
    }

    #[test]
    fn single_flight() {
        let c = Arc::new(ValueCache::new(1 << 20));
        let calls = Arc::new(AtomicUsize::new(0));
        let threads: Vec<_> = (0..8)
            .map(|_| {
                let c = Arc::clone(&c);
                let calls = Arc::clone(&calls);
                std::thread::spawn(move || {
                    c.get_or_compute::<()>(Fingerprint(7), || {
                        calls.fetch_add(1, Ordering::SeqCst);
                        std::thread::sleep(std::time::Duration::from_millis(50));
                        Ok(scalar(4))
                    })
                    .unwrap()
                    .1
                })
            })
            .collect();
        let outcomes: Vec<Lookup> = threads.into_iter().map(|t| t.join().unwrap()).collect();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(outcomes.iter().filter(|&&o| o == Lookup::Computed).count(), 1);
    }

    #[test]
    fn failed_compute_releases_waiters() {
        let c = ValueCache::new(100);
        assert!(c.get_or_compute(Fingerprint(1), || Err("boom")).is_err());
        let (_, how) = c.get_or_compute::<()>(Fingerprint(1), || Ok(scalar(4))).unwrap();
        assert_eq!(how, Lookup::Computed);
    }

    #[test]
    fn persisted_entries_survive() {
        let dir = tempfile::tempdir().unwrap();
        {
            let c = ValueCache::persistent(100, dir.path()).unwrap();
            c.insert(Fingerprint(9), scalar(6));
        }
        let c = ValueCache::persistent(100, dir.path()).unwrap();
        assert_eq!(c.get(Fingerprint(9)), Some(scalar(6)));
    }
}
