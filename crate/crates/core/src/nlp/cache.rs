//! Append-only JSON-lines cache of provider responses.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{NlpError, Response};

#[derive(Serialize, Deserialize)]
struct Line {
    key: String,
    result: Response,
}

struct Inner {
    map: HashMap<[u8; 32], Response>,
    file: File,
}

pub struct PersistentCache {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for PersistentCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PersistentCache").field("path", &self.path).finish()
    }
}

fn parse_key(s: &str) -> Option<[u8; 32]> {
    hex::decode(s).ok()?.try_into().ok()
}

fn load(path: &Path) -> Result<HashMap<[u8; 32], Response>, String> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(e.to_string()),
    };
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let key = parse_key(&rec.key).ok_or_else(|| format!("line {}: bad key", i + 1))?;
        map.insert(key, rec.result);
    }
    Ok(map)
}

impl PersistentCache {
    /// Opens or creates the cache. A corrupt file is discarded with a warning.
    pub fn open(path: &Path) -> Result<Self, NlpError> {
        let io = |e: std::io::Error| NlpError::Config(format!("cache {}: {e}", path.display()));
        let (map, truncate) = match load(path) {
            Ok(m) => (m, false),
            Err(why) => {
                log::warn!("cache {} is corrupt ({why}); rebuilding from empty", path.display());
                (HashMap::new(), true)
            }
        };
        let file = if truncate {
            File::create(path).map_err(io)?
        } else {
            OpenOptions::new().create(true).append(true).open(path).map_err(io)?
        };
        Ok(PersistentCache { path: path.to_path_buf(), inner: Mutex::new(Inner { map, file }) })
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &[u8; 32]) -> Option<Response> {
        self.inner.lock().expect("cache lock").map.get(key).cloned()
    }

    pub fn put(&self, key: [u8; 32], r: &Response) -> Result<(), NlpError> {
        let mut inner = self.inner.lock().expect("cache lock");
        if inner.map.contains_key(&key) {
            return Ok(());
        }
        let line = serde_json::to_string(&Line { key: hex::encode(key), result: r.clone() }).expect("cache line");
        writeln!(inner.file, "{line}")
            .and_then(|_| inner.file.flush())
            .map_err(|e| NlpError::Config(format!("cache {}: {e}", self.path.display())))?;
        inner.map.insert(key, r.clone());
        Ok(())
    }
}
