//! Content-addressed payload storage under a dataset root.

use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::Mutex;

use super::{DataError, Result};
use crate::seeds::content_hash;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PayloadKind {
    Image,
    Mask,
}

impl PayloadKind {
    fn dir(self) -> &'static str {
        match self {
            PayloadKind::Image => "images",
            PayloadKind::Mask => "masks",
        }
    }
}

/// PNG payloads stored as `<root>/{images,masks}/<sha256>.png`. Refs handed
/// out and accepted are relative to the root.
#[derive(Debug)]
pub struct PayloadStore {
    root: PathBuf,
    written: Mutex<HashSet<String>>,
}

impl PayloadStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        PayloadStore { root: root.into(), written: Mutex::new(HashSet::new()) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stores `bytes` (deduplicated by hash) and returns its relative ref.
    pub fn put(&self, kind: PayloadKind, bytes: &[u8]) -> Result<String> {
        let rel = format!("{}/{}.png", kind.dir(), content_hash(bytes));
        if self.written.lock().expect("store lock").contains(&rel) {
            return Ok(rel);
        }
        let path = self.root.join(&rel);
        if !path.exists() {
            let dir = path.parent().expect("ref has a directory");
            fs::create_dir_all(dir)?;
            let tmp = tempfile_name(&path);
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        self.written.lock().expect("store lock").insert(rel.clone());
        Ok(rel)
    }

    pub fn get(&self, rel: &str) -> Result<Vec<u8>> {
        Ok(fs::read(self.resolve(rel)?)?)
    }

    /// Joins a relative ref onto the root, refusing absolute or escaping paths.
    pub fn resolve(&self, rel: &str) -> Result<PathBuf> {
        let p = Path::new(rel);
        if rel.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(DataError::Format(format!("ref {rel:?} must be a relative path inside the root")));
        }
        Ok(self.root.join(p))
    }
}

fn tempfile_name(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(format!(".tmp.{}.{:?}", std::process::id(), std::thread::current().id()));
    PathBuf::from(s)
}
