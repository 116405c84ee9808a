//! ESD files of a workspace directory, cached by modification time and
//! length.

use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use seqdep::{parse_document, Diagnostic, Document, UseCase};

/// A parsed file, or the diagnostics that stopped it.
pub type Parsed = Arc<Result<Document, Vec<Diagnostic>>>;

#[derive(Clone)]
struct Entry {
    modified: Option<SystemTime>,
    len: u64,
    parsed: Parsed,
}

pub struct Workspace {
    dir: PathBuf,
    cache: RwLock<HashMap<PathBuf, Entry>>,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Workspace {
            dir: dir.into(),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// `*.esd` files directly under the workspace, sorted by name.
    pub fn files(&self) -> io::Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.is_file() && path.extension().is_some_and(|e| e == "esd") {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Parses `path`, reusing the cached result while the file's
    /// modification time and length are unchanged.
    pub fn load(&self, path: &Path) -> io::Result<Parsed> {
        let meta = std::fs::metadata(path)?;
        let (modified, len) = (meta.modified().ok(), meta.len());
        {
            let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
            if let Some(e) = cache.get(path) {
                if e.modified.is_some() && e.modified == modified && e.len == len {
                    return Ok(e.parsed.clone());
                }
            }
        }
        let text = std::fs::read_to_string(path)?;
        let mut result = parse_document(&text).map_err(|f| f.diagnostics());
        if let Ok(doc) = &mut result {
            doc.source_path = path.display().to_string();
        }
        let parsed: Parsed = Arc::new(result);
        let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
        cache.insert(
            path.to_path_buf(),
            Entry {
                modified,
                len,
                parsed: parsed.clone(),
            },
        );
        Ok(parsed)
    }

    pub fn documents(&self) -> io::Result<Vec<(PathBuf, Parsed)>> {
        self.files()?
            .into_iter()
            .map(|p| {
                let parsed = self.load(&p)?;
                Ok((p, parsed))
            })
            .collect()
    }

    /// The document defining use case `name`; the first file in name order
    /// wins when several do.
    pub fn find(&self, name: &str) -> io::Result<Option<(PathBuf, Parsed)>> {
        for (path, parsed) in self.documents()? {
            if let Ok(doc) = parsed.as_ref() {
                if doc.usecases.iter().any(|u| u.name == name) {
                    return Ok(Some((path, parsed)));
                }
            }
        }
        Ok(None)
    }
}

/// Use case `name` inside an already resolved document.
pub fn usecase<'d>(parsed: &'d Parsed, name: &str) -> Option<(&'d Document, &'d UseCase)> {
    let doc = parsed.as_ref().as_ref().ok()?;
    doc.usecases.iter().find(|u| u.name == name).map(|u| (doc, u))
}
