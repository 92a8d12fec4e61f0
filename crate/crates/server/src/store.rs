//! Directory-backed persistence.
//!
//! ```text
//! root/
//!   genomes/{id}.json        content-addressed, written once
//!   mlps/{id}.json           content-addressed networks
//!   mlps/{id}.meta.json      where a network came from
//!   sessions/{id}.json       latest session state (replaced atomically)
//!   sessions/{id}.log        append-only selection log, one JSON per line
//!   lineage.log              append-only lineage nodes, one JSON per line
//!   gallery.log              append-only publications, one JSON per line
//! ```
//!
//! Every file other than the logs is written to a temporary name and renamed
//! into place, so readers never observe a partial file.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use cppnlab::{Genome, LayerizedMlp};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("malformed id `{0}`")]
    BadId(String),
    #[error("corrupt {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageNode {
    pub genome: String,
    /// Zero, one or two parent genome ids, dominant parent first.
    pub parents: Vec<String>,
    pub generation: u64,
    pub session: String,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub genome: String,
    pub title: String,
    pub created: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpMeta {
    /// Genome the network was layerized from, if any.
    pub source_genome: Option<String>,
    /// Network this one was trained from, if any.
    pub trained_from: Option<String>,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Ids are lowercase hex, which also keeps them safe as file names.
pub fn check_id(id: &str) -> Result<(), StoreError> {
    if !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        Ok(())
    } else {
        Err(StoreError::BadId(id.to_string()))
    }
}

pub struct Store {
    root: PathBuf,
    /// Serializes appends so log lines never interleave.
    append_lock: Mutex<()>,
    /// Makes check-then-append in `publish` atomic.
    publish_lock: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in ["genomes", "mlps", "sessions"] {
            fs::create_dir_all(root.join(dir))?;
        }
        Ok(Store { root, append_lock: Mutex::new(()), publish_lock: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    fn append_line<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(value).expect("log records serialize");
        line.push('\n');
        let _guard = self.append_lock.lock().expect("append lock poisoned");
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(line.as_bytes())?;
        Ok(())
    }

    fn read_lines<T: DeserializeOwned>(&self, path: &Path) -> Result<Vec<T>, StoreError> {
        let file = match fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for line in io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?);
        }
        Ok(out)
    }

    fn genome_path(&self, id: &str) -> PathBuf {
        self.root.join("genomes").join(format!("{id}.json"))
    }

    fn mlp_path(&self, id: &str) -> PathBuf {
        self.root.join("mlps").join(format!("{id}.json"))
    }

    /// Stores `genome` under its content id; identical genomes share one file.
    pub fn put_genome(&self, genome: &Genome) -> Result<String, StoreError> {
        let id = genome.content_id();
        let path = self.genome_path(&id);
        if !path.exists() {
            self.write_atomic(&path, genome.to_text().as_bytes())?;
        }
        Ok(id)
    }

    pub fn genome_text(&self, id: &str) -> Result<String, StoreError> {
        check_id(id)?;
        fs::read_to_string(self.genome_path(id)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound { kind: "genome", id: id.to_string() },
            _ => e.into(),
        })
    }

    pub fn genome(&self, id: &str) -> Result<Genome, StoreError> {
        let text = self.genome_text(id)?;
        Genome::from_text(&text).map_err(|e| StoreError::Corrupt { path: format!("genome {id}"), reason: e.to_string() })
    }

    pub fn put_mlp(&self, mlp: &LayerizedMlp, meta: &MlpMeta) -> Result<String, StoreError> {
        let id = mlp.content_id();
        let path = self.mlp_path(&id);
        if !path.exists() {
            self.write_atomic(&path, mlp.to_text().as_bytes())?;
        }
        let meta_path = self.root.join("mlps").join(format!("{id}.meta.json"));
        if !meta_path.exists() {
            self.write_atomic(&meta_path, &serde_json::to_vec_pretty(meta).expect("meta serializes"))?;
        }
        Ok(id)
    }

    pub fn mlp_text(&self, id: &str) -> Result<String, StoreError> {
        check_id(id)?;
        fs::read_to_string(self.mlp_path(id)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound { kind: "mlp", id: id.to_string() },
            _ => e.into(),
        })
    }

    pub fn mlp(&self, id: &str) -> Result<LayerizedMlp, StoreError> {
        let text = self.mlp_text(id)?;
        LayerizedMlp::from_text(&text).map_err(|e| StoreError::Corrupt { path: format!("mlp {id}"), reason: e.to_string() })
    }

    pub fn mlp_meta(&self, id: &str) -> Result<MlpMeta, StoreError> {
        check_id(id)?;
        let path = self.root.join("mlps").join(format!("{id}.meta.json"));
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Corrupt { path: path.display().to_string(), reason: e.to_string() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                self.mlp_text(id)?;
                Ok(MlpMeta { source_genome: None, trained_from: None })
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn append_lineage(&self, node: &LineageNode) -> Result<(), StoreError> {
        self.append_line(&self.root.join("lineage.log"), node)
    }

    pub fn lineage(&self) -> Result<Vec<LineageNode>, StoreError> {
        self.read_lines(&self.root.join("lineage.log"))
    }

    /// The first recorded lineage node of every genome reachable from `id`
    /// through parent links, keyed by genome id.
    pub fn ancestry(&self, id: &str) -> Result<BTreeMap<String, LineageNode>, StoreError> {
        check_id(id)?;
        let mut first: BTreeMap<String, LineageNode> = BTreeMap::new();
        for node in self.lineage()? {
            first.entry(node.genome.clone()).or_insert(node);
        }
        if !first.contains_key(id) {
            self.genome_text(id)?;
        }
        let mut out = BTreeMap::new();
        let mut queue = VecDeque::from([id.to_string()]);
        let mut seen = HashSet::new();
        while let Some(g) = queue.pop_front() {
            if !seen.insert(g.clone()) {
                continue;
            }
            if let Some(node) = first.get(&g) {
                queue.extend(node.parents.iter().cloned());
                out.insert(g, node.clone());
            }
        }
        Ok(out)
    }

    /// Adds a gallery entry unless the genome is already published.
    pub fn publish(&self, id: &str, title: &str) -> Result<GalleryEntry, StoreError> {
        self.genome_text(id)?;
        let _guard = self.publish_lock.lock().expect("publish lock poisoned");
        if let Some(existing) = self.gallery()?.into_iter().find(|e| e.genome == id) {
            return Ok(existing);
        }
        let entry = GalleryEntry { genome: id.to_string(), title: title.to_string(), created: now() };
        self.append_line(&self.root.join("gallery.log"), &entry)?;
        Ok(entry)
    }

    pub fn gallery(&self) -> Result<Vec<GalleryEntry>, StoreError> {
        self.read_lines(&self.root.join("gallery.log"))
    }

    pub fn is_published(&self, id: &str) -> Result<bool, StoreError> {
        Ok(self.gallery()?.iter().any(|e| e.genome == id))
    }

    pub fn save_state<T: Serialize>(&self, session: &str, state: &T) -> Result<(), StoreError> {
        check_id(session)?;
        let path = self.root.join("sessions").join(format!("{session}.json"));
        self.write_atomic(&path, &serde_json::to_vec_pretty(state).expect("session serializes"))
    }

    pub fn load_state<T: DeserializeOwned>(&self, session: &str) -> Result<T, StoreError> {
        check_id(session)?;
        let path = self.root.join("sessions").join(format!("{session}.json"));
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound { kind: "session", id: session.to_string() },
            _ => e.into(),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt { path: path.display().to_string(), reason: e.to_string() })
    }

    pub fn append_selection<T: Serialize>(&self, session: &str, entry: &T) -> Result<(), StoreError> {
        check_id(session)?;
        self.append_line(&self.root.join("sessions").join(format!("{session}.log")), entry)
    }

    pub fn selections<T: DeserializeOwned>(&self, session: &str) -> Result<Vec<T>, StoreError> {
        check_id(session)?;
        self.read_lines(&self.root.join("sessions").join(format!("{session}.log")))
    }
}
