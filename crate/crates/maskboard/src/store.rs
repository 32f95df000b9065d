//! Content-addressed project directory.
//!
//! ```text
//! PROJECT/
//!   manifest              project name, creation time, tool version
//!   corpora/ datasets/ models/ explanations/ indexes/ themes/
//!     registry.json       name -> versions of (payload hash, sidecar hash)
//!     <sha256>            immutable payload and sidecar files
//!   reviews.log           append-only review records, one JSON object per line
//!   embeddings.cache      embedding cache, rewritten atomically
//! ```
//!
//! Every file is written to a temporary name, synced and renamed into place.
//! Payload files land before the registry that points at them, so a crash at
//! any point leaves the registry referring only to complete files.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use maskboard_core::content_hash;
use maskboard_core::explore::{ReviewRecord, ReviewState};
use serde::{Deserialize, Serialize};

use crate::error::{conflict, invalid, not_found, Error, Result};

const MANIFEST: &str = "manifest";
const REGISTRY: &str = "registry.json";
const REVIEWS: &str = "reviews.log";
pub(crate) const EMBEDDING_CACHE: &str = "embeddings.cache";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Corpora,
    Datasets,
    Models,
    Explanations,
    Indexes,
    Themes,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Corpora,
        Kind::Datasets,
        Kind::Models,
        Kind::Explanations,
        Kind::Indexes,
        Kind::Themes,
    ];

    pub fn dir(self) -> &'static str {
        match self {
            Kind::Corpora => "corpora",
            Kind::Datasets => "datasets",
            Kind::Models => "models",
            Kind::Explanations => "explanations",
            Kind::Indexes => "indexes",
            Kind::Themes => "themes",
        }
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "corpora" | "corpus" => Kind::Corpora,
            "datasets" | "dataset" => Kind::Datasets,
            "models" | "model" => Kind::Models,
            "explanations" | "explanation" => Kind::Explanations,
            "indexes" | "index" => Kind::Indexes,
            "themes" | "theme" => Kind::Themes,
            other => return Err(Error::UnknownKind(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectManifest {
    pub name: String,
    pub created_at: i64,
    pub tool_version: String,
}

/// One stored revision of a named entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Entry {
    versions: Vec<Version>,
}

type Registry = BTreeMap<String, Entry>;

/// Points at which an armed fault hook aborts a write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultStage {
    /// Half of a payload temp file has been written.
    ObjectTorn,
    /// The payload temp file is complete but not yet renamed.
    ObjectBeforeRename,
    /// Half of the new registry temp file has been written.
    RegistryTorn,
    /// The registry temp file is complete but not yet renamed.
    RegistryBeforeRename,
    /// Half of a review line has been appended.
    ReviewTorn,
}

#[derive(Debug, Clone, Copy)]
struct Fault {
    stage: FaultStage,
    skip: usize,
}

/// Handle on a project directory. Cheap to open; all state lives on disk.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    fault: Mutex<Option<Fault>>,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || name.len() > 200 || name.chars().any(char::is_control) {
        return Err(invalid(format!("invalid entry name {name:?}")));
    }
    Ok(())
}

impl Store {
    /// Creates a project in an empty or absent directory.
    pub fn init(root: impl AsRef<Path>, name: &str, created_at: i64) -> Result<Store> {
        let root = root.as_ref();
        if root.exists() {
            let mut it = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
            if it.next().is_some() {
                return Err(invalid(format!("{} is not empty", root.display())));
            }
        }
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        for kind in Kind::ALL {
            let dir = root.join(kind.dir());
            fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let log = root.join(REVIEWS);
        File::create(&log).map_err(|e| Error::io(&log, e))?;
        let store = Store {
            root: root.to_path_buf(),
            fault: Mutex::new(None),
        };
        let manifest = ProjectManifest {
            name: name.to_string(),
            created_at,
            tool_version: maskboard_core::TOOL_VERSION.to_string(),
        };
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(maskboard_core::Error::from)?;
        store.write_atomic(&root.join(MANIFEST), &bytes, None)?;
        Ok(store)
    }

    /// Opens an existing project without touching it.
    pub fn open(root: impl AsRef<Path>) -> Result<Store> {
        let store = Store {
            root: root.as_ref().to_path_buf(),
            fault: Mutex::new(None),
        };
        store.manifest()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> Result<ProjectManifest> {
        let path = self.root.join(MANIFEST);
        if !path.exists() {
            return Err(not_found(format!("{} is not a maskboard project", self.root.display())));
        }
        serde_json::from_slice(&read_file(&path)?).map_err(|e| Error::integrity(&path, e.to_string()))
    }

    /// Arms a one-shot fault: the `skip + 1`-th time `stage` is reached the
    /// write is abandoned as if the process had died there.
    pub fn inject_fault(&self, stage: FaultStage, skip: usize) {
        *self.fault.lock().unwrap() = Some(Fault { stage, skip });
    }

    fn trip(&self, stage: FaultStage) -> Result<()> {
        let mut guard = self.fault.lock().unwrap();
        if let Some(f) = guard.as_mut() {
            if f.stage == stage {
                if f.skip == 0 {
                    *guard = None;
                    return Err(Error::InjectedCrash(stage));
                }
                f.skip -= 1;
            }
        }
        Ok(())
    }

    fn kind_dir(&self, kind: Kind) -> PathBuf {
        self.root.join(kind.dir())
    }

    /// `stages` = (torn, before rename) fault points for this write.
    fn write_atomic(&self, path: &Path, bytes: &[u8], stages: Option<(FaultStage, FaultStage)>) -> Result<()> {
        let dir = path.parent().expect("store paths have a parent");
        let file_name = path.file_name().unwrap().to_string_lossy();
        let tmp = dir.join(format!(
            ".tmp-{}-{}-{}",
            file_name,
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        if let Some((torn, _)) = stages {
            if let Err(e) = self.trip(torn) {
                let _ = f.write_all(&bytes[..bytes.len() / 2]);
                return Err(e);
            }
        }
        f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        if let Some((_, before_rename)) = stages {
            self.trip(before_rename)?;
        }
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    fn registry(&self, kind: Kind) -> Result<Registry> {
        let path = self.kind_dir(kind).join(REGISTRY);
        if !path.exists() {
            return Ok(Registry::new());
        }
        serde_json::from_slice(&read_file(&path)?).map_err(|e| Error::integrity(&path, e.to_string()))
    }

    fn write_registry(&self, kind: Kind, registry: &Registry) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(registry).map_err(maskboard_core::Error::from)?;
        bytes.push(b'\n');
        self.write_atomic(
            &self.kind_dir(kind).join(REGISTRY),
            &bytes,
            Some((FaultStage::RegistryTorn, FaultStage::RegistryBeforeRename)),
        )
    }

    fn put_object(&self, kind: Kind, bytes: &[u8]) -> Result<String> {
        let hash = content_hash(bytes);
        let path = self.kind_dir(kind).join(&hash);
        if !path.exists() {
            self.write_atomic(&path, bytes, Some((FaultStage::ObjectTorn, FaultStage::ObjectBeforeRename)))?;
        }
        Ok(hash)
    }

    fn read_object(&self, kind: Kind, hash: &str) -> Result<Vec<u8>> {
        let path = self.kind_dir(kind).join(hash);
        let bytes = read_file(&path)?;
        let actual = content_hash(&bytes);
        if actual != hash {
            return Err(Error::integrity(&path, format!("content hash is {actual}, registry expects {hash}")));
        }
        Ok(bytes)
    }

    /// Stores `payload` under `name`. Re-putting identical content is a no-op;
    /// different content under an existing name is a conflict.
    pub fn put(&self, kind: Kind, name: &str, payload: &[u8]) -> Result<String> {
        self.put_with(kind, name, payload, None, false)
    }

    /// Like [`put`](Self::put) with an optional sidecar (a manifest stored
    /// next to the payload). With `versioned` a changed payload becomes the
    /// entry's new current version instead of a conflict.
    pub fn put_with(
        &self,
        kind: Kind,
        name: &str,
        payload: &[u8],
        sidecar: Option<&[u8]>,
        versioned: bool,
    ) -> Result<String> {
        validate_name(name)?;
        let mut registry = self.registry(kind)?;
        let version = Version {
            hash: content_hash(payload),
            sidecar: sidecar.map(content_hash),
        };
        if let Some(entry) = registry.get(name) {
            if entry.versions.last() == Some(&version) {
                return Ok(version.hash);
            }
            if !versioned {
                return Err(conflict(format!(
                    "{} entry {name:?} already exists with different content",
                    kind.dir()
                )));
            }
        }
        self.put_object(kind, payload)?;
        if let Some(s) = sidecar {
            self.put_object(kind, s)?;
        }
        registry.entry(name.to_string()).or_default().versions.push(version.clone());
        self.write_registry(kind, &registry)?;
        Ok(version.hash)
    }

    fn current(&self, kind: Kind, name: &str) -> Result<Version> {
        self.registry(kind)?
            .get(name)
            .and_then(|e| e.versions.last().cloned())
            .ok_or_else(|| not_found(format!("no {} entry named {name:?}", kind.dir())))
    }

    /// Current payload of `name`, verified against its hash.
    pub fn get(&self, kind: Kind, name: &str) -> Result<Vec<u8>> {
        let v = self.current(kind, name)?;
        self.read_object(kind, &v.hash)
    }

    pub fn get_sidecar(&self, kind: Kind, name: &str) -> Result<Option<Vec<u8>>> {
        match self.current(kind, name)?.sidecar {
            Some(h) => self.read_object(kind, &h).map(Some),
            None => Ok(None),
        }
    }

    pub fn contains(&self, kind: Kind, name: &str) -> Result<bool> {
        Ok(self.registry(kind)?.contains_key(name))
    }

    pub fn history(&self, kind: Kind, name: &str) -> Result<Vec<Version>> {
        self.registry(kind)?
            .remove(name)
            .map(|e| e.versions)
            .ok_or_else(|| not_found(format!("no {} entry named {name:?}", kind.dir())))
    }

    pub fn list(&self, kind: Kind) -> Result<Vec<String>> {
        Ok(self.registry(kind)?.into_keys().collect())
    }

    /// Unregisters `name`. Its files stay on disk.
    pub fn remove(&self, kind: Kind, name: &str) -> Result<()> {
        let mut registry = self.registry(kind)?;
        if registry.remove(name).is_none() {
            return Err(not_found(format!("no {} entry named {name:?}", kind.dir())));
        }
        self.write_registry(kind, &registry)
    }

    /// Re-hashes every registered file. Returns the number checked.
    pub fn verify(&self) -> Result<usize> {
        let mut checked = 0;
        for kind in Kind::ALL {
            for entry in self.registry(kind)?.values() {
                for v in &entry.versions {
                    self.read_object(kind, &v.hash)?;
                    checked += 1;
                    if let Some(s) = &v.sidecar {
                        self.read_object(kind, s)?;
                        checked += 1;
                    }
                }
            }
        }
        self.reviews()?;
        Ok(checked)
    }

    fn reviews_path(&self) -> PathBuf {
        self.root.join(REVIEWS)
    }

    /// Every complete record of the review log. A torn final line, left by
    /// an interrupted append, is ignored.
    pub fn reviews(&self) -> Result<Vec<ReviewRecord>> {
        let path = self.reviews_path();
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let complete = match bytes.iter().rposition(|&b| b == b'\n') {
            Some(i) => &bytes[..=i],
            None => &[][..],
        };
        let text = std::str::from_utf8(complete).map_err(|e| Error::integrity(&path, e.to_string()))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::integrity(&path, format!("line {}: {e}", i + 1))))
            .collect()
    }

    pub fn replay_reviews(&self) -> Result<ReviewState> {
        let records = self.reviews()?;
        ReviewState::replay(&records).map_err(|e| Error::integrity(self.reviews_path(), e.to_string()))
    }

    /// Validates `record` against the replayed log and appends it.
    pub fn append_review(&self, record: &ReviewRecord) -> Result<()> {
        self.replay_reviews()?.validate(record)?;
        let path = self.reviews_path();
        let mut f = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        drop_torn_tail(&mut f).map_err(|e| Error::io(&path, e))?;
        let mut line = serde_json::to_vec(record).map_err(maskboard_core::Error::from)?;
        line.push(b'\n');
        if let Err(e) = self.trip(FaultStage::ReviewTorn) {
            let _ = f.write_all(&line[..line.len() / 2]);
            return Err(e);
        }
        f.write_all(&line).and_then(|_| f.sync_data()).map_err(|e| Error::io(&path, e))
    }

    pub(crate) fn read_root_file(&self, name: &str) -> Result<Option<Vec<u8>>> {
        let path = self.root.join(name);
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub(crate) fn write_root_file(&self, name: &str, bytes: &[u8]) -> Result<()> {
        self.write_atomic(&self.root.join(name), bytes, None)
    }
}

/// Truncates anything after the last newline, i.e. an incomplete record.
fn drop_torn_tail(f: &mut File) -> std::io::Result<()> {
    let len = f.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    let mut last = [0u8; 1];
    f.seek(SeekFrom::Start(len - 1))?;
    f.read_exact(&mut last)?;
    if last[0] == b'\n' {
        return Ok(());
    }
    let mut buf = Vec::new();
    f.seek(SeekFrom::Start(0))?;
    f.read_to_end(&mut buf)?;
    let keep = buf.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    f.set_len(keep as u64)?;
    f.sync_data()
}
