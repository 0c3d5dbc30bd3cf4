use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::delta::{appended_times, detect_conflict, Delta};
use super::{ConflictReport, Snapshot, SnapshotId, TxnError};
use crate::chunkstore::{canonical_json, FsObjectStore, Manifest, ObjectId, ObjectStore, SnapshotReader, StagingArea};
use crate::persist::{FaultInjector, FileLock, Persist};
use crate::time::Timestamp;

type Result<T> = std::result::Result<T, TxnError>;

const DIRS: [&str; 4] = ["objects", "snapshots", "refs", "wal"];

pub fn validate_branch_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
        && name != "."
        && name != ".."
        && !name.ends_with(".lock")
        && !name.contains(".tmp-");
    if ok {
        Ok(())
    } else {
        Err(TxnError::InvalidBranchName(name.into()))
    }
}

#[derive(Serialize, Deserialize)]
struct Intent {
    branch: String,
    old: SnapshotId,
    new: SnapshotId,
}

/// Handle on a repository directory.
#[derive(Debug, Clone)]
pub struct Repository {
    root: PathBuf,
    store: Arc<FsObjectStore>,
    persist: Persist,
}

impl Repository {
    /// Create a repository with a root snapshot and a `main` branch.
    pub fn init(path: &Path) -> Result<Self> {
        Self::init_with(path, FaultInjector::new())
    }

    pub fn init_with(path: &Path, faults: Arc<FaultInjector>) -> Result<Self> {
        if path.join("refs").is_dir() {
            return Err(TxnError::InvalidArgument(format!("{} already holds a repository", path.display())));
        }
        for d in DIRS {
            fs::create_dir_all(path.join(d))?;
        }
        let repo = Self::handle(path, faults)?;
        let root = repo.write_snapshot(&Manifest::default(), SnapshotId::ZERO, "root", "", Timestamp(0))?;
        repo.persist.atomic_write(&repo.ref_path("main"), format!("{}\n", root.id).as_bytes(), "ref")?;
        Ok(repo)
    }

    /// Open an existing repository, resolving any interrupted commits.
    pub fn open(path: &Path) -> Result<Self> {
        Self::open_with(path, FaultInjector::new())
    }

    pub fn open_with(path: &Path, faults: Arc<FaultInjector>) -> Result<Self> {
        if DIRS.iter().any(|d| !path.join(d).is_dir()) {
            return Err(TxnError::NotARepository(path.display().to_string()));
        }
        let repo = Self::handle(path, faults)?;
        repo.recover()?;
        Ok(repo)
    }

    pub fn open_or_init(path: &Path) -> Result<Self> {
        if path.join("refs").is_dir() {
            Self::open(path)
        } else {
            Self::init(path)
        }
    }

    fn handle(path: &Path, faults: Arc<FaultInjector>) -> Result<Self> {
        let persist = Persist::new(faults);
        let store = Arc::new(FsObjectStore::new(path, persist.clone())?);
        Ok(Repository { root: path.to_path_buf(), store, persist })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn faults(&self) -> &Arc<FaultInjector> {
        self.persist.faults()
    }

    pub fn store(&self) -> Arc<dyn ObjectStore> {
        self.store.clone()
    }

    fn ref_path(&self, branch: &str) -> PathBuf {
        self.root.join("refs").join(branch)
    }

    fn snapshot_path(&self, id: &SnapshotId) -> PathBuf {
        self.root.join("snapshots").join(format!("{id}.json"))
    }

    /// Drop intents left by interrupted commits. The ref rename is the commit
    /// point, so whatever the ref names is the durable head.
    fn recover(&self) -> Result<()> {
        for entry in fs::read_dir(self.root.join("wal"))? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if name.contains(".tmp-") {
                let _ = fs::remove_file(&path);
                continue;
            }
            let Ok(intent) = serde_json::from_slice::<Intent>(&fs::read(&path)?) else {
                let _ = fs::remove_file(&path);
                continue;
            };
            if validate_branch_name(&intent.branch).is_ok() {
                let _lock = FileLock::acquire(&self.lock_path(&intent.branch))?;
                if path.exists() {
                    fs::remove_file(&path)?;
                }
            } else {
                fs::remove_file(&path)?;
            }
        }
        for dir in ["refs", "snapshots"] {
            for entry in fs::read_dir(self.root.join(dir))? {
                let path = entry?.path();
                let stale = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.contains(".tmp-"));
                if stale && tmp_owner_dead(&path) {
                    let _ = fs::remove_file(&path);
                }
            }
        }
        Ok(())
    }

    fn lock_path(&self, branch: &str) -> PathBuf {
        self.root.join("refs").join(format!("{branch}.lock"))
    }

    pub fn branches(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("refs"))? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if validate_branch_name(&name).is_ok() {
                out.push(name);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn head(&self, branch: &str) -> Result<SnapshotId> {
        validate_branch_name(branch)?;
        let text = match fs::read_to_string(self.ref_path(branch)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(TxnError::UnknownBranch(branch.into())),
            Err(e) => return Err(e.into()),
        };
        let hex = text.strip_suffix('\n').filter(|h| h.len() == 64).ok_or_else(|| {
            TxnError::Corrupt(format!("ref {branch:?} does not hold a snapshot id"))
        })?;
        hex.parse().map_err(|e| TxnError::Corrupt(format!("ref {branch:?}: {e}")))
    }

    /// Id of the root snapshot, identical in every repository.
    pub fn root_snapshot_id() -> SnapshotId {
        Snapshot::new(SnapshotId::ZERO, Manifest::default().id(), "root", "", Timestamp(0)).id
    }

    /// Create `name` at the root snapshot unless it exists.
    pub fn ensure_branch(&self, name: &str) -> Result<()> {
        match self.head(name) {
            Ok(_) => Ok(()),
            Err(TxnError::UnknownBranch(_)) => match self.create_branch(name, Self::root_snapshot_id()) {
                Err(TxnError::BranchExists(_)) => Ok(()),
                r => r,
            },
            Err(e) => Err(e),
        }
    }

    pub fn create_branch(&self, name: &str, at: SnapshotId) -> Result<()> {
        validate_branch_name(name)?;
        self.snapshot(&at)?;
        let _lock = FileLock::acquire(&self.lock_path(name))?;
        if self.ref_path(name).exists() {
            return Err(TxnError::BranchExists(name.into()));
        }
        self.persist.atomic_write(&self.ref_path(name), format!("{at}\n").as_bytes(), "ref")?;
        Ok(())
    }

    pub fn delete_branch(&self, name: &str) -> Result<()> {
        self.head(name)?;
        let _lock = FileLock::acquire(&self.lock_path(name))?;
        self.persist.remove(&self.ref_path(name), "ref")?;
        Ok(())
    }

    pub fn snapshot(&self, id: &SnapshotId) -> Result<Snapshot> {
        let bytes = match fs::read(self.snapshot_path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(TxnError::UnknownSnapshot(id.to_hex())),
            Err(e) => return Err(e.into()),
        };
        let snap: Snapshot = serde_json::from_slice(&bytes)
            .map_err(|e| TxnError::Corrupt(format!("snapshot {id}: {e}")))?;
        if snap.id != *id || !snap.verify() {
            return Err(TxnError::Corrupt(format!("snapshot document {id} does not match its id")));
        }
        Ok(snap)
    }

    /// Resolve a full or abbreviated (at least 4 hex digits) snapshot id.
    pub fn resolve_snapshot(&self, text: &str) -> Result<SnapshotId> {
        if let Ok(id) = text.parse::<SnapshotId>() {
            return self.snapshot(&id).map(|s| s.id);
        }
        let lower = text.to_ascii_lowercase();
        if lower.len() < 4 || !lower.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(TxnError::UnknownSnapshot(text.into()));
        }
        let mut found = Vec::new();
        for entry in fs::read_dir(self.root.join("snapshots"))? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(hex) = name.strip_suffix(".json").filter(|h| h.len() == 64 && h.starts_with(&lower)) {
                found.push(hex.to_string());
            }
        }
        match found.as_slice() {
            [one] => self.snapshot(&one.parse().expect("listed names are hex")).map(|s| s.id),
            [] => Err(TxnError::UnknownSnapshot(text.into())),
            _ => Err(TxnError::InvalidArgument(format!("snapshot prefix {text:?} is ambiguous"))),
        }
    }

    /// Branch name or snapshot id to a snapshot id.
    pub fn resolve_ref(&self, text: &str) -> Result<SnapshotId> {
        if validate_branch_name(text).is_ok() && self.ref_path(text).is_file() {
            return self.head(text);
        }
        self.resolve_snapshot(text)
    }

    pub fn manifest(&self, snap: &Snapshot) -> Result<Arc<Manifest>> {
        let bytes = self.store.get(&snap.manifest)?;
        if ObjectId::of(&bytes) != snap.manifest {
            return Err(TxnError::Corrupt(format!("manifest object {} does not match its id", snap.manifest)));
        }
        Ok(Arc::new(Manifest::from_json(&bytes)?))
    }

    /// Read handle fixed on one snapshot.
    pub fn checkout(&self, id: &SnapshotId) -> Result<SnapshotReader> {
        let snap = self.snapshot(id)?;
        Ok(SnapshotReader::new(self.manifest(&snap)?, self.store()))
    }

    /// History of a branch from its head back to the root.
    pub fn log(&self, branch: &str) -> Result<Vec<Snapshot>> {
        self.history(self.head(branch)?)
    }

    pub fn history(&self, from: SnapshotId) -> Result<Vec<Snapshot>> {
        let mut out = Vec::new();
        let mut cur = from;
        loop {
            let snap = self.snapshot(&cur)?;
            cur = snap.parent;
            let root = snap.is_root();
            out.push(snap);
            if root {
                return Ok(out);
            }
            if out.len() > 10_000_000 {
                return Err(TxnError::Corrupt("snapshot parent chain does not terminate".into()));
            }
        }
    }

    pub fn begin(&self, branch: &str) -> Result<Transaction<'_>> {
        let head = self.head(branch)?;
        let base = self.snapshot(&head)?;
        let manifest = self.manifest(&base)?;
        Ok(Transaction {
            repo: self,
            branch: branch.to_string(),
            stage: StagingArea::new(self.store(), (*manifest).clone()),
            base_manifest: manifest,
            base,
            state: TxnState::Open,
        })
    }

    fn write_snapshot(
        &self,
        manifest: &Manifest,
        parent: SnapshotId,
        message: &str,
        author: &str,
        timestamp: Timestamp,
    ) -> Result<Snapshot> {
        let manifest_id = self.store.put(&manifest.to_canonical_json())?;
        let snap = Snapshot::new(parent, manifest_id, message, author, timestamp);
        let doc = serde_json::to_vec_pretty(&serde_json::to_value(&snap).expect("snapshot is serializable"))
            .expect("serializing a JSON value cannot fail");
        self.persist.write_if_absent(&self.snapshot_path(&snap.id), &doc, "snapshot")?;
        Ok(snap)
    }

    /// Compare-and-swap the branch ref from `base` to `snap`.
    fn advance(&self, branch: &str, base: &Snapshot, snap: &Snapshot) -> Result<std::result::Result<(), SnapshotId>> {
        let _lock = FileLock::acquire(&self.lock_path(branch))?;
        let head = self.head(branch)?;
        if head != base.id {
            return Ok(Err(head));
        }
        let wal = self.root.join("wal").join(format!("{}.json", snap.id));
        let intent = canonical_json(&Intent { branch: branch.into(), old: base.id, new: snap.id });
        self.persist.atomic_write(&wal, &intent, "intent")?;
        self.persist.atomic_write(&self.ref_path(branch), format!("{}\n", snap.id).as_bytes(), "ref")?;
        self.persist.remove(&wal, "intent-clear")?;
        Ok(Ok(()))
    }

    /// Commit a manifest restoring `target` on top of the branch head.
    pub fn rollback(
        &self,
        branch: &str,
        target: &SnapshotId,
        message: &str,
        author: &str,
        timestamp: Timestamp,
    ) -> Result<SnapshotId> {
        let target_snap = self.snapshot(target)?;
        let manifest = self.manifest(&target_snap)?;
        loop {
            let mut txn = self.begin(branch)?;
            if !self.history(txn.base.id)?.iter().any(|s| s.id == *target) {
                return Err(TxnError::InvalidRollback { branch: branch.into(), target: *target });
            }
            *txn.stage.manifest_mut() = (*manifest).clone();
            match txn.commit(message, author, timestamp) {
                Err(TxnError::StaleBase { .. }) => continue,
                other => return other,
            }
        }
    }
}

#[cfg(unix)]
fn tmp_owner_dead(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let pid = name.rsplit(".tmp-").next().and_then(|rest| rest.split('-').next()).and_then(|p| p.parse::<u32>().ok());
    match pid {
        Some(p) if p == std::process::id() => false,
        Some(p) => !Path::new(&format!("/proc/{p}")).exists(),
        None => true,
    }
}

#[cfg(not(unix))]
fn tmp_owner_dead(_: &Path) -> bool {
    false
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxnState {
    Open,
    Committed,
    Aborted,
}

impl fmt::Display for TxnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxnState::Open => "open",
            TxnState::Committed => "committed",
            TxnState::Aborted => "aborted",
        })
    }
}

/// Staged changes against a fixed base snapshot of one branch.
pub struct Transaction<'r> {
    repo: &'r Repository,
    branch: String,
    base: Snapshot,
    base_manifest: Arc<Manifest>,
    stage: StagingArea,
    state: TxnState,
}

impl<'r> Transaction<'r> {
    pub fn base(&self) -> &Snapshot {
        &self.base
    }

    pub fn branch(&self) -> &str {
        &self.branch
    }

    pub fn state(&self) -> TxnState {
        self.state
    }

    fn ensure_open(&self) -> Result<()> {
        match self.state {
            TxnState::Open => Ok(()),
            s => Err(TxnError::State(s)),
        }
    }

    /// Staging area for writes; errors once committed or aborted.
    pub fn stage(&mut self) -> Result<&mut StagingArea> {
        self.ensure_open()?;
        Ok(&mut self.stage)
    }

    /// Reader over the base snapshot (never sees concurrent commits).
    pub fn base_reader(&self) -> SnapshotReader {
        SnapshotReader::new(self.base_manifest.clone(), self.repo.store())
    }

    /// Reader over base plus staged changes.
    pub fn staged_reader(&self) -> SnapshotReader {
        self.stage.reader()
    }

    /// Changes relative to the base, including appended time spans.
    pub fn delta(&self) -> Result<Delta> {
        let staged = Arc::new(self.stage.manifest().clone());
        let mut d = Delta::between(&self.base_manifest, &staged);
        d.appended = appended_times(&self.repo.store(), &self.base_manifest, &staged)?;
        Ok(d)
    }

    pub fn abort(&mut self) -> Result<()> {
        self.ensure_open()?;
        self.state = TxnState::Aborted;
        Ok(())
    }

    pub fn commit(&mut self, message: &str, author: &str, timestamp: Timestamp) -> Result<SnapshotId> {
        self.ensure_open()?;
        let snap = self.repo.write_snapshot(self.stage.manifest(), self.base.id, message, author, timestamp)?;
        match self.repo.advance(&self.branch, &self.base, &snap)? {
            Ok(()) => {
                self.state = TxnState::Committed;
                Ok(snap.id)
            }
            Err(head) => {
                let report = self.conflicts_with(&head)?;
                Err(TxnError::StaleBase { branch: self.branch.clone(), base: self.base.id, head, report })
            }
        }
    }

    fn conflicts_with(&self, head: &SnapshotId) -> Result<ConflictReport> {
        let head_manifest = self.repo.manifest(&self.repo.snapshot(head)?)?;
        let mut theirs = Delta::between(&self.base_manifest, &head_manifest);
        theirs.appended = appended_times(&self.repo.store(), &self.base_manifest, &head_manifest)?;
        detect_conflict(&self.base_manifest, &theirs, &self.delta()?)
    }

    /// Move the transaction onto the current branch head, replaying the staged
    /// delta. Returns the conflicts (and leaves the transaction unchanged) if
    /// the replay would not be clean.
    pub fn rebase(&mut self) -> Result<ConflictReport> {
        self.ensure_open()?;
        let head = self.repo.head(&self.branch)?;
        if head == self.base.id {
            return Ok(ConflictReport::default());
        }
        let report = self.conflicts_with(&head)?;
        if !report.is_empty() {
            return Ok(report);
        }
        let delta = self.delta()?;
        let base = self.repo.snapshot(&head)?;
        let base_manifest = self.repo.manifest(&base)?;
        *self.stage.manifest_mut() = delta.apply(&base_manifest);
        self.base = base;
        self.base_manifest = base_manifest;
        Ok(report)
    }
}

impl fmt::Debug for Transaction<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transaction")
            .field("branch", &self.branch)
            .field("base", &self.base.id)
            .field("state", &self.state)
            .finish()
    }
}

