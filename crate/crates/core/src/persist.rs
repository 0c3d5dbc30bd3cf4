//! Durable file writes with fault injection.
//!
//! Every durable side effect of the store (object writes, snapshot documents,
//! intent records, ref updates) goes through [`Persist`], which numbers each
//! step. Tests arm a [`FaultInjector`] to abort at a chosen step, simulating a
//! process crash: nothing after that step happens and no cleanup runs.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

const DISARMED: usize = usize::MAX;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Error payload carried by `io::Error` when an injected crash fires.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectedCrash {
    pub step: usize,
    pub label: &'static str,
}

impl std::fmt::Display for InjectedCrash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "injected crash at step {} ({})", self.step, self.label)
    }
}

impl std::error::Error for InjectedCrash {}

/// Step counter shared by everything that persists data for one repository handle.
#[derive(Debug)]
pub struct FaultInjector {
    next: AtomicUsize,
    crash_at: AtomicUsize,
    labels: Mutex<Vec<&'static str>>,
}

impl Default for FaultInjector {
    fn default() -> Self {
        FaultInjector {
            next: AtomicUsize::new(0),
            crash_at: AtomicUsize::new(DISARMED),
            labels: Mutex::new(Vec::new()),
        }
    }
}

impl FaultInjector {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Crash when the step counter reaches `step` (counted from now).
    pub fn arm(&self, step: usize) {
        self.reset();
        self.crash_at.store(step, Ordering::SeqCst);
    }

    pub fn disarm(&self) {
        self.crash_at.store(DISARMED, Ordering::SeqCst);
    }

    pub fn reset(&self) {
        self.next.store(0, Ordering::SeqCst);
        self.labels.lock().unwrap().clear();
    }

    /// Steps taken since the last reset.
    pub fn steps(&self) -> usize {
        self.next.load(Ordering::SeqCst)
    }

    pub fn labels(&self) -> Vec<&'static str> {
        self.labels.lock().unwrap().clone()
    }

    fn step(&self, label: &'static str) -> io::Result<()> {
        let n = self.next.fetch_add(1, Ordering::SeqCst);
        self.labels.lock().unwrap().push(label);
        if n == self.crash_at.load(Ordering::SeqCst) {
            return Err(io::Error::other(InjectedCrash { step: n, label }));
        }
        Ok(())
    }
}

/// True when `err` (or anything it wraps) is an injected crash.
pub fn is_injected_crash(err: &io::Error) -> bool {
    err.get_ref().is_some_and(|e| e.is::<InjectedCrash>())
}

#[derive(Debug, Clone, Default)]
pub struct Persist {
    faults: Arc<FaultInjector>,
}

impl Persist {
    pub fn new(faults: Arc<FaultInjector>) -> Self {
        Persist { faults }
    }

    pub fn faults(&self) -> &Arc<FaultInjector> {
        &self.faults
    }

    /// Write `bytes` to `path` via temp file, fsync and rename.
    ///
    /// A crash during the first step leaves a torn temp file; a crash before
    /// the rename leaves a complete temp file. `path` itself is never partial.
    pub fn atomic_write(&self, path: &Path, bytes: &[u8], label: &'static str) -> io::Result<()> {
        let tmp = temp_path(path);
        if let Err(e) = self.faults.step(label) {
            let _ = fs::write(&tmp, &bytes[..bytes.len() / 2]);
            return Err(e);
        }
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        self.faults.step(label)?;
        fs::rename(&tmp, path)?;
        sync_dir(path.parent().unwrap_or(Path::new(".")))
    }

    /// Same as [`atomic_write`](Self::atomic_write) but the destination may
    /// already exist with identical content, in which case nothing happens.
    pub fn write_if_absent(&self, path: &Path, bytes: &[u8], label: &'static str) -> io::Result<()> {
        if path.exists() {
            return Ok(());
        }
        self.atomic_write(path, bytes, label)
    }

    pub fn remove(&self, path: &Path, label: &'static str) -> io::Result<()> {
        self.faults.step(label)?;
        match fs::remove_file(path) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            r => r,
        }
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp-{}-{}", std::process::id(), n));
    path.with_file_name(name)
}

pub fn sync_dir(dir: &Path) -> io::Result<()> {
    // Directory fsync is unsupported on some platforms; treat that as best effort.
    match File::open(dir) {
        Ok(d) => match d.sync_all() {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::PermissionDenied || e.raw_os_error() == Some(22) => Ok(()),
            Err(e) => Err(e),
        },
        Err(e) => Err(e),
    }
}

/// Exclusive advisory lock on `path`, released on drop (or process exit).
#[derive(Debug)]
pub struct FileLock {
    file: File,
}

impl FileLock {
    pub fn acquire(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(path)?;
        file.lock()?;
        Ok(FileLock { file })
    }
}

impl Drop for FileLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crash_before_rename_keeps_old_content() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("ref");
        let p = Persist::default();
        p.atomic_write(&target, b"old", "w").unwrap();
        for step in 0..2 {
            p.faults().arm(step);
            let err = p.atomic_write(&target, b"new-content", "w").unwrap_err();
            assert!(is_injected_crash(&err));
            assert_eq!(fs::read(&target).unwrap(), b"old");
        }
        p.faults().disarm();
        p.atomic_write(&target, b"new", "w").unwrap();
        assert_eq!(fs::read(&target).unwrap(), b"new");
    }

    #[test]
    fn step_labels_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let p = Persist::default();
        p.faults().reset();
        p.atomic_write(&dir.path().join("a"), b"x", "object").unwrap();
        p.remove(&dir.path().join("a"), "unlink").unwrap();
        assert_eq!(p.faults().labels(), vec!["object", "object", "unlink"]);
    }
}
