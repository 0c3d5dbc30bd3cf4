//! Archive ingest and incremental append: scan, parse, build the tree, store
//! it and commit, as one transaction per call.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::Rng;

use crate::chunkstore::{load_tree_where, store_tree, store_tree_incremental, ChunkPolicy};
use crate::ingest::{parse_rdt_raw, scan_archive_dir, ScanWarning};
use crate::model::{ModelError, RadarTree, TreeOptions, VolumeScan};
use crate::par;
use crate::time::Timestamp;
use crate::txn::{Conflict, ConflictKind, ConflictReport, Repository, SnapshotId, TxnError};
use crate::{Error, Result};

/// Files parsed per batch while ingesting.
const PARSE_BATCH: usize = 64;

#[derive(Clone, Debug)]
pub struct CommitOptions {
    pub policy: ChunkPolicy,
    pub tree: TreeOptions,
    pub message: String,
    pub author: String,
    pub timestamp: Timestamp,
    /// Re-executions allowed after the branch moved underneath an append.
    pub max_retries: usize,
}

impl Default for CommitOptions {
    fn default() -> Self {
        CommitOptions {
            policy: ChunkPolicy::default(),
            tree: TreeOptions::default(),
            message: String::new(),
            author: String::new(),
            timestamp: Timestamp(0),
            max_retries: 64,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CommitOutcome {
    pub snapshot: SnapshotId,
    pub base: SnapshotId,
    pub volumes: usize,
    pub warnings: Vec<ScanWarning>,
    pub chunks_written: u64,
    pub bytes_written: u64,
    /// Times the commit was re-executed on a newer head.
    pub retries: usize,
}

fn parse_file(path: &Path) -> std::result::Result<VolumeScan, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    parse_rdt_raw(&bytes).map_err(|e| e.to_string())
}

/// Decode `files`; any failure is an input error naming the file.
pub fn parse_files(files: &[PathBuf]) -> Result<Vec<VolumeScan>> {
    par::try_map(files, |p| parse_file(p).map_err(|e| Error::Input(format!("{}: {e}", p.display()))))
}

/// Replace the content of `branch` with the archive in `dir`, creating the
/// repository branch if needed. Files that fail to decode are skipped and
/// reported as warnings.
pub fn ingest_dir(repo: &Repository, branch: &str, dir: &Path, opts: &CommitOptions) -> Result<CommitOutcome> {
    let listing = scan_archive_dir(dir)?;
    let mut warnings = listing.warnings;
    let mut tree = RadarTree::default();
    let mut volumes = 0;
    let paths: Vec<PathBuf> = listing.entries.into_iter().map(|(_, p)| p).collect();
    for batch in paths.chunks(PARSE_BATCH) {
        let parsed = par::map(batch, |p| parse_file(p));
        for (path, r) in batch.iter().zip(parsed) {
            match r {
                Ok(v) => {
                    tree.insert_volume_with(&v, &opts.tree)
                        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
                    volumes += 1;
                }
                Err(message) => warnings.push(ScanWarning { path: path.clone(), message }),
            }
        }
    }
    if volumes == 0 {
        return Err(Error::Input(format!("no valid .rdt files in {}", dir.display())));
    }
    let mut out = commit_tree(repo, branch, &tree, opts)?;
    out.volumes = volumes;
    out.warnings = warnings;
    Ok(out)
}

/// Replace the content of `branch` with `tree` in one commit.
pub fn commit_tree(repo: &Repository, branch: &str, tree: &RadarTree, opts: &CommitOptions) -> Result<CommitOutcome> {
    repo.ensure_branch(branch)?;
    let mut txn = repo.begin(branch)?;
    let base = txn.base().id;
    store_tree(txn.stage()?, tree, &opts.policy)?;
    let (chunks_written, bytes_written) = txn.stage()?.written();
    let snapshot = txn.commit(&opts.message, &opts.author, opts.timestamp)?;
    Ok(CommitOutcome { snapshot, base, chunks_written, bytes_written, ..Default::default() })
}

fn duplicate_conflict(vcp: &str, time: Timestamp) -> Error {
    let detail = format!("volume time {} already present in {vcp}", time.to_rfc3339());
    Error::Conflict {
        message: format!("append conflicts with existing data: {detail}"),
        report: ConflictReport {
            conflicts: vec![Conflict { path: vcp.to_string(), kind: ConflictKind::TimeRangeOverlap, detail }],
        },
    }
}

/// Add volumes to `branch` in one commit. If another writer commits first,
/// the append is redone on the new head (up to `max_retries` times); a volume
/// whose time already exists fails with a conflict.
pub fn append_volumes(repo: &Repository, branch: &str, volumes: &[VolumeScan], opts: &CommitOptions) -> Result<CommitOutcome> {
    if volumes.is_empty() {
        return Err(Error::Input("nothing to append".into()));
    }
    repo.ensure_branch(branch)?;
    let groups: Vec<&str> = volumes.iter().map(|v| v.vcp_name.as_str()).collect();
    let mut retries = 0;
    loop {
        let mut txn = repo.begin(branch)?;
        let base = txn.base().id;
        let mut tree = load_tree_where(&txn.base_reader(), |g| groups.contains(&g))?;
        let mut from: BTreeMap<String, usize> = BTreeMap::new();
        for v in volumes {
            let i = match tree.insert_volume_with(v, &opts.tree) {
                Ok(i) => i,
                Err(ModelError::DuplicateTime { vcp, time }) => return Err(duplicate_conflict(&vcp, time)),
                Err(e) => return Err(e.into()),
            };
            let f = from.entry(v.vcp_name.clone()).or_insert(i);
            *f = (*f).min(i);
        }
        store_tree_incremental(txn.stage()?, &tree, &opts.policy, &from)?;
        let (chunks_written, bytes_written) = txn.stage()?.written();
        match txn.commit(&opts.message, &opts.author, opts.timestamp) {
            Ok(snapshot) => {
                return Ok(CommitOutcome {
                    snapshot,
                    base,
                    volumes: volumes.len(),
                    warnings: Vec::new(),
                    chunks_written,
                    bytes_written,
                    retries,
                })
            }
            Err(TxnError::StaleBase { .. }) if retries < opts.max_retries => {
                retries += 1;
                let jitter = rand::thread_rng().gen_range(0..(5 * retries.min(20) as u64 + 1));
                std::thread::sleep(Duration::from_millis(jitter));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// [`append_volumes`] over raw files.
pub fn append_files(repo: &Repository, branch: &str, files: &[PathBuf], opts: &CommitOptions) -> Result<CommitOutcome> {
    let volumes = parse_files(files)?;
    append_volumes(repo, branch, &volumes, opts)
}
