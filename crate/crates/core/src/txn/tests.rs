use std::path::Path;

use super::*;
use crate::chunkstore::{load_tree, store_tree, ChunkPolicy, Manifest};
use crate::model::fixtures::volume;
use crate::model::{build_tree, BitwiseEq, RadarTree};
use crate::persist::FaultInjector;

fn ts(s: i64) -> Timestamp {
    Timestamp::from_seconds(s)
}

fn tree(vcp: &str, from: i64, n: i64) -> RadarTree {
    let vols: Vec<_> = (from..from + n).map(|i| volume(vcp, i * 300, 1, 360, 4)).collect();
    build_tree(&vols).unwrap()
}

fn commit_tree(repo: &Repository, branch: &str, t: &RadarTree, msg: &str, at: i64) -> SnapshotId {
    let mut txn = repo.begin(branch).unwrap();
    store_tree(txn.stage().unwrap(), t, &ChunkPolicy::default()).unwrap();
    txn.commit(msg, "tester", ts(at)).unwrap()
}

fn init(dir: &Path) -> Repository {
    Repository::init(dir).unwrap()
}

#[test]
fn fresh_repository() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let log = repo.log("main").unwrap();
    assert_eq!(log.len(), 1);
    assert!(log[0].is_root());
    let txn = repo.begin("main").unwrap();
    assert_eq!(txn.base().id, log[0].id);
    assert!(load_tree(&repo.checkout(&log[0].id).unwrap()).unwrap().is_empty());
    assert_eq!(fs_read(dir.path().join("refs/main")), format!("{}\n", log[0].id));
    assert!(matches!(Repository::init(dir.path()), Err(TxnError::InvalidArgument(_))));
    assert!(matches!(Repository::open(&dir.path().join("nope")), Err(TxnError::NotARepository(_))));
}

fn fs_read(p: std::path::PathBuf) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn unknown_branch_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    assert!(matches!(repo.begin("dev"), Err(TxnError::UnknownBranch(_))));
    let root = repo.head("main").unwrap();
    repo.create_branch("dev", root).unwrap();
    assert!(matches!(repo.create_branch("dev", root), Err(TxnError::BranchExists(_))));
    repo.begin("dev").unwrap();
    repo.delete_branch("dev").unwrap();
    assert!(matches!(repo.begin("dev"), Err(TxnError::UnknownBranch(_))));
    assert!(matches!(repo.checkout(&ObjectId::of(b"garbage")), Err(TxnError::UnknownSnapshot(_))));
    assert!(matches!(repo.resolve_snapshot("zz"), Err(TxnError::UnknownSnapshot(_))));
    assert_eq!(repo.resolve_snapshot(&root.to_hex()[..8]).unwrap(), root);
    assert_eq!(repo.resolve_ref("main").unwrap(), root);
    for bad in ["", "a/b", "x y", "..", "main.lock"] {
        assert!(matches!(validate_branch_name(bad), Err(TxnError::InvalidBranchName(_))), "{bad:?}");
    }
    validate_branch_name("release-1.0_x").unwrap();
}

#[test]
fn empty_commit_keeps_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let mut txn = repo.begin("main").unwrap();
    let id = txn.commit("nothing", "me", ts(5)).unwrap();
    let log = repo.log("main").unwrap();
    assert_eq!(log[0].id, id);
    assert_eq!(log[0].manifest, log[1].manifest);
    assert!(matches!(txn.commit("again", "me", ts(6)), Err(TxnError::State(TxnState::Committed))));
    assert!(matches!(txn.stage(), Err(TxnError::State(TxnState::Committed))));
    let mut t2 = repo.begin("main").unwrap();
    t2.abort().unwrap();
    assert!(matches!(t2.stage(), Err(TxnError::State(TxnState::Aborted))));
}

#[test]
fn ids_are_deterministic() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (r1, r2) = (init(d1.path()), init(d2.path()));
    let t = tree("VCP-212", 0, 3);
    assert_eq!(commit_tree(&r1, "main", &t, "m", 10), commit_tree(&r2, "main", &t, "m", 10));
    let s = r1.snapshot(&r1.head("main").unwrap()).unwrap();
    let again = Snapshot::new(s.parent, s.manifest, &s.message, &s.author, s.timestamp);
    assert_eq!(again.id, s.id);
    let other = Snapshot::new(s.parent, s.manifest, &s.message, &s.author, ts(11));
    assert_ne!(other.id, s.id);
}

#[test]
fn log_chains_by_parent_with_supplied_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    for i in 0..3 {
        commit_tree(&repo, "main", &tree("VCP-212", 0, i + 1), &format!("c{i}"), 100 + i);
    }
    let log = repo.log("main").unwrap();
    assert_eq!(log.len(), 4);
    for w in log.windows(2) {
        assert_eq!(w[0].parent, w[1].id);
    }
    assert_eq!(log[0].timestamp, ts(102));
    assert_eq!(log[2].message, "c0");
}

#[test]
fn disjoint_concurrent_commits_rebase_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let mut a = repo.begin("main").unwrap();
    let mut b = repo.begin("main").unwrap();
    assert_eq!(a.base().id, b.base().id);
    let (ta, tb) = (tree("VCP-212", 0, 2), tree("VCP-12", 10, 2));
    store_tree(a.stage().unwrap(), &ta, &ChunkPolicy::default()).unwrap();
    store_tree(b.stage().unwrap(), &tb, &ChunkPolicy::default()).unwrap();
    let base_manifest = Manifest::default();
    let da = a.delta().unwrap();
    let db = b.delta().unwrap();
    a.commit("a", "x", ts(1)).unwrap();
    match b.commit("b", "x", ts(2)) {
        Err(TxnError::StaleBase { report, .. }) => assert!(report.is_empty(), "{report}"),
        other => panic!("{other:?}"),
    }
    assert!(b.rebase().unwrap().is_empty());
    b.commit("b", "x", ts(2)).unwrap();
    let log = repo.log("main").unwrap();
    assert_eq!(log.len(), 3);
    let head_manifest = repo.manifest(&log[0]).unwrap();
    assert_eq!(*head_manifest, db.apply(&da.apply(&base_manifest)));
    let loaded = load_tree(&repo.checkout(&log[0].id).unwrap()).unwrap();
    assert!(loaded.groups["VCP-212"].bitwise_eq(&ta.groups["VCP-212"]));
    assert!(loaded.groups["VCP-12"].bitwise_eq(&tb.groups["VCP-12"]));
}

#[test]
fn overlapping_appends_report_time_range_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let mut base = tree("VCP-212", 0, 2);
    commit_tree(&repo, "main", &base, "base", 0);
    let mut a = repo.begin("main").unwrap();
    let mut b = repo.begin("main").unwrap();
    let mut ta = base.clone();
    for i in 2..6 {
        ta.insert_volume_with(&volume("VCP-212", i * 300, 1, 360, 4), &Default::default()).unwrap();
    }
    for i in 5..9 {
        base.insert_volume_with(&volume("VCP-212", i * 300, 1, 360, 4), &Default::default()).unwrap();
    }
    store_tree(a.stage().unwrap(), &ta, &ChunkPolicy::default()).unwrap();
    store_tree(b.stage().unwrap(), &base, &ChunkPolicy::default()).unwrap();
    a.commit("a", "x", ts(1)).unwrap();
    let Err(TxnError::StaleBase { report, .. }) = b.commit("b", "x", ts(2)) else { panic!() };
    assert!(report.has(ConflictKind::TimeRangeOverlap));
    assert!(report.conflicts.iter().any(|c| c.kind == ConflictKind::TimeRangeOverlap && c.path == "VCP-212"));
    assert!(!b.rebase().unwrap().is_empty());
}

#[test]
fn checkout_is_stable_across_commits() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let t1 = tree("VCP-212", 0, 3);
    let id = commit_tree(&repo, "main", &t1, "one", 1);
    let handle = repo.checkout(&id).unwrap();
    commit_tree(&repo, "main", &tree("VCP-212", 5, 4), "two", 2);
    assert!(load_tree(&handle).unwrap().bitwise_eq(&t1));
    assert!(load_tree(&repo.checkout(&id).unwrap()).unwrap().bitwise_eq(&t1));
}

#[test]
fn rollback_restores_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let first = commit_tree(&repo, "main", &tree("VCP-212", 0, 2), "one", 1);
    commit_tree(&repo, "main", &tree("VCP-212", 0, 5), "two", 2);
    let id = repo.rollback("main", &first, "undo", "me", ts(3)).unwrap();
    let log = repo.log("main").unwrap();
    assert_eq!(log.len(), 4);
    assert_eq!(log[0].id, id);
    assert_eq!(log[0].manifest, repo.snapshot(&first).unwrap().manifest);

    let head = repo.head("main").unwrap();
    repo.rollback("main", &head, "noop", "me", ts(4)).unwrap();
    let log = repo.log("main").unwrap();
    assert_eq!(log[0].manifest, log[1].manifest);

    repo.create_branch("side", log[log.len() - 1].id).unwrap();
    let side = commit_tree(&repo, "side", &tree("VCP-12", 0, 1), "side", 5);
    assert!(matches!(repo.rollback("main", &side, "bad", "me", ts(6)), Err(TxnError::InvalidRollback { .. })));
}

#[test]
fn crash_at_every_step_leaves_a_durable_head() {
    let t = tree("VCP-212", 0, 3);
    let probe = tempfile::tempdir().unwrap();
    let faults = FaultInjector::new();
    let repo = Repository::init_with(probe.path(), faults.clone()).unwrap();
    let mut txn = repo.begin("main").unwrap();
    store_tree(txn.stage().unwrap(), &t, &ChunkPolicy::default()).unwrap();
    faults.reset();
    let expected = txn.commit("c", "x", ts(1)).unwrap();
    let labels = faults.labels();
    let ref_rename = labels.iter().rposition(|l| *l == "ref").unwrap();
    assert!(labels.contains(&"intent") && labels.contains(&"intent-clear"));

    for step in 0..labels.len() {
        let dir = tempfile::tempdir().unwrap();
        let faults = FaultInjector::new();
        let repo = Repository::init_with(dir.path(), faults.clone()).unwrap();
        let old = repo.head("main").unwrap();
        let mut txn = repo.begin("main").unwrap();
        store_tree(txn.stage().unwrap(), &t, &ChunkPolicy::default()).unwrap();
        faults.arm(step);
        let err = txn.commit("c", "x", ts(1)).unwrap_err();
        assert!(err.is_injected_crash(), "step {step}: {err}");
        drop(txn);
        drop(repo);

        let reopened = Repository::open(dir.path()).unwrap();
        let head = reopened.head("main").unwrap();
        if step <= ref_rename {
            assert_eq!(head, old, "step {step} ({})", labels[step]);
        } else {
            assert_eq!(head, expected, "step {step} ({})", labels[step]);
        }
        let reader = reopened.checkout(&head).unwrap();
        let loaded = load_tree(&reader).unwrap();
        assert!(loaded.is_empty() || loaded.bitwise_eq(&t));
        assert_eq!(std::fs::read_dir(dir.path().join("wal")).unwrap().count(), 0, "step {step}");
        let mut next = reopened.begin("main").unwrap();
        store_tree(next.stage().unwrap(), &t, &ChunkPolicy::default()).unwrap();
        next.commit("retry", "x", ts(2)).unwrap();
    }
}

#[test]
fn store_objects_are_content_addressed_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let id = commit_tree(&repo, "main", &tree("VCP-212", 0, 2), "one", 1);
    let snap = repo.snapshot(&id).unwrap();
    let hex = snap.manifest.to_hex();
    assert!(dir.path().join("objects").join(&hex[..2]).join(&hex).is_file());
    assert!(repo.store().contains(&snap.manifest));
    assert!(dir.path().join("snapshots").join(format!("{id}.json")).is_file());
}
