use std::path::Path;
use std::process::{Command, Stdio};

use rdt_core::analysis::baseline::RawArchive;
use rdt_core::analysis::{dbz_to_rate, Format, GeoPoint, Product, ZrParams};
use rdt_core::chunkstore::load_tree;
use rdt_core::txn::Repository;
use rdt_core::TimeRange;
use serde_json::Value;
use tempfile::TempDir;

struct Out {
    code: i32,
    stdout: Vec<u8>,
    stderr: String,
}

impl Out {
    fn text(&self) -> String {
        String::from_utf8(self.stdout.clone()).unwrap()
    }

    fn report(&self) -> Value {
        let docs: Vec<&str> = self.stderr.lines().filter(|l| l.starts_with('{')).collect();
        assert_eq!(docs.len(), 1, "expected one report in {:?}", self.stderr);
        serde_json::from_str(docs[0]).unwrap()
    }
}

fn rdt<S: AsRef<str>>(args: &[S]) -> Out {
    let argv = std::iter::once("rdt".to_string()).chain(args.iter().map(|a| a.as_ref().to_string()));
    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let code = rdt_cli::run(argv, &mut stdout, &mut stderr);
    Out { code, stdout, stderr: String::from_utf8(stderr).unwrap() }
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

const TS: &str = "--timestamp=2024-01-01T00:00:00Z";

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth".to_string(), format!("--out={}", p(dir)), "--report=quiet".into()];
    args.extend(extra.iter().map(|s| s.to_string()));
    let o = rdt(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);
}

struct Fixture {
    _tmp: TempDir,
    raw: std::path::PathBuf,
    repo: String,
}

fn fixture(extra: &[&str]) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    let mut args = vec!["--n-volumes=10", "--n-gates=12", "--n-sweeps=2"];
    if !extra.iter().any(|a| a.starts_with("--field")) {
        args.push("--field=storm");
    }
    args.extend(extra);
    synth(&raw, &args);
    let repo = p(&tmp.path().join("repo"));
    let o = rdt(&["ingest", &p(&raw), "--repo", &repo, TS]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    Fixture { _tmp: tmp, raw, repo }
}

#[test]
fn ingest_creates_root_and_ingest_snapshots() {
    let f = fixture(&[]);
    let o = rdt(&["log", "--repo", &f.repo]);
    assert_eq!(o.code, 0);
    assert_eq!(o.text().lines().count(), 2);
    assert_eq!(o.report()["command"], "log");
}

#[test]
fn ingest_empty_dir_is_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = rdt(&["ingest", &p(&tmp.path().join("empty")), "--repo", &p(&tmp.path().join("repo"))]);
    assert_eq!(o.code, 2);
    assert_eq!(o.report()["exit_status"], 2);
}

#[test]
fn reingest_on_new_branch_gives_same_manifest() {
    let f = fixture(&[]);
    let o = rdt(&["ingest", &p(&f.raw), "--repo", &f.repo, "--branch", "copy", TS, "--message", "again"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let repo = Repository::open(Path::new(&f.repo)).unwrap();
    let a = repo.snapshot(&repo.head("main").unwrap()).unwrap();
    let b = repo.snapshot(&repo.head("copy").unwrap()).unwrap();
    assert_eq!(a.manifest, b.manifest);
    assert_ne!(a.id, b.id);
}

#[test]
fn append_extends_time_and_rejects_duplicates() {
    let f = fixture(&[]);
    let next = f.raw.parent().unwrap().join("next");
    synth(&next, &["--n-volumes=1", "--n-gates=12", "--n-sweeps=2", "--field=storm", "--start-time=2011-05-21T00:00:00Z"]);
    let file = std::fs::read_dir(&next).unwrap().next().unwrap().unwrap().path();
    let o = rdt(&["append", &p(&file), "--repo", &f.repo, TS]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let o = rdt(&["get", "VCP-212/time", "--repo", &f.repo, "--format", "json"]);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["shape"][0], 11);
    assert_eq!(rdt(&["log", "--repo", &f.repo]).text().lines().count(), 3);

    let o = rdt(&["append", &p(&file), "--repo", &f.repo, TS]);
    assert_eq!(o.code, 3);
    assert_eq!(o.report()["conflicts"]["conflicts"][0]["kind"], "time-range-overlap");
}

#[test]
fn tree_lists_groups_and_arrays() {
    let f = fixture(&[]);
    let o = rdt(&["tree", "--repo", &f.repo]);
    let text = o.text();
    let first: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert!(first.contains(&"VCP-212/"));
    assert!(first.contains(&"VCP-212/sweep_0/"));
    assert!(first.contains(&"VCP-212/sweep_0/DBZH"));
    assert!(first.contains(&"VCP-212/time"));
}

#[test]
fn get_single_scan_fetches_one_chunk() {
    let f = fixture(&[]);
    let o = rdt(&["get", "VCP-212/sweep_0/DBZH", "--time", "0", "--repo", &f.repo]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(o.report()["chunks_fetched"], 1);
    // header plus 360 rays x 12 gates
    assert_eq!(o.text().lines().count(), 1 + 360 * 12);
    let o = rdt(&["get", "VCP-212/sweep_0", "--repo", &f.repo]);
    assert_eq!(o.code, 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["kind"], "group");
}

#[test]
fn get_bad_path_names_resolved_prefix() {
    let f = fixture(&[]);
    let o = rdt(&["get", "VCP-212/sweep_9/DBZH", "--repo", &f.repo]);
    assert_eq!(o.code, 4);
    assert!(o.stderr.contains("deepest resolved prefix: VCP-212"), "{}", o.stderr);
}

#[test]
fn qvp_of_constant_field_is_constant() {
    let f = fixture(&["--field=constant", "--value=27.5"]);
    let o = rdt(&["qvp", "--repo", &f.repo]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let text = o.text();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("time,range_m,height_m,value,valid_fraction"));
    let mut n = 0;
    for row in rows {
        let value: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(value, 27.5);
        n += 1;
    }
    assert_eq!(n, 10 * 12);
}

#[test]
fn qpe_of_constant_field_matches_hand_integration() {
    // five scans 300 s apart span 1200 s
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    synth(&raw, &["--n-volumes=5", "--n-gates=4", "--n-sweeps=1", "--field=constant", "--value=34.4"]);
    let repo = p(&tmp.path().join("repo"));
    assert_eq!(rdt(&["ingest", &p(&raw), "--repo", &repo, TS]).code, 0);
    let o = rdt(&["qpe", "--repo", &repo, "--format", "bin"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let (_, arrays) = rdt_core::analysis::decode_bin(&o.stdout).unwrap();
    let totals = arrays.iter().find(|a| a.name == "totals_mm").unwrap();
    let expected = dbz_to_rate(34.4f32 as f64, &ZrParams::default()) * 1200.0 / 3600.0;
    assert_eq!(totals.data.len(), 360 * 4);
    assert!(totals.data.iter().all(|t| (t - expected).abs() < 1e-9));
}

#[test]
fn timeseries_matches_raw_oracle() {
    let f = fixture(&[]);
    let out = f.raw.parent().unwrap().join("series.csv");
    let o = rdt(&["timeseries", "--repo", &f.repo, "--lat", "36.75", "--lon", "-98.12", "--out", &p(&out)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let oracle = RawArchive::new(&f.raw, 360)
        .timeseries("VCP-212", 0, rdt_core::model::MomentKind::Dbzh, &GeoPoint::new(36.75, -98.12).unwrap(), &TimeRange::ALL)
        .unwrap();
    assert_eq!(oracle.times.len(), 10);
    assert_eq!(std::fs::read(&out).unwrap(), oracle.to_bytes(Format::Csv));
}

#[test]
fn rollback_restores_product_bitwise() {
    let f = fixture(&[]);
    let dir = f.raw.parent().unwrap();
    let before = dir.join("before.bin");
    assert_eq!(rdt(&["qvp", "--repo", &f.repo, "--format=bin", "--out", &p(&before)]).code, 0);
    let ingest_id = Repository::open(Path::new(&f.repo)).unwrap().head("main").unwrap().to_string();

    let next = dir.join("next");
    synth(&next, &["--n-volumes=2", "--n-gates=12", "--n-sweeps=2", "--field=storm", "--start-time=2011-05-22T00:00:00Z"]);
    let files: Vec<String> = std::fs::read_dir(&next).unwrap().map(|e| p(&e.unwrap().path())).collect();
    let mut args = vec!["append".to_string(), "--repo".into(), f.repo.clone(), TS.into()];
    args.extend(files);
    assert_eq!(rdt(&args).code, 0);

    let o = rdt(&["rollback", &ingest_id[..12], "--repo", &f.repo, TS]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let after = dir.join("after.bin");
    assert_eq!(rdt(&["qvp", "--repo", &f.repo, "--format=bin", "--out", &p(&after)]).code, 0);
    assert_eq!(std::fs::read(&before).unwrap(), std::fs::read(&after).unwrap());
    assert_eq!(rdt(&["log", "--repo", &f.repo]).text().lines().count(), 4);
}

#[test]
fn rollback_to_non_ancestor_fails() {
    let f = fixture(&[]);
    let o = rdt(&["ingest", &p(&f.raw), "--repo", &f.repo, "--branch", "side", TS, "--message", "side"]);
    assert_eq!(o.code, 0);
    let side = o.text().trim().to_string();
    let o = rdt(&["rollback", &side, "--repo", &f.repo]);
    assert_eq!(o.code, 5, "{}", o.stderr);
}

#[test]
fn bench_reports_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    synth(&raw, &["--n-volumes=1", "--n-gates=8", "--n-sweeps=1"]);
    let repo = tmp.path().join("repo");
    assert_eq!(rdt(&["ingest", &p(&raw), "--repo", &p(&repo), TS]).code, 0);
    let o = rdt(&["bench", "--task", "qvp", "--raw-dir", &p(&raw), "--repo", &p(&repo), "--repeat", "1"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let b = &o.report()["bench"];
    assert_eq!(b["equality"], "bitwise-equal");
    assert!(b["speedup"].as_f64().unwrap() > 0.0);
    assert_eq!(b["volumes"], 1);

    // delete the moment chunk object
    let repo_h = Repository::open(&repo).unwrap();
    let snap = repo_h.snapshot(&repo_h.head("main").unwrap()).unwrap();
    let manifest = repo_h.manifest(&snap).unwrap();
    let id = manifest.arrays["VCP-212/sweep_0/DBZH"].chunks.values().next().unwrap().id.to_string();
    std::fs::remove_file(repo.join("objects").join(&id[..2]).join(&id)).unwrap();
    let o = rdt(&["bench", "--task", "qvp", "--raw-dir", &p(&raw), "--repo", &p(&repo), "--repeat", "1"]);
    assert_eq!(o.code, 6, "{}", o.stderr);
    assert!(o.report()["bench"].is_null());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let f = fixture(&[]);
    let cfg = f.raw.parent().unwrap().join("rdt.toml");
    std::fs::write(&cfg, format!("repo = {:?}\nformat = \"json\"\nbranch = \"nope\"\n", f.repo)).unwrap();
    let o = rdt(&["log", "--config", &p(&cfg), "--branch", "main"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let entries: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(entries.as_array().unwrap().len(), 2);
    assert_eq!(rdt(&["log", "--config", &p(&cfg)]).code, 4);

    std::fs::write(&cfg, "colour = \"red\"\n").unwrap();
    assert_eq!(rdt(&["log", "--config", &p(&cfg)]).code, 2);
}

#[test]
fn every_invocation_reports_once() {
    let f = fixture(&[]);
    for args in [
        vec!["tree", "--repo", &f.repo],
        vec!["get", "nope", "--repo", &f.repo],
        vec!["qvp", "--repo", &f.repo, "--moment", "KDP"],
        vec!["frobnicate"],
    ] {
        let o = rdt(&args);
        assert_eq!(o.report()["exit_status"], o.code);
    }
    let o = rdt(&["tree", "--repo", &f.repo, "--report", "quiet"]);
    assert!(!o.stderr.contains('{'));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rdt"))
}

#[test]
fn repo_from_environment() {
    let f = fixture(&[]);
    let out = bin().args(["log"]).env("RDT_REPO", &f.repo).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
    let report = String::from_utf8(out.stderr).unwrap();
    let doc: Value = serde_json::from_str(report.lines().last().unwrap()).unwrap();
    assert_eq!(doc["snapshot_read"], Repository::open(Path::new(&f.repo)).unwrap().head("main").unwrap().to_string());
}

#[test]
fn concurrent_append_processes_both_commit() {
    let f = fixture(&[]);
    let dir = f.raw.parent().unwrap();
    let mut files = Vec::new();
    for (i, day) in ["2011-05-23", "2011-05-24"].iter().enumerate() {
        let d = dir.join(format!("day{i}"));
        synth(&d, &["--n-volumes=3", "--n-gates=12", "--n-sweeps=2", "--field=storm", &format!("--start-time={day}T00:00:00Z")]);
        let mut fs: Vec<String> = std::fs::read_dir(&d).unwrap().map(|e| p(&e.unwrap().path())).collect();
        fs.sort();
        files.push(fs);
    }
    let children: Vec<_> = files
        .iter()
        .map(|fs| bin().arg("append").args(fs).args(["--repo", &f.repo, "--report", "quiet"]).stdout(Stdio::null()).spawn().unwrap())
        .collect();
    for c in children {
        assert!(c.wait_with_output().unwrap().status.success());
    }
    let repo = Repository::open(Path::new(&f.repo)).unwrap();
    let log = repo.log("main").unwrap();
    assert_eq!(log.len(), 4);
    assert!(log.windows(2).all(|w| w[0].parent == w[1].id));
    let tree = load_tree(&repo.checkout(&log[0].id).unwrap()).unwrap();
    assert_eq!(tree.groups["VCP-212"].times.len(), 16);
}
