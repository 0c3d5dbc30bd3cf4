use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rdt_core::analysis::baseline::RawArchive;
use rdt_core::analysis::{
    accumulate_qpe, extract_timeseries, qvp, Format, GeoPoint, Product, ZrParams, BIN_MAGIC, DEFAULT_MAX_GAP_S,
    DEFAULT_VALID_FRACTION,
};
use rdt_core::chunkstore::{canonical_json, read_region, ArrayMeta, ChunkPolicy, CodecSpec, DType, SnapshotReader};
use rdt_core::ingest::{encode_rdt_raw, generate_synthetic, FieldModel, SynthConfig, VcpDefinition};
use rdt_core::model::{MomentKind, TreeOptions, TreePath};
use rdt_core::pipeline::{self, CommitOptions, CommitOutcome};
use rdt_core::txn::{Repository, SnapshotId};
use rdt_core::{TimeRange, Timestamp};
use serde_json::{json, Value};

use crate::config::Config;
use crate::report::{BenchResult, Failure, RunReport};
use crate::{Cli, Command, GlobalArgs, PointArgs, QpeArgs, QvpArgs, SweepArgs, SynthArgs, WriteArgs};

type Result<T> = std::result::Result<T, Failure>;

/// Resolved settings: flag, then config file, then default.
struct Ctx<'a> {
    g: &'a GlobalArgs,
    cfg: Config,
}

fn pick<T>(flag: Option<T>, cfg: Option<T>) -> Option<T> {
    flag.or(cfg)
}

fn parse_time(text: &str, what: &str) -> Result<Timestamp> {
    Timestamp::parse_rfc3339(text).map_err(|e| Failure::input(format!("{what}: {text:?} is not RFC 3339 ({e})")))
}

impl<'a> Ctx<'a> {
    fn new(g: &'a GlobalArgs) -> Result<Self> {
        let cfg = match &g.config {
            Some(p) => Config::load(p).map_err(Failure::input)?,
            None => Config::default(),
        };
        Ok(Ctx { g, cfg })
    }

    fn quiet(&self) -> Result<bool> {
        match pick(self.g.report.clone(), self.cfg.report.clone()).as_deref() {
            None | Some("json") => Ok(false),
            Some("quiet") => Ok(true),
            Some(other) => Err(Failure::input(format!("unknown report mode {other:?} (expected json or quiet)"))),
        }
    }

    fn repo_path(&self) -> Result<PathBuf> {
        pick(self.g.repo.clone(), self.cfg.repo.clone())
            .ok_or_else(|| Failure::input("no repository given (use --repo or RDT_REPO)"))
    }

    fn branch(&self) -> String {
        pick(self.g.branch.clone(), self.cfg.branch.clone()).unwrap_or_else(|| "main".into())
    }

    fn reference(&self) -> String {
        pick(self.g.reference.clone(), self.cfg.reference.clone()).unwrap_or_else(|| self.branch())
    }

    fn time_range(&self) -> Result<TimeRange> {
        let start = pick(self.g.time_start.clone(), self.cfg.time_start.clone());
        let end = pick(self.g.time_end.clone(), self.cfg.time_end.clone());
        let range = TimeRange {
            start: start.map(|t| parse_time(&t, "--time-start")).transpose()?,
            end: end.map(|t| parse_time(&t, "--time-end")).transpose()?,
        };
        if let (Some(s), Some(e)) = (range.start, range.end) {
            if s > e {
                return Err(Failure::input("--time-start is after --time-end"));
            }
        }
        Ok(range)
    }

    fn format(&self, default: Format) -> Result<Format> {
        match pick(self.g.format.clone(), self.cfg.format.clone()) {
            Some(f) => Format::from_str(&f).map_err(Failure::input),
            None => Ok(default),
        }
    }

    fn out(&self) -> Option<PathBuf> {
        pick(self.g.out.clone(), self.cfg.out.clone())
    }

    fn record_common(&self, report: &mut RunReport) -> Result<()> {
        report.param("repo", self.repo_path().ok());
        report.param("branch", self.branch());
        let r = self.time_range()?;
        report.param("time_start", r.start.map(|t| t.to_rfc3339()));
        report.param("time_end", r.end.map(|t| t.to_rfc3339()));
        Ok(())
    }

    fn emit(&self, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
        match self.out() {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::write(&path, bytes)?;
            }
            None => stdout.write_all(bytes)?,
        }
        Ok(())
    }

    fn commit_options(&self, w: &WriteArgs, default_message: String) -> Result<CommitOptions> {
        let c = &self.cfg;
        let mut policy = ChunkPolicy::default();
        if let Some(t) = pick(w.chunk_time, c.chunk_time) {
            policy.time = t;
        }
        policy.azimuth = pick(w.chunk_azimuth, c.chunk_azimuth);
        policy.range = pick(w.chunk_range, c.chunk_range);
        if let Some(codec) = pick(w.codec.clone(), c.codec.clone()) {
            policy.codec = CodecSpec::from_str(&codec).map_err(|e| Failure::input(e.to_string()))?;
        }
        policy.validate()?;
        let timestamp = match pick(w.timestamp.clone(), c.timestamp.clone()) {
            Some(t) => parse_time(&t, "--timestamp")?,
            None => Timestamp::now(),
        };
        let n_rays = pick(w.n_rays, c.n_rays).unwrap_or(360);
        if n_rays == 0 {
            return Err(Failure::input("--n-rays must be positive"));
        }
        Ok(CommitOptions {
            policy,
            tree: TreeOptions { n_rays },
            message: pick(w.message.clone(), c.message.clone()).unwrap_or(default_message),
            author: pick(w.author.clone(), c.author.clone()).unwrap_or_default(),
            timestamp,
            max_retries: pick(w.max_retries, c.max_retries).unwrap_or(64),
        })
    }

    fn open_repo(&self) -> Result<Repository> {
        Ok(Repository::open(&self.repo_path()?)?)
    }

    fn checkout(&self, report: &mut RunReport) -> Result<(Repository, SnapshotReader)> {
        let repo = self.open_repo()?;
        let id = repo.resolve_ref(&self.reference())?;
        report.snapshot_read = Some(id.to_string());
        let reader = repo.checkout(&id)?;
        Ok((repo, reader))
    }

    fn sweep_sel(&self, s: &SweepArgs, reader: Option<&SnapshotReader>) -> Result<(String, usize)> {
        let sweep = pick(s.sweep, self.cfg.sweep).unwrap_or(0);
        if let Some(g) = pick(s.group.clone(), self.cfg.group.clone()) {
            return Ok((g, sweep));
        }
        let Some(reader) = reader else {
            return Err(Failure::input("--group is required"));
        };
        let top: Vec<&String> = reader.manifest().groups.keys().filter(|k| !k.contains('/')).collect();
        match top.as_slice() {
            [only] => Ok(((*only).clone(), sweep)),
            [] => Err(Failure::path("repository holds no scan-pattern groups")),
            _ => Err(Failure::input("several groups present; pass --group")),
        }
    }

    fn moment(&self, q: &QvpArgs) -> Result<MomentKind> {
        let code = pick(q.moment.clone(), self.cfg.moment.clone()).unwrap_or_else(|| "DBZH".into());
        MomentKind::from_code(&code).ok_or_else(|| Failure::input(format!("unknown moment {code:?}")))
    }

    fn threshold(&self, q: &QvpArgs) -> f64 {
        pick(q.threshold, self.cfg.threshold).unwrap_or(DEFAULT_VALID_FRACTION)
    }

    fn zr(&self, q: &QpeArgs) -> Result<(ZrParams, f64)> {
        let d = ZrParams::default();
        let p = ZrParams::new(pick(q.zr_a, self.cfg.zr_a).unwrap_or(d.a), pick(q.zr_b, self.cfg.zr_b).unwrap_or(d.b))?;
        let gap = pick(q.max_gap, self.cfg.max_gap).unwrap_or(DEFAULT_MAX_GAP_S);
        if !(gap > 0.0) {
            return Err(Failure::input("--max-gap must be positive"));
        }
        Ok((p, gap))
    }

    fn point(&self, p: &PointArgs) -> Result<GeoPoint> {
        let lat = pick(p.lat, self.cfg.lat).ok_or_else(|| Failure::input("--lat is required"))?;
        let lon = pick(p.lon, self.cfg.lon).ok_or_else(|| Failure::input("--lon is required"))?;
        Ok(GeoPoint::new(lat, lon)?)
    }
}

/// Whether the run report is suppressed, and the command outcome.
pub fn dispatch(cli: &Cli, report: &mut RunReport, stdout: &mut dyn Write) -> (bool, Result<()>) {
    let ctx = match Ctx::new(&cli.global) {
        Ok(c) => c,
        Err(e) => return (false, Err(e)),
    };
    let quiet = match ctx.quiet() {
        Ok(q) => q,
        Err(e) => return (false, Err(e)),
    };
    (quiet, run_command(&ctx, &cli.command, report, stdout))
}

fn run_command(ctx: &Ctx, cmd: &Command, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    if !matches!(cmd, Command::Synth(_)) {
        ctx.record_common(report)?;
    }
    match cmd {
        Command::Ingest { input, write } => ingest(ctx, input, write, report, stdout),
        Command::Append { files, write } => append(ctx, files, write, report, stdout),
        Command::Tree { path } => tree(ctx, path.as_deref(), report, stdout),
        Command::Get { path, time } => get(ctx, path, *time, report, stdout),
        Command::Qvp { sweep, qvp } => product_qvp(ctx, sweep, qvp, report, stdout),
        Command::Qpe { sweep, qpe } => product_qpe(ctx, sweep, qpe, report, stdout),
        Command::Timeseries { sweep, point } => product_timeseries(ctx, sweep, point, report, stdout),
        Command::Log => log(ctx, report, stdout),
        Command::Rollback { snapshot, message, author, timestamp } => {
            rollback(ctx, snapshot, message.as_deref(), author.as_deref(), timestamp.as_deref(), report, stdout)
        }
        Command::Bench { task, raw_dir, repeat, n_rays, sweep, qvp, qpe, point } => {
            let task = pick(task.clone(), ctx.cfg.task.clone()).unwrap_or_else(|| "qvp".into());
            let raw_dir = pick(raw_dir.clone(), ctx.cfg.raw_dir.clone()).ok_or_else(|| Failure::input("--raw-dir is required"))?;
            let repeat = pick(*repeat, ctx.cfg.repeat).unwrap_or(3).max(1);
            let n_rays = pick(*n_rays, ctx.cfg.n_rays).unwrap_or(360);
            bench(ctx, &BenchTask { task, raw_dir, repeat, n_rays, sweep, qvp, qpe, point }, report, stdout)
        }
        Command::Synth(args) => synth(ctx, args, report, stdout),
    }
}

fn record_commit(report: &mut RunReport, out: &CommitOutcome) {
    report.snapshot_read = Some(out.base.to_string());
    report.snapshot_written = Some(out.snapshot.to_string());
    report.bytes_written = out.bytes_written;
    report.param("volumes", out.volumes);
    report.param("chunks_written", out.chunks_written);
    report.param("retries", out.retries);
    report.warnings = out.warnings.iter().map(|w| format!("skipped {}: {}", w.path.display(), w.message)).collect();
}

fn record_policy(report: &mut RunReport, o: &CommitOptions) {
    report.param("chunk_policy", &o.policy);
    report.param("n_rays", o.tree.n_rays);
    report.param("message", &o.message);
    report.param("author", &o.author);
    report.param("timestamp", o.timestamp.to_rfc3339());
}

fn ingest(ctx: &Ctx, input: &Path, w: &WriteArgs, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    let opts = ctx.commit_options(w, format!("ingest {}", input.display()))?;
    report.param("input", input);
    record_policy(report, &opts);
    if !input.is_dir() {
        return Err(Failure::input(format!("input directory {} not found", input.display())));
    }
    let repo = Repository::open_or_init(&ctx.repo_path()?)?;
    let out = pipeline::ingest_dir(&repo, &ctx.branch(), input, &opts)?;
    record_commit(report, &out);
    writeln!(stdout, "{}", out.snapshot)?;
    Ok(())
}

fn append(ctx: &Ctx, files: &[PathBuf], w: &WriteArgs, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    let opts = ctx.commit_options(w, format!("append {} volume(s)", files.len()))?;
    report.param("files", files);
    record_policy(report, &opts);
    let volumes = pipeline::parse_files(files)?;
    let repo = Repository::open_or_init(&ctx.repo_path()?)?;
    let out = pipeline::append_volumes(&repo, &ctx.branch(), &volumes, &opts)?;
    record_commit(report, &out);
    writeln!(stdout, "{}", out.snapshot)?;
    Ok(())
}

fn record_reads(report: &mut RunReport, reader: &SnapshotReader) {
    let t = reader.total_trace();
    report.chunks_fetched = t.chunks_fetched;
    report.bytes_read = t.bytes_fetched;
}

fn describe(meta: &ArrayMeta) -> String {
    format!("{} {:?} ({})", dtype_name(meta.dtype), meta.shape, meta.dimensions.join(", "))
}

fn dtype_name(d: DType) -> &'static str {
    match d {
        DType::Float32 => "float32",
        DType::Float64 => "float64",
        DType::Int64 => "int64",
    }
}

fn under(path: &str, prefix: Option<&str>) -> bool {
    match prefix {
        None => true,
        Some(p) => path == p || path.strip_prefix(p).is_some_and(|rest| rest.starts_with('/')),
    }
}

/// Longest leading part of `path` naming a group or array.
fn resolved_prefix(reader: &SnapshotReader, path: &TreePath) -> String {
    let m = reader.manifest();
    let segs = path.segments();
    (1..=segs.len())
        .rev()
        .map(|n| segs[..n].join("/"))
        .find(|p| m.groups.contains_key(p) || m.arrays.contains_key(p))
        .unwrap_or_default()
}

fn not_found(reader: &SnapshotReader, path: &TreePath) -> Failure {
    let prefix = resolved_prefix(reader, path);
    let shown = if prefix.is_empty() { "(root)".to_string() } else { prefix };
    Failure::path(format!("path {path} not found; deepest resolved prefix: {shown}"))
}

fn tree(ctx: &Ctx, path: Option<&str>, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    report.param("path", path);
    let (_, reader) = ctx.checkout(report)?;
    let prefix = match path {
        Some(p) => {
            let tp: TreePath = p.parse()?;
            let m = reader.manifest();
            if !m.groups.contains_key(p) && !m.arrays.contains_key(p) {
                return Err(not_found(&reader, &tp));
            }
            Some(p)
        }
        None => None,
    };
    let m = reader.manifest();
    let mut entries: Vec<(&str, Option<&ArrayMeta>)> = m
        .groups
        .keys()
        .map(|k| (k.as_str(), None))
        .chain(m.arrays.iter().map(|(k, e)| (k.as_str(), Some(&e.meta))))
        .filter(|(k, _)| under(k, prefix))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(b.0));
    let mut text = String::new();
    if ctx.format(Format::Csv)? == Format::Json {
        let list: Vec<Value> = entries
            .iter()
            .map(|(k, meta)| match meta {
                None => json!({ "path": k, "kind": "group", "attributes": m.groups[*k].attributes }),
                Some(a) => json!({
                    "path": k, "kind": "array", "dtype": dtype_name(a.dtype), "shape": a.shape,
                    "chunk_shape": a.chunk_shape, "dimensions": a.dimensions, "attributes": a.attributes,
                }),
            })
            .collect();
        text = serde_json::to_string_pretty(&list).expect("json");
        text.push('\n');
    } else {
        for (k, meta) in entries {
            match meta {
                None => text.push_str(&format!("{k}/\n")),
                Some(a) => text.push_str(&format!("{k}  {}\n", describe(a))),
            }
        }
    }
    ctx.emit(text.as_bytes(), stdout)
}

enum Values {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl Values {
    fn len(&self) -> usize {
        match self {
            Values::F32(v) => v.len(),
            Values::F64(v) => v.len(),
            Values::I64(v) => v.len(),
        }
    }

    fn text(&self, i: usize) -> String {
        match self {
            Values::F32(v) if v[i].is_nan() => String::new(),
            Values::F64(v) if v[i].is_nan() => String::new(),
            Values::F32(v) => v[i].to_string(),
            Values::F64(v) => v[i].to_string(),
            Values::I64(v) => v[i].to_string(),
        }
    }

    fn json(&self) -> Value {
        let f = |x: f64| serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null);
        match self {
            Values::F32(v) => Value::Array(v.iter().map(|x| f(*x as f64)).collect()),
            Values::F64(v) => Value::Array(v.iter().map(|x| f(*x)).collect()),
            Values::I64(v) => Value::Array(v.iter().map(|x| json!(x)).collect()),
        }
    }

    fn le_bytes(&self) -> Vec<u8> {
        match self {
            Values::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Values::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Values::I64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

fn time_indices(ctx: &Ctx, reader: &SnapshotReader, path: &str, n: u64, time: Option<u64>) -> Result<Range<u64>> {
    if let Some(i) = time {
        if i >= n {
            return Err(Failure::input(format!("--time {i} out of range (length {n})")));
        }
        return Ok(i..i + 1);
    }
    let range = ctx.time_range()?;
    if range == TimeRange::ALL {
        return Ok(0..n);
    }
    let group = path.split('/').next().unwrap_or_default();
    let tp: TreePath = format!("{group}/time").parse()?;
    let (t, _) = read_region::<i64>(reader, &tp, &[0..n])?;
    let times: Vec<Timestamp> = t.iter().map(|&ns| Timestamp::from_nanos(ns)).collect();
    let sel = range.select(&times);
    Ok(sel.start as u64..sel.end as u64)
}

fn get(ctx: &Ctx, path: &str, time: Option<u64>, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    report.param("path", path);
    report.param("time", time);
    let format = ctx.format(Format::Csv)?;
    report.param("format", format.to_string());
    let (_, reader) = ctx.checkout(report)?;
    let tp: TreePath = path.parse()?;
    let m = reader.manifest().clone();
    if let Some(g) = m.groups.get(path) {
        let children: Vec<&String> = m
            .groups
            .keys()
            .chain(m.arrays.keys())
            .filter(|k| k.strip_prefix(path).and_then(|r| r.strip_prefix('/')).is_some_and(|r| !r.contains('/')))
            .collect();
        let doc = json!({ "path": path, "kind": "group", "attributes": g.attributes, "children": children });
        let mut text = serde_json::to_string_pretty(&doc).expect("json");
        text.push('\n');
        return ctx.emit(text.as_bytes(), stdout);
    }
    let Some(entry) = m.arrays.get(path) else {
        return Err(not_found(&reader, &tp));
    };
    let meta = &entry.meta;
    let mut region: Vec<Range<u64>> = meta.shape.iter().map(|&n| 0..n).collect();
    let timed = meta.dimensions.first().is_some_and(|d| d == "time");
    if timed {
        region[0] = time_indices(ctx, &reader, path, meta.shape[0], time)?;
    } else if time.is_some() {
        return Err(Failure::input(format!("{path} has no time axis")));
    }
    let before = reader.total_trace();
    let values = match meta.dtype {
        DType::Float32 => Values::F32(read_region::<f32>(&reader, &tp, &region)?.0.iter().copied().collect()),
        DType::Float64 => Values::F64(read_region::<f64>(&reader, &tp, &region)?.0.iter().copied().collect()),
        DType::Int64 => Values::I64(read_region::<i64>(&reader, &tp, &region)?.0.iter().copied().collect()),
    };
    let after = reader.total_trace();
    record_reads(report, &reader);
    report.param("region_chunks_fetched", after.chunks_fetched - before.chunks_fetched);
    let offset: Vec<u64> = region.iter().map(|r| r.start).collect();
    let shape: Vec<u64> = region.iter().map(|r| r.end - r.start).collect();
    let header = json!({
        "path": path, "dtype": dtype_name(meta.dtype), "dimensions": meta.dimensions,
        "offset": offset, "shape": shape, "attributes": meta.attributes,
    });
    let bytes = match format {
        Format::Bin => {
            let h = canonical_json(&header);
            let mut out = Vec::with_capacity(16 + h.len() + values.len() * 8);
            out.extend_from_slice(BIN_MAGIC);
            out.extend_from_slice(&(h.len() as u64).to_le_bytes());
            out.extend_from_slice(&h);
            out.extend_from_slice(&values.le_bytes());
            out
        }
        Format::Json => {
            let mut doc = header;
            doc["data"] = values.json();
            let mut s = serde_json::to_string(&doc).expect("json");
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let mut s = meta.dimensions.join(",");
            s.push_str(",value\n");
            let mut idx = offset.clone();
            for i in 0..values.len() {
                for d in idx.iter() {
                    s.push_str(&d.to_string());
                    s.push(',');
                }
                s.push_str(&values.text(i));
                s.push('\n');
                for d in (0..idx.len()).rev() {
                    idx[d] += 1;
                    if idx[d] < region[d].end {
                        break;
                    }
                    idx[d] = region[d].start;
                }
            }
            s.into_bytes()
        }
    };
    ctx.emit(&bytes, stdout)
}

fn write_product(ctx: &Ctx, p: &dyn Product, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    let format = ctx.format(Format::Csv)?;
    report.param("format", format.to_string());
    ctx.emit(&p.to_bytes(format), stdout)
}

fn product_qvp(ctx: &Ctx, s: &SweepArgs, q: &QvpArgs, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    let (_, reader) = ctx.checkout(report)?;
    let (group, sweep) = ctx.sweep_sel(s, Some(&reader))?;
    let (moment, threshold) = (ctx.moment(q)?, ctx.threshold(q));
    report.param("group", &group);
    report.param("sweep", sweep);
    report.param("moment", moment.code());
    report.param("threshold", threshold);
    let p = qvp(&reader, &group, sweep, moment, &ctx.time_range()?, threshold)?;
    record_reads(report, &reader);
    write_product(ctx, &p, report, stdout)
}

fn product_qpe(ctx: &Ctx, s: &SweepArgs, q: &QpeArgs, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    let (_, reader) = ctx.checkout(report)?;
    let (group, sweep) = ctx.sweep_sel(s, Some(&reader))?;
    let (zr, gap) = ctx.zr(q)?;
    report.param("group", &group);
    report.param("sweep", sweep);
    report.param("zr_a", zr.a);
    report.param("zr_b", zr.b);
    report.param("max_gap", gap);
    let p = accumulate_qpe(&reader, &group, sweep, &ctx.time_range()?, &zr, gap)?;
    record_reads(report, &reader);
    write_product(ctx, &p, report, stdout)
}

fn product_timeseries(ctx: &Ctx, s: &SweepArgs, pt: &PointArgs, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    let (_, reader) = ctx.checkout(report)?;
    let (group, sweep) = ctx.sweep_sel(s, Some(&reader))?;
    let target = ctx.point(pt)?;
    let moment = ctx.moment(&QvpArgs::default())?;
    report.param("group", &group);
    report.param("sweep", sweep);
    report.param("moment", moment.code());
    report.param("lat", target.latitude_deg);
    report.param("lon", target.longitude_deg);
    let p = extract_timeseries(&reader, &group, sweep, moment, &target, &ctx.time_range()?)?;
    record_reads(report, &reader);
    write_product(ctx, &p, report, stdout)
}

fn log(ctx: &Ctx, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    let repo = ctx.open_repo()?;
    let head = repo.resolve_ref(&ctx.reference())?;
    report.snapshot_read = Some(head.to_string());
    let history = repo.history(head)?;
    let text = if ctx.format(Format::Csv)? == Format::Json {
        let mut s = serde_json::to_string_pretty(&history).expect("json");
        s.push('\n');
        s
    } else {
        history
            .iter()
            .map(|s| format!("{}  {}  {}  {}\n", s.id, s.timestamp.to_rfc3339(), s.author, s.message))
            .collect()
    };
    report.param("entries", history.len());
    ctx.emit(text.as_bytes(), stdout)
}

fn rollback(
    ctx: &Ctx,
    target: &str,
    message: Option<&str>,
    author: Option<&str>,
    timestamp: Option<&str>,
    report: &mut RunReport,
    stdout: &mut dyn Write,
) -> Result<()> {
    let repo = ctx.open_repo()?;
    let branch = ctx.branch();
    let id: SnapshotId = repo.resolve_ref(target)?;
    let ts = match timestamp.map(str::to_string).or_else(|| ctx.cfg.timestamp.clone()) {
        Some(t) => parse_time(&t, "--timestamp")?,
        None => Timestamp::now(),
    };
    let message = message.map(str::to_string).or_else(|| ctx.cfg.message.clone()).unwrap_or_else(|| format!("rollback to {id}"));
    let author = author.map(str::to_string).or_else(|| ctx.cfg.author.clone()).unwrap_or_default();
    report.param("target", id.to_string());
    report.snapshot_read = Some(repo.head(&branch)?.to_string());
    let new = repo.rollback(&branch, &id, &message, &author, ts)?;
    report.snapshot_written = Some(new.to_string());
    writeln!(stdout, "{new}")?;
    Ok(())
}

struct BenchTask<'a> {
    task: String,
    raw_dir: PathBuf,
    repeat: usize,
    n_rays: usize,
    sweep: &'a SweepArgs,
    qvp: &'a QvpArgs,
    qpe: &'a QpeArgs,
    point: &'a PointArgs,
}

fn dir_bytes(dir: &Path) -> u64 {
    let Ok(rd) = std::fs::read_dir(dir) else { return 0 };
    rd.flatten()
        .map(|e| {
            let p = e.path();
            if p.is_dir() {
                dir_bytes(&p)
            } else {
                e.metadata().map(|m| m.len()).unwrap_or(0)
            }
        })
        .sum()
}

fn best_of<T>(n: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..n {
        let t = Instant::now();
        let v = f()?;
        best = best.min(t.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((best, last.expect("at least one run")))
}

fn bench(ctx: &Ctx, b: &BenchTask, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    report.param("task", &b.task);
    report.param("raw_dir", &b.raw_dir);
    report.param("repeat", b.repeat);
    let range = ctx.time_range()?;
    let group_hint = match pick(b.sweep.group.clone(), ctx.cfg.group.clone()) {
        Some(_) => None,
        None => Some(ctx.checkout(report)?.1),
    };
    let (group, sweep) = ctx.sweep_sel(b.sweep, group_hint.as_ref())?;
    report.param("group", &group);
    report.param("sweep", sweep);
    let raw = RawArchive::new(&b.raw_dir, b.n_rays);
    let repo_path = ctx.repo_path()?;
    let reference = ctx.reference();

    // Store path: open, resolve, read and compute from scratch on each run.
    type Run<'a> = Box<dyn Fn(Option<&SnapshotReader>) -> Result<Box<dyn Product>> + 'a>;
    let compute: Run = match b.task.as_str() {
        "qvp" => {
            let (moment, threshold) = (ctx.moment(b.qvp)?, ctx.threshold(b.qvp));
            report.param("moment", moment.code());
            report.param("threshold", threshold);
            let group = group.clone();
            let raw = raw.clone();
            Box::new(move |r| {
                Ok(match r {
                    Some(r) => Box::new(qvp(r, &group, sweep, moment, &range, threshold)?),
                    None => Box::new(raw.qvp(&group, sweep, moment, &range, threshold)?),
                })
            })
        }
        "qpe" => {
            let (zr, gap) = ctx.zr(b.qpe)?;
            report.param("zr_a", zr.a);
            report.param("zr_b", zr.b);
            report.param("max_gap", gap);
            let group = group.clone();
            let raw = raw.clone();
            Box::new(move |r| {
                Ok(match r {
                    Some(r) => Box::new(accumulate_qpe(r, &group, sweep, &range, &zr, gap)?),
                    None => Box::new(raw.qpe(&group, sweep, &range, &zr, gap)?),
                })
            })
        }
        "timeseries" => {
            let target = ctx.point(b.point)?;
            let moment = ctx.moment(b.qvp)?;
            report.param("moment", moment.code());
            report.param("lat", target.latitude_deg);
            report.param("lon", target.longitude_deg);
            let group = group.clone();
            let raw = raw.clone();
            Box::new(move |r| {
                Ok(match r {
                    Some(r) => Box::new(extract_timeseries(r, &group, sweep, moment, &target, &range)?),
                    None => Box::new(raw.timeseries(&group, sweep, moment, &target, &range)?),
                })
            })
        }
        other => return Err(Failure::input(format!("unknown bench task {other:?} (expected qvp, qpe or timeseries)"))),
    };

    let (baseline_s, baseline) = best_of(b.repeat, || compute(None))?;
    let store_run = || -> Result<(Box<dyn Product>, SnapshotReader, SnapshotId)> {
        let repo = Repository::open(&repo_path)?;
        let id = repo.resolve_ref(&reference)?;
        let reader = repo.checkout(&id)?;
        let p = compute(Some(&reader))?;
        Ok((p, reader, id))
    };
    let (store_s, (stored, reader, id)) = best_of(b.repeat, || {
        store_run().map_err(|f| Failure::bench_invalid(format!("benchmark invalid: store path failed: {}", f.message)))
    })?;
    report.snapshot_read = Some(id.to_string());
    record_reads(report, &reader);

    let equal = baseline.to_bytes(Format::Bin) == stored.to_bytes(Format::Bin);
    let volumes = std::fs::read_dir(&b.raw_dir)?
        .flatten()
        .filter(|e| e.path().extension().is_some_and(|x| x == "rdt"))
        .count();
    let result = BenchResult {
        task: b.task.clone(),
        baseline_seconds: baseline_s,
        store_seconds: store_s,
        speedup: equal.then(|| baseline_s / store_s.max(f64::MIN_POSITIVE)),
        volumes,
        raw_bytes: dir_bytes(&b.raw_dir),
        store_bytes: dir_bytes(&repo_path.join("objects")),
        equality: if equal { "bitwise-equal" } else { "mismatch" }.into(),
    };
    writeln!(stdout, "{}", serde_json::to_string(&result).expect("json"))?;
    report.bench = Some(result);
    if !equal {
        return Err(Failure::bench_invalid("benchmark invalid: store and baseline products differ"));
    }
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs, report: &mut RunReport, stdout: &mut dyn Write) -> Result<()> {
    let dir = ctx.out().ok_or_else(|| Failure::input("synth needs --out DIR"))?;
    let mut cfg = match &a.synth_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::input(format!("cannot read {}: {e}", p.display())))?;
            SynthConfig::from_toml(&text)?
        }
        None => SynthConfig::new(VcpDefinition::vcp212(), 10, FieldModel::Constant { value: 30.0 }),
    };
    if let Some(v) = &a.vcp {
        cfg.vcp = VcpDefinition::preset(v).ok_or_else(|| Failure::input(format!("unknown VCP preset {v:?}")))?;
    }
    if let Some(n) = a.n_volumes {
        cfg.n_volumes = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_rays {
        cfg.vcp.n_rays = n;
    }
    if let Some(n) = a.n_gates {
        cfg.vcp.n_gates = n;
    }
    if let Some(n) = a.n_sweeps {
        if n == 0 {
            return Err(Failure::input("--n-sweeps must be positive"));
        }
        cfg.vcp.elevations_deg.truncate(n);
    }
    if let Some(f) = &a.field {
        cfg.field = match f.as_str() {
            "constant" => FieldModel::Constant { value: a.value.unwrap_or(30.0) },
            "storm" => FieldModel::GaussianStorm {
                center_x_m: 20_000.0,
                center_y_m: 30_000.0,
                sigma_m: 10_000.0,
                peak_dbz: a.value.unwrap_or(50.0),
                advection_u_ms: 10.0,
                advection_v_ms: 5.0,
            },
            "noise" => FieldModel::Noise { mean: a.value.unwrap_or(20.0), stddev: 5.0 },
            other => return Err(Failure::input(format!("unknown field {other:?} (expected constant, storm or noise)"))),
        };
    } else if let (Some(v), FieldModel::Constant { value }) = (a.value, &mut cfg.field) {
        *value = v;
    }
    if let Some(ms) = &a.moments {
        cfg.moments = ms
            .iter()
            .map(|m| MomentKind::from_code(m).ok_or_else(|| Failure::input(format!("unknown moment {m:?}"))))
            .collect::<Result<_>>()?;
    }
    if let Some(t) = &a.start_time {
        cfg.start_time = parse_time(t, "--start-time")?;
    }
    report.param("out", &dir);
    report.param("vcp", &cfg.vcp);
    report.param("n_volumes", cfg.n_volumes);
    report.param("seed", cfg.seed);
    report.param("field", &cfg.field);
    report.param("moments", cfg.moments.iter().map(|m| m.code()).collect::<Vec<_>>());
    report.param("start_time", cfg.start_time.to_rfc3339());

    let volumes = generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&dir)?;
    let mut written = 0;
    for v in &volumes {
        let bytes = encode_rdt_raw(v)?;
        let stamp = chrono::DateTime::from_timestamp_nanos(v.volume_time.nanos()).format("%Y%m%dT%H%M%SZ");
        std::fs::write(dir.join(format!("{}_{}_{stamp}.rdt", v.site.id, v.vcp_name)), &bytes)?;
        written += bytes.len() as u64;
    }
    report.bytes_written = written;
    writeln!(stdout, "{} volume(s) written to {}", volumes.len(), dir.display())?;
    Ok(())
}
