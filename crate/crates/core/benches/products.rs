//! Product kernels over an in-memory store, on the default thread pool and on
//! a single-thread pool. Build with `--no-default-features` for the fully
//! sequential code path.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rdt_core::analysis::{accumulate_qpe, qvp, ZrParams, DEFAULT_MAX_GAP_S};
use rdt_core::chunkstore::{store_tree, ChunkPolicy, MemObjectStore, ObjectStore, SnapshotReader, StagingArea};
use rdt_core::ingest::{generate_synthetic, FieldModel, SynthConfig, VcpDefinition};
use rdt_core::model::{build_tree, MomentKind};
use rdt_core::TimeRange;

fn fixture(n_volumes: usize) -> SnapshotReader {
    let mut vcp = VcpDefinition::vcp212();
    vcp.elevations_deg.truncate(2);
    vcp.n_gates = 200;
    let mut cfg = SynthConfig::new(
        vcp,
        n_volumes,
        FieldModel::GaussianStorm {
            center_x_m: 20_000.0,
            center_y_m: 30_000.0,
            sigma_m: 10_000.0,
            peak_dbz: 50.0,
            advection_u_ms: 10.0,
            advection_v_ms: 5.0,
        },
    );
    cfg.seed = 7;
    let tree = build_tree(&generate_synthetic(&cfg).unwrap()).unwrap();
    let store: Arc<dyn ObjectStore> = Arc::new(MemObjectStore::new());
    let mut stage = StagingArea::new(store.clone(), Default::default());
    store_tree(&mut stage, &tree, &ChunkPolicy::default()).unwrap();
    SnapshotReader::new(Arc::new(stage.into_manifest()), store)
}

fn pools() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    if rdt_core::par::is_parallel() {
        vec![("parallel", None), ("one-thread", Some(single))]
    } else {
        vec![("sequential", None)]
    }
}

fn on<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn products(c: &mut Criterion) {
    let reader = fixture(96);
    let zr = ZrParams::default();
    let mut g = c.benchmark_group("products");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("qvp", name), &pool, |b, pool| {
            b.iter(|| on(pool, || qvp(&reader, "VCP-212", 0, MomentKind::Dbzh, &TimeRange::ALL, 0.5).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("qpe", name), &pool, |b, pool| {
            b.iter(|| on(pool, || accumulate_qpe(&reader, "VCP-212", 0, &TimeRange::ALL, &zr, DEFAULT_MAX_GAP_S).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, products);
criterion_main!(benches);
