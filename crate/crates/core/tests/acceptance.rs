//! End-to-end acceptance suite: nine pinned criteria, one test each. A
//! shared gate serializes them so wall-clock measurements stay honest under
//! any test-thread count, and every test prints a single
//! `criterion N: PASS/FAIL (...)` line with its measured numbers before
//! asserting, so a red run still documents what the machine did.
//!
//! Large corpora and on-disk stores build once under the target tmp dir and
//! are shared between criteria. Run with `--test-threads=1 --nocapture` to
//! watch the lines as they appear.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use gapnet_core::corpus::{self, CorpusSpec, Record, Style, TargetKind};
use gapnet_core::dataload::{
    collate, eval_batches, make_loader, object_store_init, open_source, shard_indices,
    stream_checksum, try_drop_page_cache, Backend, DataSource, MemorySource,
};
use gapnet_core::ddp::{in_proc_mesh, train_step, PhaseTimings, ReduceAlgo};
use gapnet_core::gcnn::{
    backward, degree_stat, evaluate, forward, init_params, mse_loss, Aggregator, Hyper,
    ModelConfig, ModelState, Scaler, TypedBatch,
};
use gapnet_core::gpack::{create_writer, merge_index, open_reader, GpackSchema};
use gapnet_core::graphenc::{
    encode_graph, split_dataset, FeatureVocab, GraphSample, SplitSpec, EDGE_FEATURE_COUNT,
};
use gapnet_core::smiles::{expand_hydrogens, parse_smiles, Molecule};

// ---------------------------------------------------------------------------
// Harness

static GATE: Mutex<()> = Mutex::new(());

/// Serializes criteria; a failed (panicked) criterion must not block later
/// ones, so poisoning is ignored.
fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(std::sync::PoisonError::into_inner)
}

fn verdict(n: u32, ok: bool, details: &str) {
    println!("criterion {n}: {} ({details})", if ok { "PASS" } else { "FAIL" });
}

fn acceptance_tmp() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).expect("create acceptance tmp dir");
    dir
}

fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn parse_expanded(smiles: &str) -> Molecule {
    expand_hydrogens(parse_smiles(smiles).expect("generated corpus parses"))
}

fn organic(count: usize, seed: u64, min: usize, max: usize, target: TargetKind) -> Vec<Record> {
    corpus::generate(&CorpusSpec {
        count,
        seed,
        style: Style::Organic {
            min_heavy: min,
            max_heavy: max,
        },
        target,
    })
}

fn encode_corpus(records: &[Record]) -> (Vec<GraphSample>, FeatureVocab) {
    let mols: Vec<Molecule> = records.iter().map(|r| parse_expanded(&r.smiles)).collect();
    let vocab = FeatureVocab::collect_from_molecules(mols.iter()).expect("vocab");
    let samples = mols
        .iter()
        .zip(records)
        .enumerate()
        .map(|(i, (m, r))| encode_graph(m, &vocab, r.target_ev, i as u64).expect("encode"))
        .collect();
    (samples, vocab)
}

// 10k-molecule corpus shared by the DDP-equivalence and backend-equality
// criteria.
struct Mid {
    records: Vec<Record>,
    samples: Vec<GraphSample>,
    vocab: FeatureVocab,
}

const MID_N: usize = 10_000;
static MID: OnceLock<Mid> = OnceLock::new();

fn mid_corpus() -> &'static Mid {
    MID.get_or_init(|| {
        let records = organic(MID_N, 17, 4, 16, TargetKind::DftLike);
        let (samples, vocab) = encode_corpus(&records);
        Mid {
            records,
            samples,
            vocab,
        }
    })
}

// 100k-molecule corpus materialized three ways (delimited text, object
// store, packed container), identical record for identical id everywhere.
struct BigStore {
    csv: PathBuf,
    object_root: PathBuf,
    gpack_dir: PathBuf,
    vocab: FeatureVocab,
    n: u64,
}

const BIG_N: usize = 100_000;
const BIG_SEED: u64 = 41;
const BIG_MIN_HEAVY: usize = 12;
const BIG_MAX_HEAVY: usize = 40;
static BIG: OnceLock<BigStore> = OnceLock::new();

fn big_records() -> Vec<Record> {
    organic(BIG_N, BIG_SEED, BIG_MIN_HEAVY, BIG_MAX_HEAVY, TargetKind::DftLike)
}

fn big_store() -> &'static BigStore {
    BIG.get_or_init(|| {
        let dir = acceptance_tmp();
        let csv = dir.join("big.csv");
        let object_root = dir.join("big_object");
        let gpack_dir = dir.join("big.gpack");

        let records = big_records();
        corpus::write_csv(&csv, &records, false).expect("write corpus csv");
        let mols: Vec<Molecule> = records.iter().map(|r| parse_expanded(&r.smiles)).collect();
        let vocab = FeatureVocab::collect_from_molecules(mols.iter()).expect("vocab");
        let schema = GpackSchema::for_vocab(&vocab);

        let mut pw = create_writer(&gpack_dir, &schema, 8, 0, 1, true).expect("gpack writer");
        let mut ow = object_store_init(&object_root, &vocab, true).expect("object writer");
        for (i, (mol, rec)) in mols.iter().zip(&records).enumerate() {
            let s = encode_graph(mol, &vocab, rec.target_ev, i as u64).expect("encode");
            pw.append_graph(&s).expect("append graph");
            ow.write_record(&s).expect("write record");
        }
        pw.finalize().expect("finalize gpack");
        merge_index(&gpack_dir, 1).expect("merge index");
        ow.finalize().expect("finalize object store");

        BigStore {
            csv,
            object_root,
            gpack_dir,
            vocab,
            n: BIG_N as u64,
        }
    })
}

/// Allocated bytes (st_blocks * 512) of a file tree, the honest on-disk
/// footprint including per-file slack.
fn tree_alloc_bytes(path: &Path) -> u64 {
    use std::os::unix::fs::MetadataExt;
    let meta = fs::symlink_metadata(path).expect("stat");
    let mut total = meta.blocks() * 512;
    if meta.is_dir() {
        for entry in fs::read_dir(path).expect("read dir") {
            total += tree_alloc_bytes(&entry.expect("dir entry").path());
        }
    }
    total
}

const MIB: f64 = 1024.0 * 1024.0;

// ---------------------------------------------------------------------------
// Criterion 1: gradient correctness against central finite differences.

const FD_H: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;
const FD_GRAPHS: usize = 20;

fn fd_config(aggs: &[Aggregator], scalers: &[Scaler], edge: bool) -> ModelConfig {
    ModelConfig {
        num_conv_layers: 2,
        hidden_width: 6,
        fc_layers: 2,
        aggregators: aggs.to_vec(),
        scalers: scalers.to_vec(),
        node_features: common::NODE_F,
        edge_features: common::EDGE_F,
        use_edge_features: edge,
    }
}

fn batch_loss(state: &ModelState<f64>, typed: &TypedBatch<f64>) -> f64 {
    let tape = forward(&state.params, &state.config, state.delta, typed).expect("forward");
    mse_loss(tape.predictions(), &typed.y).expect("loss")
}

/// Random small graph where every node has at least one incoming edge. A
/// zero-degree node's pre-activation equals the zero-initialized bias, which
/// sits exactly on the relu kink where central differences straddle the
/// subgradient; encoded molecules always have degree >= 1, so the check
/// stays on the data domain.
fn fd_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> common::RawGraph {
    let n = rng.gen_range(1..=max_nodes);
    let m = n + rng.gen_range(0..=n + 4);
    let mut edge_index = Array2::zeros((2, m));
    for e in 0..m {
        edge_index[[0, e]] = rng.gen_range(0..n) as i64;
        edge_index[[1, e]] = if e < n { e as i64 } else { rng.gen_range(0..n) as i64 };
    }
    common::RawGraph {
        x: Array2::from_shape_fn((n, common::NODE_F), |_| rng.gen_range(-1.0..1.0)),
        edge_index,
        edge_attr: Array2::from_shape_fn((m, common::EDGE_F), |_| rng.gen_range(0.0..1.0)),
        y: rng.gen_range(-1.0..1.0),
    }
}

/// Central differences over every parameter of `config` on a fresh batch of
/// random graphs, compared at the pinned step. Every estimate is
/// cross-checked against a 10x finer step first: near message ties the std
/// aggregator's sqrt(var + eps) curvature defeats any fixed-step central
/// difference (the estimate flips sign under step refinement while the
/// analytic value stays put), so a draw is usable only when the two steps
/// agree on every parameter. That decision never reads the analytic side,
/// so a wrong gradient still fails every draw. Returns None for an
/// ill-conditioned draw, otherwise (max relative error, parameter count).
fn fd_try_draw(config: &ModelConfig, seed: u64) -> Option<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs: Vec<common::RawGraph> = (0..FD_GRAPHS)
        .map(|_| fd_graph(&mut rng, 9))
        .collect();
    let typed = common::batch_of(&graphs);
    let delta = rng.gen_range(0.8..1.6);
    let mut state = init_params::<f64>(config, rng.gen(), delta).expect("init");

    let tape = forward(&state.params, config, delta, &typed).expect("forward");
    let analytic = backward(&state.params, config, delta, &typed, &tape)
        .expect("backward")
        .flatten();

    let mut theta = state.params.flatten();
    let central = |state: &mut ModelState<f64>, theta: &mut [f64], i: usize, h: f64| {
        let orig = theta[i];
        theta[i] = orig + h;
        state.params.unflatten_from(theta);
        let above = batch_loss(state, &typed);
        theta[i] = orig - h;
        state.params.unflatten_from(theta);
        let below = batch_loss(state, &typed);
        theta[i] = orig;
        state.params.unflatten_from(theta);
        (above - below) / (2.0 * h)
    };

    let mut max_rel = 0.0f64;
    for i in 0..theta.len() {
        let numeric = central(&mut state, &mut theta, i, FD_H);
        let fine = central(&mut state, &mut theta, i, FD_H / 10.0);
        if (numeric - fine).abs() > 1e-5 + 1e-3 * numeric.abs().max(fine.abs()) {
            return None;
        }
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-3);
        max_rel = max_rel.max(rel);
    }
    Some((max_rel, theta.len()))
}

/// Runs `fd_try_draw` over a deterministic seed sequence until a
/// well-conditioned draw appears; returns its result plus the reject count.
fn fd_max_rel(config: &ModelConfig, base_seed: u64) -> (f64, usize, u32) {
    for attempt in 0..10u64 {
        if let Some((rel, n)) = fd_try_draw(config, base_seed + 101 * attempt) {
            return (rel, n, attempt as u32);
        }
    }
    panic!("10 consecutive draws ill-conditioned for finite differences (seed base {base_seed})");
}

#[test]
fn criterion_1_gradient_correctness() {
    let _g = gate();
    let started = Instant::now();

    let mut combos: Vec<(String, ModelConfig)> = Vec::new();
    for agg in Aggregator::ALL {
        combos.push((
            format!("{agg:?}/Identity"),
            fd_config(&[agg], &[Scaler::Identity], true),
        ));
        combos.push((
            format!("{agg:?}/Amplification"),
            fd_config(&[agg], &[Scaler::Identity, Scaler::Amplification], true),
        ));
        combos.push((
            format!("{agg:?}/Attenuation"),
            fd_config(&[agg], &[Scaler::Identity, Scaler::Attenuation], true),
        ));
    }
    combos.push((
        "all/all".to_string(),
        fd_config(&Aggregator::ALL, &Scaler::ALL, true),
    ));
    combos.push((
        "all/all,node-only".to_string(),
        fd_config(&Aggregator::ALL, &Scaler::ALL, false),
    ));

    let mut worst = (String::new(), 0.0f64);
    let mut total_params = 0usize;
    let mut rejected = 0u32;
    for (i, (name, config)) in combos.iter().enumerate() {
        let (rel, n_params, rejects) = fd_max_rel(config, 1000 + i as u64);
        total_params += n_params;
        rejected += rejects;
        if rel > worst.1 {
            worst = (name.clone(), rel);
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    let ok = worst.1 <= FD_TOL && elapsed < 60.0;
    verdict(
        1,
        ok,
        &format!(
            "max rel err {:.3e} [{}] <= {FD_TOL:.0e} over {} combos x {FD_GRAPHS} graphs, {} params, {rejected} ill-conditioned draws redrawn, {elapsed:.1}s < 60s",
            worst.1, worst.0, combos.len(), total_params
        ),
    );
    assert!(
        ok,
        "finite-difference check: max rel err {:.3e} at {} (tol {FD_TOL:.0e}), runtime {elapsed:.1}s",
        worst.1, worst.0
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: DDP equivalence across world sizes.

const C2_STEPS: usize = 50;
const C2_GLOBAL_BATCH: usize = 128;

fn c2_config(node_features: usize) -> ModelConfig {
    ModelConfig {
        num_conv_layers: 3,
        hidden_width: 24,
        fc_layers: 2,
        aggregators: Aggregator::ALL.to_vec(),
        scalers: Scaler::ALL.to_vec(),
        node_features,
        edge_features: EDGE_FEATURE_COUNT,
        use_edge_features: true,
    }
}

/// Runs 50 synchronized steps at the given world size over a fixed global
/// batch stream (rank r takes the r-th contiguous slice of each global
/// batch) and returns rank 0's flattened parameters.
fn c2_run(
    world: u32,
    order: &[u64],
    samples: &[GraphSample],
    config: &ModelConfig,
    delta: f64,
) -> Vec<f64> {
    let local = C2_GLOBAL_BATCH / world as usize;
    let mesh = in_proc_mesh(world, Duration::from_secs(300));
    let flats: Vec<Vec<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = mesh
            .into_iter()
            .enumerate()
            .map(|(r, tr)| {
                s.spawn(move || {
                    let hyper = Hyper::default();
                    let mut state = init_params::<f64>(config, 7, delta).expect("init");
                    let mut t = PhaseTimings::default();
                    for step in 0..C2_STEPS {
                        let base = step * C2_GLOBAL_BATCH + r * local;
                        let graphs: Vec<GraphSample> = order[base..base + local]
                            .iter()
                            .map(|&i| samples[i as usize].clone())
                            .collect();
                        let batch = collate(&graphs).expect("collate");
                        train_step(&tr, &mut state, &batch, &hyper, ReduceAlgo::RankAscending, &mut t)
                            .expect("train step");
                    }
                    state.params.flatten()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rank thread")).collect()
    });
    for r in 1..flats.len() {
        assert!(
            flats[0] == flats[r],
            "ranks 0 and {r} disagree bitwise after {C2_STEPS} steps (world {world})"
        );
    }
    flats.into_iter().next().expect("rank 0 params")
}

#[test]
fn criterion_2_ddp_equivalence() {
    let _g = gate();
    let mid = mid_corpus();
    let started = Instant::now();

    let config = c2_config(mid.vocab.node_feature_count());
    let delta = degree_stat(&mid.samples);
    let mut order: Vec<u64> = (0..MID_N as u64).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(555));
    order.truncate(C2_STEPS * C2_GLOBAL_BATCH);

    let reference = c2_run(1, &order, &mid.samples, &config, delta);
    let mut details = String::new();
    let mut worst = 0.0f64;
    for world in [2u32, 4, 8] {
        let params = c2_run(world, &order, &mid.samples, &config, delta);
        assert_eq!(params.len(), reference.len());
        let mut max_rel = 0.0f64;
        for (&a, &b) in reference.iter().zip(&params) {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-9);
            max_rel = max_rel.max(rel);
        }
        details.push_str(&format!("W={world}: {max_rel:.3e}  "));
        worst = worst.max(max_rel);
    }

    let elapsed = started.elapsed().as_secs_f64();
    let ok = worst <= 1e-6 && elapsed < 600.0;
    verdict(
        2,
        ok,
        &format!(
            "max param divergence {details}<= 1e-6, batch {C2_GLOBAL_BATCH} split over ranks, {C2_STEPS} steps, {} params, {elapsed:.1}s < 600s",
            reference.len()
        ),
    );
    assert!(
        ok,
        "DDP equivalence: worst divergence {worst:.3e} (tol 1e-6), runtime {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: cross-backend equality of batch streams.

#[test]
fn criterion_3_cross_backend_equality() {
    let _g = gate();
    let mid = mid_corpus();
    let started = Instant::now();

    let dir = acceptance_tmp();
    let csv = dir.join("mid.csv");
    let object_root = dir.join("mid_object");
    let gpack_dir = dir.join("mid.gpack");
    corpus::write_csv(&csv, &mid.records, false).expect("write csv");

    // Three writers over contiguous ascending ranges: writer-major merge
    // order then makes every merged id equal its record id.
    let schema = GpackSchema::for_vocab(&mid.vocab);
    let bounds = [(0usize, 3400usize), (3400, 3300), (6700, 3300)];
    let mut writers: Vec<_> = (0..3u32)
        .map(|w| create_writer(&gpack_dir, &schema, 4, w, 3, w == 0).expect("create writer"))
        .collect();
    for (w, (start, len)) in writers.iter_mut().zip(bounds) {
        for s in &mid.samples[start..start + len] {
            w.append_graph(s).expect("append");
        }
    }
    for w in writers {
        w.finalize().expect("finalize writer");
    }
    merge_index(&gpack_dir, 3).expect("merge index");

    let mut ow = object_store_init(&object_root, &mid.vocab, true).expect("object init");
    for s in &mid.samples {
        ow.write_record(s).expect("write record");
    }
    ow.finalize().expect("object finalize");

    let all: Vec<u64> = (0..MID_N as u64).collect();
    let mut sums: Vec<(&'static str, Vec<u64>)> = Vec::new();
    for (backend, path) in [
        (Backend::Inline, csv.as_path()),
        (Backend::Object, object_root.as_path()),
        (Backend::Packed, gpack_dir.as_path()),
    ] {
        let src = open_source(backend, path).expect("open source");
        let mut per_epoch = Vec::new();
        for epoch in 0..2u64 {
            let ids = shard_indices(&all, 0, 1, 99, epoch);
            let loader = make_loader(Arc::clone(&src), &ids, 128, 2);
            per_epoch.push(stream_checksum(loader).expect("stream"));
        }
        sums.push((backend.name(), per_epoch));
    }

    let ok_streams = sums.iter().all(|(_, s)| s == &sums[0].1);
    let elapsed = started.elapsed().as_secs_f64();
    let ok = ok_streams && elapsed < 300.0;
    verdict(
        3,
        ok,
        &format!(
            "checksums {} for {} molecules x 2 epochs across {}, {elapsed:.1}s < 300s",
            sums[0]
                .1
                .iter()
                .map(|c| format!("{c:016x}"))
                .collect::<Vec<_>>()
                .join("/"),
            MID_N,
            sums.iter().map(|(n, _)| *n).collect::<Vec<_>>().join("+"),
        ),
    );
    assert!(
        ok,
        "cross-backend streams diverge or overran budget: {sums:?}, runtime {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: container roundtrip and size.

fn bit_identical(a: &GraphSample, b: &GraphSample) -> bool {
    a.id == b.id
        && a.x.shape() == b.x.shape()
        && a.edge_index == b.edge_index
        && a.edge_attr.shape() == b.edge_attr.shape()
        && a.y.to_bits() == b.y.to_bits()
        && a.x.iter().zip(b.x.iter()).all(|(p, q)| p.to_bits() == q.to_bits())
        && a
            .edge_attr
            .iter()
            .zip(b.edge_attr.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits())
}

#[test]
fn criterion_4_container_roundtrip_and_size() {
    let _g = gate();
    let big = big_store();
    let started = Instant::now();

    let reader = open_reader(&big.gpack_dir).expect("open reader");
    assert_eq!(reader.num_graphs(), big.n, "container holds the full corpus");
    reader.verify_data().expect("subfile checksums");

    // The corpus is deterministic, so an independent re-encode of each
    // record is the exact payload the writer was handed.
    let records = big_records();
    let mut mismatches = 0u64;
    for (i, rec) in records.iter().enumerate() {
        let want = encode_graph(&parse_expanded(&rec.smiles), &big.vocab, rec.target_ev, i as u64)
            .expect("encode");
        let got = reader.read_graph(i as u64).expect("read graph");
        if !bit_identical(&got, &want) {
            mismatches += 1;
            if mismatches <= 3 {
                println!("  [4] graph {i} differs after roundtrip");
            }
        }
    }

    let packed = tree_alloc_bytes(&big.gpack_dir);
    let object = tree_alloc_bytes(&big.object_root);
    let ratio = packed as f64 / object as f64;

    let elapsed = started.elapsed().as_secs_f64();
    let ok = mismatches == 0 && ratio <= 0.8;
    verdict(
        4,
        ok,
        &format!(
            "{} graphs bit-exact ({mismatches} mismatches), packed {:.0} MiB vs object {:.0} MiB, ratio {ratio:.3} <= 0.8, {elapsed:.0}s",
            big.n,
            packed as f64 / MIB,
            object as f64 / MIB,
        ),
    );
    assert!(
        ok,
        "roundtrip mismatches {mismatches}, size ratio {ratio:.3} (required <= 0.8)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: cold-cache I/O throughput ordering.

const C5_REPEATS: usize = 5;

#[test]
fn criterion_5_io_throughput() {
    let _g = gate();
    let big = big_store();
    let started = Instant::now();

    let backends = [
        (Backend::Packed, big.gpack_dir.as_path()),
        (Backend::Object, big.object_root.as_path()),
        (Backend::Inline, big.csv.as_path()),
    ];
    // Sources open once, as in a training run; only the epoch streams are
    // timed, each from a freshly dropped page cache.
    let sources: Vec<(&'static str, Arc<dyn DataSource>)> = backends
        .iter()
        .map(|(b, p)| (b.name(), open_source(*b, p).expect("open source")))
        .collect();

    let all: Vec<u64> = (0..big.n).collect();
    let mut times: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    let mut cold = true;
    for repeat in 0..C5_REPEATS {
        let ids = shard_indices(&all, 0, 1, 1234, repeat as u64);
        let mut repeat_sums = Vec::new();
        for (name, src) in &sources {
            cold &= try_drop_page_cache();
            let t = Instant::now();
            let loader = make_loader(Arc::clone(src), &ids, 128, 2);
            // Pure-loading time: consume each batch with an O(B) fold over
            // ids and shape totals so the clock sees fetch + collate, not a
            // full-content hash. Byte-level equality is criterion 3's job.
            let mut sum = (0u64, 0u64, 0u64);
            for batch in loader {
                let b = batch.expect("stream batch");
                sum.0 = sum.0.wrapping_add(b.ids.iter().sum::<u64>());
                sum.1 += b.num_nodes() as u64;
                sum.2 += b.num_edges() as u64;
            }
            times.entry(name).or_default().push(t.elapsed().as_secs_f64());
            repeat_sums.push(sum);
        }
        assert!(
            repeat_sums.iter().all(|s| *s == repeat_sums[0]),
            "backends streamed different batches in repeat {repeat}: {repeat_sums:x?}"
        );
    }

    let med = |name: &str| median(&times[name]);
    let (packed, object, inline) = (med("packed"), med("object"), med("inline"));
    let elapsed = started.elapsed().as_secs_f64();
    let ok = packed <= 0.5 * object && packed <= 0.5 * inline && cold && elapsed < 1800.0;
    verdict(
        5,
        ok,
        &format!(
            "medians over {C5_REPEATS} cold-cache epochs of {} graphs: packed {packed:.2}s, object {object:.2}s ({:.1}x), inline {inline:.2}s ({:.1}x); need >= 2x both; cache drops {}; {elapsed:.0}s < 1800s",
            big.n,
            object / packed,
            inline / packed,
            if cold { "effective" } else { "UNAVAILABLE" },
        ),
    );
    assert!(
        ok,
        "throughput ordering: packed {packed:.2}s vs object {object:.2}s vs inline {inline:.2}s (packed must lead by >= 2x), cold={cold}, runtime {elapsed:.0}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: desk-scale strong scaling.

const C6_EPOCH_SAMPLES: usize = 12_800;
const C6_GLOBAL_BATCH: usize = 256; // exactly 50 batches per worker at every W

fn c6_config(node_features: usize) -> ModelConfig {
    ModelConfig {
        num_conv_layers: 2,
        hidden_width: 16,
        fc_layers: 2,
        aggregators: Aggregator::ALL.to_vec(),
        scalers: Scaler::ALL.to_vec(),
        node_features,
        edge_features: EDGE_FEATURE_COUNT,
        use_edge_features: true,
    }
}

/// One fixed-size training epoch at world size `world`; returns the epoch
/// wall time and every rank's phase timings.
fn c6_epoch(
    world: u32,
    src: &Arc<dyn DataSource>,
    config: &ModelConfig,
    delta: f64,
    all: &[u64],
    epoch: u64,
) -> (f64, Vec<PhaseTimings>) {
    let local_batch = C6_GLOBAL_BATCH / world as usize;
    let mesh = in_proc_mesh(world, Duration::from_secs(300));
    let wall = Instant::now();
    let per_rank: Vec<PhaseTimings> = std::thread::scope(|s| {
        let handles: Vec<_> = mesh
            .into_iter()
            .enumerate()
            .map(|(r, tr)| {
                let src = Arc::clone(src);
                s.spawn(move || {
                    let hyper = Hyper::default();
                    let mut state = init_params::<f64>(config, 11, delta).expect("init");
                    let mut t = PhaseTimings::default();
                    let epoch_start = Instant::now();
                    let ids = shard_indices(all, r as u32, world, 77, epoch);
                    assert_eq!(ids.len() * world as usize, C6_EPOCH_SAMPLES);
                    assert_eq!(ids.len() / local_batch, 50, "50 batches per worker");
                    let mut loader = make_loader(src, &ids, local_batch, 2);
                    loop {
                        let wait = Instant::now();
                        let Some(next) = loader.next() else { break };
                        t.dataload += wait.elapsed().as_secs_f64();
                        let batch = next.expect("batch");
                        train_step(&tr, &mut state, &batch, &hyper, ReduceAlgo::Ring, &mut t)
                            .expect("train step");
                    }
                    t.total = epoch_start.elapsed().as_secs_f64();
                    t
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rank thread")).collect()
    });
    (wall.elapsed().as_secs_f64(), per_rank)
}

#[test]
fn criterion_6_strong_scaling() {
    let _g = gate();
    let records = organic(C6_EPOCH_SAMPLES, 23, 4, 16, TargetKind::DftLike);
    let (samples, vocab) = encode_corpus(&records);
    let config = c6_config(vocab.node_feature_count());
    let delta = degree_stat(&samples);
    let src: Arc<dyn DataSource> = Arc::new(MemorySource::new(samples, vocab));
    let all: Vec<u64> = (0..C6_EPOCH_SAMPLES as u64).collect();
    let started = Instant::now();

    c6_epoch(1, &src, &config, delta, &all, 0); // warmup, untimed

    let worlds = [1u32, 2, 4, 8];
    let mut epoch_medians = Vec::new();
    let mut decomposition_ok = true;
    for &world in &worlds {
        let mut walls = Vec::new();
        for repeat in 0..3u64 {
            let (wall, per_rank) = c6_epoch(world, &src, &config, delta, &all, 1 + repeat);
            walls.push(wall);
            for (r, t) in per_rank.iter().enumerate() {
                let fields = [t.dataload, t.forward, t.backward, t.optimizer, t.gradient_aggregation];
                let sum = t.phase_sum();
                let covers = sum <= t.total * 1.02 + 0.005 && sum >= 0.6 * t.total;
                if fields.iter().any(|&f| f < 0.0) || !covers {
                    decomposition_ok = false;
                    println!(
                        "  [6] W={world} rank {r}: phases sum {sum:.3}s vs total {:.3}s out of bounds",
                        t.total
                    );
                }
            }
        }
        epoch_medians.push(median(&walls));
    }

    let t1 = epoch_medians[0];
    let mut details = format!("T1 {t1:.2}s");
    let mut scaling_ok = true;
    for (i, &world) in worlds.iter().enumerate().skip(1) {
        let speedup = t1 / epoch_medians[i];
        details.push_str(&format!(
            ", W={world}: {:.2}s speedup {speedup:.2} (need {:.2})",
            epoch_medians[i],
            0.7 * world as f64
        ));
        scaling_ok &= speedup >= 0.7 * world as f64;
    }

    let elapsed = started.elapsed().as_secs_f64();
    let ok = scaling_ok && decomposition_ok;
    verdict(
        6,
        ok,
        &format!(
            "{C6_EPOCH_SAMPLES}-sample epochs, median of 3: {details}; phase decomposition {}; {elapsed:.0}s",
            if decomposition_ok { "consistent" } else { "inconsistent" },
        ),
    );
    assert!(
        ok,
        "strong scaling: {details}; decomposition_ok={decomposition_ok} (speedup must reach 0.7*W on a multi-core machine)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: trainability smoke test.

/// One training epoch over `train` followed by an evaluation over `eval_ids`;
/// returns the evaluation MAE.
#[allow(clippy::too_many_arguments)]
fn c7_epoch(
    state: &mut ModelState<f32>,
    tr: &gapnet_core::ddp::InProcTransport,
    src: &Arc<dyn DataSource>,
    train: &[u64],
    eval_ids: &[u64],
    hyper: &Hyper,
    seed: u64,
    epoch: u64,
) -> f64 {
    let ids = shard_indices(train, 0, 1, seed, epoch);
    let loader = make_loader(Arc::clone(src), &ids, hyper.local_batch_size, 2);
    let mut t = PhaseTimings::default();
    for batch in loader {
        train_step(tr, state, &batch.expect("batch"), hyper, ReduceAlgo::Ring, &mut t)
            .expect("train step");
    }
    evaluate(state, eval_batches(Arc::clone(src), eval_ids, 256))
        .expect("evaluate")
        .mae
}

#[test]
fn criterion_7_trainability() {
    let _g = gate();
    let started = Instant::now();

    // (a) default-architecture model on 20k molecules with the scaled
    // heavy-atom-count target: validation MAE < 0.05 within 30 epochs.
    let records = organic(20_000, 29, 4, 16, TargetKind::ScaledHeavyCount);
    let (samples, vocab) = encode_corpus(&records);
    let splits = split_dataset(samples.len(), &SplitSpec::default()).expect("split");
    let delta = degree_stat(splits.train.iter().map(|&i| &samples[i as usize]));
    let src: Arc<dyn DataSource> = Arc::new(MemorySource::new(samples, vocab.clone()));
    let config = ModelConfig::new(vocab.node_feature_count(), EDGE_FEATURE_COUNT);
    let hyper = Hyper::default();
    let mesh = in_proc_mesh(1, Duration::from_secs(60));
    let mut state = init_params::<f32>(&config, 3, delta).expect("init");
    let mut reached = None;
    for epoch in 0..30u64 {
        let mae = c7_epoch(&mut state, &mesh[0], &src, &splits.train, &splits.val, &hyper, 404, epoch);
        println!("  [7a] epoch {epoch}: val mae {mae:.4}");
        if mae < 0.05 {
            reached = Some((epoch + 1, mae));
            break;
        }
    }
    let a_elapsed = started.elapsed().as_secs_f64();

    // (b) 50k molecules with DFT-style targets: the 5-epoch moving average
    // of training MAE must decrease monotonically. Absolute parity with any
    // reference values is out of scope.
    let b_started = Instant::now();
    let records = organic(50_000, 31, 4, 16, TargetKind::DftLike);
    let (samples, vocab) = encode_corpus(&records);
    let splits = split_dataset(samples.len(), &SplitSpec::default()).expect("split");
    let delta = degree_stat(splits.train.iter().map(|&i| &samples[i as usize]));
    let src: Arc<dyn DataSource> = Arc::new(MemorySource::new(samples, vocab.clone()));
    let config = ModelConfig::new(vocab.node_feature_count(), EDGE_FEATURE_COUNT);
    let mut state = init_params::<f32>(&config, 5, delta).expect("init");
    let mut train_maes = Vec::new();
    for epoch in 0..8u64 {
        let mae = c7_epoch(&mut state, &mesh[0], &src, &splits.train, &splits.train, &hyper, 505, epoch);
        println!("  [7b] epoch {epoch}: train mae {mae:.4}");
        train_maes.push(mae);
    }
    let ma: Vec<f64> = train_maes.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    let monotone = ma.windows(2).all(|p| p[1] < p[0]);
    let b_elapsed = b_started.elapsed().as_secs_f64();

    let ok = reached.is_some() && monotone;
    let (epochs_used, final_mae) = reached.unwrap_or((30, f64::NAN));
    verdict(
        7,
        ok,
        &format!(
            "20k synthetic-target run hit val MAE {final_mae:.4} < 0.05 in {epochs_used} epochs ({a_elapsed:.0}s); 50k run 5-epoch MA {} over 8 epochs ({b_elapsed:.0}s)",
            if monotone { "monotone decreasing" } else { "NOT monotone" },
        ),
    );
    assert!(
        ok,
        "trainability: reached={reached:?} (need MAE < 0.05 within 30 epochs), moving average {ma:?} monotone={monotone}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: parser fixture suite.

#[test]
fn criterion_8_parser_fixture() {
    let _g = gate();
    let started = Instant::now();

    let (rows, failures) = common::fixture_failures();
    let malformed_total = common::malformed_smiles_cases().len();
    let malformed_failures = common::malformed_case_failures();

    let elapsed = started.elapsed().as_secs_f64();
    let ok = rows == 1000 && failures.is_empty() && malformed_failures.is_empty();
    verdict(
        8,
        ok,
        &format!(
            "{}/{rows} fixture molecules match, {}/{malformed_total} malformed inputs return their specified kinds, {elapsed:.1}s",
            rows - failures.len(),
            malformed_total - malformed_failures.len(),
        ),
    );
    assert!(
        ok,
        "fixture failures:\n{}\nmalformed failures:\n{}",
        failures.join("\n"),
        malformed_failures.join("\n")
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: invariance suites, 120 random cases each.

#[test]
fn criterion_9_invariance_suites() {
    let _g = gate();
    let started = Instant::now();
    const CASES: u64 = 120;

    let mut results: Vec<(&'static str, Vec<String>)> = Vec::new();

    let run = |check: &dyn Fn(u64) -> Result<(), String>| -> Vec<String> {
        (0..CASES).filter_map(|case| check(case).err()).collect()
    };
    results.push(("permutation-invariance", run(&common::check_permutation_invariance)));
    results.push(("batch-independence", run(&common::check_batch_independence)));
    results.push(("pooling-symmetry", run(&common::check_pooling_symmetry)));

    results.push((
        "shard-partition",
        (0..CASES)
            .filter_map(|case| {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ case);
                let n = rng.gen_range(1..=400usize);
                let world = rng.gen_range(1..=8u32);
                let epoch = rng.gen_range(0..4u64);
                common::check_shard_partition(n, world, rng.gen(), epoch).err()
            })
            .collect(),
    ));
    results.push((
        "split-partition",
        (0..CASES)
            .filter_map(|case| {
                let mut rng = ChaCha8Rng::seed_from_u64(0xbeef ^ case);
                let n = rng.gen_range(12..=1200usize);
                common::check_split_partition(n, rng.gen()).err()
            })
            .collect(),
    ));
    results.push((
        "adamw-zero-grad-decay",
        (0..CASES)
            .filter_map(|case| {
                let mut rng = ChaCha8Rng::seed_from_u64(0xdecade ^ case);
                let lr = 10f64.powf(rng.gen_range(-4.0..-1.0));
                let wd = rng.gen_range(0.0..0.3);
                common::check_adamw_zero_grad_decay(rng.gen(), lr, wd).err()
            })
            .collect(),
    ));

    let elapsed = started.elapsed().as_secs_f64();
    let total_failures: usize = results.iter().map(|(_, f)| f.len()).sum();
    let ok = total_failures == 0;
    verdict(
        9,
        ok,
        &format!(
            "{} suites x {CASES} cases, {total_failures} violations, {elapsed:.1}s",
            results.len()
        ),
    );
    assert!(
        ok,
        "invariance violations:\n{}",
        results
            .iter()
            .flat_map(|(name, fails)| fails.iter().map(move |f| format!("[{name}] {f}")))
            .collect::<Vec<_>>()
            .join("\n")
    );
}
