//! Data-loading backends behind one iterator interface, plus deterministic
//! shuffled disjoint sharding and batch collation.
//!
//! Three backends yield identical [`GraphSample`]s for identical source
//! data:
//!
//! * inline: delimited text kept in memory, SMILES re-converted to a graph
//!   on every fetch;
//! * object: one serialized record per graph in a keyed directory store;
//! * packed: random reads against a gpack container.

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{Receiver, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gpack::{self, GpackSchema};
use crate::graphenc::{encode_graph, FeatureVocab, GraphSample};
use crate::smiles::{expand_hydrogens, parse_smiles};
use crate::wire::{self, Cursor, Fnv64};

const OBJ_MAGIC: &[u8; 4] = b"GOB1";
const OBJ_META_MAGIC: &[u8; 4] = b"GOBM";
const OBJ_VERSION: u32 = 1;
const SEC_SCHEMA: u8 = 1;
const SEC_COUNTS: u8 = 2;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("record {key} unreadable: {detail}")]
    SourceUnreadable { key: String, detail: String },
    #[error("inconsistent feature width: expected {expected}, found {found}")]
    InconsistentFeatureWidth { expected: usize, found: usize },
    #[error("cannot collate an empty batch")]
    EmptyBatch,
    #[error("object store already exists at {0}")]
    StoreExists(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn unreadable(key: impl Into<String>, detail: impl ToString) -> LoadError {
    LoadError::SourceUnreadable {
        key: key.into(),
        detail: detail.to_string(),
    }
}

/// Storage backend selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Inline,
    Object,
    Packed,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Inline => "inline",
            Backend::Object => "object",
            Backend::Packed => "packed",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inline" => Ok(Backend::Inline),
            "object" => Ok(Backend::Object),
            // "gpack" is the container format's name, "packed" the backend's.
            "packed" | "gpack" => Ok(Backend::Packed),
            other => Err(format!(
                "unknown backend {other:?} (expected inline, object, or gpack)"
            )),
        }
    }
}

/// A random-access graph dataset. Implementations are shared across loader
/// threads, so fetches take `&self`.
pub trait DataSource: Send + Sync {
    fn len(&self) -> u64;
    fn vocab(&self) -> &FeatureVocab;
    fn fetch(&self, id: u64) -> Result<GraphSample, LoadError>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Opens a path as the given backend.
pub fn open_source(backend: Backend, path: &Path) -> Result<Arc<dyn DataSource>, LoadError> {
    Ok(match backend {
        Backend::Inline => Arc::new(InlineSource::open(path)?),
        Backend::Object => Arc::new(ObjectSource::open(path)?),
        Backend::Packed => Arc::new(PackedSource::open(path)?),
    })
}

// ---------------------------------------------------------------------------
// Inline backend

struct InlineRow {
    smiles: String,
    target: Result<f32, String>,
}

/// Keeps the delimited text in memory and converts SMILES to a graph on
/// every fetch.
pub struct InlineSource {
    path: PathBuf,
    rows: Vec<InlineRow>,
    vocab: FeatureVocab,
}

impl InlineSource {
    pub fn open(path: &Path) -> Result<Self, LoadError> {
        Self::open_with_columns(path, "smiles", "gap")
    }

    pub fn open_with_columns(
        path: &Path,
        smiles_col: &str,
        target_col: &str,
    ) -> Result<Self, LoadError> {
        let key = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| unreadable(&key, e))?;
        let headers = reader.headers().map_err(|e| unreadable(&key, e))?;
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| unreadable(&key, format!("missing column {name:?}")))
        };
        let si = find(smiles_col)?;
        let ti = find(target_col)?;

        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| unreadable(format!("{key} row {line}"), e))?;
            let smiles = record.get(si).unwrap_or("").to_string();
            let target = match record.get(ti) {
                None => Err(format!("missing {target_col} field")),
                Some(raw) => raw
                    .trim()
                    .parse::<f32>()
                    .map_err(|e| format!("bad target {raw:?}: {e}")),
            };
            rows.push(InlineRow { smiles, target });
        }

        // Vocabulary over every parseable record; unparseable rows keep
        // their index so ids line up across backends, and fail at fetch.
        let mols: Vec<_> = rows
            .iter()
            .filter_map(|r| parse_smiles(&r.smiles).ok())
            .map(expand_hydrogens)
            .collect();
        let vocab = FeatureVocab::collect_from_molecules(&mols)
            .map_err(|_| unreadable(&key, "no parseable records"))?;

        Ok(InlineSource {
            path: path.to_path_buf(),
            rows,
            vocab,
        })
    }
}

impl DataSource for InlineSource {
    fn len(&self) -> u64 {
        self.rows.len() as u64
    }

    fn vocab(&self) -> &FeatureVocab {
        &self.vocab
    }

    fn fetch(&self, id: u64) -> Result<GraphSample, LoadError> {
        let key = || format!("{} row {id}", self.path.display());
        let row = self
            .rows
            .get(id as usize)
            .ok_or_else(|| unreadable(key(), "row index out of range"))?;
        let target = row.target.clone().map_err(|d| unreadable(key(), d))?;
        let mol = parse_smiles(&row.smiles).map_err(|e| unreadable(key(), e))?;
        let mol = expand_hydrogens(mol);
        encode_graph(&mol, &self.vocab, target, id).map_err(|e| unreadable(key(), e))
    }
}

// ---------------------------------------------------------------------------
// Object backend

/// Path of one record: two-level fan-out of 1000 records per directory.
pub fn object_record_path(root: &Path, id: u64) -> PathBuf {
    root.join(format!("{:07}", id / 1000))
        .join(format!("{id:010}.rec"))
}

fn object_meta_path(root: &Path) -> PathBuf {
    root.join("store.meta")
}

/// Writes one record per graph under `root`. Records are keyed by
/// `GraphSample::id`; `finalize` stores the schema and record count.
pub struct ObjectStoreWriter {
    root: PathBuf,
    schema: GpackSchema,
    count: u64,
    last_dir: Option<PathBuf>,
    scratch: Vec<u8>,
}

pub fn object_store_init(
    root: &Path,
    vocab: &FeatureVocab,
    overwrite: bool,
) -> Result<ObjectStoreWriter, LoadError> {
    if object_meta_path(root).exists() {
        if !overwrite {
            return Err(LoadError::StoreExists(root.to_path_buf()));
        }
        fs::remove_dir_all(root)?;
    }
    fs::create_dir_all(root)?;
    Ok(ObjectStoreWriter {
        root: root.to_path_buf(),
        schema: GpackSchema::for_vocab(vocab),
        count: 0,
        last_dir: None,
        scratch: Vec::new(),
    })
}

impl ObjectStoreWriter {
    pub fn write_record(&mut self, g: &GraphSample) -> Result<(), LoadError> {
        let path = object_record_path(&self.root, g.id);
        let dir = path.parent().expect("record path has a parent").to_path_buf();
        if self.last_dir.as_ref() != Some(&dir) {
            fs::create_dir_all(&dir)?;
            self.last_dir = Some(dir);
        }

        self.scratch.clear();
        self.scratch.extend_from_slice(OBJ_MAGIC);
        wire::put_u64(&mut self.scratch, g.id);
        wire::put_u32(&mut self.scratch, g.num_nodes() as u32);
        wire::put_u32(&mut self.scratch, g.num_edges() as u32);
        gpack::encode_tensors(g, &mut self.scratch);
        let crc = crc32fast::hash(&self.scratch[4..]);
        wire::put_u32(&mut self.scratch, crc);

        fs::write(path, &self.scratch)?;
        self.count += 1;
        Ok(())
    }

    pub fn records_written(&self) -> u64 {
        self.count
    }

    pub fn finalize(self) -> Result<(), LoadError> {
        object_store_commit(&self.root, &self.schema, self.count)
    }
}

/// An extra writer over an already-initialized store root, for writing
/// disjoint id ranges from several threads. Call [`object_store_commit`]
/// once with the total record count after every writer is done.
pub fn object_store_attach(root: &Path, vocab: &FeatureVocab) -> ObjectStoreWriter {
    ObjectStoreWriter {
        root: root.to_path_buf(),
        schema: GpackSchema::for_vocab(vocab),
        count: 0,
        last_dir: None,
        scratch: Vec::new(),
    }
}

/// Seals an object store by writing its metadata record.
pub fn object_store_commit(root: &Path, schema: &GpackSchema, total: u64) -> Result<(), LoadError> {
    let mut out = Vec::new();
    out.extend_from_slice(OBJ_META_MAGIC);
    wire::put_u32(&mut out, OBJ_VERSION);
    wire::put_section(&mut out, SEC_SCHEMA, &schema.encode());
    let mut counts = Vec::new();
    wire::put_u64(&mut counts, total);
    wire::put_section(&mut out, SEC_COUNTS, &counts);
    fs::write(object_meta_path(root), out)?;
    Ok(())
}

/// Reads per-graph records from a keyed directory store.
pub struct ObjectSource {
    root: PathBuf,
    schema: GpackSchema,
    vocab: FeatureVocab,
    count: u64,
}

impl ObjectSource {
    pub fn open(root: &Path) -> Result<Self, LoadError> {
        let mp = object_meta_path(root);
        let key = mp.display().to_string();
        let mut bytes = Vec::new();
        File::open(&mp)
            .map_err(|e| unreadable(&key, e))?
            .read_to_end(&mut bytes)?;

        let mut c = Cursor::new(&bytes);
        let magic = c.take(4).map_err(|e| unreadable(&key, e))?;
        if magic != OBJ_META_MAGIC {
            return Err(unreadable(&key, "bad store magic"));
        }
        let version = c.get_u32().map_err(|e| unreadable(&key, e))?;
        if version != OBJ_VERSION {
            return Err(unreadable(&key, format!("unsupported version {version}")));
        }
        let (tag, schema_bytes) = wire::get_section(&mut c).map_err(|e| unreadable(&key, e))?;
        if tag != SEC_SCHEMA {
            return Err(unreadable(&key, "expected schema section"));
        }
        let schema = GpackSchema::decode(schema_bytes).map_err(|e| unreadable(&key, e))?;
        let (tag, counts) = wire::get_section(&mut c).map_err(|e| unreadable(&key, e))?;
        if tag != SEC_COUNTS {
            return Err(unreadable(&key, "expected counts section"));
        }
        let count = Cursor::new(counts).get_u64().map_err(|e| unreadable(&key, e))?;

        let vocab = FeatureVocab::from_symbols(&schema.vocab).map_err(|e| unreadable(&key, e))?;
        Ok(ObjectSource {
            root: root.to_path_buf(),
            schema,
            vocab,
            count,
        })
    }
}

impl DataSource for ObjectSource {
    fn len(&self) -> u64 {
        self.count
    }

    fn vocab(&self) -> &FeatureVocab {
        &self.vocab
    }

    fn fetch(&self, id: u64) -> Result<GraphSample, LoadError> {
        let path = object_record_path(&self.root, id);
        let key = || path.display().to_string();
        let bytes = fs::read(&path).map_err(|e| unreadable(key(), e))?;
        if bytes.len() < 24 || &bytes[..4] != OBJ_MAGIC {
            return Err(unreadable(key(), "bad record header"));
        }
        let body_end = bytes.len() - 4;
        let stored_crc = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        if crc32fast::hash(&bytes[4..body_end]) != stored_crc {
            return Err(unreadable(key(), "record CRC mismatch"));
        }
        let mut c = Cursor::new(&bytes[4..body_end]);
        let err = |e: std::io::Error| unreadable(key(), e);
        let stored_id = c.get_u64().map_err(err)?;
        if stored_id != id {
            return Err(unreadable(key(), format!("record holds id {stored_id}")));
        }
        let nodes = c.get_u32().map_err(err)? as usize;
        let edges = c.get_u32().map_err(err)? as usize;
        gpack::decode_tensors(c.rest(), nodes, edges, &self.schema, id)
            .map_err(|e| unreadable(key(), e))
    }
}

// ---------------------------------------------------------------------------
// Packed backend

/// Random reads against a finalized gpack container.
pub struct PackedSource {
    reader: gpack::Reader,
    vocab: FeatureVocab,
}

impl PackedSource {
    pub fn open(path: &Path) -> Result<Self, LoadError> {
        let key = path.display().to_string();
        let reader = gpack::open_reader(path).map_err(|e| unreadable(&key, e))?;
        let vocab = reader.vocab().map_err(|e| unreadable(&key, e))?;
        Ok(PackedSource { reader, vocab })
    }

    pub fn reader(&self) -> &gpack::Reader {
        &self.reader
    }
}

impl DataSource for PackedSource {
    fn len(&self) -> u64 {
        self.reader.num_graphs()
    }

    fn vocab(&self) -> &FeatureVocab {
        &self.vocab
    }

    fn fetch(&self, id: u64) -> Result<GraphSample, LoadError> {
        self.reader
            .read_graph(id)
            .map_err(|e| unreadable(format!("graph {id}"), e))
    }
}

// ---------------------------------------------------------------------------
// Memory backend (tests and in-process training on pre-encoded data)

/// Pre-encoded samples held in memory; ids are positions.
pub struct MemorySource {
    samples: Vec<GraphSample>,
    vocab: FeatureVocab,
}

impl MemorySource {
    pub fn new(samples: Vec<GraphSample>, vocab: FeatureVocab) -> Self {
        MemorySource { samples, vocab }
    }
}

impl DataSource for MemorySource {
    fn len(&self) -> u64 {
        self.samples.len() as u64
    }

    fn vocab(&self) -> &FeatureVocab {
        &self.vocab
    }

    fn fetch(&self, id: u64) -> Result<GraphSample, LoadError> {
        self.samples
            .get(id as usize)
            .cloned()
            .ok_or_else(|| unreadable(format!("sample {id}"), "index out of range"))
    }
}

// ---------------------------------------------------------------------------
// Sharding

/// Deterministic shuffled disjoint shard for one rank. The permutation is
/// keyed by `(seed, epoch)`; rank `r` takes positions `{i : i mod
/// world_size = r}` and the trailing remainder is dropped so every rank
/// holds exactly `n / world_size` indices.
pub fn shard_indices(
    global_indices: &[u64],
    rank: u32,
    world_size: u32,
    seed: u64,
    epoch: u64,
) -> Vec<u64> {
    assert!(
        world_size >= 1 && rank < world_size,
        "rank {rank} outside world of {world_size}"
    );
    let mut perm = global_indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    perm.shuffle(&mut rng);

    let world = world_size as usize;
    let per_rank = perm.len() / world;
    (0..per_rank).map(|i| perm[i * world + rank as usize]).collect()
}

// ---------------------------------------------------------------------------
// Collation

/// A collated mini-batch of variable-size graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `(Σ nodes) x F_n`
    pub x: Array2<f32>,
    /// `2 x (Σ edges)`, per-graph node offsets added
    pub edge_index: Array2<i64>,
    /// `(Σ edges) x F_e`
    pub edge_attr: Array2<f32>,
    /// `(B,)`
    pub y: Array1<f32>,
    /// Node -> graph slot, non-decreasing, length Σ nodes.
    pub batch_vector: Vec<i64>,
    /// Source ids, length B.
    pub ids: Vec<u64>,
}

impl Batch {
    pub fn num_graphs(&self) -> usize {
        self.ids.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_index.ncols()
    }

    /// Folds the batch's ids and tensor contents into a running checksum.
    pub fn update_checksum(&self, h: &mut Fnv64) {
        for &id in &self.ids {
            h.update_u64(id);
        }
        for v in self.x.iter() {
            h.update(&v.to_le_bytes());
        }
        for v in self.edge_index.iter() {
            h.update(&v.to_le_bytes());
        }
        for v in self.edge_attr.iter() {
            h.update(&v.to_le_bytes());
        }
        for v in self.y.iter() {
            h.update(&v.to_le_bytes());
        }
    }
}

/// Concatenates samples into one batch, offsetting each graph's edge
/// indices by the nodes that precede it.
pub fn collate(samples: &[GraphSample]) -> Result<Batch, LoadError> {
    let first = samples.first().ok_or(LoadError::EmptyBatch)?;
    let nf = first.x.ncols();
    let ef = first.edge_attr.ncols();
    for s in samples {
        if s.x.ncols() != nf {
            return Err(LoadError::InconsistentFeatureWidth {
                expected: nf,
                found: s.x.ncols(),
            });
        }
        if s.edge_attr.ncols() != ef {
            return Err(LoadError::InconsistentFeatureWidth {
                expected: ef,
                found: s.edge_attr.ncols(),
            });
        }
    }

    let total_nodes: usize = samples.iter().map(GraphSample::num_nodes).sum();
    let total_edges: usize = samples.iter().map(GraphSample::num_edges).sum();

    let mut x = Array2::<f32>::zeros((total_nodes, nf));
    let mut edge_index = Array2::<i64>::zeros((2, total_edges));
    let mut edge_attr = Array2::<f32>::zeros((total_edges, ef));
    let mut y = Array1::<f32>::zeros(samples.len());
    let mut batch_vector = Vec::with_capacity(total_nodes);
    let mut ids = Vec::with_capacity(samples.len());

    let mut node_base = 0usize;
    let mut edge_base = 0usize;
    for (slot, s) in samples.iter().enumerate() {
        let nn = s.num_nodes();
        let ne = s.num_edges();
        x.slice_mut(ndarray::s![node_base..node_base + nn, ..])
            .assign(&s.x);
        for row in 0..2 {
            let mut dst = edge_index.slice_mut(ndarray::s![row, edge_base..edge_base + ne]);
            dst.assign(&s.edge_index.row(row));
            dst += node_base as i64;
        }
        edge_attr
            .slice_mut(ndarray::s![edge_base..edge_base + ne, ..])
            .assign(&s.edge_attr);
        y[slot] = s.y;
        batch_vector.extend(std::iter::repeat(slot as i64).take(nn));
        ids.push(s.id);
        node_base += nn;
        edge_base += ne;
    }

    Ok(Batch {
        x,
        edge_index,
        edge_attr,
        y,
        batch_vector,
        ids,
    })
}

// ---------------------------------------------------------------------------
// Loader

/// Wall time spent producing batches (fetch + collate), exclusive of model
/// compute, plus the consumer-visible wait.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchTimings {
    pub batches_produced: u64,
    pub produce_seconds: f64,
    pub wait_seconds: f64,
}

fn produce_batch(source: &dyn DataSource, ids: &[u64]) -> Result<Batch, LoadError> {
    let samples = ids
        .iter()
        .map(|&id| source.fetch(id))
        .collect::<Result<Vec<_>, _>>()?;
    collate(&samples)
}

enum IterInner {
    Sync {
        source: Arc<dyn DataSource>,
        chunks: std::vec::IntoIter<Vec<u64>>,
    },
    Prefetch {
        rx: Receiver<Result<Batch, LoadError>>,
        handle: Option<JoinHandle<()>>,
    },
}

/// Iterator over collated batches. Whole trailing batches only: exactly
/// `|indices| / batch_size` items are yielded.
pub struct BatchIter {
    inner: IterInner,
    timings: Arc<Mutex<BatchTimings>>,
}

/// Builds a loader over `indices` against an open source. `prefetch_depth
/// = 0` produces batches on demand in the caller's thread; otherwise a
/// background producer stays up to `prefetch_depth` batches ahead.
pub fn make_loader(
    source: Arc<dyn DataSource>,
    indices: &[u64],
    batch_size: usize,
    prefetch_depth: usize,
) -> BatchIter {
    assert!(batch_size > 0, "batch_size must be positive");
    let chunks: Vec<Vec<u64>> = indices
        .chunks_exact(batch_size)
        .map(<[u64]>::to_vec)
        .collect();
    let timings = Arc::new(Mutex::new(BatchTimings::default()));

    let inner = if prefetch_depth == 0 {
        IterInner::Sync {
            source,
            chunks: chunks.into_iter(),
        }
    } else {
        let (tx, rx): (SyncSender<Result<Batch, LoadError>>, _) =
            std::sync::mpsc::sync_channel(prefetch_depth);
        let timings = Arc::clone(&timings);
        let handle = std::thread::spawn(move || {
            for chunk in chunks {
                let t0 = Instant::now();
                let out = produce_batch(source.as_ref(), &chunk);
                let dt = t0.elapsed().as_secs_f64();
                {
                    let mut t = timings.lock().unwrap();
                    t.batches_produced += 1;
                    t.produce_seconds += dt;
                }
                if tx.send(out).is_err() {
                    return;
                }
            }
        });
        IterInner::Prefetch {
            rx,
            handle: Some(handle),
        }
    };

    BatchIter { inner, timings }
}

impl BatchIter {
    pub fn timings(&self) -> BatchTimings {
        *self.timings.lock().unwrap()
    }
}

impl Iterator for BatchIter {
    type Item = Result<Batch, LoadError>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            IterInner::Sync { source, chunks } => {
                let chunk = chunks.next()?;
                let t0 = Instant::now();
                let out = produce_batch(source.as_ref(), &chunk);
                let dt = t0.elapsed().as_secs_f64();
                let mut t = self.timings.lock().unwrap();
                t.batches_produced += 1;
                t.produce_seconds += dt;
                t.wait_seconds += dt;
                Some(out)
            }
            IterInner::Prefetch { rx, .. } => {
                let t0 = Instant::now();
                let out = rx.recv().ok()?;
                self.timings.lock().unwrap().wait_seconds += t0.elapsed().as_secs_f64();
                Some(out)
            }
        }
    }
}

impl Drop for BatchIter {
    fn drop(&mut self) {
        if let IterInner::Prefetch { rx, handle } = &mut self.inner {
            // Unblock the producer if it is mid-send, then reap it.
            while rx.try_recv().is_ok() {}
            drop(std::mem::replace(rx, std::sync::mpsc::sync_channel(1).1));
            if let Some(h) = handle.take() {
                let _ = h.join();
            }
        }
    }
}

/// Batches covering every index, with a partial trailing batch when the
/// count does not divide evenly. For evaluation passes, where dropping the
/// tail would bias metrics.
pub fn eval_batches(
    source: Arc<dyn DataSource>,
    indices: &[u64],
    batch_size: usize,
) -> impl Iterator<Item = Result<Batch, LoadError>> {
    let chunks: Vec<Vec<u64>> = indices
        .chunks(batch_size.max(1))
        .map(<[u64]>::to_vec)
        .collect();
    chunks
        .into_iter()
        .map(move |chunk| produce_batch(source.as_ref(), &chunk))
}

/// Checksum of a full batch stream, for cross-backend comparisons.
pub fn stream_checksum(batches: impl Iterator<Item = Result<Batch, LoadError>>) -> Result<u64, LoadError> {
    let mut h = Fnv64::new();
    for b in batches {
        b?.update_checksum(&mut h);
    }
    Ok(h.finish())
}

/// Asks the kernel to evict the page cache so a following read measures
/// cold-cache throughput. Needs root (Linux); returns whether it worked so
/// benchmarks can report warm-cache numbers honestly when it does not.
pub fn try_drop_page_cache() -> bool {
    let sync = std::process::Command::new("sync").status();
    if !sync.map(|s| s.success()).unwrap_or(false) {
        return false;
    }
    std::fs::write("/proc/sys/vm/drop_caches", b"3\n").is_ok()
}
