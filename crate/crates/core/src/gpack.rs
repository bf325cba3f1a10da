//! `gpack`: a self-describing, packed, sharded binary container for graph
//! datasets.
//!
//! A container is a directory `<name>.gpack/` holding `data.<k>` subfiles
//! and a `meta.idx` footer. Graph tensors are packed back-to-back: each
//! graph's `x`, `edge_index`, `edge_attr`, and `y` bytes form one contiguous
//! record inside one subfile, so a random read of a whole graph costs a
//! single positioned read. Logically the container is a set of global
//! arrays: graph `g`'s node rows occupy `[node_offset[g], node_offset[g+1])`
//! of the global `x` array, and likewise for edges.
//!
//! Multiple writers operate without coordination: writer `w` of `W` owns
//! subfiles `{s : s mod W == w}` and appends round-robin across them, then
//! `finalize` records its local index into a `writer.<w>.part` file. A
//! single `merge_index` pass assigns global ids in `(writer, local)`
//! lexicographic order, writes `meta.idx`, and removes the part files.
//!
//! All integers and floats are little-endian. Every `meta.idx` section and
//! every subfile carries a CRC32. The byte format is documented in
//! FORMAT.md at the repository root.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use crate::graphenc::{FeatureVocab, GraphSample};
use crate::wire::{self, Cursor};

pub const MAGIC: &[u8; 4] = b"GPK1";
pub const PART_MAGIC: &[u8; 4] = b"GPKW";
pub const FORMAT_VERSION: u32 = 1;

const SEC_SCHEMA: u8 = 1;
const SEC_COUNTS: u8 = 2;
const SEC_OFFSETS: u8 = 3;
const SEC_LOCATIONS: u8 = 4;
const SEC_IDS: u8 = 5;
const SEC_EXTENTS: u8 = 6;

#[derive(Debug, Error)]
pub enum GpackError {
    #[error("container already exists at {0}")]
    PathExists(PathBuf),
    #[error(
        "invalid shard config: num_subfiles={num_subfiles} writer_id={writer_id} writer_count={writer_count}"
    )]
    InvalidShardConfig {
        num_subfiles: u32,
        writer_id: u32,
        writer_count: u32,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("missing subfile {0}")]
    MissingSubfile(PathBuf),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("not a gpack container (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("graph id {gid} out of range (container holds {num_graphs})")]
    IndexOutOfRange { gid: u64, num_graphs: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dataset schema: tensor widths plus the element vocabulary, written into
/// the container so readers need no out-of-band information.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GpackSchema {
    pub node_feature_count: u32,
    pub edge_feature_count: u32,
    pub target_count: u32,
    pub vocab: Vec<String>,
}

impl GpackSchema {
    pub fn for_vocab(vocab: &FeatureVocab) -> Self {
        GpackSchema {
            node_feature_count: vocab.node_feature_count() as u32,
            edge_feature_count: crate::graphenc::EDGE_FEATURE_COUNT as u32,
            target_count: 1,
            vocab: vocab.symbols(),
        }
    }

    /// Fixed variable table: name, dtype code (0 = f32, 1 = i64), shape rule
    /// (0 = nodes x node_features, 1 = 2 x edges, 2 = edges x edge_features,
    /// 3 = targets).
    pub fn variables(&self) -> [(&'static str, u8, u8); 4] {
        [
            ("x", 0, 0),
            ("edge_index", 1, 1),
            ("edge_attr", 0, 2),
            ("y", 0, 3),
        ]
    }

    pub fn record_len(&self, nodes: u64, edges: u64) -> u64 {
        nodes * self.node_feature_count as u64 * 4
            + edges * 2 * 8
            + edges * self.edge_feature_count as u64 * 4
            + self.target_count as u64 * 4
    }

    pub(crate) fn encode(&self) -> Vec<u8> {
        let mut p = Vec::new();
        wire::put_u32(&mut p, self.node_feature_count);
        wire::put_u32(&mut p, self.edge_feature_count);
        wire::put_u32(&mut p, self.target_count);
        wire::put_u8(&mut p, 0); // codec: none
        wire::put_u8(&mut p, self.variables().len() as u8);
        for (name, dtype, rule) in self.variables() {
            wire::put_short_str(&mut p, name);
            wire::put_u8(&mut p, dtype);
            wire::put_u8(&mut p, rule);
        }
        wire::put_u32(&mut p, self.vocab.len() as u32);
        for sym in &self.vocab {
            wire::put_short_str(&mut p, sym);
        }
        p
    }

    pub(crate) fn decode(payload: &[u8]) -> Result<Self, GpackError> {
        let mut c = Cursor::new(payload);
        let node_feature_count = c.get_u32()?;
        let edge_feature_count = c.get_u32()?;
        let target_count = c.get_u32()?;
        let codec = c.get_u8()?;
        if codec != 0 {
            return Err(GpackError::CorruptIndex(format!(
                "unknown codec byte {codec}"
            )));
        }
        let var_count = c.get_u8()? as usize;
        let mut vars = Vec::with_capacity(var_count);
        for _ in 0..var_count {
            let name = c.get_short_str()?;
            let dtype = c.get_u8()?;
            let rule = c.get_u8()?;
            vars.push((name, dtype, rule));
        }
        let vocab_count = c.get_u32()? as usize;
        let mut vocab = Vec::with_capacity(vocab_count);
        for _ in 0..vocab_count {
            vocab.push(c.get_short_str()?);
        }
        let schema = GpackSchema {
            node_feature_count,
            edge_feature_count,
            target_count,
            vocab,
        };
        let expected: Vec<(String, u8, u8)> = schema
            .variables()
            .iter()
            .map(|&(n, d, r)| (n.to_string(), d, r))
            .collect();
        if vars != expected {
            return Err(GpackError::CorruptIndex(
                "unexpected variable table".to_string(),
            ));
        }
        Ok(schema)
    }
}

/// Serializes one graph's tensors: x rows, then edge sources, edge
/// destinations, edge_attr rows, then y. Shared by gpack subfiles and the
/// object-store record format.
pub fn encode_tensors(g: &GraphSample, out: &mut Vec<u8>) {
    for v in g.x.iter() {
        wire::put_f32(out, *v);
    }
    for col in 0..g.edge_index.ncols() {
        wire::put_i64(out, g.edge_index[[0, col]]);
    }
    for col in 0..g.edge_index.ncols() {
        wire::put_i64(out, g.edge_index[[1, col]]);
    }
    for v in g.edge_attr.iter() {
        wire::put_f32(out, *v);
    }
    wire::put_f32(out, g.y);
}

/// Inverse of [`encode_tensors`] given the node/edge counts and schema.
/// Length is validated once up front so the element loops stay branch-free;
/// this path decodes every record of an epoch and must run at copy speed.
pub fn decode_tensors(
    bytes: &[u8],
    nodes: usize,
    edges: usize,
    schema: &GpackSchema,
    id: u64,
) -> Result<GraphSample, GpackError> {
    let nf = schema.node_feature_count as usize;
    let ef = schema.edge_feature_count as usize;
    let expected = schema.record_len(nodes as u64, edges as u64) as usize;
    if bytes.len() != expected || schema.target_count != 1 {
        return Err(GpackError::CorruptIndex(format!(
            "record for graph {id} is {} bytes, schema says {expected}",
            bytes.len()
        )));
    }

    let f32s = |b: &[u8]| -> Vec<f32> {
        b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect()
    };
    let (x_bytes, rest) = bytes.split_at(nodes * nf * 4);
    let (ei_bytes, rest) = rest.split_at(edges * 2 * 8);
    let (ea_bytes, y_bytes) = rest.split_at(edges * ef * 4);

    let edge_index = ei_bytes
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(GraphSample {
        id,
        x: Array2::from_shape_vec((nodes, nf), f32s(x_bytes)).expect("x shape"),
        edge_index: Array2::from_shape_vec((2, edges), edge_index).expect("edge_index shape"),
        edge_attr: Array2::from_shape_vec((edges, ef), f32s(ea_bytes)).expect("edge_attr shape"),
        y: f32::from_le_bytes(y_bytes.try_into().expect("4-byte target")),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct RecordLoc {
    subfile: u32,
    byte_off: u64,
    nodes: u64,
    edges: u64,
    id: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct SubfileExtent {
    byte_len: u64,
    crc32: u32,
    graph_count: u64,
}

struct OwnedSubfile {
    index: u32,
    file: BufWriter<File>,
    len: u64,
    crc: crc32fast::Hasher,
    graph_count: u64,
}

/// Appends graphs to its owned subfiles. Create all writers from one
/// thread, then move each into its worker; they share no state afterwards.
pub struct Writer {
    dir: PathBuf,
    schema: GpackSchema,
    writer_id: u32,
    writer_count: u32,
    num_subfiles: u32,
    owned: Vec<OwnedSubfile>,
    next_owned: usize,
    records: Vec<RecordLoc>,
    scratch: Vec<u8>,
}

pub fn subfile_path(dir: &Path, k: u32) -> PathBuf {
    dir.join(format!("data.{k}"))
}

fn part_path(dir: &Path, writer_id: u32) -> PathBuf {
    dir.join(format!("writer.{writer_id}.part"))
}

fn meta_path(dir: &Path) -> PathBuf {
    dir.join("meta.idx")
}

/// Creates a writer for one shard group of a new container. The first
/// writer (any order, single-threaded creation) creates the directory;
/// an already-finalized container at `path` is refused unless `overwrite`.
pub fn create_writer(
    path: &Path,
    schema: &GpackSchema,
    num_subfiles: u32,
    writer_id: u32,
    writer_count: u32,
    overwrite: bool,
) -> Result<Writer, GpackError> {
    if writer_count == 0 || writer_id >= writer_count || writer_count > num_subfiles {
        return Err(GpackError::InvalidShardConfig {
            num_subfiles,
            writer_id,
            writer_count,
        });
    }
    if meta_path(path).exists() {
        if !overwrite {
            return Err(GpackError::PathExists(path.to_path_buf()));
        }
        fs::remove_dir_all(path)?;
    }
    fs::create_dir_all(path)?;

    let mut owned = Vec::new();
    for k in (writer_id..num_subfiles).step_by(writer_count as usize) {
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(subfile_path(path, k))?;
        owned.push(OwnedSubfile {
            index: k,
            file: BufWriter::new(file),
            len: 0,
            crc: crc32fast::Hasher::new(),
            graph_count: 0,
        });
    }
    Ok(Writer {
        dir: path.to_path_buf(),
        schema: schema.clone(),
        writer_id,
        writer_count,
        num_subfiles,
        owned,
        next_owned: 0,
        records: Vec::new(),
        scratch: Vec::new(),
    })
}

impl Writer {
    pub fn writer_id(&self) -> u32 {
        self.writer_id
    }

    /// Appends one graph, returning its position within this writer's
    /// stream (global ids are assigned later by `merge_index`).
    pub fn append_graph(&mut self, g: &GraphSample) -> Result<u64, GpackError> {
        let nf = self.schema.node_feature_count as usize;
        let ef = self.schema.edge_feature_count as usize;
        if g.x.ncols() != nf {
            return Err(GpackError::SchemaMismatch(format!(
                "x has {} feature columns, schema expects {nf}",
                g.x.ncols()
            )));
        }
        if g.edge_index.nrows() != 2 {
            return Err(GpackError::SchemaMismatch(format!(
                "edge_index has {} rows, expected 2",
                g.edge_index.nrows()
            )));
        }
        if g.edge_attr.dim() != (g.edge_index.ncols(), ef) {
            return Err(GpackError::SchemaMismatch(format!(
                "edge_attr shape {:?} inconsistent with {} edges x {ef} features",
                g.edge_attr.dim(),
                g.edge_index.ncols()
            )));
        }

        self.scratch.clear();
        encode_tensors(g, &mut self.scratch);

        let slot = self.next_owned;
        self.next_owned = (self.next_owned + 1) % self.owned.len();
        let sub = &mut self.owned[slot];
        sub.file.write_all(&self.scratch)?;
        sub.crc.update(&self.scratch);
        let byte_off = sub.len;
        sub.len += self.scratch.len() as u64;
        sub.graph_count += 1;

        let local_pos = self.records.len() as u64;
        self.records.push(RecordLoc {
            subfile: sub.index,
            byte_off,
            nodes: g.num_nodes() as u64,
            edges: g.num_edges() as u64,
            id: g.id,
        });
        Ok(local_pos)
    }

    /// Flushes subfiles and writes this writer's part index. Must be called
    /// on every writer before `merge_index`.
    pub fn finalize(mut self) -> Result<(), GpackError> {
        for sub in &mut self.owned {
            sub.file.flush()?;
            sub.file.get_ref().sync_all()?;
        }

        let mut body = Vec::new();
        wire::put_u32(&mut body, self.writer_id);
        wire::put_u32(&mut body, self.writer_count);
        wire::put_u32(&mut body, self.num_subfiles);

        let mut out = Vec::new();
        out.extend_from_slice(PART_MAGIC);
        wire::put_u32(&mut out, FORMAT_VERSION);
        wire::put_section(&mut out, SEC_COUNTS, &body);
        wire::put_section(&mut out, SEC_SCHEMA, &self.schema.encode());

        let mut recs = Vec::new();
        wire::put_u64(&mut recs, self.records.len() as u64);
        for r in &self.records {
            wire::put_u32(&mut recs, r.subfile);
            wire::put_u64(&mut recs, r.byte_off);
            wire::put_u64(&mut recs, r.nodes);
            wire::put_u64(&mut recs, r.edges);
            wire::put_u64(&mut recs, r.id);
        }
        wire::put_section(&mut out, SEC_LOCATIONS, &recs);

        let mut exts = Vec::new();
        wire::put_u32(&mut exts, self.owned.len() as u32);
        for sub in &mut self.owned {
            wire::put_u32(&mut exts, sub.index);
            wire::put_u64(&mut exts, sub.len);
            wire::put_u32(&mut exts, std::mem::take(&mut sub.crc).finalize());
            wire::put_u64(&mut exts, sub.graph_count);
        }
        wire::put_section(&mut out, SEC_EXTENTS, &exts);

        fs::write(part_path(&self.dir, self.writer_id), out)?;
        Ok(())
    }
}

/// Finalized container metadata: everything needed to locate any graph
/// without touching the data subfiles.
#[derive(Clone, Debug)]
pub struct GpackDataset {
    pub path: PathBuf,
    pub schema: GpackSchema,
    pub num_graphs: u64,
    pub num_subfiles: u32,
    /// `num_graphs + 1` entries, starting at 0, strictly increasing per graph.
    pub node_offsets: Vec<i64>,
    pub edge_offsets: Vec<i64>,
    locations: Vec<(u32, u64)>,
    ids: Vec<u64>,
    extents: Vec<SubfileExtent>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetSummary {
    pub num_graphs: u64,
    pub total_nodes: u64,
    pub total_edges: u64,
    pub avg_nodes_per_graph: f64,
}

impl GpackDataset {
    pub fn total_nodes(&self) -> u64 {
        *self.node_offsets.last().unwrap_or(&0) as u64
    }

    pub fn total_edges(&self) -> u64 {
        *self.edge_offsets.last().unwrap_or(&0) as u64
    }

    pub fn summary(&self) -> DatasetSummary {
        let num_graphs = self.num_graphs;
        let total_nodes = self.total_nodes();
        DatasetSummary {
            num_graphs,
            total_nodes,
            total_edges: self.total_edges(),
            avg_nodes_per_graph: if num_graphs == 0 {
                0.0
            } else {
                total_nodes as f64 / num_graphs as f64
            },
        }
    }

    pub fn graph_id(&self, gid: u64) -> Option<u64> {
        self.ids.get(gid as usize).copied()
    }

    pub fn subfile_lengths(&self) -> Vec<u64> {
        self.extents.iter().map(|e| e.byte_len).collect()
    }

    fn encode_meta(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        wire::put_u32(&mut out, FORMAT_VERSION);

        wire::put_section(&mut out, SEC_SCHEMA, &self.schema.encode());

        let mut counts = Vec::new();
        wire::put_u64(&mut counts, self.num_graphs);
        wire::put_u32(&mut counts, self.num_subfiles);
        wire::put_u64(&mut counts, self.total_nodes());
        wire::put_u64(&mut counts, self.total_edges());
        wire::put_section(&mut out, SEC_COUNTS, &counts);

        let mut offs = Vec::new();
        for &v in &self.node_offsets {
            wire::put_i64(&mut offs, v);
        }
        for &v in &self.edge_offsets {
            wire::put_i64(&mut offs, v);
        }
        wire::put_section(&mut out, SEC_OFFSETS, &offs);

        let mut locs = Vec::new();
        for &(sub, off) in &self.locations {
            wire::put_u32(&mut locs, sub);
            wire::put_u64(&mut locs, off);
        }
        wire::put_section(&mut out, SEC_LOCATIONS, &locs);

        let mut ids = Vec::new();
        for &id in &self.ids {
            wire::put_u64(&mut ids, id);
        }
        wire::put_section(&mut out, SEC_IDS, &ids);

        let mut exts = Vec::new();
        for e in &self.extents {
            wire::put_u64(&mut exts, e.byte_len);
            wire::put_u32(&mut exts, e.crc32);
            wire::put_u64(&mut exts, e.graph_count);
        }
        wire::put_section(&mut out, SEC_EXTENTS, &exts);

        out
    }

    fn decode_meta(path: &Path, bytes: &[u8]) -> Result<Self, GpackError> {
        let mut c = Cursor::new(bytes);
        let magic = c.take(4).map_err(|_| GpackError::BadMagic)?;
        if magic != MAGIC {
            return Err(GpackError::BadMagic);
        }
        let version = c
            .get_u32()
            .map_err(|e| GpackError::CorruptIndex(e.to_string()))?;
        if version != FORMAT_VERSION {
            return Err(GpackError::VersionUnsupported(version));
        }

        let mut sections = std::collections::HashMap::new();
        while c.remaining() > 0 {
            let (tag, payload) =
                wire::get_section(&mut c).map_err(|e| GpackError::CorruptIndex(e.to_string()))?;
            sections.insert(tag, payload);
        }
        let section = |tag: u8, name: &str| {
            sections
                .get(&tag)
                .copied()
                .ok_or_else(|| GpackError::CorruptIndex(format!("missing {name} section")))
        };

        let schema = GpackSchema::decode(section(SEC_SCHEMA, "schema")?)?;

        let mut cc = Cursor::new(section(SEC_COUNTS, "counts")?);
        let bad = |e: std::io::Error| GpackError::CorruptIndex(e.to_string());
        let num_graphs = cc.get_u64().map_err(bad)?;
        let num_subfiles = cc.get_u32().map_err(bad)?;
        let total_nodes = cc.get_u64().map_err(bad)?;
        let total_edges = cc.get_u64().map_err(bad)?;

        let n = num_graphs as usize;
        let mut oc = Cursor::new(section(SEC_OFFSETS, "offsets")?);
        let mut node_offsets = Vec::with_capacity(n + 1);
        let mut edge_offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            node_offsets.push(oc.get_i64().map_err(bad)?);
        }
        for _ in 0..=n {
            edge_offsets.push(oc.get_i64().map_err(bad)?);
        }

        let mut lc = Cursor::new(section(SEC_LOCATIONS, "locations")?);
        let mut locations = Vec::with_capacity(n);
        for _ in 0..n {
            let sub = lc.get_u32().map_err(bad)?;
            let off = lc.get_u64().map_err(bad)?;
            locations.push((sub, off));
        }

        let mut ic = Cursor::new(section(SEC_IDS, "ids")?);
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(ic.get_u64().map_err(bad)?);
        }

        let mut ec = Cursor::new(section(SEC_EXTENTS, "extents")?);
        let mut extents = Vec::with_capacity(num_subfiles as usize);
        for _ in 0..num_subfiles {
            extents.push(SubfileExtent {
                byte_len: ec.get_u64().map_err(bad)?,
                crc32: ec.get_u32().map_err(bad)?,
                graph_count: ec.get_u64().map_err(bad)?,
            });
        }

        let ds = GpackDataset {
            path: path.to_path_buf(),
            schema,
            num_graphs,
            num_subfiles,
            node_offsets,
            edge_offsets,
            locations,
            ids,
            extents,
        };
        ds.validate(total_nodes, total_edges)?;
        Ok(ds)
    }

    fn validate(&self, total_nodes: u64, total_edges: u64) -> Result<(), GpackError> {
        let check_monotone = |offs: &[i64], what: &str, strict: bool| {
            if offs.first() != Some(&0) {
                return Err(GpackError::CorruptIndex(format!(
                    "{what} offsets must start at 0"
                )));
            }
            for w in offs.windows(2) {
                if w[1] < w[0] || (strict && w[1] == w[0]) {
                    return Err(GpackError::CorruptIndex(format!(
                        "{what} offsets not monotone"
                    )));
                }
            }
            Ok(())
        };
        // Node offsets are strictly increasing (every graph has at least
        // one node); edge offsets merely non-decreasing (edgeless graphs).
        check_monotone(&self.node_offsets, "node", true)?;
        check_monotone(&self.edge_offsets, "edge", false)?;
        if self.total_nodes() != total_nodes || self.total_edges() != total_edges {
            return Err(GpackError::CorruptIndex(
                "offset totals disagree with counts section".to_string(),
            ));
        }
        Ok(())
    }
}

/// Merges all writers' part indexes into the container footer. Global ids
/// run in `(writer_id, local position)` lexicographic order.
pub fn merge_index(path: &Path, writer_count: u32) -> Result<GpackDataset, GpackError> {
    let mut schema: Option<GpackSchema> = None;
    let mut num_subfiles = 0u32;
    let mut all_records: Vec<RecordLoc> = Vec::new();
    let mut extents: Vec<SubfileExtent> = Vec::new();

    for w in 0..writer_count {
        let pp = part_path(path, w);
        let bytes = fs::read(&pp).map_err(|_| GpackError::MissingSubfile(pp.clone()))?;
        let mut c = Cursor::new(&bytes);
        let magic = c.take(4).map_err(|_| GpackError::BadMagic)?;
        if magic != PART_MAGIC {
            return Err(GpackError::BadMagic);
        }
        let bad = |e: std::io::Error| GpackError::CorruptIndex(e.to_string());
        let version = c.get_u32().map_err(bad)?;
        if version != FORMAT_VERSION {
            return Err(GpackError::VersionUnsupported(version));
        }

        let (tag, counts) = wire::get_section(&mut c).map_err(|e| bad(e))?;
        if tag != SEC_COUNTS {
            return Err(GpackError::CorruptIndex("part: expected counts".into()));
        }
        let mut cc = Cursor::new(counts);
        let writer_id = cc.get_u32().map_err(bad)?;
        let part_writer_count = cc.get_u32().map_err(bad)?;
        let part_subfiles = cc.get_u32().map_err(bad)?;
        if writer_id != w || part_writer_count != writer_count {
            return Err(GpackError::CorruptIndex(format!(
                "part {w}: inconsistent writer identity"
            )));
        }
        if w == 0 {
            num_subfiles = part_subfiles;
            extents = vec![SubfileExtent::default(); num_subfiles as usize];
        } else if part_subfiles != num_subfiles {
            return Err(GpackError::CorruptIndex(format!(
                "part {w}: subfile count {part_subfiles} != {num_subfiles}"
            )));
        }

        let (tag, schema_bytes) = wire::get_section(&mut c).map_err(|e| bad(e))?;
        if tag != SEC_SCHEMA {
            return Err(GpackError::CorruptIndex("part: expected schema".into()));
        }
        let part_schema = GpackSchema::decode(schema_bytes)?;
        match &schema {
            None => schema = Some(part_schema),
            Some(s) if *s != part_schema => {
                return Err(GpackError::SchemaMismatch(format!(
                    "writer {w} schema differs from writer 0"
                )))
            }
            _ => {}
        }

        let (tag, recs) = wire::get_section(&mut c).map_err(|e| bad(e))?;
        if tag != SEC_LOCATIONS {
            return Err(GpackError::CorruptIndex("part: expected records".into()));
        }
        let mut rc = Cursor::new(recs);
        let count = rc.get_u64().map_err(bad)?;
        for _ in 0..count {
            all_records.push(RecordLoc {
                subfile: rc.get_u32().map_err(bad)?,
                byte_off: rc.get_u64().map_err(bad)?,
                nodes: rc.get_u64().map_err(bad)?,
                edges: rc.get_u64().map_err(bad)?,
                id: rc.get_u64().map_err(bad)?,
            });
        }

        let (tag, exts) = wire::get_section(&mut c).map_err(|e| bad(e))?;
        if tag != SEC_EXTENTS {
            return Err(GpackError::CorruptIndex("part: expected extents".into()));
        }
        let mut ec = Cursor::new(exts);
        let owned = ec.get_u32().map_err(bad)?;
        for _ in 0..owned {
            let idx = ec.get_u32().map_err(bad)? as usize;
            let ext = SubfileExtent {
                byte_len: ec.get_u64().map_err(bad)?,
                crc32: ec.get_u32().map_err(bad)?,
                graph_count: ec.get_u64().map_err(bad)?,
            };
            if idx >= extents.len() {
                return Err(GpackError::CorruptIndex(format!(
                    "part {w}: subfile index {idx} out of range"
                )));
            }
            extents[idx] = ext;
        }
    }

    let schema = schema.ok_or_else(|| GpackError::CorruptIndex("no writers".to_string()))?;

    // Validate subfile presence and sizes before trusting the index.
    for (k, ext) in extents.iter().enumerate() {
        let sp = subfile_path(path, k as u32);
        let meta = fs::metadata(&sp).map_err(|_| GpackError::MissingSubfile(sp.clone()))?;
        if meta.len() != ext.byte_len {
            return Err(GpackError::CorruptIndex(format!(
                "subfile {k} is {} bytes, index says {}",
                meta.len(),
                ext.byte_len
            )));
        }
    }

    let mut node_offsets = Vec::with_capacity(all_records.len() + 1);
    let mut edge_offsets = Vec::with_capacity(all_records.len() + 1);
    let mut locations = Vec::with_capacity(all_records.len());
    let mut ids = Vec::with_capacity(all_records.len());
    node_offsets.push(0);
    edge_offsets.push(0);
    for r in &all_records {
        node_offsets.push(node_offsets.last().unwrap() + r.nodes as i64);
        edge_offsets.push(edge_offsets.last().unwrap() + r.edges as i64);
        locations.push((r.subfile, r.byte_off));
        ids.push(r.id);
    }

    let ds = GpackDataset {
        path: path.to_path_buf(),
        schema,
        num_graphs: all_records.len() as u64,
        num_subfiles,
        node_offsets,
        edge_offsets,
        locations,
        ids,
        extents,
    };
    fs::write(meta_path(path), ds.encode_meta())?;
    for w in 0..writer_count {
        fs::remove_file(part_path(path, w))?;
    }
    Ok(ds)
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    std::os::unix::fs::FileExt::read_exact_at(file, buf, offset)
}

#[cfg(not(unix))]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    // Fallback for platforms without positioned reads on shared handles:
    // clone the handle and seek. Readers stay usable from many threads.
    use std::io::{Read, Seek, SeekFrom};
    let mut f = file.try_clone()?;
    f.seek(SeekFrom::Start(offset))?;
    f.read_exact(buf)
}

/// Random-access reader over a finalized container. Metadata lives in
/// memory; `read_graph` costs one positioned read. Safe to share across
/// threads behind an `Arc`.
pub struct Reader {
    dataset: GpackDataset,
    files: Vec<File>,
}

/// Opens a finalized container, validating magic, version, section CRCs,
/// offset monotonicity, and subfile lengths against the index.
pub fn open_reader(path: &Path) -> Result<Reader, GpackError> {
    let mp = meta_path(path);
    if !mp.exists() {
        if !path.exists() {
            return Err(GpackError::MissingSubfile(mp));
        }
        return Err(GpackError::CorruptIndex(
            "container has no meta.idx (not finalized?)".to_string(),
        ));
    }
    let mut bytes = Vec::new();
    File::open(&mp)?.read_to_end(&mut bytes)?;
    let dataset = GpackDataset::decode_meta(path, &bytes)?;

    let mut files = Vec::with_capacity(dataset.num_subfiles as usize);
    for k in 0..dataset.num_subfiles {
        let sp = subfile_path(path, k);
        let file = File::open(&sp).map_err(|_| GpackError::MissingSubfile(sp.clone()))?;
        let actual = file.metadata()?.len();
        let expected = dataset.extents[k as usize].byte_len;
        if actual != expected {
            return Err(GpackError::CorruptIndex(format!(
                "subfile {k} is {actual} bytes, index says {expected}"
            )));
        }
        files.push(file);
    }
    Ok(Reader { dataset, files })
}

impl Reader {
    pub fn dataset(&self) -> &GpackDataset {
        &self.dataset
    }

    pub fn schema(&self) -> &GpackSchema {
        &self.dataset.schema
    }

    pub fn num_graphs(&self) -> u64 {
        self.dataset.num_graphs
    }

    pub fn summary(&self) -> DatasetSummary {
        self.dataset.summary()
    }

    pub fn vocab(&self) -> Result<FeatureVocab, GpackError> {
        FeatureVocab::from_symbols(&self.dataset.schema.vocab)
            .map_err(|e| GpackError::CorruptIndex(format!("bad vocab in schema: {e}")))
    }

    pub fn read_graph(&self, gid: u64) -> Result<GraphSample, GpackError> {
        if gid >= self.dataset.num_graphs {
            return Err(GpackError::IndexOutOfRange {
                gid,
                num_graphs: self.dataset.num_graphs,
            });
        }
        let g = gid as usize;
        let nodes = (self.dataset.node_offsets[g + 1] - self.dataset.node_offsets[g]) as u64;
        let edges = (self.dataset.edge_offsets[g + 1] - self.dataset.edge_offsets[g]) as u64;
        let (subfile, byte_off) = self.dataset.locations[g];
        let len = self.dataset.schema.record_len(nodes, edges) as usize;

        let mut buf = vec![0u8; len];
        read_exact_at(&self.files[subfile as usize], &mut buf, byte_off).map_err(|e| {
            GpackError::CorruptIndex(format!("graph {gid}: short read from subfile {subfile}: {e}"))
        })?;
        decode_tensors(
            &buf,
            nodes as usize,
            edges as usize,
            &self.dataset.schema,
            self.dataset.ids[g],
        )
    }

    /// Streams every subfile and checks its CRC32 against the index.
    pub fn verify_data(&self) -> Result<(), GpackError> {
        for (k, file) in self.files.iter().enumerate() {
            let mut hasher = crc32fast::Hasher::new();
            let mut remaining = self.dataset.extents[k].byte_len;
            let mut buf = vec![0u8; 1 << 20];
            let mut pos = 0u64;
            while remaining > 0 {
                let take = remaining.min(buf.len() as u64) as usize;
                read_exact_at(file, &mut buf[..take], pos)?;
                hasher.update(&buf[..take]);
                pos += take as u64;
                remaining -= take as u64;
            }
            if hasher.finalize() != self.dataset.extents[k].crc32 {
                return Err(GpackError::CorruptIndex(format!(
                    "subfile {k} data CRC mismatch"
                )));
            }
        }
        Ok(())
    }
}
