//! `preprocess`: parses a raw molecule table, rejects records that fail,
//! and materializes the survivors into a storage backend. Kept records are
//! assigned ids 0..n in input order regardless of worker count, so every
//! backend built from the same table serves the same stream.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use gapnet_core::dataload::{
    object_store_attach, object_store_commit, object_store_init, Backend,
};
use gapnet_core::gpack::{self, GpackSchema};
use gapnet_core::graphenc::{encode_graph, FeatureVocab};
use gapnet_core::smiles::{expand_hydrogens, parse_smiles, Molecule};

use crate::config::Settings;
use crate::CliError;

#[derive(Args, Clone, Debug)]
pub struct PreprocessArgs {
    /// Raw delimited-text table to read.
    #[arg(long)]
    pub input: PathBuf,
    /// Output location: a file for inline, a directory otherwise.
    #[arg(long)]
    pub out: PathBuf,
    /// Destination backend: inline, object, or gpack.
    #[arg(long)]
    pub backend: Backend,
    /// Column holding the molecule text.
    #[arg(long)]
    pub smiles_col: Option<String>,
    /// Column holding the regression target.
    #[arg(long)]
    pub target_col: Option<String>,
    /// Parse/write worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Data subfiles for the gpack backend.
    #[arg(long)]
    pub subfiles: Option<u32>,
    /// Largest tolerated fraction of rejected records.
    #[arg(long)]
    pub max_bad_fraction: Option<f64>,
    /// Write one line per rejected record here.
    #[arg(long)]
    pub error_log: Option<PathBuf>,
    /// Replace an existing output.
    #[arg(long)]
    pub overwrite: bool,
}

struct RawRow {
    line: u64,
    smiles: String,
    target: Result<f32, String>,
}

struct Kept {
    smiles: String,
    mol: Molecule,
    target: f32,
}

struct Rejected {
    line: u64,
    smiles: String,
    detail: String,
}

fn read_rows(path: &Path, smiles_col: &str, target_col: &str) -> Result<Vec<RawRow>, CliError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            crate::invalid(format!("{}: missing column {name:?}", path.display()))
        })
    };
    let si = find(smiles_col)?;
    let ti = find(target_col)?;

    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let smiles = record.get(si).unwrap_or("").to_string();
        let target = match record.get(ti) {
            None => Err(format!("missing {target_col} field")),
            Some(raw) => raw
                .trim()
                .parse::<f32>()
                .map_err(|e| format!("bad target {raw:?}: {e}")),
        };
        rows.push(RawRow { line, smiles, target });
    }
    Ok(rows)
}

/// Parses rows in contiguous chunks across `workers` threads. Output order
/// matches input order.
fn parse_rows(rows: &[RawRow], workers: usize) -> Vec<Result<Molecule, String>> {
    let chunk = rows.len().div_ceil(workers.max(1)).max(1);
    let mut out = Vec::with_capacity(rows.len());
    std::thread::scope(|s| {
        let handles: Vec<_> = rows
            .chunks(chunk)
            .map(|slice| s.spawn(move || slice.iter().map(parse_row).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            out.extend(h.join().expect("parse worker panicked"));
        }
    });
    out
}

fn parse_row(row: &RawRow) -> Result<Molecule, String> {
    let target_err = row.target.as_ref().err().cloned();
    if let Some(detail) = target_err {
        return Err(detail);
    }
    let mol = parse_smiles(&row.smiles).map_err(|e| e.to_string())?;
    Ok(expand_hydrogens(mol))
}

fn write_error_log(path: &Path, rejected: &[Rejected]) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rejected {
        writeln!(f, "line {}: {:?}: {}", r.line, r.smiles, r.detail)?;
    }
    f.flush()?;
    Ok(())
}

fn output_exists(backend: Backend, out: &Path) -> bool {
    match backend {
        Backend::Inline => out.exists(),
        Backend::Object => out.join("store.meta").exists(),
        Backend::Packed => out.join("meta.idx").exists(),
    }
}

fn write_inline(out: &Path, kept: &[Kept]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["smiles", "gap"])?;
    for k in kept {
        w.write_record([k.smiles.as_str(), &k.target.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Splits `n` records into at most `workers` contiguous chunks and returns
/// `(start, len)` per chunk. Concatenated chunks cover 0..n in order.
fn contiguous_chunks(n: usize, workers: usize) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    let chunk = n.div_ceil(workers.max(1));
    (0..n.div_ceil(chunk))
        .map(|i| (i * chunk, chunk.min(n - i * chunk)))
        .collect()
}

/// Encodes and writes one contiguous id range, returning node/edge totals.
fn encode_range<F>(
    kept: &[Kept],
    start: usize,
    vocab: &FeatureVocab,
    mut sink: F,
) -> Result<(u64, u64), CliError>
where
    F: FnMut(&gapnet_core::graphenc::GraphSample) -> Result<(), CliError>,
{
    let mut nodes = 0u64;
    let mut edges = 0u64;
    for (i, rec) in kept.iter().enumerate() {
        let g = encode_graph(&rec.mol, vocab, rec.target, (start + i) as u64)?;
        nodes += g.num_nodes() as u64;
        edges += g.num_edges() as u64;
        sink(&g)?;
    }
    Ok((nodes, edges))
}

fn write_object(
    out: &Path,
    kept: &[Kept],
    vocab: &FeatureVocab,
    workers: usize,
    overwrite: bool,
) -> Result<(u64, u64), CliError> {
    let chunks = contiguous_chunks(kept.len(), workers);
    let mut writers = vec![object_store_init(out, vocab, overwrite)?];
    for _ in 1..chunks.len() {
        writers.push(object_store_attach(out, vocab));
    }

    let mut totals = (0u64, 0u64);
    std::thread::scope(|s| -> Result<(), CliError> {
        let handles: Vec<_> = writers
            .into_iter()
            .zip(&chunks)
            .map(|(mut w, &(start, len))| {
                s.spawn(move || {
                    encode_range(&kept[start..start + len], start, vocab, |g| {
                        w.write_record(g).map_err(CliError::from)
                    })
                })
            })
            .collect();
        for h in handles {
            let (n, e) = h.join().expect("object writer panicked")?;
            totals.0 += n;
            totals.1 += e;
        }
        Ok(())
    })?;

    object_store_commit(out, &GpackSchema::for_vocab(vocab), kept.len() as u64)?;
    Ok(totals)
}

fn write_gpack(
    out: &Path,
    kept: &[Kept],
    vocab: &FeatureVocab,
    workers: usize,
    subfiles: u32,
    overwrite: bool,
) -> Result<(), CliError> {
    let schema = GpackSchema::for_vocab(vocab);
    let chunks = contiguous_chunks(kept.len(), workers.min(subfiles as usize));
    let writer_count = chunks.len().max(1) as u32;

    // Writer 0 clears any overwritten container, so create it alone first.
    let mut writers = Vec::new();
    for w in 0..writer_count {
        writers.push(gpack::create_writer(
            out,
            &schema,
            subfiles,
            w,
            writer_count,
            overwrite && w == 0,
        )?);
    }

    std::thread::scope(|s| -> Result<(), CliError> {
        let handles: Vec<_> = writers
            .into_iter()
            .zip(&chunks)
            .map(|(mut w, &(start, len))| {
                s.spawn(move || -> Result<(), CliError> {
                    encode_range(&kept[start..start + len], start, vocab, |g| {
                        w.append_graph(g).map(|_| ()).map_err(CliError::from)
                    })?;
                    w.finalize()?;
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().expect("gpack writer panicked")?;
        }
        Ok(())
    })?;

    // Writers own subfiles in writer-major stripes and each wrote one
    // contiguous ascending id range, so merged positions equal record ids.
    gpack::merge_index(out, writer_count)?;
    Ok(())
}

pub fn run(args: &PreprocessArgs, settings: &mut Settings) -> Result<(), CliError> {
    let default_workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let workers = settings
        .resolve("workers", args.workers, default_workers)?
        .max(1);
    let subfiles = settings.resolve("subfiles", args.subfiles, 8u32)?;
    let max_bad = settings.resolve("max_bad_fraction", args.max_bad_fraction, 0.0f64)?;
    let smiles_col =
        settings.resolve("smiles_col", args.smiles_col.clone(), "smiles".to_string())?;
    let target_col = settings.resolve("target_col", args.target_col.clone(), "gap".to_string())?;
    if !(0.0..=1.0).contains(&max_bad) {
        return Err(crate::invalid(format!(
            "max bad fraction {max_bad} outside [0, 1]"
        )));
    }
    if subfiles == 0 {
        return Err(crate::invalid("at least one subfile required"));
    }
    if output_exists(args.backend, &args.out) && !args.overwrite {
        return Err(crate::invalid(format!(
            "output {} already exists (pass --overwrite to replace it)",
            args.out.display()
        )));
    }

    let rows = read_rows(&args.input, &smiles_col, &target_col)?;
    if rows.is_empty() {
        return Err(crate::invalid(format!(
            "{}: no data rows",
            args.input.display()
        )));
    }

    let results = parse_rows(&rows, workers);
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (row, res) in rows.into_iter().zip(results) {
        match res {
            Ok(mol) => kept.push(Kept {
                smiles: row.smiles,
                mol,
                target: *row.target.as_ref().expect("parse checked the target"),
            }),
            Err(detail) => rejected.push(Rejected {
                line: row.line,
                smiles: row.smiles,
                detail,
            }),
        }
    }

    if let Some(log) = &args.error_log {
        write_error_log(log, &rejected)?;
    } else {
        for r in rejected.iter().take(5) {
            eprintln!("rejected line {}: {:?}: {}", r.line, r.smiles, r.detail);
        }
        if rejected.len() > 5 {
            eprintln!("(and {} more rejected records)", rejected.len() - 5);
        }
    }

    let total = kept.len() + rejected.len();
    let bad_fraction = rejected.len() as f64 / total as f64;
    if bad_fraction > max_bad {
        return Err(CliError::BadData(format!(
            "{} of {total} records rejected ({:.4} > max bad fraction {:.4})",
            rejected.len(),
            bad_fraction,
            max_bad
        )));
    }
    if kept.is_empty() {
        return Err(CliError::BadData(format!(
            "{}: no parseable records",
            args.input.display()
        )));
    }

    let vocab = FeatureVocab::collect_from_molecules(kept.iter().map(|k| &k.mol))?;

    let (nodes, edges) = match args.backend {
        Backend::Inline => {
            write_inline(&args.out, &kept)?;
            let nodes = kept.iter().map(|k| k.mol.atoms.len() as u64).sum();
            let edges = kept.iter().map(|k| 2 * k.mol.bonds.len() as u64).sum();
            (nodes, edges)
        }
        Backend::Object => write_object(&args.out, &kept, &vocab, workers, args.overwrite)?,
        Backend::Packed => {
            write_gpack(&args.out, &kept, &vocab, workers, subfiles, args.overwrite)?;
            let summary = gpack::open_reader(&args.out)?.summary();
            (summary.total_nodes, summary.total_edges)
        }
    };

    println!(
        "kept {} of {total} records ({} rejected, {:.4}% bad)",
        kept.len(),
        rejected.len(),
        bad_fraction * 100.0
    );
    println!(
        "nodes: {nodes} total, {:.2} avg/graph",
        nodes as f64 / kept.len() as f64
    );
    println!("edges: {edges} total (directed)");
    println!("elements: {}", vocab.symbols().join(" "));
    println!(
        "wrote {} store to {}",
        crate::backend_label(args.backend),
        args.out.display()
    );
    Ok(())
}
