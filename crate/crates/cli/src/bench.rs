//! `bench-io`: measures full read-path throughput per backend (fetch,
//! decode, collate) with sharded reader threads, repeated passes, and an
//! optional page-cache drop before each pass. Checksums every batch stream
//! so a fast backend cannot win by reading the wrong bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::Args;
use gapnet_core::dataload::{
    make_loader, open_source, shard_indices, try_drop_page_cache, Backend, DataSource, LoadError,
};
use gapnet_core::wire::Fnv64;
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::CliError;

#[derive(Args, Clone, Debug)]
pub struct BenchArgs {
    /// Inline table to measure.
    #[arg(long)]
    pub inline: Option<PathBuf>,
    /// Object store root to measure.
    #[arg(long)]
    pub object: Option<PathBuf>,
    /// Packed container to measure.
    #[arg(long)]
    pub gpack: Option<PathBuf>,
    /// Timed passes per backend (misses and medians need at least 3).
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Sharded reader threads.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Shard shuffling seed, fixed across repeats and backends.
    #[arg(long)]
    pub bench_seed: Option<u64>,
    /// Drop the kernel page cache before each pass (needs root).
    #[arg(long)]
    pub cold_cache: bool,
    /// JSON results path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plot-ready per-pass table path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackendBench {
    pub backend: String,
    pub path: String,
    pub records: u64,
    pub seconds: Vec<f64>,
    pub median_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub records_per_second_median: f64,
    /// Hex FNV-1a over the batch stream, XOR-combined across threads.
    pub checksum: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub repeats: usize,
    pub threads: usize,
    pub batch_size: usize,
    pub cold_cache_requested: bool,
    /// Whether every requested page-cache drop actually happened.
    pub cold_cache_effective: bool,
    pub backends: Vec<BackendBench>,
    /// `speedup_a_vs_b` is b's median seconds over a's.
    pub ratios: BTreeMap<String, f64>,
}

pub const BENCH_SCHEMA_VERSION: u32 = 1;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// One full pass: `threads` readers each stream their shard through the
/// batch pipeline. Returns the XOR of per-thread stream checksums and the
/// record count consumed.
fn read_pass(
    source: &Arc<dyn DataSource>,
    ids: &[u64],
    threads: usize,
    batch_size: usize,
    seed: u64,
) -> Result<(u64, u64), CliError> {
    let mut combined = 0u64;
    let mut records = 0u64;
    std::thread::scope(|s| -> Result<(), LoadError> {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let shard = shard_indices(ids, t as u32, threads as u32, seed, 0);
                let source = Arc::clone(source);
                s.spawn(move || -> Result<(u64, u64), LoadError> {
                    let mut loader = make_loader(source, &shard, batch_size, 2);
                    let mut h = Fnv64::new();
                    let mut count = 0u64;
                    while let Some(batch) = loader.next() {
                        let batch = batch?;
                        count += batch.num_graphs() as u64;
                        batch.update_checksum(&mut h);
                    }
                    Ok((h.finish(), count))
                })
            })
            .collect();
        for h in handles {
            let (sum, count) = h.join().expect("reader thread panicked")?;
            combined ^= sum;
            records += count;
        }
        Ok(())
    })?;
    Ok((combined, records))
}

fn bench_backend(
    backend: Backend,
    path: &Path,
    repeats: usize,
    threads: usize,
    batch_size: usize,
    seed: u64,
    cold_cache: bool,
    cold_effective: &mut bool,
) -> Result<BackendBench, CliError> {
    let label = crate::backend_label(backend);
    let source = open_source(backend, path)?;
    let ids: Vec<u64> = (0..source.len()).collect();

    let mut seconds = Vec::with_capacity(repeats);
    let mut checksum = None;
    let mut records = 0;
    for _ in 0..repeats {
        if cold_cache {
            *cold_effective &= try_drop_page_cache();
        }
        let t0 = Instant::now();
        let (sum, count) = read_pass(&source, &ids, threads, batch_size, seed)?;
        seconds.push(t0.elapsed().as_secs_f64());
        match checksum {
            None => {
                checksum = Some(sum);
                records = count;
            }
            Some(prev) if prev != sum => {
                return Err(CliError::Integrity(format!(
                    "{label}: checksum changed between passes ({prev:016x} then {sum:016x})"
                )));
            }
            Some(_) => {}
        }
    }

    let mut sorted = seconds.clone();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    Ok(BackendBench {
        backend: label.to_string(),
        path: path.display().to_string(),
        records,
        seconds,
        median_seconds: med,
        min_seconds: sorted[0],
        max_seconds: sorted[sorted.len() - 1],
        records_per_second_median: if med > 0.0 { records as f64 / med } else { 0.0 },
        checksum: format!("{:016x}", checksum.unwrap_or(0)),
    })
}

fn write_csv(path: &Path, backends: &[BackendBench]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["backend", "repeat", "seconds", "records_per_second"])?;
    for b in backends {
        for (i, s) in b.seconds.iter().enumerate() {
            w.write_record([
                b.backend.clone(),
                i.to_string(),
                s.to_string(),
                (b.records as f64 / s).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &BenchArgs, settings: &mut Settings) -> Result<(), CliError> {
    let repeats = settings.resolve("repeats", args.repeats, 5usize)?;
    let threads = settings.resolve("threads", args.threads, 1usize)?.max(1);
    let batch_size = settings.resolve("batch_size", args.batch_size, 128usize)?;
    let seed = settings.resolve("bench_seed", args.bench_seed, 0u64)?;
    if repeats < 3 {
        return Err(crate::invalid(format!(
            "{repeats} repeats cannot support a median with spread; use at least 3"
        )));
    }
    if batch_size == 0 {
        return Err(crate::invalid("batch size must be positive"));
    }

    let mut targets = Vec::new();
    if let Some(p) = &args.inline {
        targets.push((Backend::Inline, p.clone()));
    }
    if let Some(p) = &args.object {
        targets.push((Backend::Object, p.clone()));
    }
    if let Some(p) = &args.gpack {
        targets.push((Backend::Packed, p.clone()));
    }
    if targets.is_empty() {
        return Err(crate::invalid(
            "pass at least one of --inline, --object, --gpack",
        ));
    }

    let mut cold_effective = args.cold_cache;
    let mut backends = Vec::new();
    for (backend, path) in &targets {
        backends.push(bench_backend(
            *backend,
            path,
            repeats,
            threads,
            batch_size,
            seed,
            args.cold_cache,
            &mut cold_effective,
        )?);
    }

    // Every backend streams the same records in the same order, so their
    // checksums must agree; a mismatch means a store was built from
    // different data (or corrupted) and its timings are meaningless.
    for pair in backends.windows(2) {
        if pair[0].checksum != pair[1].checksum || pair[0].records != pair[1].records {
            return Err(CliError::Integrity(format!(
                "stream mismatch: {} read {} records (checksum {}), {} read {} (checksum {})",
                pair[0].backend,
                pair[0].records,
                pair[0].checksum,
                pair[1].backend,
                pair[1].records,
                pair[1].checksum,
            )));
        }
    }

    let mut ratios = BTreeMap::new();
    for a in &backends {
        for b in &backends {
            if !std::ptr::eq(a, b) && a.median_seconds > 0.0 {
                ratios.insert(
                    format!("speedup_{}_vs_{}", a.backend, b.backend),
                    b.median_seconds / a.median_seconds,
                );
            }
        }
    }

    let report = BenchReport {
        schema_version: BENCH_SCHEMA_VERSION,
        repeats,
        threads,
        batch_size,
        cold_cache_requested: args.cold_cache,
        cold_cache_effective: cold_effective,
        backends,
        ratios,
    };

    for b in &report.backends {
        println!(
            "{}: median {:.4}s (min {:.4} max {:.4}), {:.0} records/s, checksum {}",
            b.backend,
            b.median_seconds,
            b.min_seconds,
            b.max_seconds,
            b.records_per_second_median,
            b.checksum
        );
    }
    for (k, v) in &report.ratios {
        println!("{k}: {v:.3}");
    }
    if args.cold_cache {
        println!(
            "cold cache: {}",
            if report.cold_cache_effective {
                "dropped before every pass"
            } else {
                "NOT effective (need root); numbers are warm-cache"
            }
        );
    }

    if let Some(path) = &args.out {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(path, text)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.csv {
        write_csv(path, &report.backends)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
