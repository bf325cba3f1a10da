//! `train`: runs data-parallel training over a store and writes a metrics
//! report, loss/parity tables, and optional checkpoints. Workers either
//! share this process (default) or rendezvous over TCP when every rank is
//! launched as its own process.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime};

use clap::Args;
use gapnet_core::dataload::{open_source, Backend, DataSource};
use gapnet_core::ddp::{
    run_training, run_training_rank, tcp_join, DdpError, EpochMetrics, FinalEvals, PhaseTimings,
    RankOutput, ReduceAlgo, TcpHost, TrainSpec, Transport,
};
use gapnet_core::gcnn::{Hyper, ModelConfig, Scalar};
use gapnet_core::graphenc::{split_dataset, SplitSpec, Splits, EDGE_FEATURE_COUNT};
use gapnet_core::wire::{self, Cursor};

use crate::config::Settings;
use crate::metrics::{
    timing_records, EpochRecord, EvalSummary, MetricsReport, METRICS_SCHEMA_VERSION,
};
use crate::CliError;

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    /// Dataset location: a table for inline, a store directory otherwise.
    #[arg(long)]
    pub data: PathBuf,
    /// Source backend: inline, object, or gpack.
    #[arg(long)]
    pub backend: Backend,
    /// Directory for metrics, tables, and checkpoints.
    #[arg(long, default_value = "run")]
    pub out_dir: PathBuf,
    /// Data-parallel worker count.
    #[arg(long)]
    pub world_size: Option<u32>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Per-rank batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Parameter initialization and shard shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model arithmetic: f32 or f64.
    #[arg(long)]
    pub precision: Option<String>,
    /// Gradient reduction schedule: ring or rank-ascending.
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub conv_layers: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub fc_layers: Option<usize>,
    #[arg(long)]
    pub use_edge_features: Option<bool>,
    /// Fraction of the dataset used for training.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Share of the non-training remainder used for validation.
    #[arg(long)]
    pub val_share_of_rest: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub prefetch_depth: Option<usize>,
    #[arg(long)]
    pub eval_batch_size: Option<usize>,
    /// Write per-epoch and final checkpoints under the output directory.
    #[arg(long)]
    pub checkpoints: bool,
    /// Rank 0's host:port; set on every rank to train across processes.
    #[arg(long)]
    pub rendezvous: Option<String>,
    /// This process's rank when --rendezvous is set.
    #[arg(long)]
    pub rank: Option<u32>,
    /// Transport receive timeout.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

/// Scalar-type-independent remains of a run; model state is already on
/// disk (checkpoints) by the time this is assembled.
struct Finished {
    timings: Vec<Vec<PhaseTimings>>,
    history: Vec<EpochMetrics>,
    evals: FinalEvals,
    samples_per_epoch: u64,
}

fn parse_algo(name: &str) -> Result<ReduceAlgo, CliError> {
    match name {
        "ring" => Ok(ReduceAlgo::Ring),
        "rank-ascending" => Ok(ReduceAlgo::RankAscending),
        other => Err(crate::invalid(format!(
            "unknown reduction algo {other:?} (expected ring or rank-ascending)"
        ))),
    }
}

/// Samples consumed per epoch across all ranks under drop-last sharding.
fn samples_per_epoch(train_len: usize, world: u32, batch: usize) -> u64 {
    let per_rank = (train_len as u64 / u64::from(world)) / batch as u64 * batch as u64;
    per_rank * u64::from(world)
}

fn encode_timings(timings: &[PhaseTimings]) -> Vec<u8> {
    let mut out = Vec::new();
    wire::put_u32(&mut out, timings.len() as u32);
    for t in timings {
        for v in [
            t.dataload,
            t.forward,
            t.backward,
            t.optimizer,
            t.gradient_aggregation,
            t.total,
        ] {
            wire::put_f64(&mut out, v);
        }
    }
    out
}

fn decode_timings(frame: &[u8]) -> Result<Vec<PhaseTimings>, CliError> {
    let mut c = Cursor::new(frame);
    let n = c.get_u32()?;
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        out.push(PhaseTimings {
            dataload: c.get_f64()?,
            forward: c.get_f64()?,
            backward: c.get_f64()?,
            optimizer: c.get_f64()?,
            gradient_aggregation: c.get_f64()?,
            total: c.get_f64()?,
        });
    }
    Ok(out)
}

fn run_in_proc<T: Scalar>(
    source: &Arc<dyn DataSource>,
    splits: &Splits,
    spec: &TrainSpec,
    world: u32,
    timeout: Duration,
) -> Result<Finished, CliError> {
    let out = run_training::<T>(source, splits, spec, world, timeout)?;
    Ok(Finished {
        timings: out.timings,
        history: out.history,
        evals: out.evals,
        samples_per_epoch: out.samples_per_epoch,
    })
}

/// One process-per-rank worker. Rank 0 hosts the rendezvous, gathers every
/// rank's timings afterward, and is the only rank that reports.
fn run_tcp<T: Scalar>(
    source: &Arc<dyn DataSource>,
    splits: &Splits,
    spec: &TrainSpec,
    world: u32,
    rank: u32,
    rendezvous: &str,
    timeout: Duration,
) -> Result<Option<Finished>, CliError> {
    if rank >= world {
        return Err(crate::invalid(format!(
            "rank {rank} outside world of {world}"
        )));
    }
    let tr = if rank == 0 {
        TcpHost::bind(rendezvous, world, timeout)?.accept()?
    } else {
        tcp_join(rendezvous, rank, world, timeout)?
    };
    let out: RankOutput<T> = run_training_rank(&tr, source, splits, spec)?;

    if rank == 0 {
        let mut timings = vec![Vec::new(); world as usize];
        for r in 1..world {
            timings[r as usize] = decode_timings(&tr.recv(r)?)?;
        }
        timings[0] = out.timings;
        Ok(Some(Finished {
            timings,
            history: out.history,
            evals: out.evals.ok_or_else(|| {
                CliError::Distributed(DdpError::RankFailed {
                    rank: 0,
                    detail: "rank 0 produced no evaluations".to_string(),
                })
            })?,
            samples_per_epoch: samples_per_epoch(
                splits.train.len(),
                world,
                spec.hyper.local_batch_size,
            ),
        }))
    } else {
        tr.send(0, &encode_timings(&out.timings))?;
        Ok(None)
    }
}

pub fn run(args: &TrainArgs, settings: &mut Settings) -> Result<(), CliError> {
    let world_size = settings.resolve("world_size", args.world_size, 1u32)?;
    let epochs = settings.resolve("epochs", args.epochs, 3usize)?;
    let batch_size = settings.resolve("batch_size", args.batch_size, 128usize)?;
    let learning_rate = settings.resolve("learning_rate", args.learning_rate, 1e-3f64)?;
    let weight_decay = settings.resolve("weight_decay", args.weight_decay, 0.01f64)?;
    let seed = settings.resolve("seed", args.seed, 0u64)?;
    let precision = settings.resolve("precision", args.precision.clone(), "f64".to_string())?;
    let algo = parse_algo(&settings.resolve("algo", args.algo.clone(), "ring".to_string())?)?;
    let conv_layers = settings.resolve("conv_layers", args.conv_layers, 6usize)?;
    let hidden_width = settings.resolve("hidden_width", args.hidden_width, 55usize)?;
    let fc_layers = settings.resolve("fc_layers", args.fc_layers, 2usize)?;
    let use_edge_features =
        settings.resolve("use_edge_features", args.use_edge_features, true)?;
    let train_fraction = settings.resolve("train_fraction", args.train_fraction, 0.94f64)?;
    let val_share =
        settings.resolve("val_share_of_rest", args.val_share_of_rest, 1.0 / 3.0)?;
    let split_seed = settings.resolve("split_seed", args.split_seed, 0u64)?;
    let prefetch_depth = settings.resolve("prefetch_depth", args.prefetch_depth, 2usize)?;
    let eval_batch_size = settings.resolve("eval_batch_size", args.eval_batch_size, 256usize)?;
    let timeout_secs = settings.resolve("timeout_secs", args.timeout_secs, 600u64)?;
    let timeout = Duration::from_secs(timeout_secs);
    if world_size == 0 {
        return Err(crate::invalid("world size must be positive"));
    }

    let source = open_source(args.backend, &args.data)?;
    let splits = split_dataset(
        source.len() as usize,
        &SplitSpec {
            train_fraction,
            val_share_of_rest: val_share,
            seed: split_seed,
        },
    )?;

    let mut config = ModelConfig::new(source.vocab().node_feature_count(), EDGE_FEATURE_COUNT);
    config.num_conv_layers = conv_layers;
    config.hidden_width = hidden_width;
    config.fc_layers = fc_layers;
    config.use_edge_features = use_edge_features;
    let hyper = Hyper {
        learning_rate,
        local_batch_size: batch_size,
        max_epochs: epochs,
        weight_decay,
        ..Hyper::default()
    };
    let mut spec = TrainSpec::new(config, hyper, seed);
    spec.algo = algo;
    spec.prefetch_depth = prefetch_depth;
    spec.eval_batch_size = eval_batch_size;
    let rank = settings.resolve("rank", args.rank, 0u32)?;
    let reports = args.rendezvous.is_none() || rank == 0;
    if reports {
        std::fs::create_dir_all(&args.out_dir)?;
        if args.checkpoints {
            spec.checkpoint_dir = Some(args.out_dir.join("checkpoints"));
        }
    }

    let started = Instant::now();
    let finished = match (&args.rendezvous, precision.as_str()) {
        (None, "f64") => Some(run_in_proc::<f64>(&source, &splits, &spec, world_size, timeout)?),
        (None, "f32") => Some(run_in_proc::<f32>(&source, &splits, &spec, world_size, timeout)?),
        (Some(addr), "f64") => {
            run_tcp::<f64>(&source, &splits, &spec, world_size, rank, addr, timeout)?
        }
        (Some(addr), "f32") => {
            run_tcp::<f32>(&source, &splits, &spec, world_size, rank, addr, timeout)?
        }
        (_, other) => {
            return Err(crate::invalid(format!(
                "unknown precision {other:?} (expected f32 or f64)"
            )))
        }
    };
    let total_seconds = started.elapsed().as_secs_f64();

    let Some(finished) = finished else {
        println!("rank {rank} finished in {total_seconds:.2}s");
        return Ok(());
    };

    let report = MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        created_unix: SystemTime::now()
            .duration_since(SystemTime::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        dataset: args.data.display().to_string(),
        backend: crate::backend_label(args.backend).to_string(),
        world_size,
        precision,
        seed,
        settings: settings.resolved().clone(),
        settings_fingerprint: format!("{:016x}", settings.fingerprint()),
        samples_per_epoch: finished.samples_per_epoch,
        total_seconds,
        epochs: finished.history.iter().map(EpochRecord::from).collect(),
        timings: timing_records(&finished.timings),
        final_train: EvalSummary::from(&finished.evals.train),
        final_val: EvalSummary::from(&finished.evals.val),
        final_test: EvalSummary::from(&finished.evals.test),
    };
    report.write_json(&args.out_dir.join("metrics.json"))?;
    crate::metrics::write_loss_csv(&args.out_dir.join("loss.csv"), &report.epochs)?;
    for (name, eval) in [
        ("parity_train.csv", &finished.evals.train),
        ("parity_val.csv", &finished.evals.val),
        ("parity_test.csv", &finished.evals.test),
    ] {
        crate::metrics::write_parity_csv(&args.out_dir.join(name), eval)?;
    }

    for e in &report.epochs {
        println!(
            "epoch {}: train loss {:.6}, val mse {:.6}, val mae {:.6}",
            e.epoch, e.train_loss, e.val_mse, e.val_mae
        );
    }
    println!(
        "final: train mae {:.6}, val mae {:.6}, test mae {:.6} ({:.2}s, {} samples/epoch)",
        report.final_train.mae,
        report.final_val.mae,
        report.final_test.mae,
        total_seconds,
        report.samples_per_epoch
    );
    println!("wrote {}", args.out_dir.join("metrics.json").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timings_roundtrip_through_frame() {
        let t = PhaseTimings {
            dataload: 0.25,
            forward: 1.5,
            backward: 2.5,
            optimizer: 0.125,
            gradient_aggregation: 0.0625,
            total: 4.4375,
        };
        let frame = encode_timings(&[t, PhaseTimings::default()]);
        let back = decode_timings(&frame).unwrap();
        assert_eq!(back, vec![t, PhaseTimings::default()]);
    }

    #[test]
    fn samples_per_epoch_drops_remainders() {
        // 1000 train ids, world 4, batch 32: 250 per rank -> 7 batches -> 224.
        assert_eq!(samples_per_epoch(1000, 4, 32), 896);
        assert_eq!(samples_per_epoch(1000, 1, 128), 896);
        assert_eq!(samples_per_epoch(100, 8, 1), 96);
    }

    #[test]
    fn algo_names() {
        assert_eq!(parse_algo("ring").unwrap(), ReduceAlgo::Ring);
        assert_eq!(
            parse_algo("rank-ascending").unwrap(),
            ReduceAlgo::RankAscending
        );
        assert_eq!(parse_algo("tree").unwrap_err().exit_code(), 2);
    }
}
