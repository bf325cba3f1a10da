//! `gen`: writes a synthetic molecule corpus as delimited text.

use std::path::PathBuf;

use clap::Args;
use gapnet_core::corpus::{self, CorpusSpec, Style, TargetKind};

use crate::config::Settings;
use crate::CliError;

#[derive(Args, Clone, Debug)]
pub struct GenArgs {
    /// Output path for the generated table.
    #[arg(long)]
    pub out: PathBuf,
    /// Molecule count.
    #[arg(long)]
    pub count: Option<usize>,
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Molecule family: alkane or organic.
    #[arg(long)]
    pub style: Option<String>,
    /// Target formula: scaled-heavy-count or dft-like.
    #[arg(long)]
    pub target: Option<String>,
    /// Smallest heavy-atom count per molecule.
    #[arg(long)]
    pub min_heavy: Option<usize>,
    /// Largest heavy-atom count per molecule.
    #[arg(long)]
    pub max_heavy: Option<usize>,
    /// Append ground-truth structure-count columns.
    #[arg(long)]
    pub truth_columns: bool,
}

pub fn parse_target(name: &str) -> Result<TargetKind, CliError> {
    match name {
        "scaled-heavy-count" => Ok(TargetKind::ScaledHeavyCount),
        "dft-like" => Ok(TargetKind::DftLike),
        other => Err(crate::invalid(format!(
            "unknown target {other:?} (expected scaled-heavy-count or dft-like)"
        ))),
    }
}

pub fn run(args: &GenArgs, settings: &mut Settings) -> Result<(), CliError> {
    let count = settings.resolve("count", args.count, 1000usize)?;
    let seed = settings.resolve("seed", args.seed, 0u64)?;
    let style = settings.resolve("style", args.style.clone(), "organic".to_string())?;
    let target = settings.resolve("target", args.target.clone(), "dft-like".to_string())?;
    let min_heavy = settings.resolve("min_heavy", args.min_heavy, 4usize)?;
    let max_heavy = settings.resolve("max_heavy", args.max_heavy, 16usize)?;

    if count == 0 {
        return Err(crate::invalid("count must be positive"));
    }
    if min_heavy == 0 || min_heavy > max_heavy {
        return Err(crate::invalid(format!(
            "heavy-atom range {min_heavy}..={max_heavy} is empty or starts at zero"
        )));
    }
    let style = match style.as_str() {
        "alkane" => Style::Alkane { min_heavy, max_heavy },
        "organic" => Style::Organic { min_heavy, max_heavy },
        other => {
            return Err(crate::invalid(format!(
                "unknown style {other:?} (expected alkane or organic)"
            )))
        }
    };

    let spec = CorpusSpec {
        count,
        seed,
        style,
        target: parse_target(&target)?,
    };
    let records = corpus::generate(&spec);
    corpus::write_csv(&args.out, &records, args.truth_columns)?;
    println!("wrote {} molecules to {}", records.len(), args.out.display());
    Ok(())
}
