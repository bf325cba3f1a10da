//! `inspect`: prints the contents and layout of a store, optionally
//! dumping one graph or verifying stored checksums.

use std::path::PathBuf;

use clap::Args;
use gapnet_core::dataload::{open_source, Backend, DataSource};
use gapnet_core::gpack;
use gapnet_core::graphenc::GraphSample;

use crate::config::Settings;
use crate::CliError;

#[derive(Args, Clone, Debug)]
pub struct InspectArgs {
    /// Store location.
    #[arg(long)]
    pub path: PathBuf,
    /// Backend: inline, object, or gpack.
    #[arg(long)]
    pub backend: Backend,
    /// Dump one graph by id.
    #[arg(long)]
    pub graph: Option<u64>,
    /// Verify stored data checksums (gpack only).
    #[arg(long)]
    pub verify: bool,
}

fn dump_graph(g: &GraphSample, stored_id: Option<u64>) {
    println!("graph {}:", g.id);
    if let Some(id) = stored_id {
        if id != g.id {
            println!("  stored id: {id}");
        }
    }
    println!("  nodes: {}", g.num_nodes());
    println!("  edges: {} (directed)", g.num_edges());
    println!("  target: {}", g.y);
    let edges: Vec<String> = g
        .edge_index
        .columns()
        .into_iter()
        .take(64)
        .map(|c| format!("{}->{}", c[0], c[1]))
        .collect();
    let suffix = if g.num_edges() > 64 { " ..." } else { "" };
    println!("  edge list: {}{suffix}", edges.join(" "));
    for (i, row) in g.x.rows().into_iter().enumerate().take(32) {
        let feats: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  x[{i}]: {}", feats.join(" "));
    }
    if g.num_nodes() > 32 {
        println!("  ... {} more nodes", g.num_nodes() - 32);
    }
}

/// Counts nodes/edges by fetching every record. Rows that fail to convert
/// are counted, not fatal, so a partly bad inline table still inspects.
fn scan_source(source: &dyn DataSource) -> (u64, u64, u64) {
    let (mut nodes, mut edges, mut unreadable) = (0u64, 0u64, 0u64);
    for id in 0..source.len() {
        match source.fetch(id) {
            Ok(g) => {
                nodes += g.num_nodes() as u64;
                edges += g.num_edges() as u64;
            }
            Err(_) => unreadable += 1,
        }
    }
    (nodes, edges, unreadable)
}

pub fn run(args: &InspectArgs, _settings: &mut Settings) -> Result<(), CliError> {
    println!("backend: {}", crate::backend_label(args.backend));
    println!("path: {}", args.path.display());

    if args.verify && args.backend != Backend::Packed {
        return Err(crate::invalid("--verify applies to the gpack backend"));
    }

    let num_graphs;
    if args.backend == Backend::Packed {
        let reader = gpack::open_reader(&args.path)?;
        let s = reader.summary();
        num_graphs = s.num_graphs;
        println!("graphs: {}", s.num_graphs);
        println!(
            "nodes: {} total, {:.2} avg/graph",
            s.total_nodes, s.avg_nodes_per_graph
        );
        println!("edges: {} total (directed)", s.total_edges);
        let vocab = reader.vocab()?;
        println!(
            "node features: {} ({} element classes + extras)",
            vocab.node_feature_count(),
            vocab.len()
        );
        println!("elements: {}", vocab.symbols().join(" "));
        let sizes: Vec<String> = reader
            .dataset()
            .subfile_lengths()
            .iter()
            .map(|b| b.to_string())
            .collect();
        println!("subfiles: {} ({} bytes)", sizes.len(), sizes.join(" "));
        if args.verify {
            reader.verify_data()?;
            println!("data checksums: ok");
        }
        if let Some(gid) = args.graph {
            if gid >= num_graphs {
                return Err(crate::invalid(format!(
                    "graph {gid} out of range (store has {num_graphs})"
                )));
            }
            dump_graph(&reader.read_graph(gid)?, reader.dataset().graph_id(gid));
        }
        return Ok(());
    }

    let source = open_source(args.backend, &args.path)?;
    num_graphs = source.len();
    println!("graphs: {num_graphs}");
    let (nodes, edges, unreadable) = scan_source(source.as_ref());
    let readable = num_graphs - unreadable;
    println!(
        "nodes: {} total, {:.2} avg/graph",
        nodes,
        if readable == 0 { 0.0 } else { nodes as f64 / readable as f64 }
    );
    println!("edges: {edges} total (directed)");
    if unreadable > 0 {
        println!("unreadable records: {unreadable}");
    }
    let vocab = source.vocab();
    println!(
        "node features: {} ({} element classes + extras)",
        vocab.node_feature_count(),
        vocab.len()
    );
    println!("elements: {}", vocab.symbols().join(" "));
    if let Some(gid) = args.graph {
        if gid >= num_graphs {
            return Err(crate::invalid(format!(
                "graph {gid} out of range (store has {num_graphs})"
            )));
        }
        dump_graph(&source.fetch(gid)?, None);
    }
    Ok(())
}
