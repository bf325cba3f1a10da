//! Randomized-case builders and checkers for the invariance suites. Each
//! `check_*` function runs one seeded case and reports a violation as
//! `Err(description)`, so the same logic can back both the property tests
//! and the acceptance runner.

#![allow(dead_code)]

use std::collections::HashSet;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use gapnet_core::dataload::shard_indices;
use gapnet_core::gcnn::{
    adamw_step, forward, global_mean_pool, init_params, zero_grads, Aggregator, Hyper,
    ModelConfig, Scaler, TypedBatch,
};
use gapnet_core::graphenc::{split_dataset, SplitSpec};
use gapnet_core::smiles::{expand_hydrogens, parse_smiles, SmilesError};

pub const NODE_F: usize = 5;
pub const EDGE_F: usize = 4;

pub fn small_config() -> ModelConfig {
    ModelConfig {
        num_conv_layers: 2,
        hidden_width: 8,
        fc_layers: 2,
        aggregators: Aggregator::ALL.to_vec(),
        scalers: Scaler::ALL.to_vec(),
        node_features: NODE_F,
        edge_features: EDGE_F,
        use_edge_features: true,
    }
}

/// One random graph as raw tensors: nodes x features, directed edge list,
/// edge features. Isolated nodes and duplicate edges are allowed on purpose.
pub struct RawGraph {
    pub x: Array2<f64>,
    pub edge_index: Array2<i64>,
    pub edge_attr: Array2<f64>,
    pub y: f64,
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> RawGraph {
    let n = rng.gen_range(1..=max_nodes);
    let m = rng.gen_range(0..=2 * n + 4);
    RawGraph {
        x: Array2::from_shape_fn((n, NODE_F), |_| rng.gen_range(-1.0..1.0)),
        edge_index: Array2::from_shape_fn((2, m), |_| rng.gen_range(0..n) as i64),
        edge_attr: Array2::from_shape_fn((m, EDGE_F), |_| rng.gen_range(0.0..1.0)),
        y: rng.gen_range(-1.0..1.0),
    }
}

pub fn batch_of(graphs: &[RawGraph]) -> TypedBatch<f64> {
    let nodes: usize = graphs.iter().map(|g| g.x.nrows()).sum();
    let edges: usize = graphs.iter().map(|g| g.edge_index.ncols()).sum();
    let mut x = Array2::zeros((nodes, NODE_F));
    let mut edge_index = Array2::zeros((2, edges));
    let mut edge_attr = Array2::zeros((edges, EDGE_F));
    let mut batch_vector = Vec::with_capacity(nodes);
    let mut y = Array1::zeros(graphs.len());
    let (mut node_at, mut edge_at) = (0, 0);
    for (g, graph) in graphs.iter().enumerate() {
        let n = graph.x.nrows();
        let m = graph.edge_index.ncols();
        x.slice_mut(ndarray::s![node_at..node_at + n, ..])
            .assign(&graph.x);
        for e in 0..m {
            edge_index[[0, edge_at + e]] = graph.edge_index[[0, e]] + node_at as i64;
            edge_index[[1, edge_at + e]] = graph.edge_index[[1, e]] + node_at as i64;
        }
        edge_attr
            .slice_mut(ndarray::s![edge_at..edge_at + m, ..])
            .assign(&graph.edge_attr);
        batch_vector.extend(std::iter::repeat(g as i64).take(n));
        y[g] = graph.y;
        node_at += n;
        edge_at += m;
    }
    TypedBatch {
        x,
        edge_index,
        edge_attr,
        y,
        batch_vector,
        num_graphs: graphs.len(),
        ids: (0..graphs.len() as u64).collect(),
    }
}

fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Relabeling the nodes of a graph (and its edge endpoints accordingly)
/// must leave the predicted scalar unchanged up to 1e-6 relative.
pub fn check_permutation_invariance(case_seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let graph = random_graph(&mut rng, 10);
    let config = small_config();
    let delta = rng.gen_range(0.6..2.0);
    let state = init_params::<f64>(&config, rng.gen(), delta).map_err(|e| e.to_string())?;

    let base = batch_of(std::slice::from_ref(&graph));
    let p0 = forward(&state.params, &config, delta, &base).map_err(|e| e.to_string())?
        .predictions()[0];

    // perm[i] is the new label of old node i.
    let perm = random_permutation(&mut rng, graph.x.nrows());
    let mut permuted = RawGraph {
        x: Array2::zeros(graph.x.dim()),
        edge_index: graph.edge_index.clone(),
        edge_attr: graph.edge_attr.clone(),
        y: graph.y,
    };
    for (old, &new) in perm.iter().enumerate() {
        permuted.x.row_mut(new).assign(&graph.x.row(old));
    }
    permuted
        .edge_index
        .mapv_inplace(|v| perm[v as usize] as i64);

    let p1 = forward(&state.params, &config, delta, &batch_of(&[permuted]))
        .map_err(|e| e.to_string())?
        .predictions()[0];

    let tol = 1e-6 * p0.abs().max(p1.abs()).max(1e-9);
    if (p0 - p1).abs() > tol {
        return Err(format!(
            "permuted prediction {p1} deviates from {p0} beyond {tol} (seed {case_seed})"
        ));
    }
    Ok(())
}

/// A graph's prediction must not depend on which other graphs share its
/// batch (64-bit, 1e-12 absolute).
pub fn check_batch_independence(case_seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let k = rng.gen_range(2..=4);
    let graphs: Vec<RawGraph> = (0..k).map(|_| random_graph(&mut rng, 8)).collect();
    let config = small_config();
    let delta = rng.gen_range(0.6..2.0);
    let state = init_params::<f64>(&config, rng.gen(), delta).map_err(|e| e.to_string())?;

    let together = forward(&state.params, &config, delta, &batch_of(&graphs))
        .map_err(|e| e.to_string())?;
    for (g, graph) in graphs.iter().enumerate() {
        let alone = forward(
            &state.params,
            &config,
            delta,
            &batch_of(std::slice::from_ref(graph)),
        )
        .map_err(|e| e.to_string())?;
        let (batched, single) = (together.predictions()[g], alone.predictions()[0]);
        if (batched - single).abs() > 1e-12 {
            return Err(format!(
                "graph {g} predicts {single} alone but {batched} in a batch of {k} (seed {case_seed})"
            ));
        }
    }
    Ok(())
}

/// Mean pooling must be invariant under any node-row permutation that
/// carries the batch assignment along with it.
pub fn check_pooling_symmetry(case_seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let num_graphs = rng.gen_range(1..=5usize);
    let sizes: Vec<usize> = (0..num_graphs).map(|_| rng.gen_range(1..=5)).collect();
    let total: usize = sizes.iter().sum();

    let x = Array2::from_shape_fn((total, NODE_F), |_| rng.gen_range(-1.0f64..1.0));
    let mut batch_vector = Vec::with_capacity(total);
    for (g, &size) in sizes.iter().enumerate() {
        batch_vector.extend(std::iter::repeat(g as i64).take(size));
    }
    let pooled = global_mean_pool(&x, &batch_vector).map_err(|e| e.to_string())?;

    let perm = random_permutation(&mut rng, total);
    let mut px = Array2::zeros(x.dim());
    let mut pbv = vec![0i64; total];
    for (old, &new) in perm.iter().enumerate() {
        px.row_mut(new).assign(&x.row(old));
        pbv[new] = batch_vector[old];
    }
    let pooled_perm = global_mean_pool(&px, &pbv).map_err(|e| e.to_string())?;

    for g in 0..num_graphs {
        for f in 0..NODE_F {
            let (a, b) = (pooled[[g, f]], pooled_perm[[g, f]]);
            if (a - b).abs() > 1e-12 {
                return Err(format!(
                    "pooled[{g},{f}] moved from {a} to {b} under row permutation (seed {case_seed})"
                ));
            }
        }
    }
    Ok(())
}

/// Per-epoch rank shards must be pairwise disjoint, equally sized at
/// floor(n / world), and drawn from the global index list.
pub fn check_shard_partition(n: usize, world: u32, seed: u64, epoch: u64) -> Result<(), String> {
    let base = seed % 1000;
    let stride = 1 + seed % 7;
    let ids: Vec<u64> = (0..n as u64).map(|i| base + stride * i).collect();
    let id_set: HashSet<u64> = ids.iter().copied().collect();

    let per_rank = n / world as usize;
    let mut union = HashSet::new();
    let mut total = 0usize;
    for rank in 0..world {
        let shard = shard_indices(&ids, rank, world, seed, epoch);
        if shard.len() != per_rank {
            return Err(format!(
                "rank {rank} got {} indices, expected {per_rank} (n={n}, world={world})",
                shard.len()
            ));
        }
        for &id in &shard {
            if !id_set.contains(&id) {
                return Err(format!("rank {rank} shard holds foreign index {id}"));
            }
        }
        total += shard.len();
        union.extend(shard);
    }
    if union.len() != total {
        return Err(format!(
            "shards overlap: {total} drawn but union holds {} (n={n}, world={world}, seed={seed}, epoch={epoch})",
            union.len()
        ));
    }
    if union.len() != per_rank * world as usize {
        return Err(format!(
            "union covers {} of expected {} indices",
            union.len(),
            per_rank * world as usize
        ));
    }
    Ok(())
}

/// Train/val/test must partition [0, n) exactly.
pub fn check_split_partition(n: usize, seed: u64) -> Result<(), String> {
    let spec = SplitSpec {
        seed,
        ..SplitSpec::default()
    };
    let splits = split_dataset(n, &spec).map_err(|e| e.to_string())?;
    let mut seen = HashSet::new();
    let total = splits.train.len() + splits.val.len() + splits.test.len();
    for &id in splits.train.iter().chain(&splits.val).chain(&splits.test) {
        if id >= n as u64 {
            return Err(format!("split index {id} outside 0..{n}"));
        }
        if !seen.insert(id) {
            return Err(format!("split index {id} assigned twice (n={n}, seed={seed})"));
        }
    }
    if total != n {
        return Err(format!("splits cover {total} of {n} samples"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Frozen parser fixture, shared by the pin test and the acceptance runner.
// Counts were produced by an independent reference implementation and
// cross-checked against generator ground truth before freezing.

pub const SMILES_FIXTURE: &str = include_str!("../fixtures/smiles_fixture_v1.csv");

pub struct FixtureRow {
    pub smiles: String,
    pub heavy_atoms: usize,
    pub heavy_bonds: usize,
    pub hydrogens: usize,
    pub aromatic_atoms: usize,
}

pub fn fixture_rows() -> Vec<FixtureRow> {
    let mut lines = SMILES_FIXTURE.lines();
    assert_eq!(
        lines.next(),
        Some("smiles,heavy_atoms,heavy_bonds,hydrogens,aromatic_atoms"),
        "fixture header"
    );
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5, "fixture row: {line}");
            let num = |i: usize| fields[i].parse::<usize>().expect("fixture count");
            FixtureRow {
                smiles: fields[0].to_string(),
                heavy_atoms: num(1),
                heavy_bonds: num(2),
                hydrogens: num(3),
                aromatic_atoms: num(4),
            }
        })
        .collect()
}

/// Runs every fixture row through the parser and hydrogen expansion.
/// Returns the row count and a description of each disagreement.
pub fn fixture_failures() -> (usize, Vec<String>) {
    let rows = fixture_rows();
    let mut failures = Vec::new();
    for row in &rows {
        let mol = match parse_smiles(&row.smiles) {
            Ok(m) => m,
            Err(e) => {
                failures.push(format!("{}: parse error {e}", row.smiles));
                continue;
            }
        };
        let aromatic = mol.atoms.iter().filter(|a| a.aromatic).count();
        let got = (
            mol.heavy_atom_count(),
            mol.bonds.len(),
            mol.total_implicit_h(),
            aromatic,
        );
        let want = (
            row.heavy_atoms,
            row.heavy_bonds,
            row.hydrogens,
            row.aromatic_atoms,
        );
        if got != want {
            failures.push(format!("{}: got {got:?}, fixture {want:?}", row.smiles));
            continue;
        }

        let expanded = expand_hydrogens(mol);
        if expanded.atoms.len() != row.heavy_atoms + row.hydrogens
            || expanded.bonds.len() != row.heavy_bonds + row.hydrogens
            || expanded.atoms.iter().any(|a| a.implicit_h != 0)
        {
            failures.push(format!("{}: hydrogen expansion inconsistent", row.smiles));
        }
    }
    (rows.len(), failures)
}

/// Malformed inputs paired with a predicate over the error kind each must
/// produce.
pub fn malformed_smiles_cases() -> Vec<(&'static str, fn(&SmilesError) -> bool)> {
    use SmilesError::*;
    vec![
        ("", |e| matches!(e, EmptyInput)),
        ("C(C", |e| matches!(e, UnbalancedBranch { .. })),
        ("CC)C", |e| matches!(e, UnbalancedBranch { .. })),
        ("C1CCC", |e| matches!(e, UnclosedRing { ring: 1 })),
        ("[Xe]F", |e| matches!(e, UnknownElement { .. })),
        ("[N+-]", |e| matches!(e, MalformedCharge { .. })),
        ("[C+0]", |e| matches!(e, MalformedCharge { .. })),
        ("[12CH4]", |e| matches!(e, MalformedBracketAtom { .. })),
        ("[CH3:1]", |e| matches!(e, MalformedBracketAtom { .. })),
        ("[CH", |e| matches!(e, MalformedBracketAtom { .. })),
        ("C=", |e| matches!(e, DanglingBond { .. })),
        ("=C", |e| matches!(e, DanglingBond { .. })),
        ("C=#C", |e| matches!(e, DanglingBond { .. })),
        ("C(=)C", |e| matches!(e, DanglingBond { .. })),
        ("C=1CCCC-1", |e| matches!(e, RingBondMismatch { ring: 1, .. })),
        ("C11", |e| matches!(e, SelfRingBond { ring: 1, .. })),
        ("C1C1", |e| matches!(e, DuplicateBond { .. })),
        ("C%5CC", |e| matches!(e, UnexpectedChar { ch: '%', .. })),
        ("CXC", |e| matches!(e, UnexpectedChar { ch: 'X', .. })),
    ]
}

/// Checks that every malformed input fails with its specified error kind.
pub fn malformed_case_failures() -> Vec<String> {
    malformed_smiles_cases()
        .into_iter()
        .filter_map(|(input, check)| match parse_smiles(input) {
            Ok(m) => Some(format!(
                "{input:?} parsed to {} atoms but must fail",
                m.atoms.len()
            )),
            Err(e) if check(&e) => None,
            Err(e) => Some(format!("{input:?} returned unexpected kind: {e:?}")),
        })
        .collect()
}

/// With zero gradients and fresh moments, one AdamW step must be pure
/// decoupled decay: theta <- theta - lr * (wd * theta), elementwise exact.
pub fn check_adamw_zero_grad_decay(seed: u64, lr: f64, wd: f64) -> Result<(), String> {
    let config = ModelConfig {
        num_conv_layers: 1,
        hidden_width: 4,
        fc_layers: 1,
        aggregators: vec![Aggregator::Mean],
        scalers: vec![Scaler::Identity],
        node_features: NODE_F,
        edge_features: EDGE_F,
        use_edge_features: true,
    };
    let mut state = init_params::<f64>(&config, seed, 1.0).map_err(|e| e.to_string())?;
    let before = state.params.flatten();
    zero_grads(&mut state);
    let hyper = Hyper {
        learning_rate: lr,
        weight_decay: wd,
        ..Hyper::default()
    };
    adamw_step(&mut state, &hyper);
    let after = state.params.flatten();

    for (i, (&b, &a)) in before.iter().zip(after.iter()).enumerate() {
        let expect = b - lr * (wd * b);
        if a != expect {
            return Err(format!(
                "element {i}: {b} stepped to {a}, pure decay gives {expect} (lr={lr}, wd={wd})"
            ));
        }
        // Same thing algebraically: theta * (1 - lr*wd), up to rounding.
        let closed = b * (1.0 - lr * wd);
        if (a - closed).abs() > 8.0 * b.abs() * f64::EPSILON {
            return Err(format!(
                "element {i}: {a} is not theta*(1-lr*wd)={closed} within rounding"
            ));
        }
    }
    Ok(())
}
