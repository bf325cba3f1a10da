//! Tensor encoding of molecules and deterministic dataset splits.
//!
//! A fully hydrogen-expanded [`Molecule`] becomes a [`GraphSample`]:
//!
//! * `x`: one node row per atom, `[one-hot element | degree | formal charge |
//!   aromatic flag]`, so the row width is `vocab.len() + 3`.
//! * `edge_index`: a `2 x E` array of directed edges; every bond contributes
//!   both directions, and columns are sorted by `(source, destination)`.
//! * `edge_attr`: one row per directed edge, a one-hot over bond type in the
//!   fixed order single, double, triple, aromatic.
//! * `y`: the scalar regression target in eV.
//!
//! Feature vocabularies list the elements present in a corpus sorted by
//! atomic number, so encodings are reproducible across runs and backends.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::smiles::{BondOrder, Element, Molecule};

pub const EDGE_FEATURE_COUNT: usize = 4;

/// Extra node-feature columns appended after the element one-hot:
/// degree, formal charge, aromatic flag.
pub const EXTRA_NODE_FEATURES: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("dataset contains no molecules")]
    EmptyDataset,
    #[error("element {0} is not in the feature vocabulary")]
    UnknownElement(&'static str),
    #[error("molecule still has implicit hydrogens; expand before encoding")]
    UnexpandedHydrogens,
    #[error("dataset of {n} samples is too small to split (minimum {min})")]
    TooFewSamples { n: usize, min: usize },
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
}

/// Element vocabulary of a corpus, sorted by atomic number and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureVocab {
    elements: Vec<Element>,
}

impl FeatureVocab {
    /// Builds a vocabulary from every element observed across a corpus.
    pub fn build(elements: impl IntoIterator<Item = Element>) -> Result<Self, EncodeError> {
        let mut elements: Vec<Element> = elements.into_iter().collect();
        if elements.is_empty() {
            return Err(EncodeError::EmptyDataset);
        }
        elements.sort_by_key(|e| e.atomic_number());
        elements.dedup();
        Ok(FeatureVocab { elements })
    }

    /// Reconstructs a vocabulary from stored element symbols.
    pub fn from_symbols<S: AsRef<str>>(symbols: &[S]) -> Result<Self, EncodeError> {
        let elements = symbols
            .iter()
            .map(|s| {
                Element::from_symbol(s.as_ref())
                    .ok_or(EncodeError::UnknownElement("unrecognized symbol"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        FeatureVocab::build(elements)
    }

    pub fn collect_from_molecules<'a>(
        mols: impl IntoIterator<Item = &'a Molecule>,
    ) -> Result<Self, EncodeError> {
        FeatureVocab::build(
            mols.into_iter()
                .flat_map(|m| m.atoms.iter().map(|a| a.element))
                // Hydrogen expansion adds H nodes even when no H appears
                // in the text, so always reserve a slot for it.
                .chain(std::iter::once(Element::H)),
        )
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn symbols(&self) -> Vec<String> {
        self.elements.iter().map(|e| e.symbol().to_string()).collect()
    }

    pub fn index_of(&self, e: Element) -> Option<usize> {
        self.elements.iter().position(|&x| x == e)
    }

    /// Width of one node feature row.
    pub fn node_feature_count(&self) -> usize {
        self.elements.len() + EXTRA_NODE_FEATURES
    }
}

/// One encoded molecule. Tensors are stored as `f32`; training may widen
/// them to `f64` at collation time.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    /// Stable identifier: the record's index in its source corpus.
    pub id: u64,
    /// `num_nodes x node_feature_count`
    pub x: Array2<f32>,
    /// `2 x num_edges`, row 0 sources, row 1 destinations
    pub edge_index: Array2<i64>,
    /// `num_edges x EDGE_FEATURE_COUNT`
    pub edge_attr: Array2<f32>,
    /// Regression target in eV.
    pub y: f32,
}

impl GraphSample {
    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_index.ncols()
    }
}

fn bond_type_index(order: BondOrder) -> usize {
    match order {
        BondOrder::Single => 0,
        BondOrder::Double => 1,
        BondOrder::Triple => 2,
        BondOrder::Aromatic => 3,
    }
}

/// Encodes a fully expanded molecule against a vocabulary.
pub fn encode_graph(
    mol: &Molecule,
    vocab: &FeatureVocab,
    target_ev: f32,
    id: u64,
) -> Result<GraphSample, EncodeError> {
    if mol.atoms.is_empty() {
        return Err(EncodeError::EmptyDataset);
    }
    if mol.atoms.iter().any(|a| a.implicit_h != 0) {
        return Err(EncodeError::UnexpandedHydrogens);
    }

    let n = mol.atoms.len();
    let nf = vocab.node_feature_count();
    let mut degree = vec![0u32; n];
    for b in &mol.bonds {
        degree[b.a] += 1;
        degree[b.b] += 1;
    }

    let mut x = Array2::<f32>::zeros((n, nf));
    for (i, atom) in mol.atoms.iter().enumerate() {
        let slot = vocab
            .index_of(atom.element)
            .ok_or(EncodeError::UnknownElement(atom.element.symbol()))?;
        x[[i, slot]] = 1.0;
        x[[i, vocab.len()]] = degree[i] as f32;
        x[[i, vocab.len() + 1]] = atom.formal_charge as f32;
        x[[i, vocab.len() + 2]] = if atom.aromatic { 1.0 } else { 0.0 };
    }

    // Both directions of every bond, sorted by (source, destination).
    let mut directed: Vec<(usize, usize, usize)> = Vec::with_capacity(mol.bonds.len() * 2);
    for b in &mol.bonds {
        let t = bond_type_index(b.order);
        directed.push((b.a, b.b, t));
        directed.push((b.b, b.a, t));
    }
    directed.sort_unstable_by_key(|&(s, d, _)| (s, d));

    let e = directed.len();
    let mut edge_index = Array2::<i64>::zeros((2, e));
    let mut edge_attr = Array2::<f32>::zeros((e, EDGE_FEATURE_COUNT));
    for (col, &(s, d, t)) in directed.iter().enumerate() {
        edge_index[[0, col]] = s as i64;
        edge_index[[1, col]] = d as i64;
        edge_attr[[col, t]] = 1.0;
    }

    Ok(GraphSample {
        id,
        x,
        edge_index,
        edge_attr,
        y: target_ev,
    })
}

/// Fractions controlling the train/validation/test partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    /// Fraction of the whole dataset assigned to training.
    pub train_fraction: f64,
    /// Share of the *remainder* assigned to validation; the rest is test.
    pub val_share_of_rest: f64,
    /// Seed for the shuffle that precedes partitioning.
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.94,
            val_share_of_rest: 1.0 / 3.0,
            seed: 0,
        }
    }
}

pub const MIN_SPLIT_SAMPLES: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl Splits {
    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Deterministically partitions ids `0..n` into train/val/test. The ids are
/// shuffled with a seeded generator, the first `floor(train_fraction * n)`
/// become the training set, and the remainder is divided between validation
/// and test by `val_share_of_rest`.
pub fn split_dataset(n: usize, spec: &SplitSpec) -> Result<Splits, EncodeError> {
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(EncodeError::InvalidSplit(format!(
            "train_fraction {} outside [0, 1]",
            spec.train_fraction
        )));
    }
    if !(0.0..=1.0).contains(&spec.val_share_of_rest) {
        return Err(EncodeError::InvalidSplit(format!(
            "val_share_of_rest {} outside [0, 1]",
            spec.val_share_of_rest
        )));
    }
    if n < MIN_SPLIT_SAMPLES {
        return Err(EncodeError::TooFewSamples {
            n,
            min: MIN_SPLIT_SAMPLES,
        });
    }

    let mut ids: Vec<u64> = (0..n as u64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);

    let train_end = (spec.train_fraction * n as f64).floor() as usize;
    let rest = n - train_end;
    let val_end = train_end + (spec.val_share_of_rest * rest as f64).floor() as usize;

    Ok(Splits {
        train: ids[..train_end].to_vec(),
        val: ids[train_end..val_end].to_vec(),
        test: ids[val_end..].to_vec(),
    })
}

/// Per-node in-degrees of a sample, counted over directed edges.
pub fn in_degrees(sample: &GraphSample) -> Array1<u32> {
    let mut deg = Array1::<u32>::zeros(sample.num_nodes());
    for col in 0..sample.num_edges() {
        deg[sample.edge_index[[1, col]] as usize] += 1;
    }
    deg
}
