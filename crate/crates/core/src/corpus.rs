//! Synthetic molecule corpora with known ground truth.
//!
//! Molecules are built as random graphs first (so atom, bond, and hydrogen
//! counts are known by construction) and only then serialized to SMILES.
//! That gives every record an independent ground truth against which the
//! parser can be property-tested, and a deterministic regression target.
//!
//! Two styles:
//!
//! * `Alkane`: acyclic all-carbon trees. For a tree of k carbons the
//!   hydrogen count is exactly 2k+2, which makes graph-level size targets
//!   learnable from mean-pooled node features.
//! * `Organic`: heteroatoms, multiple bonds, rings, aromatic rings attached
//!   from templates, charged motifs, dot-separated fragments, and discarded
//!   stereo decorations. Used for parser fixtures and DFT-style corpora.
//!
//! Targets are synthetic: either the heavy-atom count scaled to [0, 1], or a
//! smooth deterministic "DFT-like" function of composition and topology in
//! an electronvolt-like 1-9 eV range.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::smiles::{BondOrder, Element};
use crate::wire::Fnv64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Alkane { min_heavy: usize, max_heavy: usize },
    Organic { min_heavy: usize, max_heavy: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    /// `(heavy_atoms - min) / (max - min)`, clamped to [0, 1].
    ScaledHeavyCount,
    /// Deterministic composition/topology formula in a 1-9 eV range.
    DftLike,
}

#[derive(Clone, Copy, Debug)]
pub struct CorpusSpec {
    pub count: usize,
    pub seed: u64,
    pub style: Style,
    pub target: TargetKind,
}

/// Structure counts known at build time, before any text round-trip.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub heavy_atoms: usize,
    pub hydrogens: usize,
    pub heavy_bonds: usize,
    pub aromatic_atoms: usize,
}

impl GroundTruth {
    pub fn expanded_atoms(&self) -> usize {
        self.heavy_atoms + self.hydrogens
    }

    pub fn expanded_bonds(&self) -> usize {
        self.heavy_bonds + self.hydrogens
    }
}

#[derive(Clone, Debug)]
pub struct Record {
    pub smiles: String,
    pub target_ev: f32,
    pub truth: GroundTruth,
}

#[derive(Clone, Copy, Debug)]
struct BAtom {
    element: Element,
    aromatic: bool,
    charge: i8,
    /// Explicit hydrogen count forced into the bracket form.
    pinned_h: Option<u8>,
    /// Chirality decor: 1 = `@`, 2 = `@@`. Parsed and discarded downstream.
    chiral: u8,
}

#[derive(Clone, Copy, Debug)]
struct BBond {
    a: usize,
    b: usize,
    order: BondOrder,
    /// Stereo slash decor for single bonds: b'/' or b'\\'.
    decor: u8,
}

#[derive(Default)]
struct Build {
    atoms: Vec<BAtom>,
    bonds: Vec<BBond>,
    /// Start value for ring-closure numbering; >9 exercises `%nn` syntax.
    ring_digit_start: u16,
}

impl Build {
    fn plain(element: Element) -> BAtom {
        BAtom {
            element,
            aromatic: false,
            charge: 0,
            pinned_h: None,
            chiral: 0,
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) {
        self.bonds.push(BBond {
            a,
            b,
            order,
            decor: 0,
        });
    }

    fn order_sum(&self, i: usize) -> u32 {
        self.bonds
            .iter()
            .filter(|bd| bd.a == i || bd.b == i)
            .map(|bd| bd.order.order_value())
            .sum()
    }

    /// Remaining bonding capacity under the valence model.
    fn residual(&self, i: usize) -> i64 {
        let a = self.atoms[i];
        let used = self.order_sum(i) + if a.aromatic { 1 } else { 0 };
        a.element.charged_valence(a.charge) as i64 - used as i64
    }

    fn implicit_h(&self, i: usize) -> u32 {
        if let Some(h) = self.atoms[i].pinned_h {
            return h as u32;
        }
        self.residual(i).max(0) as u32
    }

    fn truth(&self) -> GroundTruth {
        GroundTruth {
            heavy_atoms: self.atoms.len(),
            hydrogens: (0..self.atoms.len()).map(|i| self.implicit_h(i) as usize).sum(),
            heavy_bonds: self.bonds.len(),
            aromatic_atoms: self.atoms.iter().filter(|a| a.aromatic).count(),
        }
    }
}

/// Aromatic ring templates: element sequence, which atoms carry a pinned H,
/// and the ring bond list. Attachment is always at atom 0 (a carbon).
struct Template {
    elements: &'static [Element],
    pinned_h: &'static [(usize, u8)],
}

const TEMPLATES: &[Template] = &[
    // benzene
    Template {
        elements: &[Element::C; 6],
        pinned_h: &[],
    },
    // pyridine
    Template {
        elements: &[
            Element::C,
            Element::C,
            Element::C,
            Element::N,
            Element::C,
            Element::C,
        ],
        pinned_h: &[],
    },
    // thiophene
    Template {
        elements: &[Element::C, Element::C, Element::C, Element::S, Element::C],
        pinned_h: &[],
    },
    // furan
    Template {
        elements: &[Element::C, Element::C, Element::C, Element::O, Element::C],
        pinned_h: &[],
    },
    // pyrrole: the nitrogen keeps its hydrogen explicitly ([nH])
    Template {
        elements: &[Element::C, Element::C, Element::C, Element::N, Element::C],
        pinned_h: &[(3, 1)],
    },
];

fn weighted_element(rng: &mut ChaCha8Rng, min_valence: u32) -> Element {
    const CHOICES: &[(Element, u32)] = &[
        (Element::C, 620),
        (Element::N, 120),
        (Element::O, 120),
        (Element::S, 50),
        (Element::F, 40),
        (Element::Cl, 25),
        (Element::Br, 12),
        (Element::P, 8),
        (Element::I, 5),
    ];
    let eligible: Vec<(Element, u32)> = CHOICES
        .iter()
        .copied()
        .filter(|(e, _)| e.default_valence() >= min_valence)
        .collect();
    let total: u32 = eligible.iter().map(|(_, w)| w).sum();
    let mut pick = rng.gen_range(0..total);
    for (e, w) in eligible {
        if pick < w {
            return e;
        }
        pick -= w;
    }
    unreachable!("weights exhausted")
}

/// Random tree shape with degree cap 4: returns parent of node i for i>=1.
fn sample_tree(rng: &mut ChaCha8Rng, k: usize) -> Vec<usize> {
    let mut deg = vec![0u32; k];
    let mut parents = Vec::with_capacity(k.saturating_sub(1));
    for i in 1..k {
        let candidates: Vec<usize> = (0..i).filter(|&j| deg[j] < 4).collect();
        let p = candidates[rng.gen_range(0..candidates.len())];
        deg[p] += 1;
        deg[i] += 1;
        parents.push(p);
    }
    parents
}

fn tree_distances(k: usize, bonds: &[BBond], from: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); k];
    for b in bonds {
        adj[b.a].push(b.b);
        adj[b.b].push(b.a);
    }
    let mut dist = vec![usize::MAX; k];
    let mut queue = std::collections::VecDeque::from([from]);
    dist[from] = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

fn build_alkane(rng: &mut ChaCha8Rng, min_heavy: usize, max_heavy: usize) -> Build {
    let k = rng.gen_range(min_heavy..=max_heavy);
    let mut b = Build::default();
    b.ring_digit_start = 1;
    b.atoms = vec![Build::plain(Element::C); k];
    for (i, &p) in sample_tree(rng, k).iter().enumerate() {
        b.add_bond(p, i + 1, BondOrder::Single);
    }
    b
}

fn attach_template(b: &mut Build, rng: &mut ChaCha8Rng, host: usize) {
    let t = &TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
    let base = b.atoms.len();
    for (i, &e) in t.elements.iter().enumerate() {
        let pinned = t.pinned_h.iter().find(|(j, _)| *j == i).map(|&(_, h)| h);
        b.atoms.push(BAtom {
            element: e,
            aromatic: true,
            charge: 0,
            pinned_h: pinned,
            chiral: 0,
        });
    }
    let n = t.elements.len();
    for i in 0..n {
        b.add_bond(base + i, base + (i + 1) % n, BondOrder::Aromatic);
    }
    b.add_bond(host, base, BondOrder::Single);
}

fn attach_charged_motif(b: &mut Build, rng: &mut ChaCha8Rng, host: usize) {
    match rng.gen_range(0..3u32) {
        0 => {
            // nitro: -[N+](=O)[O-]
            let n = b.atoms.len();
            b.atoms.push(BAtom {
                element: Element::N,
                aromatic: false,
                charge: 1,
                pinned_h: None,
                chiral: 0,
            });
            b.atoms.push(Build::plain(Element::O));
            b.atoms.push(BAtom {
                element: Element::O,
                aromatic: false,
                charge: -1,
                pinned_h: None,
                chiral: 0,
            });
            b.add_bond(host, n, BondOrder::Single);
            b.add_bond(n, n + 1, BondOrder::Double);
            b.add_bond(n, n + 2, BondOrder::Single);
        }
        1 => {
            // carboxylate: -C(=O)[O-]
            let c = b.atoms.len();
            b.atoms.push(Build::plain(Element::C));
            b.atoms.push(Build::plain(Element::O));
            b.atoms.push(BAtom {
                element: Element::O,
                aromatic: false,
                charge: -1,
                pinned_h: None,
                chiral: 0,
            });
            b.add_bond(host, c, BondOrder::Single);
            b.add_bond(c, c + 1, BondOrder::Double);
            b.add_bond(c, c + 2, BondOrder::Single);
        }
        _ => {
            // ammonium: -[NH3+]
            let n = b.atoms.len();
            b.atoms.push(BAtom {
                element: Element::N,
                aromatic: false,
                charge: 1,
                pinned_h: Some(3),
                chiral: 0,
            });
            b.add_bond(host, n, BondOrder::Single);
        }
    }
}

fn build_organic(rng: &mut ChaCha8Rng, min_heavy: usize, max_heavy: usize) -> Build {
    let k = rng.gen_range(min_heavy..=max_heavy);
    let mut b = Build::default();
    b.ring_digit_start = if rng.gen_bool(0.03) { 10 } else { 1 };

    // Skeleton tree; element choice respects each node's tree degree.
    let parents = sample_tree(rng, k);
    let mut deg = vec![0u32; k];
    for (i, &p) in parents.iter().enumerate() {
        deg[p] += 1;
        deg[i + 1] += 1;
    }
    b.atoms = (0..k)
        .map(|i| Build::plain(weighted_element(rng, deg[i].max(1))))
        .collect();
    for (i, &p) in parents.iter().enumerate() {
        b.add_bond(p, i + 1, BondOrder::Single);
    }

    // Upgrade some skeleton bonds to double/triple where capacity allows.
    for bi in 0..b.bonds.len() {
        if !rng.gen_bool(0.14) {
            continue;
        }
        let BBond { a, b: bb, .. } = b.bonds[bi];
        if b.residual(a) >= 1 && b.residual(bb) >= 1 {
            b.bonds[bi].order = BondOrder::Double;
            if b.residual(a) >= 1 && b.residual(bb) >= 1 && rng.gen_bool(0.18) {
                b.bonds[bi].order = BondOrder::Triple;
            }
        }
    }

    // Optional non-tree ring closures between distant atoms.
    for _ in 0..2 {
        if !rng.gen_bool(0.35) {
            continue;
        }
        let mut candidates = Vec::new();
        for u in 0..k {
            if b.residual(u) < 1 {
                continue;
            }
            let dist = tree_distances(b.atoms.len(), &b.bonds, u);
            for v in (u + 1)..k {
                if b.residual(v) >= 1 && dist[v] >= 3 && dist[v] != usize::MAX {
                    candidates.push((u, v));
                }
            }
        }
        if !candidates.is_empty() {
            let (u, v) = candidates[rng.gen_range(0..candidates.len())];
            b.add_bond(u, v, BondOrder::Single);
        }
    }

    // Aromatic ring(s) from templates, then at most one charged motif.
    let mut attachments = 0;
    if rng.gen_bool(0.45) {
        attachments += 1;
    }
    if rng.gen_bool(0.12) {
        attachments += 1;
    }
    for _ in 0..attachments {
        let hosts: Vec<usize> = (0..k).filter(|&u| b.residual(u) >= 1).collect();
        if hosts.is_empty() {
            break;
        }
        let host = hosts[rng.gen_range(0..hosts.len())];
        attach_template(&mut b, rng, host);
    }
    if rng.gen_bool(0.12) {
        let hosts: Vec<usize> = (0..k).filter(|&u| b.residual(u) >= 1).collect();
        if !hosts.is_empty() {
            let host = hosts[rng.gen_range(0..hosts.len())];
            attach_charged_motif(&mut b, rng, host);
        }
    }

    // Chirality decor on carbons that will carry exactly one hydrogen.
    for i in 0..b.atoms.len() {
        let a = b.atoms[i];
        if a.element == Element::C
            && !a.aromatic
            && a.charge == 0
            && a.pinned_h.is_none()
            && b.implicit_h(i) == 1
            && rng.gen_bool(0.06)
        {
            b.atoms[i].pinned_h = Some(1);
            b.atoms[i].chiral = if rng.gen_bool(0.5) { 1 } else { 2 };
        }
    }

    // Stereo slashes on single bonds that neighbor a double bond.
    for bi in 0..b.bonds.len() {
        if b.bonds[bi].order != BondOrder::Single || !rng.gen_bool(0.08) {
            continue;
        }
        let BBond { a, b: bb, .. } = b.bonds[bi];
        let next_to_double = b.bonds.iter().any(|o| {
            o.order == BondOrder::Double && (o.a == a || o.b == a || o.a == bb || o.b == bb)
        });
        if next_to_double {
            b.bonds[bi].decor = if rng.gen_bool(0.5) { b'/' } else { b'\\' };
        }
    }

    // Occasional counter-fragment after a dot.
    if rng.gen_bool(0.04) {
        if rng.gen_bool(0.5) {
            b.atoms.push(BAtom {
                element: Element::N,
                aromatic: false,
                charge: 1,
                pinned_h: Some(4),
                chiral: 0,
            });
        } else {
            b.atoms.push(Build::plain(Element::O)); // water
        }
    }

    b
}

// --- SMILES writer -------------------------------------------------------

fn format_ring_digit(d: u16) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

fn atom_token(a: &BAtom) -> String {
    let bare_ok = a.charge == 0
        && a.pinned_h.is_none()
        && a.chiral == 0
        && matches!(
            a.element,
            Element::B
                | Element::C
                | Element::N
                | Element::O
                | Element::P
                | Element::S
                | Element::F
                | Element::Cl
                | Element::Br
                | Element::I
        );
    let sym = if a.aromatic {
        a.element.symbol().to_ascii_lowercase()
    } else {
        a.element.symbol().to_string()
    };
    if bare_ok {
        return sym;
    }
    let mut t = String::from("[");
    t.push_str(&sym);
    match a.chiral {
        1 => t.push('@'),
        2 => t.push_str("@@"),
        _ => {}
    }
    match a.pinned_h {
        Some(1) => t.push('H'),
        Some(n) => t.push_str(&format!("H{n}")),
        None => {}
    }
    match a.charge {
        0 => {}
        1 => t.push('+'),
        -1 => t.push('-'),
        c if c > 1 => t.push_str(&format!("+{c}")),
        c => t.push_str(&format!("-{}", -c)),
    }
    t.push(']');
    t
}

fn bond_token(bond: &BBond, atoms: &[BAtom]) -> String {
    let default = if atoms[bond.a].aromatic && atoms[bond.b].aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    };
    if bond.order == default {
        if bond.decor != 0 {
            return (bond.decor as char).to_string();
        }
        return String::new();
    }
    match bond.order {
        BondOrder::Single => "-".to_string(),
        BondOrder::Double => "=".to_string(),
        BondOrder::Triple => "#".to_string(),
        BondOrder::Aromatic => ":".to_string(),
    }
}

struct DigitAlloc {
    start: u16,
    in_use: Vec<u16>,
}

impl DigitAlloc {
    fn alloc(&mut self) -> u16 {
        let mut d = self.start;
        while self.in_use.contains(&d) {
            d += 1;
        }
        self.in_use.push(d);
        d
    }

    fn release(&mut self, d: u16) {
        self.in_use.retain(|&x| x != d);
    }
}

fn write_smiles(b: &Build) -> String {
    let n = b.atoms.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n]; // bond indices per atom
    for (bi, bond) in b.bonds.iter().enumerate() {
        adj[bond.a].push(bi);
        adj[bond.b].push(bi);
    }

    let mut visited = vec![false; n];
    let mut tree_edge = vec![false; b.bonds.len()];
    let mut ring_digit: Vec<Option<u16>> = vec![None; b.bonds.len()];
    let mut out = String::new();
    let mut first_fragment = true;

    for root in 0..n {
        if visited[root] {
            continue;
        }
        if !first_fragment {
            out.push('.');
        }
        first_fragment = false;

        // Classify tree vs ring edges for this component (iterative DFS,
        // matching the emission order below).
        let mut alloc = DigitAlloc {
            start: b.ring_digit_start,
            in_use: Vec::new(),
        };
        let mut stack = vec![root];
        visited[root] = true;
        while let Some(u) = stack.pop() {
            // Reverse so adjacency-order children are visited first.
            for &bi in adj[u].iter().rev() {
                let bond = &b.bonds[bi];
                let v = if bond.a == u { bond.b } else { bond.a };
                if !visited[v] {
                    visited[v] = true;
                    tree_edge[bi] = true;
                    stack.push(v);
                }
            }
        }

        // Emit recursively along tree edges; ring closures get digits.
        emit_atom(
            b, &adj, root, usize::MAX, &tree_edge, &mut ring_digit, &mut alloc, &mut out,
        );
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn emit_atom(
    b: &Build,
    adj: &[Vec<usize>],
    u: usize,
    via_bond: usize,
    tree_edge: &[bool],
    ring_digit: &mut [Option<u16>],
    alloc: &mut DigitAlloc,
    out: &mut String,
) {
    out.push_str(&atom_token(&b.atoms[u]));

    // Ring closures at this atom: open on first visit, close on second.
    for &bi in &adj[u] {
        if tree_edge[bi] || bi == via_bond {
            continue;
        }
        match ring_digit[bi] {
            None => {
                let d = alloc.alloc();
                ring_digit[bi] = Some(d);
                out.push_str(&bond_token(&b.bonds[bi], &b.atoms));
                out.push_str(&format_ring_digit(d));
            }
            Some(d) => {
                alloc.release(d);
                out.push_str(&format_ring_digit(d));
            }
        }
    }

    // Tree children in adjacency order; every tree edge at this atom other
    // than the one we arrived through leads to a child. All but the last
    // child are parenthesized.
    let children: Vec<usize> = adj[u]
        .iter()
        .copied()
        .filter(|&bi| tree_edge[bi] && bi != via_bond)
        .collect();
    for (pos, &bi) in children.iter().enumerate() {
        let bond = &b.bonds[bi];
        let v = if bond.a == u { bond.b } else { bond.a };
        let last = pos + 1 == children.len();
        if !last {
            out.push('(');
        }
        out.push_str(&bond_token(bond, &b.atoms));
        emit_atom(b, adj, v, bi, tree_edge, ring_digit, alloc, out);
        if !last {
            out.push(')');
        }
    }
}

// --- Targets -------------------------------------------------------------

fn dft_like_target(b: &Build, smiles: &str) -> f32 {
    let truth = b.truth();
    let heavy = truth.heavy_atoms as f64;
    let components = {
        // Count connected components for the ring formula.
        let n = b.atoms.len();
        let mut seen = vec![false; n];
        let mut adj = vec![Vec::new(); n];
        for bond in &b.bonds {
            adj[bond.a].push(bond.b);
            adj[bond.b].push(bond.a);
        }
        let mut c = 0;
        for s in 0..n {
            if seen[s] {
                continue;
            }
            c += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        c
    };
    let rings = (b.bonds.len() + components).saturating_sub(b.atoms.len());
    let count = |e: Element| b.atoms.iter().filter(|a| a.element == e).count() as f64;
    let doubles = b
        .bonds
        .iter()
        .filter(|bd| bd.order == BondOrder::Double)
        .count() as f64;
    let triples = b
        .bonds
        .iter()
        .filter(|bd| bd.order == BondOrder::Triple)
        .count() as f64;
    let charge_abs: f64 = b.atoms.iter().map(|a| (a.charge as f64).abs()).sum();

    let size = 2.4 * (1.0 - (-heavy / 20.0).exp());
    let arom = 0.09 * (truth.aromatic_atoms.min(18) as f64);
    let het = 0.13 * (count(Element::N) + count(Element::O))
        + 0.21 * count(Element::S)
        + 0.10 * count(Element::P)
        + 0.06
            * (count(Element::F) + count(Element::Cl) + count(Element::Br) + count(Element::I));
    let unsat = (0.17 * doubles + 0.28 * triples).min(1.2);
    let ring_term = 0.14 * (rings.min(6) as f64);
    let charge_term = 0.22 * charge_abs;
    let mut h = Fnv64::new();
    h.update(smiles.as_bytes());
    let noise = ((h.finish() % 4001) as f64 / 4000.0 - 0.5) * 0.24;

    (8.6 - size - arom - het - unsat - ring_term - charge_term + noise).clamp(1.1, 9.3) as f32
}

fn scaled_heavy_target(truth: &GroundTruth, style: &Style) -> f32 {
    let (min, max) = match *style {
        Style::Alkane { min_heavy, max_heavy } | Style::Organic { min_heavy, max_heavy } => {
            (min_heavy as f64, max_heavy as f64)
        }
    };
    let span = (max - min).max(1.0);
    (((truth.heavy_atoms as f64 - min) / span).clamp(0.0, 1.0)) as f32
}

/// Generates a deterministic corpus. The same spec always yields the same
/// records, independent of platform.
pub fn generate(spec: &CorpusSpec) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let build = match spec.style {
            Style::Alkane {
                min_heavy,
                max_heavy,
            } => build_alkane(&mut rng, min_heavy, max_heavy),
            Style::Organic {
                min_heavy,
                max_heavy,
            } => build_organic(&mut rng, min_heavy, max_heavy),
        };
        let smiles = write_smiles(&build);
        let truth = build.truth();
        let target_ev = match spec.target {
            TargetKind::ScaledHeavyCount => scaled_heavy_target(&truth, &spec.style),
            TargetKind::DftLike => dft_like_target(&build, &smiles),
        };
        records.push(Record {
            smiles,
            target_ev,
            truth,
        });
    }
    records
}

/// Writes records as delimited text with a `smiles,gap` header. With
/// `with_truth`, appends the ground-truth count columns used to freeze
/// parser fixtures.
pub fn write_csv(
    path: &std::path::Path,
    records: &[Record],
    with_truth: bool,
) -> std::io::Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    if with_truth {
        writeln!(
            w,
            "smiles,gap,heavy_atoms,expanded_atoms,expanded_bonds,aromatic_atoms"
        )?;
        for r in records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.smiles,
                r.target_ev,
                r.truth.heavy_atoms,
                r.truth.expanded_atoms(),
                r.truth.expanded_bonds(),
                r.truth.aromatic_atoms
            )?;
        }
    } else {
        writeln!(w, "smiles,gap")?;
        for r in records {
            writeln!(w, "{},{}", r.smiles, r.target_ev)?;
        }
    }
    w.flush()
}
