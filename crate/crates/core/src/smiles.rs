//! SMILES parsing for the organic subset used by the training pipeline.
//!
//! Supported syntax: bare organic-subset atoms (`B C N O P S F Cl Br I`),
//! aromatic lowercase forms (`b c n o s p`), bracket atoms with an optional
//! explicit hydrogen count and formal charge, bond symbols `- = # :`,
//! branches, ring closures (`1`..`9`, `0`, `%nn`), and dot-separated
//! fragments. Stereo markers (`/`, `\`, `@`, `@@`) are accepted and
//! discarded; isotope labels and atom-class tags are rejected.
//!
//! Implicit hydrogen counts follow a fixed valence model:
//! `implicit_h = max(0, valence(element, charge) - bond_order_sum)`, where a
//! formal charge raises the valence of nitrogen-family atoms (`N`, `P`) and
//! lowers it by its magnitude for oxygen-family atoms (`O`, `S`). Aromatic
//! bonds contribute order 1 to the sum, and each aromatic atom adds one
//! shared aromatic-system increment, so `c1ccccc1` carbons carry one
//! hydrogen and the pyridine nitrogen carries none. A bracket atom with an
//! explicit `H` count uses that count verbatim; a bracket atom without one
//! falls back to the same valence rule.

use thiserror::Error;

/// Chemical elements the pipeline understands, ordered by atomic number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    Si,
    P,
    S,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 12] = [
        Element::H,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::Si,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Si => "Si",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::H => 1,
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::Si => 14,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == s)
    }

    /// Default valence of the neutral atom.
    pub fn default_valence(self) -> u32 {
        match self {
            Element::H => 1,
            Element::B => 3,
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::F => 1,
            Element::Si => 4,
            Element::P => 3,
            Element::S => 2,
            Element::Cl => 1,
            Element::Br => 1,
            Element::I => 1,
        }
    }

    /// Valence after applying a formal charge: nitrogen-family atoms gain
    /// `charge` bonds, oxygen-family atoms lose `|charge|` bonds, all other
    /// elements keep their default valence.
    pub fn charged_valence(self, charge: i8) -> u32 {
        let base = self.default_valence() as i32;
        let adjusted = match self {
            Element::N | Element::P => base + charge as i32,
            Element::O | Element::S => base - (charge as i32).abs(),
            _ => base,
        };
        adjusted.max(0) as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence bond-order sum. Aromatic bonds count as
    /// order 1; the aromatic-system increment is added per atom instead.
    pub fn order_value(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    /// Hydrogens attached to this atom but not present as graph nodes.
    /// Zero after `expand_hydrogens`.
    pub implicit_h: u8,
}

/// Undirected bond between atom indices `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl Molecule {
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms
            .iter()
            .filter(|a| a.element != Element::H)
            .count()
    }

    pub fn total_implicit_h(&self) -> usize {
        self.atoms.iter().map(|a| a.implicit_h as usize).sum()
    }

    /// Number of bonds incident to atom `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.bonds.iter().filter(|b| b.a == i || b.b == i).count()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmilesError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced branch parenthesis at position {pos}")]
    UnbalancedBranch { pos: usize },
    #[error("ring bond {ring} opened but never closed")]
    UnclosedRing { ring: u16 },
    #[error("unknown element '{symbol}' at position {pos}")]
    UnknownElement { symbol: String, pos: usize },
    #[error("malformed charge at position {pos}")]
    MalformedCharge { pos: usize },
    #[error("malformed bracket atom at position {pos}: {detail}")]
    MalformedBracketAtom { pos: usize, detail: &'static str },
    #[error("bond symbol at position {pos} has no atom to attach to")]
    DanglingBond { pos: usize },
    #[error("ring closure {ring} at position {pos} disagrees with its opening bond order")]
    RingBondMismatch { ring: u16, pos: usize },
    #[error("duplicate bond between atoms {a} and {b} at position {pos}")]
    DuplicateBond { a: usize, b: usize, pos: usize },
    #[error("ring closure {ring} at position {pos} would bond an atom to itself")]
    SelfRingBond { ring: u16, pos: usize },
    #[error("unexpected character '{ch}' at position {pos}")]
    UnexpectedChar { ch: char, pos: usize },
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Explicit hydrogen counts pinned by bracket `H` tokens.
    pinned_h: Vec<Option<u8>>,
    /// Previous atom in the current chain, if any.
    prev: Option<usize>,
    /// Bond symbol seen since the previous atom, with its position.
    pending: Option<(BondOrder, usize)>,
    /// Branch stack of saved `prev` values with the `(` position.
    stack: Vec<(Option<usize>, usize)>,
    /// Open ring closures: ring number -> (atom, optional bond, position).
    rings: Vec<(u16, usize, Option<BondOrder>, usize)>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            bytes: text.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            pinned_h: Vec::new(),
            prev: None,
            pending: None,
            stack: Vec::new(),
            rings: Vec::new(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    fn read_digits(&mut self, max: usize) -> Option<u32> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && self.pos - start < max
            && self.bytes[self.pos].is_ascii_digit()
        {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
    }

    fn add_atom(&mut self, atom: Atom, pinned_h: Option<u8>) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.pinned_h.push(pinned_h);
        if let Some(prev) = self.prev {
            let order = match self.pending.take() {
                Some((o, _)) => o,
                None => default_order(&self.atoms[prev], &self.atoms[idx]),
            };
            self.add_bond(prev, idx, order, self.pos)?;
        } else if let Some((_, pos)) = self.pending.take() {
            return Err(SmilesError::DanglingBond { pos });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        pos: usize,
    ) -> Result<(), SmilesError> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if self.bonds.iter().any(|bd| bd.a == lo && bd.b == hi) {
            return Err(SmilesError::DuplicateBond { a: lo, b: hi, pos });
        }
        self.bonds.push(Bond {
            a: lo,
            b: hi,
            order,
        });
        Ok(())
    }

    fn ring_closure(&mut self, ring: u16, token_pos: usize) -> Result<(), SmilesError> {
        let here = match self.prev {
            Some(i) => i,
            None => return Err(SmilesError::DanglingBond { pos: token_pos }),
        };
        let here_bond = self.pending.take().map(|(o, _)| o);
        if let Some(slot) = self.rings.iter().position(|r| r.0 == ring) {
            let (_, other, other_bond, _) = self.rings.swap_remove(slot);
            if other == here {
                return Err(SmilesError::SelfRingBond {
                    ring,
                    pos: token_pos,
                });
            }
            let order = match (other_bond, here_bond) {
                (Some(a), Some(b)) if a != b => {
                    return Err(SmilesError::RingBondMismatch {
                        ring,
                        pos: token_pos,
                    })
                }
                (Some(o), _) | (None, Some(o)) => o,
                (None, None) => default_order(&self.atoms[other], &self.atoms[here]),
            };
            self.add_bond(other, here, order, token_pos)
        } else {
            self.rings.push((ring, here, here_bond, token_pos));
            Ok(())
        }
    }

    /// Parses the inside of `[...]`, the leading `[` already consumed.
    fn bracket_atom(&mut self) -> Result<(), SmilesError> {
        let open = self.pos - 1;
        if self.peek().is_some_and(|b| b.is_ascii_digit()) {
            return Err(SmilesError::MalformedBracketAtom {
                pos: open,
                detail: "isotope labels are not supported",
            });
        }
        let sym_start = self.pos;
        let first = self.bump().ok_or(SmilesError::MalformedBracketAtom {
            pos: open,
            detail: "unterminated bracket",
        })?;
        let (element, aromatic) = if first.is_ascii_uppercase() {
            // Greedily take a two-letter symbol when it names an element.
            let two = self
                .peek()
                .filter(|b| b.is_ascii_lowercase())
                .and_then(|b| {
                    let s = [first, b];
                    Element::from_symbol(std::str::from_utf8(&s).unwrap())
                });
            match two {
                Some(e) => {
                    self.pos += 1;
                    (e, false)
                }
                None => {
                    let s = std::str::from_utf8(&self.bytes[sym_start..self.pos]).unwrap();
                    match Element::from_symbol(s) {
                        Some(e) => (e, false),
                        None => {
                            return Err(SmilesError::UnknownElement {
                                symbol: s.to_string(),
                                pos: sym_start,
                            })
                        }
                    }
                }
            }
        } else if matches!(first, b'b' | b'c' | b'n' | b'o' | b'p' | b's') {
            let e = Element::from_symbol(&(first as char).to_ascii_uppercase().to_string())
                .expect("aromatic subset maps to known elements");
            (e, true)
        } else {
            return Err(SmilesError::MalformedBracketAtom {
                pos: sym_start,
                detail: "expected an element symbol",
            });
        };

        // Chirality markers are accepted and discarded.
        while self.peek() == Some(b'@') {
            self.pos += 1;
        }

        let mut pinned_h = None;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            let count = self.read_digits(2).unwrap_or(1);
            if count > 9 {
                return Err(SmilesError::MalformedBracketAtom {
                    pos: self.pos,
                    detail: "hydrogen count out of range",
                });
            }
            pinned_h = Some(count as u8);
        }

        let mut charge: i8 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let sign_pos = self.pos;
            self.pos += 1;
            let unit: i8 = if sign == b'+' { 1 } else { -1 };
            if let Some(n) = self.read_digits(2) {
                if n == 0 || n > 9 {
                    return Err(SmilesError::MalformedCharge { pos: sign_pos });
                }
                charge = unit * n as i8;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
                // A run of one sign followed by the other ("+-") is malformed.
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    return Err(SmilesError::MalformedCharge { pos: sign_pos });
                }
            }
        }

        match self.bump() {
            Some(b']') => {}
            Some(b':') => {
                return Err(SmilesError::MalformedBracketAtom {
                    pos: self.pos - 1,
                    detail: "atom-class tags are not supported",
                })
            }
            _ => {
                return Err(SmilesError::MalformedBracketAtom {
                    pos: open,
                    detail: "unterminated bracket",
                })
            }
        }

        self.add_atom(
            Atom {
                element,
                formal_charge: charge,
                aromatic,
                implicit_h: 0,
            },
            pinned_h,
        )
    }

    fn parse(mut self) -> Result<Molecule, SmilesError> {
        while let Some(b) = self.peek() {
            let pos = self.pos;
            match b {
                b'[' => {
                    self.pos += 1;
                    self.bracket_atom()?;
                }
                b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => {
                    self.pos += 1;
                    // Two-letter organic-subset symbols: Cl and Br.
                    let symbol = match (b, self.peek()) {
                        (b'C', Some(b'l')) => {
                            self.pos += 1;
                            Element::Cl
                        }
                        (b'B', Some(b'r')) => {
                            self.pos += 1;
                            Element::Br
                        }
                        _ => Element::from_symbol(&(b as char).to_string()).unwrap(),
                    };
                    self.add_atom(
                        Atom {
                            element: symbol,
                            formal_charge: 0,
                            aromatic: false,
                            implicit_h: 0,
                        },
                        None,
                    )?;
                }
                b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                    self.pos += 1;
                    let element =
                        Element::from_symbol(&(b as char).to_ascii_uppercase().to_string())
                            .unwrap();
                    self.add_atom(
                        Atom {
                            element,
                            formal_charge: 0,
                            aromatic: true,
                            implicit_h: 0,
                        },
                        None,
                    )?;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    self.pos += 1;
                    if self.pending.is_some() {
                        return Err(SmilesError::DanglingBond { pos });
                    }
                    let order = match b {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        // '/' and '\' carry stereo information we discard.
                        _ => BondOrder::Single,
                    };
                    self.pending = Some((order, pos));
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure((b - b'0') as u16, pos)?;
                }
                b'%' => {
                    self.pos += 1;
                    let n = match self.read_digits(2) {
                        Some(n) if n >= 10 => n,
                        _ => return Err(SmilesError::UnexpectedChar { ch: '%', pos }),
                    };
                    self.ring_closure(n as u16, pos)?;
                }
                b'(' => {
                    self.pos += 1;
                    if self.prev.is_none() {
                        return Err(SmilesError::UnbalancedBranch { pos });
                    }
                    self.stack.push((self.prev, pos));
                }
                b')' => {
                    self.pos += 1;
                    if let Some((o, bond_pos)) = self.pending {
                        let _ = o;
                        return Err(SmilesError::DanglingBond { pos: bond_pos });
                    }
                    match self.stack.pop() {
                        Some((saved, _)) => self.prev = saved,
                        None => return Err(SmilesError::UnbalancedBranch { pos }),
                    }
                }
                b'.' => {
                    self.pos += 1;
                    if let Some((_, bond_pos)) = self.pending {
                        return Err(SmilesError::DanglingBond { pos: bond_pos });
                    }
                    self.prev = None;
                }
                _ => {
                    return Err(SmilesError::UnexpectedChar {
                        ch: self.bytes[pos] as char,
                        pos,
                    })
                }
            }
        }

        if let Some((_, bond_pos)) = self.pending {
            return Err(SmilesError::DanglingBond { pos: bond_pos });
        }
        if let Some(&(_, pos)) = self.stack.last() {
            return Err(SmilesError::UnbalancedBranch { pos });
        }
        if let Some(&(ring, _, _, _)) = self.rings.first() {
            return Err(SmilesError::UnclosedRing { ring });
        }
        if self.atoms.is_empty() {
            return Err(SmilesError::EmptyInput);
        }

        let mut mol = Molecule {
            atoms: self.atoms,
            bonds: self.bonds,
        };
        assign_implicit_h(&mut mol, &self.pinned_h);
        Ok(mol)
    }
}

fn default_order(a: &Atom, b: &Atom) -> BondOrder {
    if a.aromatic && b.aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    }
}

fn assign_implicit_h(mol: &mut Molecule, pinned: &[Option<u8>]) {
    let mut order_sum = vec![0u32; mol.atoms.len()];
    for bond in &mol.bonds {
        order_sum[bond.a] += bond.order.order_value();
        order_sum[bond.b] += bond.order.order_value();
    }
    for (i, atom) in mol.atoms.iter_mut().enumerate() {
        if let Some(h) = pinned[i] {
            atom.implicit_h = h;
            continue;
        }
        let mut used = order_sum[i];
        if atom.aromatic {
            used += 1; // shared aromatic-system increment
        }
        let valence = atom.element.charged_valence(atom.formal_charge);
        atom.implicit_h = valence.saturating_sub(used) as u8;
    }
}

/// Parses a SMILES string into a heavy-atom graph with implicit hydrogen
/// counts. Atom indices follow the order atoms appear in the text.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    Parser::new(trimmed).parse()
}

/// Converts implicit hydrogens into explicit graph nodes. Each hydrogen
/// becomes an `H` atom bonded to its parent by a single bond; hydrogens are
/// appended after the existing atoms in parent order. Idempotent: the result
/// has `implicit_h == 0` everywhere.
pub fn expand_hydrogens(mut mol: Molecule) -> Molecule {
    let heavy = mol.atoms.len();
    for parent in 0..heavy {
        for _ in 0..mol.atoms[parent].implicit_h {
            let h_idx = mol.atoms.len();
            mol.atoms.push(Atom {
                element: Element::H,
                formal_charge: 0,
                aromatic: false,
                implicit_h: 0,
            });
            mol.bonds.push(Bond {
                a: parent,
                b: h_idx,
                order: BondOrder::Single,
            });
        }
        mol.atoms[parent].implicit_h = 0;
    }
    mol
}
