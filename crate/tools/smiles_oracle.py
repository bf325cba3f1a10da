#!/usr/bin/env python3
"""Reference SMILES counter, independent of the Rust parser.

Reads one SMILES string per line (from a file argument or stdin) and prints
a CSV with the structural counts the pipeline cares about:

    smiles,heavy_atoms,heavy_bonds,hydrogens,aromatic_atoms

This is a second, from-scratch implementation of the same documented
dialect, used once to freeze crates/core/tests/fixtures/smiles_fixture_v1.csv
so the Rust parser is pinned against an implementation that shares none of
its code. Keep it dependency-free; it must stay runnable anywhere.

Dialect summary (mirrors the contract in crates/core/src/smiles.rs):
  * bare atoms B C N O P S F Cl Br I; aromatic b c n o s p
  * bracket atoms: [symbol(@...)(Hn)(charge)] with charge as +, -, +n, -n,
    or a run of identical signs; isotopes and atom-class tags rejected
  * bonds - = # : plus / and \\ read as single; branches; dots;
    ring closures 0-9 and %nn (nn >= 10)
  * implicit H = max(0, valence(element, charge) - bond order sum), where
    aromatic bonds count 1 and each aromatic atom adds one extra unit of
    used valence; N/P gain +charge valence, O/S lose |charge|;
    an explicit bracket H count overrides the rule

Usage:
    python3 tools/smiles_oracle.py molecules.txt > counts.csv
    python3 tools/smiles_oracle.py --selftest
"""

import sys

VALENCE = {
    "H": 1, "B": 3, "C": 4, "N": 3, "O": 2, "F": 1,
    "Si": 4, "P": 3, "S": 2, "Cl": 1, "Br": 1, "I": 1,
}
TWO_LETTER = [s for s in VALENCE if len(s) == 2]
AROMATIC_OK = {"b", "c", "n", "o", "p", "s"}
BARE_SINGLE = set("BCNOPSFI")
BOND_CHARS = {"-": 1, "=": 2, "#": 3, ":": 1, "/": 1, "\\": 1}
AROMATIC_BOND = ":"


class OracleError(ValueError):
    def __init__(self, kind, pos, detail=""):
        super().__init__(f"{kind} at {pos}: {detail}" if detail else f"{kind} at {pos}")
        self.kind = kind
        self.pos = pos


def charged_valence(element, charge):
    base = VALENCE[element]
    if element in ("N", "P"):
        base += charge
    elif element in ("O", "S"):
        base -= abs(charge)
    return max(base, 0)


class Mol:
    def __init__(self):
        self.elements = []      # element symbol per atom
        self.aromatic = []      # bool per atom
        self.charges = []       # int per atom
        self.pinned_h = []      # explicit bracket H count or None
        self.bonds = []         # (lo, hi, order:int, is_aromatic:bool)

    def add_atom(self, element, aromatic, charge, pinned):
        self.elements.append(element)
        self.aromatic.append(aromatic)
        self.charges.append(charge)
        self.pinned_h.append(pinned)
        return len(self.elements) - 1

    def add_bond(self, a, b, order, is_aromatic, pos):
        lo, hi = (a, b) if a < b else (b, a)
        if any(x == lo and y == hi for x, y, _, _ in self.bonds):
            raise OracleError("duplicate-bond", pos, f"atoms {lo},{hi}")
        self.bonds.append((lo, hi, order, is_aromatic))

    def implicit_h(self, i):
        if self.pinned_h[i] is not None:
            return self.pinned_h[i]
        used = sum(o for a, b, o, _ in self.bonds if i in (a, b))
        if self.aromatic[i]:
            used += 1
        return max(0, charged_valence(self.elements[i], self.charges[i]) - used)

    def counts(self):
        heavy = sum(1 for e in self.elements if e != "H")
        hydrogens = sum(self.implicit_h(i) for i in range(len(self.elements)))
        aromatic = sum(1 for a in self.aromatic if a)
        return heavy, len(self.bonds), hydrogens, aromatic


class Scanner:
    def __init__(self, text):
        self.text = text
        self.i = 0

    def peek(self):
        return self.text[self.i] if self.i < len(self.text) else ""

    def take(self):
        ch = self.peek()
        if ch:
            self.i += 1
        return ch

    def digits(self, limit):
        start = self.i
        while self.i < len(self.text) and self.i - start < limit and self.text[self.i].isdigit():
            self.i += 1
        return int(self.text[start:self.i]) if self.i > start else None


def read_bracket(sc, mol):
    """Parses the body of a bracket atom; the '[' is already consumed."""
    open_pos = sc.i - 1
    if sc.peek().isdigit():
        raise OracleError("bracket", open_pos, "isotopes unsupported")
    first = sc.take()
    if not first:
        raise OracleError("bracket", open_pos, "unterminated")
    aromatic = False
    if first.isupper():
        element = None
        if sc.peek().islower() and first + sc.peek() in TWO_LETTER:
            element = first + sc.take()
        elif first in VALENCE:
            element = first
        if element is None:
            raise OracleError("unknown-element", sc.i - 1, first)
    elif first in AROMATIC_OK:
        element = first.upper()
        aromatic = True
    else:
        raise OracleError("bracket", sc.i - 1, "expected element")

    while sc.peek() == "@":
        sc.take()

    pinned = None
    if sc.peek() == "H":
        sc.take()
        pinned = sc.digits(2)
        pinned = 1 if pinned is None else pinned
        if pinned > 9:
            raise OracleError("bracket", sc.i, "H count out of range")

    charge = 0
    if sc.peek() in "+-":
        sign_pos = sc.i
        sign = sc.take()
        unit = 1 if sign == "+" else -1
        n = sc.digits(2)
        if n is not None:
            if n == 0 or n > 9:
                raise OracleError("charge", sign_pos)
            charge = unit * n
        else:
            charge = unit
            while sc.peek() == sign:
                sc.take()
                charge += unit
            if sc.peek() in "+-":
                raise OracleError("charge", sign_pos)

    closer = sc.take()
    if closer == ":":
        raise OracleError("bracket", sc.i - 1, "atom classes unsupported")
    if closer != "]":
        raise OracleError("bracket", open_pos, "unterminated")
    return mol.add_atom(element, aromatic, charge, pinned)


def parse(text):
    text = text.strip()
    if not text:
        raise OracleError("empty", 0)
    sc = Scanner(text)
    mol = Mol()
    prev = None
    pending = None          # (order, is_aromatic, pos)
    branch_stack = []       # (saved_prev, pos)
    open_rings = {}         # number -> (atom, pending-bond-or-None, pos)

    def link(idx, pos):
        nonlocal prev, pending
        if prev is not None:
            if pending is not None:
                order, is_arom, _ = pending
                pending = None
            else:
                is_arom = mol.aromatic[prev] and mol.aromatic[idx]
                order = 1
            mol.add_bond(prev, idx, order, is_arom, pos)
        elif pending is not None:
            raise OracleError("dangling-bond", pending[2])
        prev = idx

    def close_ring(number, pos):
        nonlocal prev, pending
        if prev is None:
            raise OracleError("dangling-bond", pos)
        here_bond = pending
        pending = None
        if number in open_rings:
            other, other_bond, _ = open_rings.pop(number)
            if other == prev:
                raise OracleError("self-ring", pos, str(number))
            if other_bond is not None and here_bond is not None and \
                    other_bond[:2] != here_bond[:2]:
                raise OracleError("ring-order-mismatch", pos, str(number))
            chosen = other_bond or here_bond
            if chosen is not None:
                order, is_arom, _ = chosen
            else:
                is_arom = mol.aromatic[other] and mol.aromatic[prev]
                order = 1
            mol.add_bond(other, prev, order, is_arom, pos)
        else:
            open_rings[number] = (prev, here_bond, pos)

    while sc.peek():
        pos = sc.i
        ch = sc.take()
        if ch == "[":
            link(read_bracket(sc, mol), sc.i)
        elif ch in BARE_SINGLE:
            symbol = ch
            if ch == "C" and sc.peek() == "l":
                symbol = "C" + sc.take()
            elif ch == "B" and sc.peek() == "r":
                symbol = "B" + sc.take()
            link(mol.add_atom(symbol, False, 0, None), sc.i)
        elif ch in AROMATIC_OK:
            link(mol.add_atom(ch.upper(), True, 0, None), sc.i)
        elif ch in BOND_CHARS:
            if pending is not None:
                raise OracleError("dangling-bond", pos)
            pending = (BOND_CHARS[ch], ch == AROMATIC_BOND, pos)
        elif ch.isdigit():
            close_ring(int(ch), pos)
        elif ch == "%":
            n = sc.digits(2)
            if n is None or n < 10:
                raise OracleError("unexpected", pos, "%")
            close_ring(n, pos)
        elif ch == "(":
            if prev is None:
                raise OracleError("unbalanced-branch", pos)
            branch_stack.append((prev, pos))
        elif ch == ")":
            if pending is not None:
                raise OracleError("dangling-bond", pending[2])
            if not branch_stack:
                raise OracleError("unbalanced-branch", pos)
            prev = branch_stack.pop()[0]
        elif ch == ".":
            if pending is not None:
                raise OracleError("dangling-bond", pending[2])
            prev = None
        else:
            raise OracleError("unexpected", pos, ch)

    if pending is not None:
        raise OracleError("dangling-bond", pending[2])
    if branch_stack:
        raise OracleError("unbalanced-branch", branch_stack[-1][1])
    if open_rings:
        raise OracleError("unclosed-ring", 0, str(sorted(open_rings)[0]))
    if not mol.elements:
        raise OracleError("empty", 0)
    return mol


SELFTEST = [
    # (smiles, heavy, bonds, hydrogens, aromatic)
    ("C", 1, 0, 4, 0),
    ("O=C=O", 3, 2, 0, 0),
    ("c1ccccc1", 6, 6, 6, 6),
    ("c1ccncc1", 6, 6, 5, 6),
    ("c1cc[nH]c1", 5, 5, 5, 5),
    ("CC(=O)[O-]", 4, 3, 3, 0),
    ("[NH4+]", 1, 0, 4, 0),
    ("C[N+](C)(C)C", 5, 4, 12, 0),
    ("N#N", 2, 1, 0, 0),
    ("C1CC1", 3, 3, 6, 0),
    ("C%10CCCC%10", 5, 5, 10, 0),
    ("O.O", 2, 0, 4, 0),
    ("C/C=C\\C", 4, 3, 8, 0),
    ("[Si](C)(C)(C)C", 5, 4, 12, 0),
    ("OP(=O)(O)O", 5, 4, 3, 0),
]


def selftest():
    for smiles, *expected in SELFTEST:
        got = list(parse(smiles).counts())
        if got != expected:
            print(f"selftest FAILED: {smiles}: {got} != {expected}", file=sys.stderr)
            return 1
    print(f"selftest ok ({len(SELFTEST)} cases)", file=sys.stderr)
    return 0


def main(argv):
    if len(argv) > 1 and argv[1] == "--selftest":
        return selftest()
    stream = open(argv[1]) if len(argv) > 1 else sys.stdin
    print("smiles,heavy_atoms,heavy_bonds,hydrogens,aromatic_atoms")
    status = 0
    for lineno, line in enumerate(stream, 1):
        smiles = line.strip()
        if not smiles:
            continue
        try:
            heavy, bonds, hydrogens, aromatic = parse(smiles).counts()
        except OracleError as err:
            print(f"line {lineno}: {smiles!r}: {err}", file=sys.stderr)
            status = 1
            continue
        print(f"{smiles},{heavy},{bonds},{hydrogens},{aromatic}")
    return status


if __name__ == "__main__":
    sys.exit(main(sys.argv))
