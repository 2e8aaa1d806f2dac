"""SMILES -> heavy-atom molecular graph, plus the 28-slot atom featurizer.

Handles the organic subset, bracket atoms (charge, explicit H), bonds
``- = # :``, branches, ring closures (``1``..``9`` and ``%nn``) and lowercase
aromatic atoms. Stereo marks and isotopes are skipped with a warning.
No kekulization is attempted.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import MoeDtiError

AROMATIC = 1.5

ORGANIC = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
ELEMENT_SLOTS = ORGANIC + ("other",)
AROMATIC_BARE = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S",
                    "se": "Se", "as": "As", "te": "Te"}

DEFAULT_VALENCE = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}

_PERIODIC = set("""H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co
Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La
Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr
Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts
Og""".split())

FEATURE_LENGTH = len(ELEMENT_SLOTS) + 6 + 5 + 1 + 5


class SmilesError(MoeDtiError, ValueError):
    kind = "parse error"

    def __init__(self, message: str, offset: int, smiles: str = "") -> None:
        self.offset = offset
        self.smiles = smiles
        super().__init__(f"{self.kind} at offset {offset}: {message}")


class UnknownTokenError(SmilesError):
    kind = "unknown token"


class UnmatchedBranchError(SmilesError):
    kind = "unmatched parenthesis"


class UnclosedRingError(SmilesError):
    kind = "unclosed ring bond"


class ValenceError(SmilesError):
    kind = "valence violation"


class MultiFragmentError(SmilesError):
    kind = "multi-fragment unsupported"


@dataclass
class AtomNode:
    element: str
    charge: int = 0
    aromatic: bool = False
    hydrogens: int = 0
    bracket: bool = False
    offset: int = 0
    degree: int = 0

    @property
    def slot(self) -> str:
        return self.element if self.element in ORGANIC else "other"


@dataclass
class MolecularGraph:
    atoms: list[AtomNode]
    bonds: list[tuple[int, int, float]]
    source: str = ""
    _adj: list[list[int]] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        adj = [[] for _ in self.atoms]
        for i, j, _ in self.bonds:
            adj[i].append(j)
            adj[j].append(i)
        self._adj = adj

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def neighbors(self, i: int) -> list[int]:
        return self._adj[i]

    def is_connected(self) -> bool:
        if not self.atoms:
            return True
        seen = {0}
        stack = [0]
        while stack:
            for j in self._adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == len(self.atoms)

    def permuted(self, perm) -> "MolecularGraph":
        """Same molecule with atom ``i`` moved to position ``perm[i]``."""
        perm = list(perm)
        atoms = [None] * len(self.atoms)
        for old, new in enumerate(perm):
            atoms[new] = self.atoms[old]
        bonds = [(perm[i], perm[j], o) for i, j, o in self.bonds]
        return MolecularGraph(atoms=atoms, bonds=bonds, source=self.source)

    def adjacency_listing(self) -> str:
        lines = []
        for i, a in enumerate(self.atoms):
            sym = a.element.lower() if a.aromatic else a.element
            nbrs = " ".join(str(j) for j in sorted(self._adj[i]))
            lines.append(f"{i}\t{sym}\tdeg={a.degree}\tH={a.hydrogens}\tq={a.charge:+d}\t[{nbrs}]")
        return "\n".join(lines)


_BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": AROMATIC}


def _parse_bracket(s: str, start: int) -> tuple[AtomNode, int]:
    end = s.find("]", start)
    if end < 0:
        raise UnknownTokenError("unterminated bracket atom", start, s)
    body = s[start + 1 : end]
    i = 0

    def err(msg):
        return UnknownTokenError(msg, start + 1 + i, s)

    if i < len(body) and body[i].isdigit():
        while i < len(body) and body[i].isdigit():
            i += 1
        warnings.warn(f"isotope ignored in {s!r} at offset {start}", stacklevel=3)
    aromatic = False
    if body[i : i + 2] in ("se", "as", "te"):
        element, aromatic = AROMATIC_BRACKET[body[i : i + 2]], True
        i += 2
    elif i < len(body) and body[i] in AROMATIC_BRACKET:
        element, aromatic = AROMATIC_BRACKET[body[i]], True
        i += 1
    elif i < len(body) and body[i] == "*":
        element = "*"
        i += 1
    elif i < len(body) and body[i].isupper():
        two = body[i : i + 2]
        if len(two) == 2 and two[1].islower() and two in _PERIODIC:
            element = two
            i += 2
        elif body[i] in _PERIODIC:
            element = body[i]
            i += 1
        else:
            raise err(f"unknown element in bracket atom [{body}]")
    else:
        raise err(f"bad bracket atom [{body}]")
    if i < len(body) and body[i] == "@":
        while i < len(body) and body[i] == "@":
            i += 1
        while i < len(body) and (body[i].isupper() and body[i] != "H" or body[i].isdigit()):
            i += 1
        warnings.warn(f"chirality ignored in {s!r} at offset {start}", stacklevel=3)
    hydrogens = 0
    if i < len(body) and body[i] == "H":
        i += 1
        hydrogens = 1
        if i < len(body) and body[i].isdigit():
            hydrogens = int(body[i])
            i += 1
    charge = 0
    if i < len(body) and body[i] in "+-":
        sign = 1 if body[i] == "+" else -1
        i += 1
        if i < len(body) and body[i].isdigit():
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            charge = sign * int(body[i:j])
            i = j
        else:
            charge = sign
            while i < len(body) and body[i] == ("+" if sign > 0 else "-"):
                charge += sign
                i += 1
    if i < len(body) and body[i] == ":":
        i += 1
        while i < len(body) and body[i].isdigit():
            i += 1
    if i != len(body):
        raise err(f"unexpected character {body[i]!r} in bracket atom")
    atom = AtomNode(element=element, charge=charge, aromatic=aromatic, hydrogens=hydrogens,
                    bracket=True, offset=start)
    return atom, end + 1


def _implicit_hydrogens(atom: AtomNode, bond_sum: float, n_aromatic: int) -> int:
    vals = DEFAULT_VALENCE.get(atom.element)
    if vals is None:
        return 0
    if atom.aromatic:
        used = bond_sum + (1 if n_aromatic else 0)
        return int(max(0, vals[0] - used))
    for v in vals:
        if v >= bond_sum:
            return int(v - bond_sum)
    return 0


def parse_smiles(s: str) -> MolecularGraph:
    """Parse one single-fragment SMILES string; raises a ``SmilesError`` subclass on failure."""
    if not s or not s.isascii():
        raise UnknownTokenError("empty or non-ASCII input", 0, s)
    atoms: list[AtomNode] = []
    bonds: dict[tuple[int, int], float] = {}
    bond_offset: dict[tuple[int, int], int] = {}
    branch_stack: list[tuple[int, int]] = []  # (atom index, offset of '(')
    rings: dict[int, tuple[int, float | None, int]] = {}  # label -> (atom, bond, offset)
    prev: int | None = None
    pending_bond: float | None = None
    pending_offset = 0
    stereo_warned = False
    pos = 0
    n = len(s)

    def add_bond(i: int, j: int, order: float | None, offset: int) -> None:
        if i == j:
            raise UnknownTokenError("ring bond from an atom to itself", offset, s)
        if order is None:
            order = AROMATIC if atoms[i].aromatic and atoms[j].aromatic else 1
        key = (min(i, j), max(i, j))
        if key in bonds:
            raise UnknownTokenError("duplicate bond between the same atoms", offset, s)
        bonds[key] = order
        bond_offset[key] = offset

    def add_atom(atom: AtomNode) -> None:
        nonlocal prev, pending_bond
        atoms.append(atom)
        idx = len(atoms) - 1
        if prev is not None:
            add_bond(prev, idx, pending_bond, pending_offset if pending_bond is not None else atom.offset)
        elif pending_bond is not None:
            raise UnknownTokenError("bond with no preceding atom", pending_offset, s)
        pending_bond = None
        prev = idx

    while pos < n:
        ch = s[pos]
        if ch == "[":
            atom, pos = _parse_bracket(s, pos)
            add_atom(atom)
            continue
        two = s[pos : pos + 2]
        if two in ("Cl", "Br"):
            add_atom(AtomNode(element=two, offset=pos))
            pos += 2
            continue
        if ch in ORGANIC:
            add_atom(AtomNode(element=ch, offset=pos))
            pos += 1
            continue
        if ch in AROMATIC_BARE:
            add_atom(AtomNode(element=AROMATIC_BARE[ch], aromatic=True, offset=pos))
            pos += 1
            continue
        if ch == "*":
            add_atom(AtomNode(element="*", offset=pos))
            pos += 1
            continue
        if ch in _BOND_SYMBOLS or ch in "/\\":
            if pending_bond is not None:
                raise UnknownTokenError("two consecutive bond symbols", pos, s)
            if ch in "/\\":
                if not stereo_warned:
                    warnings.warn(f"directional bonds ignored in {s!r}", stacklevel=2)
                    stereo_warned = True
                pending_bond = 1
            else:
                pending_bond = _BOND_SYMBOLS[ch]
            pending_offset = pos
            pos += 1
            continue
        if ch == "(":
            if prev is None:
                raise UnmatchedBranchError("branch opened before any atom", pos, s)
            if pending_bond is not None:
                raise UnknownTokenError("bond symbol before a branch", pending_offset, s)
            branch_stack.append((prev, pos))
            pos += 1
            if pos >= n:
                raise UnmatchedBranchError("branch never closed", n, s)
            continue
        if ch == ")":
            if not branch_stack:
                raise UnmatchedBranchError("closing parenthesis without an open branch", pos, s)
            if pending_bond is not None:
                raise UnknownTokenError("dangling bond symbol", pending_offset, s)
            if s[pos - 1] == "(":
                raise UnmatchedBranchError("empty branch", pos, s)
            prev, _ = branch_stack.pop()
            pos += 1
            continue
        if ch.isdigit() or ch == "%":
            if ch == "%":
                digits = s[pos + 1 : pos + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise UnknownTokenError("'%' must be followed by two digits", pos, s)
                label, width = int(digits), 3
            else:
                label, width = int(ch), 1
            if prev is None:
                raise UnknownTokenError("ring bond with no preceding atom", pos, s)
            if label in rings:
                other, order, open_off = rings.pop(label)
                if pending_bond is not None and order is not None and pending_bond != order:
                    raise UnknownTokenError("conflicting ring-closure bond symbols", pos, s)
                add_bond(other, prev, pending_bond if pending_bond is not None else order, pos)
            else:
                rings[label] = (prev, pending_bond, pos)
            pending_bond = None
            pos += width
            continue
        if ch == ".":
            raise MultiFragmentError("dot-separated fragments are not supported", pos, s)
        raise UnknownTokenError(f"unexpected character {ch!r}", pos, s)

    if pending_bond is not None:
        raise UnknownTokenError("dangling bond symbol at end of input", pending_offset, s)
    if branch_stack:
        raise UnmatchedBranchError("branch never closed", n, s)
    if rings:
        label, (_, _, off) = min(rings.items(), key=lambda kv: kv[1][2])
        raise UnclosedRingError(f"ring bond {label} never closed", off, s)
    if not atoms:
        raise UnknownTokenError("no atoms", 0, s)

    bond_list = [(i, j, o) for (i, j), o in bonds.items()]
    order_sum = [0.0] * len(atoms)
    n_arom = [0] * len(atoms)
    for i, j, o in bond_list:
        atoms[i].degree += 1
        atoms[j].degree += 1
        for k in (i, j):
            if o == AROMATIC:
                order_sum[k] += 1
                n_arom[k] += 1
            else:
                order_sum[k] += o
    for k, atom in enumerate(atoms):
        vals = DEFAULT_VALENCE.get(atom.element)
        if vals is None:
            continue
        limit = max(vals) + (abs(atom.charge) if atom.bracket else 0)
        used = order_sum[k] + (atom.hydrogens if atom.bracket else 0)
        if used > limit:
            raise ValenceError(
                f"{atom.element} has valence {used:g}, allowed at most {limit}", atom.offset, s
            )
        if not atom.bracket:
            atom.hydrogens = _implicit_hydrogens(atom, order_sum[k], n_arom[k])
    graph = MolecularGraph(atoms=atoms, bonds=bond_list, source=s)
    return graph


def featurize_atom(atom: AtomNode, graph: MolecularGraph | None = None) -> np.ndarray:
    """28 binary slots: element(11) | degree 0-5 | charge -2..+2 | aromatic | H count 0-4."""
    vec = np.zeros(FEATURE_LENGTH)
    vec[ELEMENT_SLOTS.index(atom.slot)] = 1
    off = len(ELEMENT_SLOTS)
    vec[off + min(max(atom.degree, 0), 5)] = 1
    off += 6
    vec[off + min(max(atom.charge, -2), 2) + 2] = 1
    off += 5
    vec[off] = float(atom.aromatic)
    off += 1
    vec[off + min(max(atom.hydrogens, 0), 4)] = 1
    return vec


def featurize(graph: MolecularGraph) -> np.ndarray:
    return np.stack([featurize_atom(a, graph) for a in graph.atoms])
