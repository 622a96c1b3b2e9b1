"""Dense linear algebra over labeled bases.

Every state, map and density matrix carries the labels of its basis, and
operations compare labels rather than dimensions. A basis entry (a *key*) is a
tuple of :class:`BasisLabel`, one per subsystem, sorted by subsystem.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

ALGEBRAIC_TOL = 1e-12
TRANSCENDENTAL_TOL = 1e-9


class CompositionError(ValueError):
    """Raised when two objects cannot be combined because of their bases."""


class BasisMismatchError(ValueError):
    pass


class Subsystem(enum.IntEnum):
    PATH = 0
    DIFFRACTED_RAY = 1
    POSITION = 2
    CLICK = 3
    INTERNAL = 4


_NAMES = {
    Subsystem.PATH: "Path",
    Subsystem.DIFFRACTED_RAY: "DiffractedRay",
    Subsystem.POSITION: "Position",
    Subsystem.CLICK: "Click",
    Subsystem.INTERNAL: "Internal",
}


@dataclass(frozen=True, order=True)
class BasisLabel:
    subsystem: Subsystem
    tag: tuple

    def __str__(self):
        if self.subsystem is Subsystem.CLICK:
            kind, j = self.tag
            inner = "idle" if kind == "idle" else f"fired(x{j})"
        elif self.subsystem is Subsystem.DIFFRACTED_RAY:
            inner = f"({self.tag[0]},x{self.tag[1]})"
        elif self.subsystem is Subsystem.POSITION:
            inner = f"x{self.tag[0]}"
        elif self.subsystem is Subsystem.INTERNAL:
            mode, j = self.tag
            inner = f"({mode},{'free' if j < 0 else f'x{j}'})"
        else:
            inner = ",".join(str(t) for t in self.tag)
        return f"{_NAMES[self.subsystem]}:{inner}"


# Label constructors. Element indices are 0-based.
def path(beta: str) -> BasisLabel:
    return BasisLabel(Subsystem.PATH, (beta,))


def ray(beta: str, j: int) -> BasisLabel:
    return BasisLabel(Subsystem.DIFFRACTED_RAY, (beta, int(j)))


def position(j: int) -> BasisLabel:
    return BasisLabel(Subsystem.POSITION, (int(j),))


def idle() -> BasisLabel:
    return BasisLabel(Subsystem.CLICK, ("idle", -1))


def fired(j: int) -> BasisLabel:
    return BasisLabel(Subsystem.CLICK, ("fired", int(j)))


def internal(mode: str, j: int = -1) -> BasisLabel:
    """Internal-mode label; ``j = -1`` marks a marker not yet tied to an element."""
    return BasisLabel(Subsystem.INTERNAL, (mode, int(j)))


Key = tuple  # tuple[BasisLabel, ...]


def canonical_key(labels: Iterable[BasisLabel]) -> Key:
    return tuple(sorted(labels, key=lambda lab: lab.subsystem))


def format_key(key: Key) -> str:
    return "⊗".join(str(lab) for lab in key)


class Basis(Sequence):
    """An ordered, duplicate-free list of keys sharing one subsystem signature."""

    __slots__ = ("_keys", "_index", "_subsystems")

    def __init__(self, keys: Iterable):
        canon = [canonical_key((k,) if isinstance(k, BasisLabel) else k) for k in keys]
        canon.sort()
        index = {}
        for i, k in enumerate(canon):
            if k in index:
                raise ValueError(f"duplicate basis label {format_key(k)}")
            index[k] = i
        sigs = {tuple(lab.subsystem for lab in k) for k in canon}
        if len(sigs) > 1:
            raise ValueError(f"inconsistent subsystem structure in basis: {sorted(sigs)}")
        for sig in sigs:
            if len(set(sig)) != len(sig):
                raise ValueError("a key repeats a subsystem")
        self._keys = tuple(canon)
        self._index = index
        self._subsystems = sigs.pop() if sigs else ()

    @property
    def keys(self) -> tuple:
        return self._keys

    @property
    def subsystems(self) -> tuple:
        return self._subsystems

    def index(self, key) -> int:
        if isinstance(key, BasisLabel):
            key = (key,)
        return self._index[canonical_key(key)]

    def __contains__(self, key) -> bool:
        if isinstance(key, BasisLabel):
            key = (key,)
        return canonical_key(key) in self._index

    def __getitem__(self, i):
        return self._keys[i]

    def __len__(self):
        return len(self._keys)

    def __eq__(self, other):
        if not isinstance(other, Basis):
            return NotImplemented
        return self._keys == other._keys

    def __hash__(self):
        return hash(self._keys)

    def __repr__(self):
        head = ", ".join(format_key(k) for k in self._keys[:4])
        more = ", ..." if len(self) > 4 else ""
        return f"Basis([{head}{more}], dim={len(self)})"


def _check_same_basis(left: Basis, right: Basis, what: str):
    if left == right:
        return
    for kl, kr in zip(left.keys, right.keys):
        if kl != kr:
            raise BasisMismatchError(
                f"{what}: basis mismatch at label {format_key(kl)} (expected {format_key(kr)})")
    raise BasisMismatchError(f"{what}: basis lengths differ ({len(left)} vs {len(right)})")


def _product(left: Basis, right: Basis) -> tuple[Basis, np.ndarray]:
    """Product basis and the permutation taking kron order to sorted order."""
    if set(left.subsystems) & set(right.subsystems):
        raise CompositionError(
            f"subsystems overlap: {sorted(set(left.subsystems) & set(right.subsystems))}")
    keys = [canonical_key(kl + kr) for kl in left.keys for kr in right.keys]
    basis = Basis(keys)
    perm = np.fromiter((basis.index(k) for k in keys), dtype=np.intp, count=len(keys))
    return basis, perm


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: Basis
    amplitudes: np.ndarray

    def __post_init__(self):
        if not isinstance(self.basis, Basis):
            object.__setattr__(self, "basis", Basis(self.basis))
        object.__setattr__(self, "amplitudes", _frozen(self.amplitudes))
        if self.amplitudes.shape != (len(self.basis),):
            raise ValueError(
                f"{self.amplitudes.shape[0] if self.amplitudes.ndim else 0} amplitudes "
                f"for a basis of {len(self.basis)} labels")

    @classmethod
    def ket(cls, label, basis: Basis | None = None) -> "StateVector":
        key = (label,) if isinstance(label, BasisLabel) else tuple(label)
        basis = basis if basis is not None else Basis([key])
        amps = np.zeros(len(basis), dtype=complex)
        amps[basis.index(key)] = 1.0
        return cls(basis, amps)

    @classmethod
    def from_dict(cls, amps: dict, basis: Basis | None = None) -> "StateVector":
        basis = basis if basis is not None else Basis(amps.keys())
        vec = np.zeros(len(basis), dtype=complex)
        for k, a in amps.items():
            vec[basis.index(k)] += a
        return cls(basis, vec)

    def __getitem__(self, key) -> complex:
        return complex(self.amplitudes[self.basis.index(key)])

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = ALGEBRAIC_TOL) -> bool:
        return abs(float(np.vdot(self.amplitudes, self.amplitudes).real) - 1.0) <= tol

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amplitudes / n)

    def scaled(self, c: complex) -> "StateVector":
        return StateVector(self.basis, self.amplitudes * c)

    def __add__(self, other: "StateVector") -> "StateVector":
        _check_same_basis(self.basis, other.basis, "add")
        return StateVector(self.basis, self.amplitudes + other.amplitudes)

    def as_dict(self, tol: float = 0.0) -> dict:
        return {k: complex(a) for k, a in zip(self.basis.keys, self.amplitudes) if abs(a) > tol}

    def to_json(self) -> dict:
        return {
            "basis": [format_key(k) for k in self.basis.keys],
            "re": [float(a.real) for a in self.amplitudes],
            "im": [float(a.imag) for a in self.amplitudes],
        }


@dataclass(frozen=True, eq=False)
class LinearMap:
    in_basis: Basis
    out_basis: Basis
    matrix: np.ndarray

    def __post_init__(self):
        for name in ("in_basis", "out_basis"):
            if not isinstance(getattr(self, name), Basis):
                object.__setattr__(self, name, Basis(getattr(self, name)))
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        shape = (len(self.out_basis), len(self.in_basis))
        if self.matrix.shape != shape:
            raise ValueError(f"matrix shape {self.matrix.shape} does not match bases {shape}")

    @classmethod
    def identity(cls, basis: Basis) -> "LinearMap":
        return cls(basis, basis, np.eye(len(basis), dtype=complex))

    @classmethod
    def from_rules(cls, in_basis: Basis, out_basis: Basis, rules) -> "LinearMap":
        """Build from ``(in_key, out_key, coefficient)`` triples."""
        mat = np.zeros((len(out_basis), len(in_basis)), dtype=complex)
        for k_in, k_out, c in rules:
            mat[out_basis.index(k_out), in_basis.index(k_in)] += c
        return cls(in_basis, out_basis, mat)

    def to_json(self) -> dict:
        return {
            "in_basis": [format_key(k) for k in self.in_basis.keys],
            "out_basis": [format_key(k) for k in self.out_basis.keys],
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }


def tensor(a: StateVector, b: StateVector) -> StateVector:
    basis, perm = _product(a.basis, b.basis)
    amps = np.empty(len(basis), dtype=complex)
    amps[perm] = np.kron(a.amplitudes, b.amplitudes)
    return StateVector(basis, amps)


def tensor_maps(m1: LinearMap, m2: LinearMap) -> LinearMap:
    in_basis, pin = _product(m1.in_basis, m2.in_basis)
    out_basis, pout = _product(m1.out_basis, m2.out_basis)
    mat = np.empty((len(out_basis), len(in_basis)), dtype=complex)
    mat[np.ix_(pout, pin)] = np.kron(m1.matrix, m2.matrix)
    return LinearMap(in_basis, out_basis, mat)


def lift(m: LinearMap, spectator: Basis) -> LinearMap:
    """``m ⊗ I`` on the spectator basis."""
    return tensor_maps(m, LinearMap.identity(spectator))


def apply_map(m: LinearMap, s: StateVector) -> StateVector:
    _check_same_basis(s.basis, m.in_basis, "apply_map")
    return StateVector(m.out_basis, m.matrix @ s.amplitudes)


def compose(second: LinearMap, first: LinearMap) -> LinearMap:
    """The map applying ``first`` and then ``second``."""
    _check_same_basis(first.out_basis, second.in_basis, "compose")
    return LinearMap(first.in_basis, second.out_basis, second.matrix @ first.matrix)


def inner(a: StateVector, b: StateVector) -> complex:
    _check_same_basis(a.basis, b.basis, "inner")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


@dataclass(frozen=True)
class IsometryReport:
    gram_defect: float
    tolerance: float

    @property
    def passes(self) -> bool:
        return self.gram_defect <= self.tolerance


def is_isometry(m: LinearMap, tol: float = ALGEBRAIC_TOL) -> IsometryReport:
    """Max-abs entry of ``V†V − I``, compared against ``tol``."""
    if m.matrix.size == 0:
        return IsometryReport(0.0, tol)
    gram = m.matrix.conj().T @ m.matrix
    defect = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    return IsometryReport(defect, tol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    basis: Basis
    matrix: np.ndarray

    def __post_init__(self):
        if not isinstance(self.basis, Basis):
            object.__setattr__(self, "basis", Basis(self.basis))
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        n = len(self.basis)
        if self.matrix.shape != (n, n):
            raise ValueError(f"density matrix shape {self.matrix.shape} for dimension {n}")

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def hermiticity_defect(self) -> float:
        if self.matrix.size == 0:
            return 0.0
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        h = (self.matrix + self.matrix.conj().T) / 2
        return float(np.linalg.eigvalsh(h)[0])

    def check(self, tol: float = ALGEBRAIC_TOL, eig_tol: float = 1e-10):
        """Raise ``ValueError`` unless Hermitian, unit trace and positive."""
        if self.hermiticity_defect() > tol:
            raise ValueError(f"not Hermitian (defect {self.hermiticity_defect():.3e})")
        if abs(self.trace() - 1.0) > tol:
            raise ValueError(f"trace {self.trace()!r} differs from 1")
        if self.min_eigenvalue() < -eig_tol:
            raise ValueError(f"negative eigenvalue {self.min_eigenvalue():.3e}")
        return self

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def density_from(s: StateVector) -> DensityMatrix:
    a = s.amplitudes
    return DensityMatrix(s.basis, np.outer(a, a.conj()))


def mix(parts: Sequence[tuple[float, DensityMatrix]], tol: float = ALGEBRAIC_TOL) -> DensityMatrix:
    if not parts:
        raise ValueError("empty mixture")
    weights = np.array([w for w, _ in parts], dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > tol:
        raise ValueError(f"mixture weights must be non-negative and sum to 1, got {weights}")
    basis = parts[0][1].basis
    total = np.zeros((len(basis), len(basis)), dtype=complex)
    for w, rho in parts:
        _check_same_basis(rho.basis, basis, "mix")
        total += w * rho.matrix
    return DensityMatrix(basis, total)


def partial_trace(rho: DensityMatrix, keep: Iterable[Subsystem]) -> DensityMatrix:
    """Trace out every subsystem not in ``keep``.

    Bases may span a subspace of the full product space; missing product
    labels simply carry zero amplitude.
    """
    keep = {Subsystem(k) for k in keep}
    subs = rho.basis.subsystems
    if not keep or not keep <= set(subs):
        raise CompositionError(
            f"keep set {sorted(keep)} is not a factor of basis subsystems {list(subs)}")
    kept_pos = [i for i, s in enumerate(subs) if s in keep]
    traced_pos = [i for i, s in enumerate(subs) if s not in keep]
    kept_keys = [tuple(k[i] for i in kept_pos) for k in rho.basis.keys]
    traced_keys = [tuple(k[i] for i in traced_pos) for k in rho.basis.keys]
    out_basis = Basis(set(kept_keys))
    kept_idx = np.array([out_basis.index(k) for k in kept_keys], dtype=np.intp)

    groups: dict = {}
    for i, t in enumerate(traced_keys):
        groups.setdefault(t, []).append(i)
    out = np.zeros((len(out_basis), len(out_basis)), dtype=complex)
    for idx in groups.values():
        idx = np.array(idx, dtype=np.intp)
        rows = kept_idx[idx]
        np.add.at(out, np.ix_(rows, rows), rho.matrix[np.ix_(idx, idx)])
    return DensityMatrix(out_basis, out)


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """A complete family of orthogonal projectors.

    Each outcome is given by a ``dim × rank`` matrix of orthonormal columns
    spanning its range. Completeness is checked on construction.
    """

    basis: Basis
    outcomes: tuple
    tol: float = field(default=ALGEBRAIC_TOL, compare=False)

    def __post_init__(self):
        if not isinstance(self.basis, Basis):
            object.__setattr__(self, "basis", Basis(self.basis))
        dim = len(self.basis)
        outs = []
        for label, vecs in self.outcomes:
            v = np.asarray(vecs, dtype=complex)
            if v.ndim == 1:
                v = v[:, None]
            if v.shape[0] != dim:
                raise ValueError(f"outcome {label!r}: spanning vectors have dimension {v.shape[0]}")
            outs.append((label, _frozen(v)))
        object.__setattr__(self, "outcomes", tuple(outs))
        labels = [lab for lab, _ in outs]
        if len(set(labels)) != len(labels):
            raise ValueError("outcome labels must be unique")
        w = np.hstack([v for _, v in outs]) if outs else np.zeros((dim, 0))
        if w.shape[1] != dim:
            raise ValueError(f"projector set is incomplete: total rank {w.shape[1]} on dimension {dim}")
        defect = max(
            float(np.max(np.abs(w.conj().T @ w - np.eye(dim)), initial=0.0)),
            float(np.max(np.abs(w @ w.conj().T - np.eye(dim)), initial=0.0)),
        )
        if defect > self.tol:
            raise ValueError(f"projectors are not orthogonal and complete (defect {defect:.3e})")

    @classmethod
    def partition(cls, basis: Basis, outcome_of) -> "ProjectorSet":
        """Projectors onto groups of basis vectors, grouped by ``outcome_of(key)``."""
        groups: dict = {}
        for i, k in enumerate(basis.keys):
            groups.setdefault(outcome_of(k), []).append(i)
        outs = []
        for label, idx in groups.items():
            v = np.zeros((len(basis), len(idx)), dtype=complex)
            v[idx, np.arange(len(idx))] = 1.0
            outs.append((label, v))
        return cls(basis, tuple(outs))

    @cached_property
    def labels(self) -> tuple:
        return tuple(lab for lab, _ in self.outcomes)

    def spanning(self, label) -> np.ndarray:
        for lab, v in self.outcomes:
            if lab == label:
                return v
        raise KeyError(label)


def outcome_distribution(s, p: ProjectorSet, tol: float = ALGEBRAIC_TOL) -> list[tuple]:
    """Exact Born-rule distribution of ``p`` on a pure state or density matrix."""
    _check_same_basis(s.basis, p.basis, "outcome_distribution")
    if isinstance(s, DensityMatrix):
        if abs(s.trace() - 1.0) > tol:
            raise ValueError("density matrix is not unit-trace")
        probs = [float(np.real(np.trace(v.conj().T @ s.matrix @ v))) for _, v in p.outcomes]
    else:
        if not s.is_normalized(tol):
            raise ValueError(f"state is not normalized (norm {s.norm()!r})")
        probs = [float(np.linalg.norm(v.conj().T @ s.amplitudes) ** 2) for _, v in p.outcomes]
    return [(lab, max(pr, 0.0)) for lab, pr in zip(p.labels, probs)]


def projective_measure(s: StateVector, p: ProjectorSet, rng: np.random.Generator,
                       tol: float = ALGEBRAIC_TOL):
    """Sample one outcome by the Born rule.

    Returns ``(outcome_label, post_state, probability)``.
    """
    dist = outcome_distribution(s, p, tol)
    probs = np.array([pr for _, pr in dist])
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    i = min(int(np.searchsorted(cdf, u, side="right")), len(probs) - 1)
    while probs[i] < 1e-15:
        # only reachable through rounding at the top of the cdf
        i -= 1
    v = p.outcomes[i][1]
    projected = v @ (v.conj().T @ s.amplitudes)
    post = StateVector(s.basis, projected / np.sqrt(probs[i]))
    return p.labels[i], post, float(probs[i])
