"""Observables of the final chain state: click patterns, remnant internal
states, post-measurement statistics, visibility, distinguishability and
mutual information.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .interferometer import (
    MODES,
    ChainState,
    Collapsed,
    Geometry,
    MarkerOverlap,
    ModelVariant,
    PaperExact,
    Stage,
    apply_dephasing,
)
from .statevec import (
    ALGEBRAIC_TOL,
    Basis,
    ProjectorSet,
    StateVector,
    Subsystem,
    fired,
    internal,
    position,
    outcome_distribution,
)


class StageError(ValueError):
    pass


class ZeroProbabilityError(ValueError):
    pass


@dataclass(frozen=True)
class InternalBasis:
    """Measurement basis for the internal qubit at one element.

    ``ab`` measures the vibration modes directly; ``rotated`` measures
    ``|±⟩ = (|A⟩ ± e^{iφ}|B⟩)/√2``.
    """

    kind: str = "ab"
    phi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ab", "rotated"):
            raise ValueError(f"unknown internal basis {self.kind!r}")

    @classmethod
    def rotated(cls, phi: float) -> "InternalBasis":
        return cls("rotated", float(phi))

    @property
    def labels(self) -> tuple[str, str]:
        return ("A", "B") if self.kind == "ab" else ("+", "-")

    def vectors(self) -> np.ndarray:
        """Columns are the two outcome vectors on (A, B)."""
        if self.kind == "ab":
            return np.eye(2, dtype=complex)
        e = np.exp(1j * self.phi)
        return np.array([[1, 1], [e, -e]], dtype=complex) / math.sqrt(2)


AB = InternalBasis("ab")


@dataclass(frozen=True, eq=False)
class PatternReport:
    positions: tuple
    probs: np.ndarray
    delta: np.ndarray
    visibility: float
    visibility_minmax: float
    fringe_spacing_est: float | None
    variant: str
    gamma: float
    sigma: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if np.any(p < -ALGEBRAIC_TOL) or abs(p.sum() - 1.0) > ALGEBRAIC_TOL:
            raise ValueError("pattern probabilities must be non-negative and sum to 1")

    @property
    def n(self) -> int:
        return int(self.probs.size)


def make_report(probs, positions, delta, variant: str, gamma: float,
                sigma: float = 0.0) -> PatternReport:
    probs = np.asarray(probs, dtype=float)
    positions = tuple(positions)
    delta = np.asarray(delta, dtype=float)
    if probs.size >= 3:
        v = fit_visibility(probs, delta)
    else:
        v = minmax_visibility(probs)
    return PatternReport(positions, probs, delta, v, minmax_visibility(probs),
                         _spacing(probs, positions), variant, gamma, sigma)


# ---------------------------------------------------------------- clicks

def click_projectors(basis: Basis) -> ProjectorSet:
    """The screen measurement: one projector per Click label (idle or fired)."""
    return ProjectorSet.partition(basis, lambda key: _label_of(key, Subsystem.CLICK))


def _label_of(key, sub: Subsystem):
    for lab in key:
        if lab.subsystem is sub:
            return lab
    raise KeyError(sub)


def _require_final(cs: ChainState):
    if cs.stage is not Stage.FINAL:
        raise StageError(f"expected a final-stage chain state, got {cs.stage.value}")


def _click_probs(source, n: int) -> np.ndarray:
    dist = outcome_distribution(source, click_projectors(source.basis))
    probs = np.zeros(n)
    for lab, pr in dist:
        kind, j = lab.tag
        if kind == "fired":
            probs[j] = pr
    return probs


def click_distribution(cs: ChainState, sigma: float = 0.0, n_draws: int | None = None,
                       seed: int = 0) -> PatternReport:
    """Born probabilities of ``|φ_x⟩⟨φ_x|`` with the internal factor traced out.

    ``sigma > 0`` first sends the state through the dephasing channel
    (analytic, or Monte Carlo with ``n_draws``).
    """
    _require_final(cs)
    source = cs.state
    if sigma > 0 or n_draws is not None:
        source = apply_dephasing(cs, sigma, n_draws, seed)
    probs = _click_probs(source, cs.n)
    return make_report(probs, cs.phases.element_positions(), cs.phases.delta,
                       cs.variant.name, cs.variant.gamma, sigma)


# ---------------------------------------------------------------- internal

def post_click_internal_state(cs: ChainState, j: int) -> StateVector:
    """Normalized internal-mode state left at element ``j`` after its click."""
    _require_final(cs)
    basis = Basis([internal(m, j) for m in MODES])
    amps = np.array([cs.state[(position(j), fired(j), internal(m, j))] for m in MODES])
    weight = float(np.vdot(amps, amps).real)
    if weight <= 1e-15:
        raise ZeroProbabilityError(f"element {j} has zero click probability")
    return StateVector(basis, amps / math.sqrt(weight))


def internal_outcome_probs(cs: ChainState, j: int, basis: InternalBasis = AB) -> dict[str, float]:
    """Outcome probabilities of an internal measurement, conditioned on a click at ``j``."""
    remnant = post_click_internal_state(cs, j)
    proj = ProjectorSet(remnant.basis, tuple(zip(basis.labels, basis.vectors().T)))
    return dict(outcome_distribution(remnant, proj))


def conditional_path_distribution(cs: ChainState, j: int,
                                  basis: InternalBasis = AB) -> dict[str, float]:
    """Post-measurement statistics at element ``j`` for the orthogonal-record model.

    In the AB basis the keys are the post-chosen paths ``a``/``b``; in a
    rotated basis they are ``+``/``-``.
    """
    if not isinstance(cs.variant, PaperExact):
        raise ValueError(
            f"path post-measurement needs an orthonormal internal record; "
            f"variant {cs.variant.name} has marker overlap {cs.variant.gamma}")
    probs = internal_outcome_probs(cs, j, basis)
    if basis.kind == "ab":
        return {"a": probs["A"], "b": probs["B"]}
    return probs


@dataclass(frozen=True, eq=False)
class EraserResult:
    plus: PatternReport
    minus: PatternReport
    p_plus: float
    p_minus: float
    marginal: PatternReport
    phi: float = 0.0

    @property
    def decomposition_residual(self) -> float:
        mixed = self.p_plus * self.plus.probs + self.p_minus * self.minus.probs
        return float(np.max(np.abs(mixed - self.marginal.probs)))


def eraser_fringes(cs: ChainState, phi: float) -> EraserResult:
    """Click patterns conditioned on the rotated internal outcome ``±``."""
    if not isinstance(cs.variant, PaperExact):
        raise ValueError("eraser conditioning is defined for the paper_exact variant only")
    marginal = click_distribution(cs)
    basis = InternalBasis.rotated(phi)
    joint = np.zeros((cs.n, 2))
    for j in range(cs.n):
        if marginal.probs[j] <= 1e-15:
            continue
        probs = internal_outcome_probs(cs, j, basis)
        joint[j] = marginal.probs[j] * probs["+"], marginal.probs[j] * probs["-"]
    weights = joint.sum(axis=0)
    reports = []
    for col in range(2):
        if weights[col] <= 1e-15:
            raise ZeroProbabilityError(f"outcome {basis.labels[col]} never occurs")
        reports.append(make_report(joint[:, col] / weights[col], marginal.positions,
                                   marginal.delta, cs.variant.name, cs.variant.gamma))
    return EraserResult(reports[0], reports[1], float(weights[0]), float(weights[1]),
                        marginal, phi)


# ---------------------------------------------------------------- visibility

def minmax_visibility(probs) -> float:
    p = np.asarray(probs, dtype=float)
    hi, lo = float(p.max()), float(p.min())
    if hi + lo <= 0:
        return 0.0
    return min(max((hi - lo) / (hi + lo), 0.0), 1.0)


def fit_visibility(probs, delta) -> float:
    """Least-squares fit of ``A(1 + V cos(Δθ − φ0))`` over (A, V, φ0).

    Linear in ``(A, A V cos φ0, A V sin φ0)``; ``V`` is clamped to [0, 1].
    """
    p = np.asarray(probs, dtype=float)
    d = np.asarray(delta, dtype=float)
    if p.size < 3:
        raise ValueError("the fitted visibility needs at least 3 elements")
    if float(p.max() - p.min()) <= 1e-15 * float(p.max()):
        return 0.0
    design = np.column_stack([np.ones_like(d), np.cos(d), np.sin(d)])
    (amp, c, s), *_ = np.linalg.lstsq(design, p, rcond=None)
    if amp <= 0:
        return 0.0
    return float(min(max(math.hypot(c, s) / amp, 0.0), 1.0))


def visibility(pr: PatternReport, estimator: str = "fit") -> float:
    if estimator == "fit":
        return fit_visibility(pr.probs, pr.delta)
    if estimator == "minmax":
        return minmax_visibility(pr.probs)
    raise ValueError(f"unknown estimator {estimator!r}")


def distinguishability(v: ModelVariant) -> float:
    """Optimal equal-prior path-guessing advantage from the marker, ``√(1 − γ²)``.

    The collapsed model leaves no record, so it scores 0.
    """
    if isinstance(v, Collapsed):
        return 0.0
    if isinstance(v, MarkerOverlap):
        return math.sqrt(max(1.0 - v.gamma ** 2, 0.0))
    return 1.0


def duality_check(V: float, D: float) -> float:
    return V * V + D * D


# ---------------------------------------------------------------- information

@dataclass(frozen=True, eq=False)
class JointDistribution:
    """``table[j, c]`` is the probability of a click at ``j`` with outcome ``labels[c]``."""

    table: np.ndarray
    labels: tuple = ("a", "b")
    tol: float = field(default=ALGEBRAIC_TOL, compare=False)

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2:
            raise ValueError("joint table must be 2-D")
        if np.any(t < 0):
            raise ValueError("joint distribution has negative entries")
        if abs(t.sum() - 1.0) > self.tol:
            raise ValueError(f"joint distribution sums to {t.sum()!r}, not 1")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def marginal_x(self) -> np.ndarray:
        return self.table.sum(axis=1)

    @property
    def marginal_outcome(self) -> np.ndarray:
        return self.table.sum(axis=0)


def joint_distribution(cs: ChainState, basis: InternalBasis = AB, sigma: float = 0.0) -> JointDistribution:
    """Click position jointly with the internal outcome measured afterwards.

    Works on the (optionally dephased) density matrix: the entry for element
    ``j`` and outcome ``o`` is ``⟨o|ρ_j|o⟩`` with ``ρ_j`` the internal block at ``j``.
    """
    _require_final(cs)
    rho = apply_dephasing(cs, sigma).matrix if sigma > 0 else np.outer(cs.state.amplitudes,
                                                                       cs.state.amplitudes.conj())
    vecs = basis.vectors()
    idx = cs.state.basis.index
    table = np.zeros((cs.n, 2))
    for j in range(cs.n):
        rows = [idx((position(j), fired(j), internal(m, j))) for m in MODES]
        block = rho[np.ix_(rows, rows)]
        table[j] = np.real(np.einsum("io,ij,jo->o", vecs.conj(), block, vecs))
    table = np.clip(table, 0.0, None)
    labels = ("a", "b") if basis.kind == "ab" and isinstance(cs.variant, PaperExact) else basis.labels
    return JointDistribution(table / table.sum(), labels)


def mutual_information(joint: JointDistribution) -> float:
    """``I(X;B)`` in bits, with ``0 log 0 = 0``."""
    t = joint.table
    px = t.sum(axis=1, keepdims=True)
    pb = t.sum(axis=0, keepdims=True)
    mask = t > 0
    ratio = t[mask] / (px @ pb)[mask]
    return max(float(np.sum(t[mask] * np.log2(ratio))), 0.0)


# ---------------------------------------------------------------- fringes

def _local_maxima(p: np.ndarray) -> list[int]:
    if p.size < 3 or float(p.max() - p.min()) <= 1e-9 * float(p.max()):
        return []
    eps = 1e-12 * float(p.max())
    return [j for j in range(1, p.size - 1) if p[j] > p[j - 1] + eps and p[j] >= p[j + 1]]


def _spacing(probs, positions) -> float | None:
    peaks = _local_maxima(np.asarray(probs, dtype=float))
    if len(peaks) < 2:
        return None
    xs = [positions[j] for j in peaks]
    return (xs[-1] - xs[0]) / (len(xs) - 1)


def fringe_spacing_estimate(pr: PatternReport, g: Geometry | None = None) -> float | None:
    """Mean distance between adjacent interior maxima, or None with fewer than two."""
    positions = g.positions if g is not None else pr.positions
    return _spacing(pr.probs, positions)
