"""Double-slit measurement chain: geometry, phases, the diffraction and
detector maps in three model variants, and the dephasing channel.

Slits sit at ``±s/2`` on the axis parallel to the screen, and the screen
coordinate origin lies on the symmetry axis. Each slit reaches each detector
element with amplitude modulus ``1/sqrt(N)`` and optical-path phase ``k·d``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import rng as _rng
from .statevec import (
    Basis,
    DensityMatrix,
    LinearMap,
    StateVector,
    apply_map,
    compose,
    fired,
    idle,
    internal,
    lift,
    path,
    position,
    ray,
    tensor,
)

PATHS = ("a", "b")
MODES = ("A", "B")  # internal vibration mode excited by path a / path b


class GeometryError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Geometry:
    """Slit/screen layout in meters. ``positions`` must be strictly increasing."""

    wavelength: float
    slit_separation: float
    screen_distance: float
    positions: tuple

    def __post_init__(self):
        for name in ("wavelength", "screen_distance"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise GeometryError(name, f"must be positive and finite, got {v!r}")
        if not (math.isfinite(self.slit_separation) and self.slit_separation >= 0):
            raise GeometryError("slit_separation",
                                f"must be non-negative and finite, got {self.slit_separation!r}")
        pos = tuple(float(x) for x in self.positions)
        if not pos:
            raise GeometryError("positions", "need at least one detector element")
        if not all(math.isfinite(x) for x in pos):
            raise GeometryError("positions", "positions must be finite")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise GeometryError("positions", "positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def uniform(cls, count: int, span: float, wavelength: float, slit_separation: float,
                screen_distance: float) -> "Geometry":
        """``count`` elements spread evenly over ``[-span/2, span/2]``.

        Built from odd integers so the array mirrors exactly about zero.
        """
        if count < 1:
            raise GeometryError("detector.count", f"must be >= 1, got {count}")
        if count == 1:
            xs = (0.0,)
        else:
            if not (math.isfinite(span) and span > 0):
                raise GeometryError("detector.span_m", f"must be positive, got {span!r}")
            half = span / 2.0
            ints = 2 * np.arange(count) - (count - 1)
            xs = tuple(float(i) * half / (count - 1) for i in ints)
        return cls(wavelength, slit_separation, screen_distance, xs)

    @classmethod
    def default(cls) -> "Geometry":
        """500 nm light, 100 µm slits, 1 m screen, 64 elements over ±12.5 mm."""
        return cls.uniform(64, 25e-3, 500e-9, 100e-6, 1.0)

    def with_slit_separation(self, s: float) -> "Geometry":
        return Geometry(self.wavelength, s, self.screen_distance, self.positions)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def element_spacing(self) -> float | None:
        if self.n < 2:
            return None
        return (self.positions[-1] - self.positions[0]) / (self.n - 1)

    @property
    def is_symmetric(self) -> bool:
        xmax = max(abs(x) for x in self.positions)
        tol = 1e-15 * xmax
        return all(abs(x + y) <= tol for x, y in zip(self.positions, reversed(self.positions)))

    @property
    def fringe_spacing(self) -> float:
        """Paraxial fringe spacing ``λL/s``."""
        return self.wavelength * self.screen_distance / self.slit_separation


def path_distances(g: Geometry) -> dict[str, np.ndarray]:
    x = np.asarray(g.positions)
    half = g.slit_separation / 2.0
    L = g.screen_distance
    return {
        "a": np.sqrt(L * L + (x - half) ** 2),
        "b": np.sqrt(L * L + (x + half) ** 2),
    }


@dataclass(frozen=True, eq=False)
class PhaseTable:
    """Unwrapped phases (radians) from each slit to each element."""

    theta_a: np.ndarray
    theta_b: np.ndarray
    positions: tuple | None = None

    def __post_init__(self):
        ta = np.array(self.theta_a, dtype=float)
        tb = np.array(self.theta_b, dtype=float)
        if ta.shape != tb.shape or ta.ndim != 1 or ta.size == 0:
            raise ValueError("theta_a and theta_b must be equal-length non-empty 1-D arrays")
        ta.setflags(write=False)
        tb.setflags(write=False)
        object.__setattr__(self, "theta_a", ta)
        object.__setattr__(self, "theta_b", tb)
        if self.positions is not None:
            if len(self.positions) != ta.size:
                raise ValueError("positions length differs from phase table length")
            object.__setattr__(self, "positions", tuple(float(x) for x in self.positions))

    @classmethod
    def from_delta(cls, delta, positions=None) -> "PhaseTable":
        """Zero ``theta_a`` and ``theta_b = delta``; handy for hand-built cases."""
        delta = np.asarray(delta, dtype=float)
        return cls(np.zeros_like(delta), delta, positions)

    @property
    def n(self) -> int:
        return int(self.theta_a.size)

    @property
    def delta(self) -> np.ndarray:
        return self.theta_b - self.theta_a

    def theta(self, beta: str) -> np.ndarray:
        return self.theta_a if beta == "a" else self.theta_b

    def element_positions(self) -> tuple:
        return self.positions if self.positions is not None else tuple(float(j) for j in range(self.n))


def phase_table(g: Geometry) -> PhaseTable:
    d = path_distances(g)
    return PhaseTable(g.k * d["a"], g.k * d["b"], g.positions)


def check_phase_constraint(p: PhaseTable, tol: float) -> tuple[float, bool]:
    """Residual ``|Σ_j (θa − θb)|`` and whether it is within ``tol``."""
    residual = abs(math.fsum(float(d) for d in (p.theta_a - p.theta_b)))
    return residual, residual <= tol


def phase_constraint_tolerance(p: PhaseTable, rel: float = 1e-9) -> float:
    scale = max(float(np.max(np.abs(p.theta_a))), float(np.max(np.abs(p.theta_b))))
    return rel * p.n * scale


# ---------------------------------------------------------------- variants

@dataclass(frozen=True)
class PaperExact:
    """Orthogonal internal modes per element: a full which-path record."""

    name = "paper_exact"

    @property
    def gamma(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Collapsed:
    """Internal freedom ignored: both paths excite the same detector state."""

    name = "collapsed"

    @property
    def gamma(self) -> float:
        return 1.0


@dataclass(frozen=True)
class MarkerOverlap:
    """Merged-position model with a path marker of overlap ``cos(chi)``."""

    chi: float
    name = "marker_overlap"

    def __post_init__(self):
        if not (0.0 <= self.chi <= math.pi / 2):
            raise ValueError(f"chi must lie in [0, pi/2], got {self.chi!r}")

    @property
    def gamma(self) -> float:
        return math.cos(self.chi)

    def marker(self, beta: str) -> np.ndarray:
        """Marker amplitudes on (A, B) for path ``beta``."""
        if beta == "a":
            return np.array([1.0, 0.0], dtype=complex)
        return np.array([math.cos(self.chi), math.sin(self.chi)], dtype=complex)


ModelVariant = Union[PaperExact, MarkerOverlap, Collapsed]


class Stage(enum.Enum):
    INITIAL = "initial"
    DIFFRACTED = "diffracted"
    FINAL = "final"


# ---------------------------------------------------------------- bases

def path_basis() -> Basis:
    return Basis([path(b) for b in PATHS])


def idle_basis() -> Basis:
    return Basis([idle()])


def free_marker_basis() -> Basis:
    return Basis([internal(m) for m in MODES])


def final_basis(n: int) -> Basis:
    """``|x_j⟩⊗|φ_j⟩⊗|v(x_j)⟩`` for both internal modes at every element."""
    return Basis([(position(j), fired(j), internal(m, j)) for j in range(n) for m in MODES])


def _size(src) -> int:
    return src if isinstance(src, int) else src.n


def _phases(src) -> PhaseTable:
    return src if isinstance(src, PhaseTable) else phase_table(src)


# ---------------------------------------------------------------- maps

def build_u1(p: PhaseTable, v: ModelVariant) -> LinearMap:
    """Diffraction map ``|β⟩ → N^{-1/2} Σ_x e^{iθβx} |·⟩``.

    PaperExact and Collapsed land on distinct rays ``|β_x⟩``. MarkerOverlap
    merges both slits onto the position basis, so its Gram defect is the
    fringe average ``|(1/N) Σ e^{iΔθ}|``.
    """
    n = p.n
    scale = 1.0 / math.sqrt(n)
    merged = isinstance(v, MarkerOverlap)
    if merged:
        out = Basis([position(j) for j in range(n)])
    else:
        out = Basis([ray(b, j) for b in PATHS for j in range(n)])
    rules = []
    for b in PATHS:
        amps = scale * np.exp(1j * p.theta(b))
        for j in range(n):
            target = position(j) if merged else ray(b, j)
            rules.append((path(b), target, amps[j]))
    return LinearMap.from_rules(path_basis(), out, rules)


def build_marker(v: MarkerOverlap) -> LinearMap:
    """Attach the path marker ``|m_β⟩`` while the path is still defined."""
    in_basis = Basis([(path(b), idle()) for b in PATHS])
    out_basis = Basis([(path(b), idle(), internal(m)) for b in PATHS for m in MODES])
    rules = []
    for b in PATHS:
        for m, c in zip(MODES, v.marker(b)):
            if c != 0:
                rules.append(((path(b), idle()), (path(b), idle(), internal(m)), c))
    return LinearMap.from_rules(in_basis, out_basis, rules)


def build_u2(g, v: ModelVariant) -> LinearMap:
    """Detector map. ``g`` may be a Geometry, a PhaseTable or an element count.

    PaperExact: ``|β_x⟩|0⟩ → |x⟩|φ_x⟩|v_β(x)⟩`` with orthogonal modes.
    Collapsed: both rays at ``x`` map to the same detector state.
    MarkerOverlap: deposits the already-attached marker into element ``x``.
    """
    n = _size(g)
    out = final_basis(n)
    rules = []
    if isinstance(v, MarkerOverlap):
        in_basis = Basis([(position(j), idle(), internal(m)) for j in range(n) for m in MODES])
        for j in range(n):
            for m in MODES:
                rules.append(((position(j), idle(), internal(m)),
                              (position(j), fired(j), internal(m, j)), 1.0))
    else:
        in_basis = Basis([(ray(b, j), idle()) for b in PATHS for j in range(n)])
        for b, mode in zip(PATHS, MODES):
            if isinstance(v, Collapsed):
                mode = MODES[0]
            for j in range(n):
                rules.append(((ray(b, j), idle()), (position(j), fired(j), internal(mode, j)), 1.0))
    return LinearMap.from_rules(in_basis, out, rules)


@dataclass(frozen=True, eq=False)
class ChainMaps:
    u1: LinearMap
    u2: LinearMap
    u: LinearMap
    marker: LinearMap | None = None

    def pre_detector(self) -> LinearMap:
        """Everything applied before ``u2``, acting on Path⊗Click."""
        return _pre_detector(self.u1, self.marker)


def _pre_detector(u1: LinearMap, marker: LinearMap | None) -> LinearMap:
    if marker is None:
        return lift(u1, idle_basis())
    lifted = lift(u1, Basis([(idle(), internal(m)) for m in MODES]))
    return compose(lifted, marker)


def chain_maps(v: ModelVariant, src) -> ChainMaps:
    """U1, U2 and the composed evolution ``U = U2 ∘ U1`` (marker step included)."""
    p = _phases(src)
    u1 = build_u1(p, v)
    u2 = build_u2(p.n, v)
    marker = build_marker(v) if isinstance(v, MarkerOverlap) else None
    return ChainMaps(u1, u2, compose(u2, _pre_detector(u1, marker)), marker)


def initial_state() -> StateVector:
    """``(|a⟩ + |b⟩)/√2 ⊗ |0⟩``."""
    s = 1.0 / math.sqrt(2.0)
    paths = StateVector.from_dict({(path("a"),): s, (path("b"),): s}, path_basis())
    return tensor(paths, StateVector.ket(idle()))


@dataclass(frozen=True, eq=False)
class ChainState:
    """State of the chain at one stage.

    ``branches`` holds the contributions of path a and path b, scaled by the
    same renormalization as ``state`` so that ``state = branches[0] + branches[1]``.
    ``pre_norm`` is the norm before renormalization (1 for isometric chains).
    """

    stage: Stage
    state: StateVector
    variant: ModelVariant
    phases: PhaseTable
    branches: tuple
    pre_norm: float = 1.0
    maps: ChainMaps | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.phases.n

    @property
    def norm_defect(self) -> float:
        return abs(self.pre_norm - 1.0)


def _path_branches(s: StateVector) -> tuple:
    out = []
    for b in PATHS:
        mask = np.array([k[0] == path(b) for k in s.basis.keys])
        out.append(StateVector(s.basis, np.where(mask, s.amplitudes, 0)))
    return tuple(out)


def _run(v: ModelVariant, src, stage: Stage) -> ChainState:
    p = _phases(src)
    psi0 = initial_state()
    branches0 = _path_branches(psi0)
    if stage is Stage.INITIAL:
        return ChainState(stage, psi0, v, p, branches0)
    maps = chain_maps(v, p)
    step = maps.pre_detector() if stage is Stage.DIFFRACTED else maps.u
    raw = tuple(apply_map(step, br) for br in branches0)
    total = raw[0] + raw[1]
    pre = total.norm()
    if pre < 1e-15:
        raise ValueError("evolved state vanishes; the phase table cancels every element")
    return ChainState(stage, total.scaled(1.0 / pre), v, p,
                      tuple(br.scaled(1.0 / pre) for br in raw), pre, maps)


def diffract(v: ModelVariant, src) -> ChainState:
    return _run(v, src, Stage.DIFFRACTED)


def evolve(v: ModelVariant, src) -> ChainState:
    """Propagate the initial state through the whole chain.

    ``src`` is a Geometry or a PhaseTable. Non-isometric variants are
    renormalized and keep their pre-normalization norm in ``pre_norm``.
    """
    return _run(v, src, Stage.FINAL)


# ---------------------------------------------------------------- dephasing

def dephasing_factor(sigma: float, n_draws: int | None = None, seed: int = 0) -> complex:
    """Ensemble average of ``e^{iξ}``, ``ξ ~ N(0, σ²)``.

    Closed form ``e^{-σ²/2}`` by default; with ``n_draws`` the mean over that
    many counter-indexed draws.
    """
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    if n_draws is None:
        return complex(math.exp(-0.5 * sigma * sigma))
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    xi = sigma * _rng.normals(seed, 0, n_draws)
    return complex(np.mean(np.exp(1j * xi)))


def apply_dephasing(cs: ChainState, sigma: float, n_draws: int | None = None,
                    seed: int = 0) -> DensityMatrix:
    """Random relative phase on path b before interference.

    The a–b coherence blocks are multiplied by the ensemble factor; the result
    is renormalized to unit trace. Maps after the phase kick act branchwise, so
    this may be applied at any stage.
    """
    f = dephasing_factor(sigma, n_draws, seed)
    a = cs.branches[0].amplitudes
    b = cs.branches[1].amplitudes
    rho = (np.outer(a, a.conj()) + np.outer(b, b.conj())
           + f * np.outer(b, a.conj()) + np.conj(f) * np.outer(a, b.conj()))
    tr = float(np.trace(rho).real)
    return DensityMatrix(cs.state.basis, rho / tr)
