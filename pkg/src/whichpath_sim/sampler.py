"""Seeded detection events and goodness-of-fit statistics.

Sample ``i`` draws its click from word 0 and its internal outcome from word 1
of the counter block ``(seed, i)``; see :mod:`whichpath_sim.rng`.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import rng as _rng
from .analysis import InternalBasis, click_distribution, internal_outcome_probs
from .interferometer import ChainState


@dataclass(frozen=True)
class RunConfig:
    seed: int
    n_samples: int
    measure_internal: InternalBasis | None = None

    def __post_init__(self):
        _rng.check_seed(self.seed)
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError(f"n_samples must be a positive integer, got {self.n_samples!r}")


class EventRecord(NamedTuple):
    sample_index: int
    element_index: int
    internal_outcome: str | None


class Events(Sequence):
    """Array-backed, read-only sequence of :class:`EventRecord`."""

    def __init__(self, sample_index, element_index, outcome_code=None, labels=None):
        self.sample_index = np.asarray(sample_index, dtype=np.int64)
        self.element_index = np.asarray(element_index, dtype=np.int64)
        self.outcome_code = None if outcome_code is None else np.asarray(outcome_code, dtype=np.int8)
        self.labels = labels
        for arr in (self.sample_index, self.element_index, self.outcome_code):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return int(self.sample_index.size)

    def __getitem__(self, i):
        if isinstance(i, slice):
            oc = None if self.outcome_code is None else self.outcome_code[i]
            return Events(self.sample_index[i], self.element_index[i], oc, self.labels)
        out = None if self.outcome_code is None else self.labels[self.outcome_code[i]]
        return EventRecord(int(self.sample_index[i]), int(self.element_index[i]), out)

    def __eq__(self, other):
        if not isinstance(other, Events):
            return NotImplemented
        same_oc = (self.outcome_code is None and other.outcome_code is None) or (
            self.outcome_code is not None and other.outcome_code is not None
            and np.array_equal(self.outcome_code, other.outcome_code))
        return (same_oc and self.labels == other.labels
                and np.array_equal(self.sample_index, other.sample_index)
                and np.array_equal(self.element_index, other.element_index))

    @classmethod
    def concat(cls, parts: Sequence["Events"]) -> "Events":
        if not parts:
            return cls([], [])
        oc = None if parts[0].outcome_code is None else np.concatenate([p.outcome_code for p in parts])
        return cls(np.concatenate([p.sample_index for p in parts]),
                   np.concatenate([p.element_index for p in parts]), oc, parts[0].labels)


def _conditional_first(cs: ChainState, probs: np.ndarray, basis: InternalBasis) -> np.ndarray:
    first = np.zeros(cs.n)
    for j in range(cs.n):
        if probs[j] > 1e-15:
            first[j] = internal_outcome_probs(cs, j, basis)[basis.labels[0]]
    return first


class _Tables(NamedTuple):
    cdf: np.ndarray
    last: int
    first: np.ndarray | None


def _tables(cs: ChainState, basis: InternalBasis | None) -> _Tables:
    probs = click_distribution(cs).probs
    # rounding at the top of the cdf may land on a trailing empty element
    last = int(np.flatnonzero(probs > 1e-15)[-1])
    first = None if basis is None else _conditional_first(cs, probs, basis)
    return _Tables(np.cumsum(probs), last, first)


def _draw(t: _Tables, rc: RunConfig, start: int, stop: int) -> Events:
    u = _rng.uniforms(rc.seed, start, stop)
    j = np.searchsorted(t.cdf, u[:, 0] * t.cdf[-1], side="right")
    j = np.minimum(j, t.last)
    idx = np.arange(start, stop, dtype=np.int64)
    if rc.measure_internal is None:
        return Events(idx, j)
    code = np.where(u[:, 1] < t.first[j], 0, 1)
    return Events(idx, j, code, rc.measure_internal.labels)


def _check_range(rc: RunConfig, start: int, stop: int):
    if not 0 <= start <= stop <= rc.n_samples:
        raise ValueError(f"sample range [{start}, {stop}) outside 0..{rc.n_samples}")


def sample_events(cs: ChainState, rc: RunConfig, start: int = 0, stop: int | None = None) -> Events:
    """Events for sample indices ``start..stop-1`` (default: the whole run).

    Any chunking of the index range concatenates to the same event stream.
    """
    stop = rc.n_samples if stop is None else stop
    _check_range(rc, start, stop)
    return _draw(_tables(cs, rc.measure_internal), rc, start, stop)


@dataclass(frozen=True, eq=False)
class Histogram:
    counts: np.ndarray
    by_outcome: np.ndarray | None = None
    labels: tuple | None = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def histogram(events: Events, n: int) -> Histogram:
    if len(events) and (events.element_index.min() < 0 or events.element_index.max() >= n):
        raise ValueError("event element index out of range")
    counts = np.bincount(events.element_index, minlength=n)
    if events.outcome_code is None:
        return Histogram(counts.astype(np.int64))
    by = np.zeros((n, 2), dtype=np.int64)
    np.add.at(by, (events.element_index, events.outcome_code), 1)
    return Histogram(counts.astype(np.int64), by, events.labels)


# ---------------------------------------------------------------- chi-square

_EPS = 1e-16
_MAX_ITER = 10_000


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x)``.

    Power series for ``x < a + 1``, Lentz continued fraction otherwise.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    log_prefactor = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return max(1.0 - total * math.exp(log_prefactor), 0.0)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return min(math.exp(log_prefactor) * h, 1.0)


class GofResult(NamedTuple):
    statistic: float
    dof: int
    p_value: float


def merge_bins(observed, expected, min_expected: float = 5.0):
    """Merge adjacent bins left to right until each expected count reaches ``min_expected``.

    A short tail is folded into the last completed bin.
    """
    obs_out, exp_out = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp_out:
            obs_out[-1] += acc_o
            exp_out[-1] += acc_e
        else:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
    return np.array(obs_out), np.array(exp_out)


def chi_square_gof(counts, expected_probs, min_expected: float = 5.0) -> GofResult:
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    if counts.shape != probs.shape:
        raise ValueError("counts and expected probabilities differ in length")
    if np.any(probs < 0) or probs.sum() <= 0:
        raise ValueError("expected probabilities must be non-negative with positive total")
    if np.any((probs == 0) & (counts > 0)):
        raise ValueError("counts observed in a bin with zero expected probability")
    n = counts.sum()
    expected = n * probs / probs.sum()
    obs, exp = merge_bins(counts, expected, min_expected)
    dof = len(obs) - 1
    if dof < 1:
        return GofResult(0.0, 0, 1.0)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return GofResult(stat, dof, gammaincc(dof / 2.0, stat / 2.0))


def empirical_mutual_information(h: Histogram) -> float:
    """Plug-in ``I(X; outcome)`` in bits from a two-stage histogram."""
    if h.by_outcome is None:
        raise ValueError("histogram carries no internal outcomes")
    t = h.by_outcome / h.by_outcome.sum()
    px = t.sum(axis=1, keepdims=True)
    pb = t.sum(axis=0, keepdims=True)
    mask = t > 0
    return max(float(np.sum(t[mask] * np.log2(t[mask] / (px @ pb)[mask]))), 0.0)


def run(cs: ChainState, rc: RunConfig, chunk: int | None = None) -> Events:
    """All events of a run, optionally generated ``chunk`` samples at a time."""
    if chunk is None:
        return sample_events(cs, rc)
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    t = _tables(cs, rc.measure_internal)
    parts = [_draw(t, rc, s, min(s + chunk, rc.n_samples)) for s in range(0, rc.n_samples, chunk)]
    return Events.concat(parts)
