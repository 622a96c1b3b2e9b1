"""TOML run configuration with dotted-path overrides.

Precedence, lowest first: built-in defaults, the config file, the
``WHICHPATH_SIM_SEED`` environment variable (``run.seed`` only), and
command-line overrides such as ``--run.seed=7``.
"""
from __future__ import annotations

import copy
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analysis import InternalBasis
from .interferometer import (
    Collapsed,
    Geometry,
    GeometryError,
    MarkerOverlap,
    ModelVariant,
    PaperExact,
)

SEED_ENV = "WHICHPATH_SIM_SEED"

DEFAULTS = {
    "geometry": {
        "wavelength_m": 500e-9,
        "slit_separation_m": 100e-6,
        "screen_distance_m": 1.0,
        "detector": {"count": 64, "span_m": 25e-3},
    },
    "variant": {"kind": "paper_exact"},
    "dephasing_sigma_rad": 0.0,
    "run": {"seed": 0, "n_samples": 100_000, "measure_internal": "none"},
    "output": {"dir": "out", "formats": "both"},
}

_ALLOWED = {
    "geometry": {"wavelength_m", "slit_separation_m", "screen_distance_m", "detector"},
    "geometry.detector": {"count", "span_m", "positions_m"},
    "variant": {"kind", "chi_rad"},
    "run": {"seed", "n_samples", "measure_internal", "eraser_phi_rad"},
    "output": {"dir", "formats"},
    "": {"geometry", "variant", "dephasing_sigma_rad", "run", "output"},
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


@dataclass(frozen=True)
class RunSection:
    seed: int
    n_samples: int
    measure_internal: InternalBasis | None
    eraser_phi: float


@dataclass(frozen=True)
class Config:
    geometry: Geometry
    variant: ModelVariant
    sigma: float
    run: RunSection
    output_dir: Path
    formats: str
    raw: dict

    @property
    def write_csv(self) -> bool:
        return self.formats in ("csv", "both")

    @property
    def write_json(self) -> bool:
        return self.formats in ("json", "both")

    def with_values(self, values: dict) -> "Config":
        """A copy with dotted-path values replaced, revalidated."""
        raw = copy.deepcopy(self.raw)
        for dotted, value in values.items():
            _merge(raw, _nest(dotted.split("."), value))
        return build(raw)


def _parse_scalar(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(args) -> dict[str, object]:
    """``['--run.seed=7', '--variant.kind', 'collapsed']`` → ``{dotted: value}``."""
    out = {}
    it = iter(args)
    for arg in it:
        if not arg.startswith("--") or len(arg) <= 2:
            raise ConfigError(arg, "overrides look like --section.key=value")
        body = arg[2:]
        if "=" in body:
            key, text = body.split("=", 1)
        else:
            key = body
            try:
                text = next(it)
            except StopIteration:
                raise ConfigError(key, "override is missing a value") from None
        out[key] = _parse_scalar(text)
    return out


def _merge(base: dict, extra: dict, prefix: str = "") -> dict:
    allowed = _ALLOWED.get(prefix, set())
    for key, value in extra.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if key not in allowed:
            raise ConfigError(dotted, "unknown key")
        if isinstance(value, dict):
            node = base.setdefault(key, {})
            if dotted == "geometry.detector" and "positions_m" in value:
                node.pop("count", None)
                node.pop("span_m", None)
            _merge(node, value, dotted)
        else:
            base[key] = value
    return base


def _number(tree: dict, dotted: str, positive=True, allow_zero=False) -> float:
    node = tree
    for p in dotted.split("."):
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(dotted, "missing")
        node = node[p]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(dotted, f"expected a number, got {node!r}")
    v = float(node)
    if not math.isfinite(v):
        raise ConfigError(dotted, "must be finite")
    if positive and not (v > 0 or (allow_zero and v == 0)):
        raise ConfigError(dotted, f"must be {'non-negative' if allow_zero else 'positive'}, got {v!r}")
    return v


def _integer(tree: dict, dotted: str) -> int:
    node = tree
    for p in dotted.split("."):
        node = node[p]
    if isinstance(node, bool) or not isinstance(node, int):
        raise ConfigError(dotted, f"expected an integer, got {node!r}")
    return node


def build(raw: dict) -> Config:
    """Validate a merged config tree."""
    try:
        det = raw["geometry"]["detector"]
        wl = _number(raw, "geometry.wavelength_m")
        s = _number(raw, "geometry.slit_separation_m")
        L = _number(raw, "geometry.screen_distance_m")
        if "positions_m" in det:
            pos = det["positions_m"]
            if not isinstance(pos, list) or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in pos):
                raise ConfigError("geometry.detector.positions_m", "expected a list of numbers")
            geometry = Geometry(wl, s, L, tuple(pos))
        else:
            count = _integer(raw, "geometry.detector.count")
            if count < 1:
                raise ConfigError("geometry.detector.count", f"must be >= 1, got {count}")
            span = _number(raw, "geometry.detector.span_m") if count > 1 else 0.0
            geometry = Geometry.uniform(count, span, wl, s, L)
    except GeometryError as exc:
        field = {"positions": "geometry.detector.positions_m"}.get(exc.field, exc.field)
        raise ConfigError(field, str(exc).split(": ", 1)[-1]) from None
    except KeyError as exc:
        raise ConfigError(f"geometry.{exc.args[0]}", "missing") from None

    kind = raw["variant"].get("kind")
    has_chi = "chi_rad" in raw["variant"]
    if kind == "marker_overlap":
        if not has_chi:
            raise ConfigError("variant.chi_rad", "required when kind = marker_overlap")
        chi = _number(raw, "variant.chi_rad", allow_zero=True)
        if chi > math.pi / 2:
            raise ConfigError("variant.chi_rad", f"must lie in [0, pi/2], got {chi!r}")
        variant = MarkerOverlap(chi)
    elif kind in ("paper_exact", "collapsed"):
        if has_chi:
            raise ConfigError("variant.chi_rad", f"only allowed when kind = marker_overlap, not {kind}")
        variant = PaperExact() if kind == "paper_exact" else Collapsed()
    else:
        raise ConfigError("variant.kind", f"expected paper_exact, marker_overlap or collapsed, got {kind!r}")

    sigma = _number(raw, "dephasing_sigma_rad", allow_zero=True)

    run = raw["run"]
    seed = _integer(raw, "run.seed")
    if not 0 <= seed < 2**64:
        raise ConfigError("run.seed", "must be a 64-bit unsigned integer")
    n_samples = _integer(raw, "run.n_samples")
    if n_samples < 1:
        raise ConfigError("run.n_samples", f"must be >= 1, got {n_samples}")
    phi = _number(raw, "run.eraser_phi_rad", positive=False) if "eraser_phi_rad" in run else 0.0
    mi = run.get("measure_internal", "none")
    if mi == "none":
        basis = None
    elif mi == "ab":
        basis = InternalBasis("ab")
    elif mi == "rotated":
        basis = InternalBasis.rotated(phi)
    else:
        raise ConfigError("run.measure_internal", f"expected none, ab or rotated, got {mi!r}")

    out = raw["output"]
    formats = out.get("formats")
    if formats not in ("csv", "json", "both"):
        raise ConfigError("output.formats", f"expected csv, json or both, got {formats!r}")
    if not isinstance(out.get("dir"), str) or not out["dir"]:
        raise ConfigError("output.dir", "expected a non-empty path string")

    return Config(geometry, variant, sigma, RunSection(seed, n_samples, basis, phi),
                  Path(out["dir"]), formats, raw)


def load(path: str | os.PathLike | None = None, overrides: dict | None = None,
         env: dict | None = None) -> Config:
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("--config", f"invalid TOML: {exc}") from None
        _merge(raw, data)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            raw["run"]["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(SEED_ENV, f"expected an integer, got {env[SEED_ENV]!r}") from None
    for dotted, value in (overrides or {}).items():
        parts = dotted.split(".")
        _merge(raw, _nest(parts, value))
    return build(raw)


def _nest(parts, value) -> dict:
    tree = value
    for p in reversed(parts):
        tree = {p: tree}
    return tree
