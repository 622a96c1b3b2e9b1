"""``whichpath-sim <verify|pattern|eraser|sample|sweep> --config <path> [overrides]``.

Exit codes: 0 success, 1 invariant failure, 2 config or usage error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import math
import re
import sys

import numpy as np

from . import output
from .analysis import (
    click_distribution,
    distinguishability,
    duality_check,
    eraser_fringes,
    joint_distribution,
    mutual_information,
)
from .config import Config, ConfigError, load, parse_overrides
from .interferometer import PaperExact, check_phase_constraint, evolve
from .sampler import RunConfig, chi_square_gof, empirical_mutual_information, histogram, run
from .verification import invariant_suite

log = logging.getLogger("whichpath_sim")

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

PATTERN_HEADER = ("element_index", "position_m", "probability")
ERASER_HEADER = ("element_index", "position_m", "p_x_given_plus", "p_x_given_minus", "p_x")
EVENTS_HEADER = ("sample_index", "element_index", "position_m", "internal_outcome")
HISTOGRAM_HEADER = ("element_index", "position_m", "count", "count_A", "count_B",
                    "count_plus", "count_minus")
SWEEP_HEADER = ("parameter", "value", "visibility", "distinguishability", "v2_plus_d2",
                "mutual_information_bits")
SWEEPABLE = ("chi_rad", "dephasing_sigma_rad", "slit_separation_m")


class UsageError(Exception):
    pass


def _emit(cfg: Config, name: str, doc: dict):
    output.validate(doc)
    if cfg.write_json:
        output.write_json(cfg.output_dir / name, doc)


def _outdir(cfg: Config):
    cfg.output_dir.mkdir(parents=True, exist_ok=True)


# ---------------------------------------------------------------- commands

def cmd_verify(cfg: Config, args) -> int:
    report = invariant_suite(cfg)
    output.validate(report)
    sys.stdout.write(output.dumps(report))
    for c in report["checks"]:
        if not c["passed"]:
            log.error("invariant failed: %s (value %.3e, tolerance %.3e)",
                      c["name"], c["value"], c["tolerance"])
    return EXIT_OK if report["all_passed"] else EXIT_INVARIANT


def cmd_pattern(cfg: Config, args) -> int:
    _outdir(cfg)
    cs = evolve(cfg.variant, cfg.geometry)
    pr = click_distribution(cs, sigma=cfg.sigma)
    residual, _ = check_phase_constraint(cs.phases, math.inf)
    if cfg.write_csv:
        output.write_csv(cfg.output_dir / "pattern.csv", PATTERN_HEADER,
                         ((j, x, q) for j, (x, q) in enumerate(zip(pr.positions, pr.probs))))
    _emit(cfg, "report.json", {
        "kind": "pattern",
        "variant": cfg.variant.name,
        "n_elements": pr.n,
        "visibility": pr.visibility,
        "visibility_minmax": pr.visibility_minmax,
        "fringe_spacing_m": pr.fringe_spacing_est,
        "gamma": cfg.variant.gamma,
        "sigma": cfg.sigma,
        "phase_constraint_residual": residual,
    })
    return EXIT_OK


def cmd_eraser(cfg: Config, args) -> int:
    if not isinstance(cfg.variant, PaperExact):
        raise UsageError(f"eraser needs variant.kind = paper_exact (orthogonal internal record), "
                         f"got {cfg.variant.name}")
    _outdir(cfg)
    phi = cfg.run.eraser_phi
    er = eraser_fringes(evolve(cfg.variant, cfg.geometry), phi)
    m = er.marginal
    if cfg.write_csv:
        rows = ((j, x, a, b, c) for j, (x, a, b, c) in
                enumerate(zip(m.positions, er.plus.probs, er.minus.probs, m.probs)))
        output.write_csv(cfg.output_dir / "eraser.csv", ERASER_HEADER, rows)
    _emit(cfg, "report.json", {
        "kind": "eraser",
        "variant": cfg.variant.name,
        "phi_rad": phi,
        "n_elements": m.n,
        "p_plus": er.p_plus,
        "p_minus": er.p_minus,
        "visibility_plus": er.plus.visibility,
        "visibility_minus": er.minus.visibility,
        "visibility_marginal": m.visibility,
        "decomposition_residual": er.decomposition_residual,
        "marginal_flatness": float(np.max(np.abs(m.probs - 1.0 / m.n))),
    })
    return EXIT_OK


def cmd_sample(cfg: Config, args) -> int:
    _outdir(cfg)
    cs = evolve(cfg.variant, cfg.geometry)
    rc = RunConfig(cfg.run.seed, cfg.run.n_samples, cfg.run.measure_internal)
    events = run(cs, rc, chunk=args.chunk)
    h = histogram(events, cs.n)
    pos = cs.phases.element_positions()
    if cfg.write_csv:
        labels = events.labels
        codes = events.outcome_code
        rows = ((int(i), int(j), pos[j], "" if codes is None else labels[codes[k]])
                for k, (i, j) in enumerate(zip(events.sample_index, events.element_index)))
        output.write_csv(cfg.output_dir / "events.csv", EVENTS_HEADER, rows)
        by = {}
        if h.by_outcome is not None:
            by = {lab: h.by_outcome[:, c] for c, lab in enumerate(h.labels)}
        zero = np.zeros(cs.n, dtype=np.int64)
        output.write_csv(cfg.output_dir / "histogram.csv", HISTOGRAM_HEADER, (
            (j, pos[j], int(h.counts[j]), int(by.get("A", zero)[j]), int(by.get("B", zero)[j]),
             int(by.get("+", zero)[j]), int(by.get("-", zero)[j])) for j in range(cs.n)))
    gof = chi_square_gof(h.counts, click_distribution(cs).probs)
    mi = cfg.run.measure_internal
    _emit(cfg, "gof.json", {
        "kind": "gof",
        "variant": cfg.variant.name,
        "seed": cfg.run.seed,
        "n_samples": cfg.run.n_samples,
        "statistic": gof.statistic,
        "dof": gof.dof,
        "p_value": gof.p_value,
        "measure_internal": "none" if mi is None else mi.kind,
        "empirical_mutual_information_bits": None if h.by_outcome is None else empirical_mutual_information(h),
    })
    return EXIT_OK


_PI_TERM = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+]+))?\s*$")


def parse_value(text: str) -> float:
    """A float, or a multiple of pi such as ``pi/2`` or ``3*pi/8``."""
    try:
        return float(text)
    except ValueError:
        pass
    m = _PI_TERM.match(text)
    if not m:
        raise UsageError(f"cannot parse number {text!r}")
    coef = m.group(1)
    coef = 1.0 if coef in ("", "+") else (-1.0 if coef == "-" else float(coef))
    return coef * math.pi / (float(m.group(2)) if m.group(2) else 1.0)


def parse_sweep(arg: str) -> tuple[str, np.ndarray]:
    if "=" not in arg:
        raise UsageError(f"sweep must look like parameter=start:stop:steps, got {arg!r}")
    name, rng = arg.split("=", 1)
    name = name.strip()
    if name not in SWEEPABLE:
        raise UsageError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEPABLE)}")
    parts = rng.split(":")
    if len(parts) != 3:
        raise UsageError(f"sweep range must be start:stop:steps, got {rng!r}")
    start, stop = parse_value(parts[0]), parse_value(parts[1])
    try:
        steps = int(parts[2])
    except ValueError:
        raise UsageError(f"sweep steps must be an integer, got {parts[2]!r}") from None
    if steps < 1:
        raise UsageError("sweep steps must be >= 1")
    return name, np.linspace(start, stop, steps)


def sweep_point(cfg: Config) -> tuple[float, float, float, float]:
    cs = evolve(cfg.variant, cfg.geometry)
    V = click_distribution(cs, sigma=cfg.sigma).visibility
    D = distinguishability(cfg.variant)
    mi = mutual_information(joint_distribution(cs, sigma=cfg.sigma))
    return V, D, duality_check(V, D), mi


def cmd_sweep(cfg: Config, args) -> int:
    if not args.sweep:
        raise UsageError("sweep needs --sweep parameter=start:stop:steps")
    name, values = parse_sweep(args.sweep)
    _outdir(cfg)
    rows = []
    for value in values:
        value = float(value)
        if name == "chi_rad":
            point = cfg.with_values({"variant.kind": "marker_overlap", "variant.chi_rad": value})
        elif name == "dephasing_sigma_rad":
            point = cfg.with_values({"dephasing_sigma_rad": value})
        else:
            point = cfg.with_values({"geometry.slit_separation_m": value})
        rows.append((name, value) + sweep_point(point))
    output.write_csv(cfg.output_dir / "sweep.csv", SWEEP_HEADER, rows)
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "pattern": cmd_pattern,
    "eraser": cmd_eraser,
    "sample": cmd_sample,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whichpath-sim",
        description="Double-slit which-path measurement chain simulator.",
        epilog="Any config scalar can be overridden with --section.key=value, e.g. --run.seed=7.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML config file (defaults are used when omitted)")
        if name == "sweep":
            p.add_argument("--sweep", help="parameter=start:stop:steps, e.g. chi_rad=0:pi/2:9")
        if name == "sample":
            p.add_argument("--chunk", type=int, default=None,
                           help="generate events this many at a time (output is identical)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load(args.config, parse_overrides(rest))
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"whichpath-sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"whichpath-sim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
