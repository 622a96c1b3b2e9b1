"""The invariant suite behind ``whichpath-sim verify``."""
from __future__ import annotations

import math

import numpy as np

from .analysis import (
    click_distribution,
    conditional_path_distribution,
    distinguishability,
    duality_check,
    joint_distribution,
    mutual_information,
)
from .config import Config
from .interferometer import (
    Collapsed,
    MarkerOverlap,
    PaperExact,
    chain_maps,
    check_phase_constraint,
    evolve,
    phase_constraint_tolerance,
    phase_table,
)
from .statevec import ALGEBRAIC_TOL, is_isometry

DUALITY_CHIS = (0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8, math.pi / 2)
DEPHASING_SIGMAS = (0.0, 0.5, 1.0, 2.0)
V_FIT_TOL = 1e-6
DUALITY_TOL = 2e-6
DEPHASING_TOL = 1e-5
COLLAPSED_MIN_DEFECT = 0.999


class _Checks:
    def __init__(self):
        self.items = []

    def add(self, name, value, tolerance, ok, expected="pass"):
        ok = bool(ok)
        passed = ok if expected == "pass" else (not ok if expected == "fail" else True)
        self.items.append({
            "name": name, "value": float(value), "tolerance": float(tolerance),
            "expected": expected, "outcome": "pass" if ok else "fail", "passed": passed,
        })
        return ok


def _iso_entry(report, expected):
    return {"gram_defect": report.gram_defect, "result": "pass" if report.passes else "fail",
            "expected": expected}


def invariant_suite(cfg: Config) -> dict:
    g = cfg.geometry
    checks = _Checks()
    iso = {}

    # isometry per variant; the collapsed detector map must fail
    marker = cfg.variant if isinstance(cfg.variant, MarkerOverlap) else MarkerOverlap(math.pi / 3)
    for v in (PaperExact(), Collapsed(), marker):
        maps = chain_maps(v, g)
        reports = {name: is_isometry(m, ALGEBRAIC_TOL)
                   for name, m in (("U1", maps.u1), ("U2", maps.u2), ("U", maps.u))}
        if isinstance(v, PaperExact):
            expected = dict.fromkeys(reports, "pass")
            for name, r in reports.items():
                checks.add(f"isometry.paper_exact.{name}", r.gram_defect, r.tolerance, r.passes)
        elif isinstance(v, Collapsed):
            expected = {"U1": "pass", "U2": "fail", "U": "info"}
            checks.add("isometry.collapsed.U1", reports["U1"].gram_defect, ALGEBRAIC_TOL,
                       reports["U1"].passes)
            checks.add("isometry.collapsed.U2", reports["U2"].gram_defect, ALGEBRAIC_TOL,
                       reports["U2"].passes, expected="fail")
            checks.add("isometry.collapsed.U2_defect_at_least", reports["U2"].gram_defect,
                       COLLAPSED_MIN_DEFECT, reports["U2"].gram_defect >= COLLAPSED_MIN_DEFECT)
        else:
            expected = {"U1": "info", "U2": "pass", "U": "info"}
            checks.add("isometry.marker_overlap.U2", reports["U2"].gram_defect, ALGEBRAIC_TOL,
                       reports["U2"].passes)
            c = complex(np.mean(np.exp(1j * phase_table(g).delta)))
            gap = abs(reports["U"].gram_defect - v.gamma * abs(c))
            checks.add("isometry.marker_overlap.U_defect_equals_gamma_c", gap, ALGEBRAIC_TOL,
                       gap <= ALGEBRAIC_TOL)
        iso[v.name] = {name: _iso_entry(r, expected[name]) for name, r in reports.items()}

    configured = iso[cfg.variant.name]["U2"]["result"]

    for v in (PaperExact(), Collapsed(), marker):
        cs = evolve(v, g)
        defect = abs(cs.state.norm() - 1.0)
        checks.add(f"normalization.{v.name}", defect, ALGEBRAIC_TOL, defect <= ALGEBRAIC_TOL)

    p = phase_table(g)
    tol = phase_constraint_tolerance(p)
    residual, ok = check_phase_constraint(p, tol)
    checks.add("phase_constraint", residual, tol, ok, expected="pass" if g.is_symmetric else "info")

    exact = evolve(PaperExact(), g)
    probs = click_distribution(exact).probs
    flat = float(np.max(np.abs(probs - 1.0 / g.n)))
    checks.add("flat_clicks.paper_exact", flat, ALGEBRAIC_TOL, flat <= ALGEBRAIC_TOL)
    mi = mutual_information(joint_distribution(exact))
    checks.add("mutual_information.paper_exact", mi, ALGEBRAIC_TOL, mi <= ALGEBRAIC_TOL)
    worst = max(max(abs(q - 0.5) for q in conditional_path_distribution(exact, j).values())
                for j in range(g.n))
    checks.add("ab_conditional.paper_exact", worst, ALGEBRAIC_TOL, worst <= ALGEBRAIC_TOL)

    for chi in DUALITY_CHIS:
        v = MarkerOverlap(chi)
        V = click_distribution(evolve(v, g)).visibility
        D = distinguishability(v)
        tag = f"chi={chi:.6f}"
        checks.add(f"duality.visibility.{tag}", abs(V - math.cos(chi)), V_FIT_TOL,
                   abs(V - math.cos(chi)) <= V_FIT_TOL)
        gap = abs(duality_check(V, D) - 1.0)
        checks.add(f"duality.v2_plus_d2.{tag}", gap, DUALITY_TOL, gap <= DUALITY_TOL)

    coherent = evolve(MarkerOverlap(0.0), g)
    for sigma in sorted(set(DEPHASING_SIGMAS) | {cfg.sigma}):
        V = click_distribution(coherent, sigma=sigma).visibility
        gap = abs(V - math.exp(-0.5 * sigma * sigma))
        checks.add(f"dephasing.sigma={sigma:.6f}", gap, DEPHASING_TOL, gap <= DEPHASING_TOL)

    return {
        "kind": "verify",
        "variant": cfg.variant.name,
        "gamma": cfg.variant.gamma,
        "sigma": cfg.sigma,
        "is_isometry": configured,
        "isometry": iso,
        "mutual_information_bits": mi,
        "phase_constraint_residual": residual,
        "checks": checks.items,
        "all_passed": all(c["passed"] for c in checks.items),
    }
