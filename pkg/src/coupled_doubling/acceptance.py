"""Bundled acceptance suite.

Every check returns a :class:`CriterionResult`; a criterion passes only if
its numerical condition holds *and* it finishes inside its time budget.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import classification as cls3
from . import density as dens
from .circle import reduce, torus_distance
from .ensemble import (
    cyclic_period,
    make_rng,
    residue_supports,
    simulate_ensemble,
    simulate_orbit,
    time_average,
)
from .finite import (
    CouplingParams,
    map_H,
    renormalization_depth,
    step_factor_n2,
    step_factor_n3,
    step_finite,
    to_factor_n2,
    to_factor_n3,
)
from .stats import ks_distance_to_uniform, l1_distance


@dataclass
class CriterionResult:
    id: str
    name: str
    passed: bool
    detail: str
    seconds: float
    limit: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.id:>3} {self.name} ({self.seconds:.2f}s / {self.limit:g}s): {self.detail}"


# ---------------------------------------------------------------- finite dynamics

def c1_conserved_sum():
    worst = 0.0
    for n in (2, 3, 5):
        for eps in (0.1, 0.3, 0.42, 0.7):
            x = make_rng(1, n, purpose="acceptance-sum").random((10_000, n))
            y = step_finite(x, CouplingParams(eps, n))
            err = torus_distance(y.sum(-1), 2.0 * x.sum(-1))
            worst = max(worst, float(np.max(err)))
    return worst < 1e-12, f"max circular error {worst:.3g} (< 1e-12)"


def c2_factor_commutation():
    worst = 0.0
    for eps in (0.1, 0.3, 0.42, 0.7):
        x2 = make_rng(2, 0, purpose="acceptance-factor").random((10_000, 2))
        p2 = CouplingParams(eps, 2)
        a = to_factor_n2(step_finite(x2, p2))
        b = step_factor_n2(to_factor_n2(x2), eps)
        worst = max(worst, float(np.max(torus_distance(a.u, b.u))), float(np.max(torus_distance(a.v, b.v))))
        x3 = make_rng(2, 1, purpose="acceptance-factor").random((10_000, 3))
        p3 = CouplingParams(eps, 3)
        a3 = to_factor_n3(step_finite(x3, p3))
        b3 = step_factor_n3(to_factor_n3(x3), eps)
        for s, t in ((a3.w, b3.w), (a3.u, b3.u), (a3.v, b3.v)):
            worst = max(worst, float(np.max(torus_distance(s, t))))
    return worst < 1e-9, f"max factor mismatch {worst:.3g} (< 1e-9)"


def _v_orbit(eps: float, steps: int = 100_000, burn_in: int = 1_000, seed: int = 3) -> np.ndarray:
    rec = simulate_orbit(None, CouplingParams(eps, 2), steps, ["v"], burn_in=burn_in, seed=seed)
    return rec.observables["v"]


def c3a_two_cycle():
    v = _v_orbit(1.0 / 3.0)
    even, odd = residue_supports(v, 2, 2**10)
    overlap = len(even & odd)
    return overlap == 0, f"even/odd v-support bins {len(even)}/{len(odd)}, shared {overlap}"


def c3b_depth_third():
    got = renormalization_depth(1.0 / 3.0)
    return got == (1, 2), f"renormalization_depth(1/3) = {got}, expected (1, 2)"


def c3c_depth_045():
    got = renormalization_depth(0.45)
    period = cyclic_period(_v_orbit(0.45), max_period=16, bin_count=2**10)
    ok = got == (3, 8) and period == 8
    return ok, (
        f"renormalization_depth(0.45) = {got}, observed binned period {period}; "
        f"criterion expects (3, 8) and period 8"
    )


def c4_components():
    rec = simulate_orbit(None, CouplingParams(0.2, 3), 100_000, ["label"], seed=5)
    visited = set(np.unique(rec.observables["label"]).tolist()) - {0}
    part_a = visited == {1, 2, 3, 4, 5, 6}
    recs = simulate_ensemble(11, 60, CouplingParams(0.42, 3), 100_000, ["label"], burn_in=1_000)
    per = [np.unique(r.observables["label"]) for r in recs]
    constant = sum(len(u) == 1 and u[0] != 0 for u in per)
    occurring = {int(u[0]) for u in per if len(u) == 1}
    part_b = constant == 60 and occurring == {1, 2, 3, 4, 5, 6}
    return part_a and part_b, (
        f"eps=0.2 visits {sorted(visited)}; eps=0.42 constant on {constant}/60 seeds, "
        f"labels across seeds {sorted(occurring)}"
    )


def c5_min_gap():
    eps = 0.45
    rec = simulate_orbit(None, CouplingParams(eps, 3), 100_000, ["min_gap"], burn_in=1_000, seed=3)
    gap = float(rec.observables["min_gap"].min())
    bound = eps / 3 - 1e-3
    return gap >= bound, f"min gap {gap:.7f} >= {bound:.7f}"


def c6_contracting():
    sync = cls3.detect_limit_state([0.10, 0.13, 0.16], 0.7, max_steps=40)
    splay = cls3.detect_limit_state([0.0, 0.30, 0.65], 0.7, max_steps=200)
    ok_sync = sync.kind is cls3.LimitKind.SYNC and sync.steps <= 40
    ok_splay = splay.kind is cls3.LimitKind.SPLAY
    # factor map: exact halving while v < 1/2
    v = 0.4
    worst_h = 0.0
    for _ in range(30):
        v1 = float(map_H(v, 0.75))
        worst_h = max(worst_h, abs(v1 / v - 0.5))
        v = v1
    # full system: the difference coordinate, read while it stays well above round-off
    x = np.array([0.2, 0.6])
    params = CouplingParams(0.75, 2)
    worst_f = 0.0
    v = float(reduce(x[0] - x[1]))
    while v >= 0.5:
        x = step_finite(x, params)
        v = float(reduce(x[0] - x[1]))
    while v > 1e-3:
        x = step_finite(x, params)
        v1 = float(reduce(x[0] - x[1]))
        worst_f = max(worst_f, abs(v1 / v - 0.5))
        v = v1
    ok_ratio = worst_h < 1e-12 and worst_f < 1e-12
    return ok_sync and ok_splay and ok_ratio, (
        f"sync after {sync.steps} steps (diam {sync.residual:.2g}); {splay.kind.value} after "
        f"{splay.steps} steps (residual {splay.residual:.2g}); |v ratio - 0.5| "
        f"factor {worst_h:.2g}, finite {worst_f:.2g}"
    )


def c7_time_average():
    rec = simulate_orbit(None, CouplingParams(0.3, 3), 100_000, seed=7, histogram_bins=2**10)
    ks = ks_distance_to_uniform(time_average(rec))
    return ks <= 0.02, f"KS distance {ks:.4g} <= 0.02"


# ---------------------------------------------------------------- densities

def c8_fixed_point():
    worst = 0.0
    for eps in (0.2, 0.6):
        f1 = dens.transfer_step(dens.GridDensity.uniform(2**14), eps)
        worst = max(worst, float(np.max(np.abs(f1.values - 1.0))))
    return worst == 0.0, f"max |f1 - 1| = {worst:.3g} (exact)"


def c9_contraction():
    eps = 0.5
    f0 = dens.GridDensity.sine(0.025, 2**14)
    tv0 = dens.total_variation(f0)
    c = dens.contraction_factor(eps, tv0)
    rep = dens.verify_contraction(f0, eps, 20)
    tv = rep.tv
    step_ok = all(b <= (c + 0.01) * a for a, b in zip(tv, tv[1:]))
    final_ok = tv[-1] <= c**20 * 0.1 * 1.05
    ratios = [b / a for a, b in zip(tv, tv[1:]) if a > 0]
    return step_ok and final_ok, (
        f"TV0={tv0:.4g}, c={c:.5f}, max step ratio {max(ratios):.3g}, "
        f"TV20={tv[-1]:.3g} <= {c**20 * 0.1 * 1.05:.3g}"
    )


def _bump():
    return dens.GridDensity.bump(0.3, 0.4, 2**14)


def c10_support_halving():
    f = _bump()
    h = f.h
    ok = True
    worst = [0.0, 0.0, 0.0]
    for _ in range(5):
        g = dens.transfer_step(f, 0.75)
        d_len = abs(g.support.length - 0.5 * f.support.length)
        d_sup = abs(g.sup() / f.sup() - 2.0) / 2.0
        d_com = float(torus_distance(dens.center_of_mass(g), 2.0 * dens.center_of_mass(f)))
        worst = [max(worst[0], d_len / h), max(worst[1], d_sup), max(worst[2], d_com)]
        ok &= d_len <= 2 * h and d_sup <= 0.01 and d_com <= 1e-3
        f = g
    # eps = 1/2 control: F is a rotation, so the density is only translated
    f0 = _bump()
    fmap = dens.build_map(f0, 0.5)
    shift = float(fmap(0.0))
    f1 = dens.transfer_step(f0, 0.5)
    moved = f0(reduce(f0.grid - shift))
    trans_err = float(np.max(np.abs(f1.values - moved))) / f0.sup()
    len_err = abs(f1.support.length - f0.support.length) / h
    ok_ctrl = trans_err <= 1e-3 and len_err <= 2
    return ok and ok_ctrl, (
        f"eps=0.75 worst: support {worst[0]:.2f} cells, sup {worst[1]:.2g}, centre {worst[2]:.2g}; "
        f"eps=0.5 support drift {len_err:.2f} cells, translation error {trans_err:.2g}"
    )


def c11_collapse():
    f = dens.GridDensity.wing_density(0.2, 0.9, 0.1, 2**14)
    g = dens.one_step_collapse(f, 0.8)
    length = g.support.length
    ok_len = abs(length - 0.44) <= 2 * f.h and length <= 0.5
    try:
        dens.one_step_collapse(f, 0.7)
        rejected = False
    except dens.CollapsePreconditionError:
        rejected = True
    threshold = dens.collapse_threshold(f.support.length, dens.wing_mass(f))
    return ok_len and rejected, (
        f"support {length:.6f} (0.44 +/- {2 * f.h:.1e}), threshold {threshold:.4f}, eps=0.7 rejected={rejected}"
    )


def c12_monte_carlo():
    f = _bump()
    bins = 256
    op = dens.bin_masses(dens.transfer_step(f, 0.75), bins)
    mc = dens.monte_carlo_pushforward(f, 0.75, 10**6, seed=12, bin_count=bins)
    d = l1_distance(op, mc.probabilities())
    return d <= 0.01, f"L1 over {bins} bins = {d:.4g} <= 0.01"


CRITERIA: list[tuple[str, str, float, Callable[[], tuple[bool, str]]]] = [
    ("1", "conserved sum", 1.0, c1_conserved_sum),
    ("2", "factor commutation", 1.0, c2_factor_commutation),
    ("3a", "two mixing components at eps=1/3", 5.0, c3a_two_cycle),
    ("3b", "renormalization depth at eps=1/3", 5.0, c3b_depth_third),
    ("3c", "renormalization depth and period at eps=0.45", 5.0, c3c_depth_045),
    ("4", "six components", 30.0, c4_components),
    ("5", "minimum gap", 5.0, c5_min_gap),
    ("6", "contracting regime", 1.0, c6_contracting),
    ("7", "time average", 5.0, c7_time_average),
    ("8", "uniform fixed point", 1.0, c8_fixed_point),
    ("9", "total variation contraction", 10.0, c9_contraction),
    ("10", "support halving", 10.0, c10_support_halving),
    ("11", "one-step collapse", 5.0, c11_collapse),
    ("12", "operator vs Monte Carlo", 10.0, c12_monte_carlo),
]

# 3a-3c share one budget of 5 s
SHARED_BUDGETS = {("3a", "3b", "3c"): 5.0}


def warm_up() -> None:
    """Trigger JIT compilation so it is not billed to the first criterion."""
    step_finite(np.array([[0.1, 0.2]]), CouplingParams(0.1, 2))


def run_criterion(cid: str) -> CriterionResult:
    for key, name, limit, fn in CRITERIA:
        if key == cid:
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # noqa: BLE001 - reported as a failure
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            dt = time.perf_counter() - t0
            passed = bool(ok) and dt < limit
            if ok and not dt < limit:
                detail += f" [too slow: {dt:.2f}s]"
            return CriterionResult(key, name, passed, detail, dt, limit)
    raise KeyError(f"unknown criterion {cid!r}")


def run_all(ids=None, echo: bool = False) -> list[CriterionResult]:
    warm_up()
    results = []
    for key, *_ in CRITERIA:
        if ids is not None and key not in ids:
            continue
        res = run_criterion(key)
        results.append(res)
        if echo:
            print(res.line(), flush=True)
    for group, budget in SHARED_BUDGETS.items():
        members = [r for r in results if r.id in group]
        if len(members) == len(group) and sum(r.seconds for r in members) >= budget:
            for r in members:
                r.passed = False
                r.detail += f" [group {'/'.join(group)} over {budget:g}s]"
    return results
