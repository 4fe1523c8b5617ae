"""Orbit ensembles of the finite system: observables, time averages, scans.

Initial conditions come from a counter-based generator (Philox) keyed by
``(master_seed, purpose tag, orbit index)``, so an orbit's inputs do not
depend on how orbits are split across workers.
"""
from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import classification as cls3
from .circle import reduce
from .finite import CouplingParams, MarkovBoundaryError, advance, as_config, renormalization_depth
from .stats import EmpiricalHistogram, ks_distance_to_uniform

DEFAULT_BINS = 2**10
MAX_TRAJECTORY_POINTS = 10**7
CHUNK = 4096
WORKERS_ENV = "COUPLED_DOUBLING_WORKERS"


class ObserverError(RuntimeError):
    pass


def purpose_tag(name: str) -> int:
    return zlib.crc32(name.encode())


def make_rng(master_seed: int, index: int = 0, purpose: str = "orbit") -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(purpose_tag(purpose), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def initial_conditions(master_seed: int, count: int, n_sites: int, start: int = 0,
                       purpose: str = "orbit") -> np.ndarray:
    """Uniform random configurations, one generator per orbit index."""
    return np.stack(
        [make_rng(master_seed, start + i, purpose).random(n_sites) for i in range(count)]
    ) if count else np.empty((0, n_sites))


# ---------------------------------------------------------------- observers

def _obs_label(x, params):
    return cls3.component_codes(x)


def _obs_min_gap(x, params):
    return cls3.min_gap(x)


def _obs_diameter(x, params):
    return cls3.diameter(x)


def _obs_sum(x, params):
    return reduce(x.sum(axis=-1))


def _obs_v(x, params):
    return reduce(x[..., 0] - x[..., 1])


OBSERVERS: dict[str, Callable] = {
    "label": _obs_label,
    "min_gap": _obs_min_gap,
    "diameter": _obs_diameter,
    "sum": _obs_sum,
    "v": _obs_v,
}
N3_ONLY = {"label", "min_gap"}


@dataclass
class OrbitRecord:
    params: CouplingParams
    seed: int | None
    burn_in: int
    steps: int
    initial: np.ndarray
    final: np.ndarray
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    histogram: EmpiricalHistogram | None = None
    trajectory: np.ndarray | None = None

    def equals(self, other: "OrbitRecord") -> bool:
        """Bit-for-bit comparison of every recorded array."""
        if (self.params, self.seed, self.burn_in, self.steps) != (
            other.params, other.seed, other.burn_in, other.steps
        ):
            return False
        if set(self.observables) != set(other.observables):
            return False
        same = all(
            np.array_equal(self.observables[k], other.observables[k]) for k in self.observables
        )
        same &= np.array_equal(self.initial, other.initial) and np.array_equal(self.final, other.final)
        if (self.histogram is None) != (other.histogram is None):
            return False
        if self.histogram is not None:
            same &= np.array_equal(self.histogram.counts, other.histogram.counts)
        if (self.trajectory is None) != (other.trajectory is None):
            return False
        if self.trajectory is not None:
            same &= np.array_equal(self.trajectory, other.trajectory)
        return bool(same)


def _resolve_observers(observables: Iterable, n_sites: int) -> list[tuple[str, Callable]]:
    out = []
    for obs in observables:
        if callable(obs):
            out.append((getattr(obs, "__name__", "observer"), obs))
            continue
        if obs not in OBSERVERS:
            raise ValueError(f"unknown observable {obs!r}; choose from {sorted(OBSERVERS)}")
        if obs in N3_ONLY and n_sites != 3:
            raise ValueError(f"observable {obs!r} needs three sites")
        if obs == "v" and n_sites != 2:
            raise ValueError("observable 'v' needs two sites")
        out.append((obs, OBSERVERS[obs]))
    return out


def _simulate_batch(x0: np.ndarray, params: CouplingParams, steps: int, burn_in: int,
                    observables: Sequence, histogram_bins: int | None,
                    record_trajectory: bool, allow_large: bool):
    """Vectorised core: x0 has shape (B, N); observables come back as (steps, B).

    States are generated chunk by chunk and observers see whole chunks,
    shaped (T, B, N).
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    x = as_config(x0, params.n_sites)
    batch = x.shape[0]
    obs = _resolve_observers(observables, params.n_sites)
    if record_trajectory and steps * x.size > MAX_TRAJECTORY_POINTS and not allow_large:
        raise ValueError(
            f"trajectory of {steps * x.size} points exceeds {MAX_TRAJECTORY_POINTS}; pass allow_large"
        )
    x, _ = advance(x, params, burn_in)
    rec: dict[str, np.ndarray] = {}
    hists = [EmpiricalHistogram(histogram_bins) for _ in range(batch)] if histogram_bins else None
    traj = np.empty((steps,) + x.shape) if record_trajectory else None
    for lo in range(0, steps, CHUNK):
        hi = min(lo + CHUNK, steps)
        x, chunk = advance(x, params, hi - lo, record=True)
        for name, fn in obs:
            try:
                val = np.asarray(fn(chunk, params))
            except Exception as exc:  # noqa: BLE001 - rethrown with context
                raise ObserverError(
                    f"observer {name!r} failed on steps {burn_in + lo}..{burn_in + hi - 1} "
                    f"(eps={params.epsilon}, N={params.n_sites}): {exc}"
                ) from exc
            if name not in rec:
                rec[name] = np.empty((steps,) + val.shape[1:], dtype=val.dtype)
            rec[name][lo:hi] = val
        if hists is not None:
            for b in range(batch):
                hists[b].add(chunk[:, b])
        if traj is not None:
            traj[lo:hi] = chunk
    return x, rec, hists, traj


def simulate_orbit(x0, params: CouplingParams, steps: int, observables: Sequence = (),
                   burn_in: int = 0, seed: int | None = None, histogram_bins: int | None = None,
                   record_trajectory: bool = False, allow_large: bool = False) -> OrbitRecord:
    """Iterate ``step_finite`` and record observables at t = burn_in, ..., burn_in + steps - 1.

    If ``x0`` is None the initial condition is drawn from ``seed``.
    """
    if x0 is None:
        if seed is None:
            raise ValueError("need an initial condition or a seed")
        x0 = initial_conditions(seed, 1, params.n_sites)[0]
    x0 = as_config(x0, params.n_sites)
    if x0.ndim != 1:
        raise ValueError("simulate_orbit takes a single configuration; use simulate_ensemble")
    final, rec, hists, traj = _simulate_batch(
        x0[None, :], params, steps, burn_in, observables, histogram_bins,
        record_trajectory, allow_large,
    )
    return OrbitRecord(
        params, seed, burn_in, steps, x0, final[0],
        {k: v[:, 0] for k, v in rec.items()},
        hists[0] if hists else None,
        traj[:, 0] if traj is not None else None,
    )


def _ensemble_chunk(args):
    (master_seed, start, count, params, steps, burn_in, observables, bins, traj, allow_large) = args
    x0 = initial_conditions(master_seed, count, params.n_sites, start=start)
    final, rec, hists, tr = _simulate_batch(
        x0, params, steps, burn_in, observables, bins, traj, allow_large
    )
    out = []
    for b in range(count):
        out.append(OrbitRecord(
            params, master_seed, burn_in, steps, x0[b], final[b],
            {k: v[:, b] for k, v in rec.items()},
            hists[b] if hists else None,
            tr[:, b] if tr is not None else None,
        ))
    return out


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def simulate_ensemble(master_seed: int, count: int, params: CouplingParams, steps: int,
                      observables: Sequence = (), burn_in: int = 0,
                      histogram_bins: int | None = None, record_trajectory: bool = False,
                      workers: int | None = None, allow_large: bool = False) -> list[OrbitRecord]:
    """``count`` orbits with seeded initial conditions; results ordered by orbit index.

    Orbits are split into contiguous chunks, one per worker. The output does
    not depend on the number of workers.
    """
    if any(callable(o) for o in observables) and worker_count(workers) > 1:
        raise ValueError("custom callables cannot be shipped to worker processes")
    nw = min(worker_count(workers), max(count, 1))
    bounds = np.linspace(0, count, nw + 1).astype(int)
    jobs = [
        (master_seed, int(a), int(b - a), params, steps, burn_in, tuple(observables),
         histogram_bins, record_trajectory, allow_large)
        for a, b in zip(bounds[:-1], bounds[1:]) if b > a
    ]
    if nw == 1:
        chunks = [_ensemble_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            chunks = list(pool.map(_ensemble_chunk, jobs))
    return [rec for chunk in chunks for rec in chunk]


def time_average(orbit, bin_count: int = DEFAULT_BINS) -> EmpiricalHistogram:
    """Histogram of every site position over the recorded steps (the measure A(T))."""
    if isinstance(orbit, OrbitRecord):
        if orbit.histogram is not None and orbit.histogram.bin_count == bin_count:
            return orbit.histogram
        if orbit.trajectory is None:
            raise ValueError("orbit recorded neither a histogram at this resolution nor a trajectory")
        return EmpiricalHistogram.from_samples(orbit.trajectory, bin_count)
    return EmpiricalHistogram.from_samples(np.asarray(orbit), bin_count)


def merge_histograms(hists: Iterable[EmpiricalHistogram]) -> EmpiricalHistogram:
    hists = list(hists)
    total = hists[0]
    for h in hists[1:]:
        total = total + h
    return total


# ---------------------------------------------------------------- periods

def residue_supports(values, period: int, bin_count: int = DEFAULT_BINS) -> list[set]:
    bins = np.clip(np.floor(np.asarray(values) * bin_count).astype(np.int64), 0, bin_count - 1)
    return [set(np.unique(bins[r::period]).tolist()) for r in range(period)]


def cyclic_period(values, max_period: int = 64, bin_count: int = DEFAULT_BINS) -> int:
    """Largest p <= max_period whose residue classes t mod p occupy pairwise disjoint bins.

    For an orbit cycling through K disjoint pieces this is K: divisors of K
    also split cleanly, while any larger p puts two residues on one piece.
    """
    best = 1
    for p in range(2, max_period + 1):
        sets = residue_supports(values, p, bin_count)
        seen: set = set()
        ok = True
        for s in sets:
            if seen & s:
                ok = False
                break
            seen |= s
        if ok:
            best = p
    return best


# ---------------------------------------------------------------- scans

@dataclass
class ScanSpec:
    n_sites: int = 3
    steps: int = 10_000
    burn_in: int = 1_000
    orbits: int = 8
    master_seed: int = 0
    observables: tuple = ("labels_visited",)
    bin_count: int = DEFAULT_BINS
    workers: int | None = None


SCAN_OBSERVABLES = {"labels_visited", "min_gap_quantiles", "sync_fraction", "K", "ks"}


def _scan_row(eps: float, spec: ScanSpec) -> dict:
    row: dict = {"epsilon": eps}
    params = CouplingParams(eps, spec.n_sites)
    wants = set(spec.observables)
    orbit_obs = []
    if wants & {"labels_visited"}:
        orbit_obs.append("label")
    if "min_gap_quantiles" in wants:
        orbit_obs.append("min_gap")
    records = None
    if orbit_obs or "ks" in wants:
        records = simulate_ensemble(
            spec.master_seed, spec.orbits, params, spec.steps, orbit_obs, spec.burn_in,
            histogram_bins=spec.bin_count if "ks" in wants else None, workers=spec.workers,
        )
    if "labels_visited" in wants:
        per_orbit = [len(set(np.unique(r.observables["label"]).tolist()) - {0}) for r in records]
        row["labels_visited_max"] = max(per_orbit)
        row["labels_visited_min"] = min(per_orbit)
        row["labels_across_orbits"] = len(
            set().union(*[set(np.unique(r.observables["label"]).tolist()) for r in records]) - {0}
        )
    if "min_gap_quantiles" in wants:
        gaps = np.concatenate([r.observables["min_gap"] for r in records])
        for q in (0.0, 0.01, 0.5):
            row[f"min_gap_q{q:g}"] = float(np.quantile(gaps, q))
    if "ks" in wants:
        row["ks"] = ks_distance_to_uniform(merge_histograms(r.histogram for r in records))
    if "sync_fraction" in wants:
        if spec.n_sites != 3 or not eps > 0.5:
            row["sync_fraction"] = row["splay_fraction"] = row["undecided_fraction"] = None
        else:
            x0 = initial_conditions(spec.master_seed, spec.orbits, 3, purpose="limit")
            kinds = [cls3.detect_limit_state(x, eps).kind for x in x0]
            for kind in cls3.LimitKind:
                row[f"{kind.value}_fraction"] = sum(k is kind for k in kinds) / len(kinds)
    if "K" in wants:
        try:
            row["n"], row["K"] = renormalization_depth(eps) if eps < 0.5 else (None, None)
        except MarkovBoundaryError:
            row["n"], row["K"] = None, None
    return row


def epsilon_scan(eps_grid: Iterable[float], spec: ScanSpec) -> list[dict]:
    """One row per eps; a failing eps yields a row with an ``error`` entry."""
    unknown = set(spec.observables) - SCAN_OBSERVABLES
    if unknown:
        raise ValueError(f"unknown scan observables {sorted(unknown)}")
    rows = []
    for eps in eps_grid:
        try:
            if not (0.0 <= eps < 1.0 and math.isfinite(eps)):
                raise ValueError(f"epsilon out of range: {eps}")
            rows.append(_scan_row(float(eps), spec))
        except Exception as exc:  # noqa: BLE001 - per-eps failures are recorded
            rows.append({"epsilon": eps, "error": f"{type(exc).__name__}: {exc}"})
    return rows
