"""Continuum of sites: densities on a uniform circle grid and their pushforward.

A density is stored by its values at the grid points ``i / M``; off-grid it
is the cyclic piecewise-linear interpolant. All integrals (cumulative
mass, first moment) are exact for that interpolant, which makes the lift
of the one-step map exactly a degree-two covering.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .circle import ArcInterval, ccw_arc, reduce
from .stats import EmpiricalHistogram

MASS_TOL = 1e-9
ZERO_TOL = 1e-12
BISECTION_ITERS = 50
BISECTION_TOL = 1e-12


class SupportTooWideError(ValueError):
    pass


class CollapsePreconditionError(ValueError):
    pass


class BisectionError(RuntimeError):
    pass


def _is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


@dataclass
class GridDensity:
    values: np.ndarray
    support: ArcInterval | None = None
    raw_mass_defect: float = field(default=0.0, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        m = self.values.size
        if self.values.ndim != 1 or not _is_power_of_two(m):
            raise ValueError(f"grid size must be a power of two, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density has non-finite values")
        if np.any(self.values < 0.0):
            raise ValueError("density has negative values")
        mass = self.mass()
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density is not normalised: integral {mass!r}")
        if self.support is not None and self.support.length < 1.0:
            outside = ~self.support.contains(self.grid)
            leak = self.values[outside].max(initial=0.0)
            if leak > ZERO_TOL:
                raise ValueError(f"density does not vanish outside its support (max {leak:.3g})")

    @property
    def grid_size(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return 1.0 / self.values.size

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.values.size) / self.values.size

    def mass(self) -> float:
        """Trapezoid rule on the cyclic grid (exact for the interpolant)."""
        return float(self.values.sum() * self.h)

    def __call__(self, x):
        """Cyclic linear interpolation."""
        m = self.values.size
        t = reduce(np.asarray(x, dtype=float)) * m
        j = np.floor(t).astype(np.int64)
        s = t - j
        j %= m
        a = self.values[j]
        b = self.values[(j + 1) % m]
        return a + (b - a) * s

    def sup(self) -> float:
        return float(self.values.max())

    def hull(self) -> ArcInterval:
        """Support arc of the interpolant, read off the grid.

        The complement of the longest cyclic run of zero grid values; the
        arc starts and ends on zero grid points.
        """
        return _positive_hull(self.values)

    # ---------------------------------------------------------- builders

    @classmethod
    def from_values(cls, values, support: ArcInterval | None = None) -> "GridDensity":
        """Normalise nonnegative grid values by their trapezoid integral."""
        v = np.asarray(values, dtype=float)
        if np.any(v < 0):
            raise ValueError("density has negative values")
        mass = v.sum() / v.size
        if not mass > 0:
            raise ValueError("density has zero mass")
        return cls(v / mass, support)

    @classmethod
    def uniform(cls, grid_size: int = 2**14) -> "GridDensity":
        return cls(np.ones(grid_size))

    @classmethod
    def sine(cls, amplitude: float, grid_size: int = 2**14, frequency: int = 1) -> "GridDensity":
        """1 + a sin(2 pi k x); total variation 4 k a."""
        if not 0 <= amplitude <= 1:
            raise ValueError("sine amplitude must lie in [0, 1]")
        x = np.arange(grid_size) / grid_size
        return cls(1.0 + amplitude * np.sin(2 * np.pi * frequency * x))

    @classmethod
    def bump(cls, center: float, width: float, grid_size: int = 2**14, power: int = 2) -> "GridDensity":
        """cos^power bump supported on the arc [center - width/2, center + width/2]."""
        if not 0 < width < 1:
            raise ValueError("bump width must lie in (0, 1)")
        arc = ArcInterval(center - width / 2, width)
        x = np.arange(grid_size) / grid_size
        t = (ccw_arc(arc.start, x) - width / 2) / width  # in [-1/2, 1/2) on the arc
        vals = np.where(np.abs(t) < 0.5, np.cos(np.pi * t) ** power, 0.0)
        return cls.from_values(vals, arc)

    @classmethod
    def wing_density(
        cls, b1: float, b2: float, wing_mass: float, grid_size: int = 2**14
    ) -> "GridDensity":
        """Density on [b1, b2] (1/2 < b2 - b1 < 1) with ``wing_mass`` outside the core.

        The core is [b2 - 1/2, b1 + 1/2]; each wing [b1, b2 - 1/2],
        [b1 + 1/2, b2] carries half of ``wing_mass``. Pieces are sin^2
        bumps, so the density is continuous.
        """
        length = b2 - b1
        if not 0.5 < length < 1.0:
            raise ValueError("wing_density needs 1/2 < b2 - b1 < 1")
        if not 0.0 <= wing_mass < 1.0:
            raise ValueError("wing_mass must lie in [0, 1)")
        x = np.arange(grid_size) / grid_size
        pieces = [
            (b1, length - 0.5, wing_mass / 2),
            (b2 - 0.5, 1.0 - length, 1.0 - wing_mass),
            (b1 + 0.5, length - 0.5, wing_mass / 2),
        ]
        vals = np.zeros(grid_size)
        for start, w, m in pieces:
            t = ccw_arc(start, x) / w
            phi = np.where(t < 1.0, np.sin(np.pi * t) ** 2, 0.0)
            if m > 0:
                vals += m * phi / (phi.sum() / grid_size)
        return cls(vals, ArcInterval(b1, length))


def _positive_hull(values: np.ndarray, tol: float = 0.0) -> ArcInterval | None:
    m = values.size
    pos = values > tol
    if not pos.any():
        raise ValueError("density has no positive values")
    if pos.all():
        return ArcInterval(0.0, 1.0)
    zero = ~pos
    # longest cyclic run of zeros
    idx = np.flatnonzero(zero)
    gaps = np.diff(np.concatenate([idx, idx[:1] + m]))
    # runs: consecutive zero indices have diff 1; find run boundaries
    breaks = np.flatnonzero(gaps != 1)
    if breaks.size == 0:
        # single zero run covering everything except positive block
        run_start, run_len = idx[0], idx.size
    else:
        starts = idx[(breaks + 1) % idx.size]
        ends = idx[breaks]
        lens = (ends - starts) % m + 1
        k = int(np.argmax(lens))
        run_start, run_len = starts[k], lens[k]
    run_end = (run_start + run_len - 1) % m
    # hull runs from the last zero of the run, around to the first zero after it
    start = run_end
    length = (m - run_len + 1)
    return ArcInterval(start / m, min(1.0, length / m))


@dataclass
class DensityMapEval:
    """Evaluator for the one-step map F_f built from a grid density."""

    density: GridDensity
    epsilon: float
    prefix: np.ndarray  # prefix[j] = integral of f over [0, j/M], length M + 1
    moment: float  # integral of y f(y) over [0, 1]

    @property
    def vals(self) -> np.ndarray:
        return self.density.values

    def cdf(self, y):
        """Integral of the interpolant over [0, y] for y in [0, 1]."""
        v = self.vals
        m = v.size
        t = np.asarray(y, dtype=float) * m
        j = np.clip(np.floor(t).astype(np.int64), 0, m - 1)
        s = t - j
        a = v[j]
        b = v[(j + 1) % m]
        return self.prefix[j] + (a * s + 0.5 * (b - a) * s * s) / m

    def lift(self, y):
        """Continuous increasing lift of F_f; lift(y + 1) = lift(y) + 2."""
        y = np.asarray(y, dtype=float)
        k = np.floor(y)
        y0 = y - k
        eps = self.epsilon
        base = 2.0 * (1.0 - eps) * y0 + 2.0 * eps * self.moment
        low = base - 2.0 * eps * (1.0 - self.cdf(np.minimum(y0 + 0.5, 1.0)))
        high = base + 2.0 * eps * self.cdf(np.maximum(y0 - 0.5, 0.0))
        out = np.where(y0 <= 0.5, low, high) + 2.0 * k
        return float(out) if out.ndim == 0 else out

    def __call__(self, x):
        return reduce(self.lift(x))

    def derivative(self, y):
        """F'_f(y) = 2(1 - eps + eps f(y +- 1/2))."""
        # written as 2(1 + eps (f - 1)) so that f == 1 gives exactly 2
        return 2.0 * (1.0 + self.epsilon * (self.density(np.asarray(y) + 0.5) - 1.0))

    def preimages(self, x) -> tuple[np.ndarray, np.ndarray]:
        """The two inverse-branch preimages y1(x) < y2(x) in [0, 1), by bisection on the lift."""
        x = reduce(np.asarray(x, dtype=float))
        l0 = self.lift(0.0)
        t1 = l0 + ccw_arc(reduce(l0), x)
        targets = np.concatenate([np.atleast_1d(t1), np.atleast_1d(t1) + 1.0])
        lo = np.zeros_like(targets)
        hi = np.ones_like(targets)
        for _ in range(BISECTION_ITERS):
            mid = 0.5 * (lo + hi)
            below = self.lift(mid) <= targets
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        if np.any(hi - lo > BISECTION_TOL):
            raise BisectionError("bisection bracket did not shrink below tolerance")
        f_lo, f_hi = self.lift(lo), self.lift(hi)
        slack = 1e-12 * max(1.0, float(np.max(np.abs(targets))))
        if np.any(f_lo > targets + slack) or np.any(f_hi < targets - slack):
            raise BisectionError("lift is not monotone: bracket lost the target")
        y = 0.5 * (lo + hi)
        n = y.size // 2
        return y[:n], y[n:]

    def image_arc(self, arc: ArcInterval) -> ArcInterval:
        """Image of a support arc under F_f, computed through the lift."""
        if arc.length >= 1.0:
            return ArcInterval(0.0, 1.0)
        a = self.lift(arc.start)
        b = self.lift(arc.start + arc.length)
        length = b - a
        if length >= 1.0:
            return ArcInterval(0.0, 1.0)
        return ArcInterval(reduce(a), length)


def build_map(f: GridDensity, epsilon: float) -> DensityMapEval:
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon out of range: {epsilon}")
    mass = f.mass()
    if abs(mass - 1.0) > MASS_TOL:
        raise ValueError(f"density is not normalised: integral {mass!r}")
    v = f.values
    m = v.size
    h = 1.0 / m
    nxt = np.roll(v, -1)
    cells = 0.5 * (v + nxt) * h
    prefix = np.concatenate([[0.0], np.cumsum(cells)])
    # renormalise so the lift has degree exactly two
    scale = 1.0 / prefix[-1]
    prefix = prefix * scale
    xj = np.arange(m) * h
    moment = float(np.sum(h * (xj * 0.5 * (v + nxt) + h * (v / 6.0 + nxt / 3.0))) * scale)
    if scale != 1.0:
        f = GridDensity(v * scale, f.support)
    return DensityMapEval(f, float(epsilon), prefix, moment)


def transfer_step(f: GridDensity, epsilon: float) -> GridDensity:
    """Pushforward of f under F_f via the Perron-Frobenius operator."""
    fmap = build_map(f, epsilon)
    f = fmap.density
    x = f.grid
    y1, y2 = fmap.preimages(x)
    new = f(y1) / fmap.derivative(y1) + f(y2) / fmap.derivative(y2)
    support = None
    if f.support is not None:
        support = fmap.image_arc(f.hull())
        if support.length >= 1.0:
            support = None
        else:
            new = np.where(support.contains(x), new, 0.0)
    raw = new.sum() / new.size
    out = GridDensity(new / raw, support)
    out.raw_mass_defect = float(raw - 1.0)
    return out


def total_variation(f) -> float:
    v = f.values if isinstance(f, GridDensity) else np.asarray(f, dtype=float)
    return float(np.abs(np.roll(v, -1) - v).sum())


def center_of_mass(f: GridDensity) -> float:
    """Mean position over the support arc, computed in a chart where the arc is an interval."""
    if f.support is None:
        raise SupportTooWideError("center of mass needs a tracked support arc")
    if f.support.length > 0.5:
        raise SupportTooWideError(
            f"support too wide: length {f.support.length:.6g} > 1/2"
        )
    hull = f.hull()
    chart = hull if hull.length < 1.0 else f.support
    y = chart.unwrap(f.grid)
    return reduce(float(np.sum(y * f.values) / np.sum(f.values)))


def support_midpoint_offset(f: GridDensity) -> float:
    """Signed offset of the center of mass from the midpoint of the support arc."""
    cm = center_of_mass(f)
    return float(ccw_arc(f.support.start, cm) - f.support.length / 2)


def wing_mass(f: GridDensity) -> float:
    """Mass within distance (length - 1/2) of either end of the support arc."""
    arc = f.support
    if arc is None or not 0.5 < arc.length < 1.0:
        raise CollapsePreconditionError("wing mass needs a support arc with 1/2 < length < 1")
    fmap = build_map(f, 0.0)
    a = arc.start
    w = arc.length - 0.5
    return _arc_mass(fmap, a, w) + _arc_mass(fmap, a + 0.5, w)


def _arc_mass(fmap: DensityMapEval, start: float, length: float) -> float:
    s = reduce(start)
    e = s + length
    if e <= 1.0:
        return float(fmap.cdf(e) - fmap.cdf(s))
    return float(fmap.cdf(1.0) - fmap.cdf(s) + fmap.cdf(e - 1.0))


def collapse_threshold(length: float, wing: float) -> float:
    """Smallest eps for which one step brings the support down to length <= 1/2."""
    return (length - 0.25) / (length - wing)


def collapsed_length(length: float, wing: float, epsilon: float) -> float:
    return 2.0 * (1.0 - epsilon) * length + 2.0 * epsilon * wing


def one_step_collapse(f: GridDensity, epsilon: float) -> GridDensity:
    """One pushforward of a wide-support density, after checking the collapse conditions."""
    if f.support is None or not 0.5 < f.support.length < 1.0:
        raise CollapsePreconditionError("collapse preconditions unmet: need support 1/2 < length < 1")
    wing = wing_mass(f)
    if not wing < 0.25:
        raise CollapsePreconditionError(
            f"collapse preconditions unmet: wing mass {wing:.6g} >= 1/4"
        )
    threshold = collapse_threshold(f.support.length, wing)
    if epsilon < threshold:
        raise CollapsePreconditionError(
            f"collapse preconditions unmet: eps={epsilon} below threshold {threshold:.6g}"
        )
    return transfer_step(f, epsilon)


def contraction_factor(epsilon: float, tv0: float) -> float:
    """(1 + eps) / (2 (1 - eps delta)^2), the one-step total-variation factor."""
    return (1.0 + epsilon) / (2.0 * (1.0 - epsilon * tv0) ** 2)


@dataclass
class ContractionReport:
    tv: list[float]
    factor: float
    bound: float
    monotone: bool
    holds: bool


def verify_contraction(f0: GridDensity, epsilon: float, steps: int, slack: float = 0.05,
                       mono_tol: float = 1e-12) -> ContractionReport:
    tv0 = total_variation(f0)
    if not epsilon < 1.0 / (1.0 + 4.0 * tv0):
        raise ValueError(
            f"eps={epsilon} outside the contraction range eps < 1/(1 + 4 TV) = {1 / (1 + 4 * tv0):.6g}"
        )
    c = contraction_factor(epsilon, tv0)
    tv = [tv0]
    f = f0
    for _ in range(steps):
        f = transfer_step(f, epsilon)
        tv.append(total_variation(f))
    monotone = all(b <= a + mono_tol for a, b in zip(tv, tv[1:]))
    bound = c**steps * tv0 * (1.0 + slack)
    return ContractionReport(tv, c, bound, monotone, monotone and tv[-1] <= bound + mono_tol)


def sample_density(f: GridDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact inverse-CDF sampling from the piecewise-linear interpolant."""
    fmap = build_map(f, 0.0)
    v = fmap.vals
    m = v.size
    r = rng.random(n)
    j = np.clip(np.searchsorted(fmap.prefix, r, side="right") - 1, 0, m - 1)
    rem = (r - fmap.prefix[j]) * m  # mass inside cell, in units of h
    a = v[j]
    b = v[(j + 1) % m]
    disc = np.sqrt(np.maximum(a * a + 2.0 * (b - a) * rem, 0.0))
    denom = a + disc
    s = np.where(denom > 0, 2.0 * rem / np.where(denom > 0, denom, 1.0), 0.0)
    return reduce((j + np.clip(s, 0.0, 1.0)) / m)


def monte_carlo_pushforward(f: GridDensity, epsilon: float, sample_count: int, seed: int,
                            bin_count: int = 256) -> EmpiricalHistogram:
    if sample_count < 10_000:
        raise ValueError(f"monte_carlo_pushforward needs at least 10^4 samples, got {sample_count}")
    rng = np.random.Generator(np.random.Philox(seed))
    y = sample_density(f, sample_count, rng)
    fmap = build_map(f, epsilon)
    return EmpiricalHistogram.from_samples(fmap(y), bin_count)


def bin_masses(f: GridDensity, bin_count: int) -> np.ndarray:
    """Mass of the interpolant in each of ``bin_count`` equal bins."""
    m = f.grid_size
    if m % bin_count:
        raise ValueError("bin_count must divide the grid size")
    v = f.values
    cells = 0.5 * (v + np.roll(v, -1)) / m
    return cells.reshape(bin_count, -1).sum(axis=1)


# ---------------------------------------------------------------- serialisation

def density_header(f: GridDensity, epsilon: float | None = None, step: int | None = None) -> dict:
    sup = None if f.support is None else {"start": f.support.start, "length": f.support.length}
    return {"grid_size": f.grid_size, "support": sup, "epsilon": epsilon, "step": step}


def density_to_csv(f: GridDensity) -> str:
    lines = ["grid_point,value"]
    lines += [f"{x:.17g},{v:.17g}" for x, v in zip(f.grid, f.values)]
    return "\n".join(lines) + "\n"


def density_from_csv(text: str, header: dict | str | None = None) -> GridDensity:
    rows = text.strip().splitlines()
    if rows[0].strip() != "grid_point,value":
        raise ValueError("unexpected density CSV header")
    vals = np.array([float(r.split(",")[1]) for r in rows[1:]])
    support = None
    if header is not None:
        hdr = json.loads(header) if isinstance(header, str) else header
        if hdr.get("grid_size") not in (None, vals.size):
            raise ValueError("grid_size in header does not match CSV")
        if hdr.get("support"):
            support = ArcInterval(hdr["support"]["start"], hdr["support"]["length"])
    return GridDensity(vals, support)


def epsilon_tv_bound(tv0: float) -> float:
    """Largest coupling strength (exclusive) for the total-variation contraction."""
    return 1.0 / (1.0 + 4.0 * tv0)


__all__ = [
    "GridDensity", "DensityMapEval", "build_map", "transfer_step", "total_variation",
    "center_of_mass", "one_step_collapse", "verify_contraction", "monte_carlo_pushforward",
    "bin_masses", "contraction_factor", "collapse_threshold", "collapsed_length", "wing_mass",
    "SupportTooWideError", "CollapsePreconditionError", "BisectionError",
]
