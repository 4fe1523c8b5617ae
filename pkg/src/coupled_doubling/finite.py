"""Finite-N mean-field coupled doubling maps and their factor maps.

Configurations are numpy arrays whose last axis indexes the sites, so a
batch of ``B`` configurations of ``N`` sites has shape ``(B, N)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .circle import reduce, signed_distance

SQRT2_THRESHOLD = 1.0 - math.sqrt(2.0) / 2.0  # loss of mixing for N=2, ergodicity bound for N=3
SIX_COMPONENT_THRESHOLD = (4.0 - math.sqrt(10.0)) / 2.0  # N=3 splits into six components


class MarkovBoundaryError(ValueError):
    """Raised when 2(1 - eps) sits exactly on a Parry boundary 2**(2**-m)."""


@dataclass(frozen=True)
class CouplingParams:
    epsilon: float
    n_sites: int = 2

    def __post_init__(self):
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError(f"epsilon out of range: {self.epsilon} not in [0, 1)")
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValueError(f"n_sites must be a positive integer, got {self.n_sites}")

    @property
    def regime(self) -> str:
        if self.epsilon < 0.5:
            return "expanding"
        if self.epsilon > 0.5:
            return "contracting"
        return "critical"

    @property
    def transverse_rate(self) -> float:
        """Transverse Jacobian eigenvalue 2(1 - eps)."""
        return 2.0 * (1.0 - self.epsilon)


@dataclass(frozen=True)
class FactorCoordsN2:
    u: float  # x + y
    v: float  # x - y


@dataclass(frozen=True)
class FactorCoordsN3:
    w: float  # x + y + z
    u: float  # x - y
    v: float  # y - z


def as_config(sites, n_sites: int | None = None) -> np.ndarray:
    """Validate and reduce a configuration (or batch) onto the torus."""
    x = np.asarray(sites, dtype=float)
    if x.ndim == 0:
        raise ValueError("configuration must have at least one site")
    if n_sites is not None and x.shape[-1] != n_sites:
        raise ValueError(f"configuration has {x.shape[-1]} sites, params expect {n_sites}")
    return reduce(x)


def coupling_field(x: np.ndarray) -> np.ndarray:
    """Sum over r of g(x_r - x_s) for every site s (last axis)."""
    diff = x[..., None, :] - x[..., :, None]  # [..., s, r] = x_r - x_s
    return signed_distance(diff).sum(axis=-1)


@njit(cache=True)
def _advance(x, epsilon, steps, traj):
    """Apply F_{eps,N} ``steps`` times in place to every row of ``x`` (shape (B, N)).

    If ``traj`` has ``steps`` rows, the state before each step is stored
    there. Arithmetic mirrors ``reduce`` and ``signed_distance`` exactly.
    """
    nb, n = x.shape
    c = epsilon / n
    tmp = np.empty(n)
    record = traj.shape[0] == steps
    for t in range(steps):
        if record:
            traj[t] = x
        for b in range(nb):
            for s in range(n):
                acc = 0.0
                for r in range(n):
                    u = x[b, r] - x[b, s]
                    gu = u - np.floor(u + 0.5)
                    if gu == -0.5:
                        gu = 0.0
                    acc += gu
                y = 2.0 * (x[b, s] + c * acc)
                y = y - np.floor(y)
                if y >= 1.0:
                    y = 0.0
                tmp[s] = y + 0.0
            for s in range(n):
                x[b, s] = tmp[s]
    return x


_NO_TRAJ = np.empty((0, 1, 1))


def advance(x, params: CouplingParams, steps: int, record: bool = False):
    """Iterate a batch ``x`` of shape (B, N); returns (final, trajectory or None)."""
    x = np.array(as_config(x, params.n_sites), dtype=float, copy=True, order="C")
    if x.ndim != 2:
        raise ValueError("advance expects a (B, N) batch")
    traj = np.empty((steps,) + x.shape) if record else _NO_TRAJ
    _advance(x, float(params.epsilon), int(steps), traj)
    return x, (traj if record else None)


def step_finite(x, params: CouplingParams) -> np.ndarray:
    """One step of F_{eps,N}: x_s -> 2(x_s + eps/N sum_r g(x_r - x_s)) mod 1."""
    x = as_config(x, params.n_sites)
    shape = x.shape
    out, _ = advance(x.reshape(-1, shape[-1]), params, 1)
    return out.reshape(shape)


def step_finite_reference(x, params: CouplingParams) -> np.ndarray:
    """Same map written with array operations; kept as an independent check of the kernel.

    Bit-identical to ``step_finite`` for N < 8; from N = 8 on numpy's
    pairwise summation reorders the coupling sum, so the two agree to round-off.
    """
    x = as_config(x, params.n_sites)
    n = x.shape[-1]
    return reduce(2.0 * (x + params.epsilon / n * coupling_field(x)))


def orbit_finite(x0, params: CouplingParams, steps: int) -> np.ndarray:
    """Stack of ``steps + 1`` states starting from a single configuration ``x0``."""
    x = as_config(x0, params.n_sites)
    final, traj = advance(x[None, :], params, steps, record=True)
    return np.concatenate([traj[:, 0], final], axis=0)


def jacobian_fd(x, params: CouplingParams, h: float = 1e-7) -> np.ndarray:
    """One-sided finite-difference Jacobian of ``step_finite`` at a single configuration.

    Differences are taken through ``signed_distance`` so the mod-1 wrap of
    the image does not pollute the quotient.
    """
    x = as_config(x, params.n_sites)
    if x.ndim != 1:
        raise ValueError("jacobian_fd expects a single configuration")
    n = x.size
    fx = step_finite(x, params)
    jac = np.empty((n, n))
    for j in range(n):
        xp = x.copy()
        xp[j] += h
        jac[:, j] = signed_distance(step_finite(xp, params) - fx) / h
    return jac


def distance_to_singularity(x) -> float:
    """Smallest torus distance of any pairwise difference x_r - x_s to 1/2."""
    x = np.asarray(x, dtype=float)
    diff = x[..., None, :] - x[..., :, None]
    off = ~np.eye(x.shape[-1], dtype=bool)
    # g vanishes at 1/2, so measure on the reduced difference instead
    return float(np.min(np.abs(reduce(diff[..., off]) - 0.5)))


# ---------------------------------------------------------------- N = 2

def to_factor_n2(x) -> FactorCoordsN2:
    x = as_config(x, 2)
    return FactorCoordsN2(u=reduce(x[..., 0] + x[..., 1]), v=reduce(x[..., 0] - x[..., 1]))


def map_H(v, epsilon: float):
    """Difference dynamics for two sites, with H(1/2) = eps.

    H(v) = 2(1-eps) v on [0, 1/2), 2(1-eps) v + 2 eps - 1 on (1/2, 1).
    """
    v = reduce(v)
    s = 2.0 * (1.0 - epsilon)
    out = np.where(v < 0.5, s * v, s * v + 2.0 * epsilon - 1.0)
    out = np.where(v == 0.5, epsilon, out)
    return reduce(out) if np.ndim(out) else reduce(float(out))


def step_factor_n2(fc: FactorCoordsN2, epsilon: float) -> FactorCoordsN2:
    return FactorCoordsN2(u=reduce(2.0 * fc.u), v=map_H(fc.v, epsilon))


def map_L(w, epsilon: float):
    """Centrally symmetric Lorenz map: the rescaling of H to [eps, 1 - eps].

    Right-continuous at w = 1/2 (second branch).
    """
    if not 0.0 <= epsilon < 0.5:
        raise ValueError(f"map_L is defined only for 0 <= eps < 1/2, got {epsilon}")
    w = np.asarray(w, dtype=float)
    if np.any((w < 0.0) | (w > 1.0)):
        raise ValueError("map_L: argument outside [0, 1]")
    s = 2.0 * (1.0 - epsilon)
    out = np.where(w < 0.5, s * w + epsilon, s * w + epsilon - 1.0)
    return float(out) if out.ndim == 0 else out


def renormalization_depth(epsilon: float, guard: float = 1e-12) -> tuple[int, int]:
    """Number n of Parry renormalizations of the Lorenz map and K = 2**n.

    n is the integer with 2**(2**-(n+1)) < 2(1-eps) < 2**(2**-n); n = 0 once
    2(1-eps) > sqrt(2).
    """
    if not 0.0 <= epsilon < 0.5:
        raise ValueError(f"renormalization depth needs 0 <= eps < 1/2, got {epsilon}")
    slope = 2.0 * (1.0 - epsilon)
    t = -math.log2(math.log2(slope))  # boundaries sit at integers t = m
    m = round(t)
    if m >= 0 and abs(t - m) < guard * max(1.0, abs(t)):
        raise MarkovBoundaryError(
            f"eps={epsilon!r}: 2(1-eps) = 2**(2**-{m}), Markov boundary case"
        )
    if t < 0:
        return 0, 1
    n = math.floor(t)
    return n, 2**n


# ---------------------------------------------------------------- N = 3

def to_factor_n3(x) -> FactorCoordsN3:
    x = as_config(x, 3)
    return FactorCoordsN3(
        w=reduce(x[..., 0] + x[..., 1] + x[..., 2]),
        u=reduce(x[..., 0] - x[..., 1]),
        v=reduce(x[..., 1] - x[..., 2]),
    )


def map_G3(u, v, epsilon: float):
    """Two-dimensional difference dynamics of three sites, closed form."""
    gu, gv, guv = signed_distance(u), signed_distance(v), signed_distance(np.add(u, v))
    k = 2.0 * epsilon / 3.0
    u1 = reduce(2.0 * np.asarray(u) + k * (gv - guv - 2.0 * gu))
    v1 = reduce(2.0 * np.asarray(v) + k * (gu - guv - 2.0 * gv))
    return u1, v1


def step_factor_n3(fc: FactorCoordsN3, epsilon: float) -> FactorCoordsN3:
    u1, v1 = map_G3(fc.u, fc.v, epsilon)
    return FactorCoordsN3(w=reduce(2.0 * fc.w), u=u1, v=v1)


def diagonal_map_n3(u, epsilon: float):
    """Restriction of the three-site difference map to u = v."""
    return reduce(2.0 * np.asarray(u) - 2.0 * epsilon / 3.0 * (signed_distance(u) + signed_distance(2.0 * np.asarray(u))))
