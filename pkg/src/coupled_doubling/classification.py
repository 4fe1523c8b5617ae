"""Geometry of three-site states: arc-ordering components, gaps, limit states."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .circle import ccw_arc, reduce, signed_distance
from .finite import CouplingParams, as_config, step_finite

TIE_TOL = 1e-12


class ComponentLabel(enum.Enum):
    I = 1
    II = 2
    III = 3
    IV = 4
    V = 5
    VI = 6
    BOUNDARY = 0

    @property
    def is_odd(self) -> bool:
        return self.value % 2 == 1


# Strict order of (d(x,y), d(y,z), d(z,x)) as a tuple of arc indices from
# smallest to largest; index 0 = d(x,y), 1 = d(y,z), 2 = d(z,x).
_ORDER_TO_LABEL = {
    (0, 2, 1): ComponentLabel.I,
    (0, 1, 2): ComponentLabel.II,
    (1, 0, 2): ComponentLabel.III,
    (1, 2, 0): ComponentLabel.IV,
    (2, 1, 0): ComponentLabel.V,
    (2, 0, 1): ComponentLabel.VI,
}
_LABELS_BY_VALUE = {lab.value: lab for lab in ComponentLabel}

# integer code (argsort base 3) -> label value, used by the vectorised path
_CODE_TABLE = np.zeros(27, dtype=np.int8)
for _order, _lab in _ORDER_TO_LABEL.items():
    _CODE_TABLE[9 * _order[0] + 3 * _order[1] + _order[2]] = _lab.value


def pairwise_arcs(x) -> np.ndarray:
    """(d(x,y), d(y,z), d(z,x)) stacked on the last axis."""
    x = np.asarray(x, dtype=float)
    a = ccw_arc(x[..., 0], x[..., 1])
    b = ccw_arc(x[..., 1], x[..., 2])
    c = ccw_arc(x[..., 2], x[..., 0])
    return np.stack([np.asarray(a), np.asarray(b), np.asarray(c)], axis=-1)


def component_codes(x, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Vectorised labels as integers 1..6 (0 for boundary) over a batch."""
    arcs = pairwise_arcs(as_config(x, 3))
    order = np.argsort(arcs, axis=-1, kind="stable")
    codes = _CODE_TABLE[9 * order[..., 0] + 3 * order[..., 1] + order[..., 2]]
    srt = np.take_along_axis(arcs, order, axis=-1)
    tie = (srt[..., 1] - srt[..., 0] <= tie_tol) | (srt[..., 2] - srt[..., 1] <= tie_tol)
    return np.where(tie, 0, codes).astype(np.int8)


def classify_component(x, tie_tol: float = TIE_TOL) -> ComponentLabel:
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("classify_component expects a single three-site configuration")
    return _LABELS_BY_VALUE[int(component_codes(x, tie_tol))]


def permuted_label(label: ComponentLabel, perm) -> ComponentLabel:
    """Label of ``x[perm]`` given the label of ``x``.

    Derived combinatorially: relabeling sites permutes the three arcs, and
    arcs between swapped neighbours flip orientation (d -> 1 - d), which
    reverses their order.
    """
    if label is ComponentLabel.BOUNDARY:
        return label
    # representative configuration realising ``label``
    reps = {
        ComponentLabel.I: (0.0, 0.1, 0.7),
        ComponentLabel.II: (0.0, 0.1, 0.4),
        ComponentLabel.III: (0.0, 0.3, 0.4),
        ComponentLabel.IV: (0.0, 0.6, 0.7),
        ComponentLabel.V: (0.0, 0.6, 0.9),
        ComponentLabel.VI: (0.0, 0.3, 0.9),
    }
    rep = np.asarray(reps[label])
    return classify_component(rep[list(perm)])


def min_gap(x) -> np.ndarray | float:
    """min(d(x,y), d(y,z), d(z,x)) over counterclockwise arcs."""
    out = pairwise_arcs(as_config(x, 3)).min(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def diameter(x) -> np.ndarray | float:
    """Length of the shortest arc containing every site: 1 - largest gap between neighbours."""
    gaps = neighbour_gaps(x)
    out = 1.0 - gaps.max(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def neighbour_gaps(x) -> np.ndarray:
    """Gaps between cyclically consecutive sites (sorted by position); they sum to 1."""
    s = np.sort(reduce(np.asarray(x, dtype=float)), axis=-1)
    nxt = np.roll(s, -1, axis=-1)
    gaps = nxt - s
    gaps[..., -1] += 1.0
    return gaps


class LimitKind(enum.Enum):
    SYNC = "sync"
    SPLAY = "splay"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class LimitStateN3:
    kind: LimitKind
    residual: float
    steps: int


def _sync_residual(x) -> float:
    return float(diameter(x))


def _splay_residual(x) -> float:
    return float(np.max(np.abs(neighbour_gaps(x) - 1.0 / 3.0)))


def detect_limit_state(x0, epsilon: float, max_steps: int = 10_000, tol: float = 1e-6) -> LimitStateN3:
    """Iterate three sites in the contracting regime until synchronised or evenly spread."""
    if not epsilon > 0.5:
        raise ValueError(f"detect_limit_state needs eps > 1/2, got {epsilon}")
    params = CouplingParams(epsilon, 3)
    x = as_config(x0, 3)
    for t in range(max_steps + 1):
        r_sync = _sync_residual(x)
        if r_sync < tol:
            return LimitStateN3(LimitKind.SYNC, r_sync, t)
        r_splay = _splay_residual(x)
        if r_splay < tol:
            return LimitStateN3(LimitKind.SPLAY, r_splay, t)
        if t < max_steps:
            x = step_finite(x, params)
    return LimitStateN3(LimitKind.UNDECIDED, min(r_sync, r_splay), max_steps)


def contracting_attractor_circles():
    """The diagonal circle and the two evenly spread circles, as callables of x in [0, 1).

    The second and third circles are swapped by the dynamics; the diagonal
    is invariant.
    """

    def diagonal(x):
        x = reduce(x)
        return np.stack(np.broadcast_arrays(x, x, x), axis=-1)

    def circle_2(x):
        x = reduce(x)
        return reduce(np.stack(np.broadcast_arrays(x, x + 2.0 / 3.0, x + 1.0 / 3.0), axis=-1))

    def circle_3(x):
        x = reduce(x)
        return reduce(np.stack(np.broadcast_arrays(x, x + 1.0 / 3.0, x + 2.0 / 3.0), axis=-1))

    return diagonal, circle_2, circle_3


def distance_to_circle(x, circle: str) -> np.ndarray | float:
    """Sup-norm torus distance from ``x`` to the named attractor circle.

    Each circle is a translate of the diagonal by a fixed offset, so the
    nearest point is found by averaging the offset-corrected coordinates.
    """
    offsets = {
        "diagonal": np.zeros(3),
        "circle_2": np.array([0.0, 2.0 / 3.0, 1.0 / 3.0]),
        "circle_3": np.array([0.0, 1.0 / 3.0, 2.0 / 3.0]),
    }[circle]
    y = np.asarray(x, dtype=float) - offsets
    # spread of y relative to y[0]; the best diagonal shift is their mean
    rel = signed_distance(y - y[..., :1])
    shift = rel.mean(axis=-1, keepdims=True)
    out = np.abs(rel - shift).max(axis=-1)
    return float(out) if np.ndim(out) == 0 else out
