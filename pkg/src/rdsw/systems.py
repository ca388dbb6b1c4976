"""Map families, IFS specifications with probabilities, word streams, and orbits.

A system is a finite list of maps of one phase space plus a probability vector;
random orbits are driven by explicit symbol words or by seeded WordStreams
(counter-based, so the same (seed, stream_id) always replays the same word).
Composition acts on the left: step k applies the map drawn at slot k to the
current point, so after n steps the point is f_{i_n} ( ... f_{i_1}(x) ... ).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import CIRCLE, INTERVAL, PROJECTIVE
from .util import BudgetExceededError

__all__ = [
    "MapSpec",
    "AffineMap",
    "Rotation",
    "PerturbedRotation",
    "MoebiusMap",
    "TabulatedMap",
    "map_from_params",
    "SystemSpec",
    "WordStream",
    "TrajectoryRecord",
    "SkewState",
    "apply_map",
    "derivative",
    "iterate",
    "skew_step",
    "enumerate_words",
    "word_matrix",
    "word_weights",
    "ensemble_apply",
    "ensemble_apply_many",
]

_TWO_PI = 2.0 * math.pi
WORD_BUDGET = 1 << 24


class MapSpec:
    """Base class for the supported map families.

    Instances are immutable value objects. ``__call__``/``deriv`` accept floats
    or arrays; ``scalar_fn``/``scalar_deriv_fn`` return plain-float closures for
    tight orbit loops. ``deriv`` is the signed derivative of the lift; use
    :func:`derivative` for |f'|.
    """

    family = "abstract"
    space = INTERVAL
    has_derivative = True

    def __call__(self, x):
        raise NotImplementedError

    def deriv(self, x):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def scalar_fn(self):
        return self.__call__

    def scalar_deriv_fn(self):
        return self.deriv

    def inverse_grid(self, ts):
        """Preimages of targets under the map, for exact partition overlaps.

        Monotone maps only. Circle maps solve lift(x) = t (mod 1) by bisection
        unless a closed form is available; interval maps clamp targets outside
        the range to the nearest endpoint preimage.
        """
        raise NotImplementedError(f"{self.family} has no monotone inverse")

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params().items() if k != "family")
        return f"{type(self).__name__}({inner})"

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash(repr(self))


class AffineMap(MapSpec):
    """x -> a*x + b on the interval, a != 0. Output is clamped to [0, 1]."""

    family = "affine_interval"
    space = INTERVAL

    def __init__(self, a: float, b: float):
        a = float(a)
        b = float(b)
        if a == 0.0:
            raise ValueError("affine map needs a != 0")
        self.a = a
        self.b = b

    def __call__(self, x):
        return np.minimum(1.0, np.maximum(0.0, self.a * np.asarray(x, dtype=float) + self.b))

    def deriv(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.a)

    def scalar_fn(self):
        a, b = self.a, self.b
        return lambda x: min(1.0, max(0.0, a * x + b))

    def scalar_deriv_fn(self):
        a = self.a
        return lambda x: a

    def inverse_grid(self, ts):
        ts = np.asarray(ts, dtype=float)
        return np.clip((ts - self.b) / self.a, 0.0, 1.0)

    def params(self) -> dict:
        return {"family": self.family, "a": self.a, "b": self.b}


class Rotation(MapSpec):
    """x -> x + c mod 1 on the circle."""

    family = "rotation"
    space = CIRCLE

    def __init__(self, c: float):
        self.c = float(c)

    def __call__(self, x):
        return (np.asarray(x, dtype=float) + self.c) % 1.0

    def deriv(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def scalar_fn(self):
        c = self.c
        return lambda x: (x + c) % 1.0

    def scalar_deriv_fn(self):
        return lambda x: 1.0

    def lift(self, x):
        return np.asarray(x, dtype=float) + self.c

    def inverse_grid(self, ts):
        return (np.asarray(ts, dtype=float) - self.c) % 1.0

    def params(self) -> dict:
        return {"family": self.family, "c": self.c}


class PerturbedRotation(MapSpec):
    """x -> x + c + (amp / (2 pi k)) sin(2 pi k x + phase) mod 1, |amp| < 1.

    The derivative is 1 + amp cos(2 pi k x + phase), bounded away from 0, so
    every member is an orientation-preserving circle diffeomorphism. harmonic
    (k, a positive integer) and phase generalize the basic k=1, phase=0 form;
    they let pure-cosine perturbations and half-period shifts stay inside the
    family.
    """

    family = "perturbed_rotation"
    space = CIRCLE

    def __init__(self, c: float, amp: float, harmonic: int = 1, phase: float = 0.0):
        if not abs(amp) < 1.0:
            raise ValueError(f"perturbed rotation needs |amp| < 1, got {amp}")
        if int(harmonic) != harmonic or harmonic < 1:
            raise ValueError(f"harmonic must be a positive integer, got {harmonic}")
        self.c = float(c)
        self.amp = float(amp)
        self.harmonic = int(harmonic)
        self.phase = float(phase)
        self._w = _TWO_PI * self.harmonic
        self._k = self.amp / self._w

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x + self.c + self._k * np.sin(self._w * x + self.phase)) % 1.0

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + self.amp * np.cos(self._w * x + self.phase)

    def scalar_fn(self):
        c, k, w, ph = self.c, self._k, self._w, self.phase
        return lambda x: (x + c + k * math.sin(w * x + ph)) % 1.0

    def scalar_deriv_fn(self):
        amp, w, ph = self.amp, self._w, self.phase
        return lambda x: 1.0 + amp * math.cos(w * x + ph)

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.c + self._k * np.sin(self._w * x + self.phase)

    def inverse_grid(self, ts):
        return _bisect_circle_inverse(self.lift, np.asarray(ts, dtype=float))

    def params(self) -> dict:
        return {
            "family": self.family,
            "c": self.c,
            "amp": self.amp,
            "harmonic": self.harmonic,
            "phase": self.phase,
        }


class MoebiusMap(MapSpec):
    """Circle map induced by a 2x2 real matrix with positive determinant.

    The circle R/Z doubles as real projective 1-space via v(x) = (cos pi x,
    sin pi x); the map sends x to arg(A v(x)) / pi mod 1 and its derivative is
    det(A) / ||A v(x)||^2.
    """

    family = "moebius_circle"
    space = CIRCLE

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float).reshape(2, 2)
        det = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
        if det <= 1e-12:
            raise ValueError(f"moebius matrix needs positive determinant, got {det}")
        m.setflags(write=False)
        self.matrix = m
        self.det = det

    def __call__(self, x):
        th = math.pi * np.asarray(x, dtype=float)
        c, s = np.cos(th), np.sin(th)
        m = self.matrix
        u = m[0, 0] * c + m[0, 1] * s
        v = m[1, 0] * c + m[1, 1] * s
        return (np.arctan2(v, u) / math.pi) % 1.0

    def deriv(self, x):
        th = math.pi * np.asarray(x, dtype=float)
        c, s = np.cos(th), np.sin(th)
        m = self.matrix
        u = m[0, 0] * c + m[0, 1] * s
        v = m[1, 0] * c + m[1, 1] * s
        return self.det / (u * u + v * v)

    def scalar_fn(self):
        (m00, m01), (m10, m11) = self.matrix
        pi = math.pi

        def f(x):
            th = pi * x
            c, s = math.cos(th), math.sin(th)
            return (math.atan2(m10 * c + m11 * s, m00 * c + m01 * s) / pi) % 1.0

        return f

    def scalar_deriv_fn(self):
        (m00, m01), (m10, m11) = self.matrix
        det, pi = self.det, math.pi

        def df(x):
            th = pi * x
            c, s = math.cos(th), math.sin(th)
            u = m00 * c + m01 * s
            v = m10 * c + m11 * s
            return det / (u * u + v * v)

        return df

    def inverse_grid(self, ts):
        m = self.matrix
        adj = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        return MoebiusMap(adj)(ts)

    def params(self) -> dict:
        return {"family": self.family, "matrix": self.matrix.tolist()}


class TabulatedMap(MapSpec):
    """Map defined by values at strictly increasing nodes, interpolated.

    Monotone tables get a shape-preserving (PCHIP) interpolant; on the circle
    the values are read as lift values (last-to-first wrap adds 1). Derivative
    evaluation is only offered when node derivatives are supplied, in which
    case a cubic Hermite interpolant is used. Non-monotone tables are accepted
    but flagged, and downstream consumers fall back to quadrature.
    """

    family = "tabulated_monotone"

    def __init__(self, nodes, values, space: str = INTERVAL, node_derivs=None):
        from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3 or values.shape != nodes.shape:
            raise ValueError("tabulated map needs matching 1-D node/value tables, >= 3 entries")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("tabulated map nodes must be strictly increasing")
        if space not in (CIRCLE, INTERVAL):
            raise ValueError(f"tabulated maps live on circle or interval, not {space!r}")
        if space == CIRCLE and (nodes[0] < 0.0 or nodes[-1] >= 1.0):
            raise ValueError("circle nodes must lie in [0, 1)")
        self.space = space
        self.nodes = nodes
        self.values = values
        self.monotone = bool(np.all(np.diff(values) > 0))
        self.has_derivative = node_derivs is not None
        if space == CIRCLE:
            xs = np.append(nodes, nodes[0] + 1.0)
            ys = np.append(values, values[0] + (1.0 if self.monotone else 0.0))
        else:
            xs, ys = nodes, values
        if node_derivs is not None:
            ds = np.asarray(node_derivs, dtype=float)
            if ds.shape != nodes.shape:
                raise ValueError("node_derivs must match nodes")
            dss = np.append(ds, ds[0]) if space == CIRCLE else ds
            self._spline = CubicHermiteSpline(xs, ys, dss)
        else:
            self._spline = PchipInterpolator(xs, ys)
        self._dspline = self._spline.derivative()
        self._x0 = float(xs[0])
        self._node_derivs = None if node_derivs is None else np.asarray(node_derivs, float)

    def _wrap(self, x):
        x = np.asarray(x, dtype=float)
        if self.space == CIRCLE:
            return self._x0 + (x - self._x0) % 1.0
        return np.clip(x, self.nodes[0], self.nodes[-1])

    def __call__(self, x):
        y = self._spline(self._wrap(x))
        if self.space == CIRCLE:
            return y % 1.0
        return np.clip(y, 0.0, 1.0)

    def deriv(self, x):
        if not self.has_derivative:
            raise ValueError("tabulated map built without node derivatives")
        return self._dspline(self._wrap(x))

    def lift(self, x):
        """Continuous lift; the spline already covers one full period."""
        if not self.monotone:
            raise ValueError("non-monotone tabulated map has no lift")
        if self.space != CIRCLE:
            raise ValueError("lift is a circle-map notion")
        x = np.asarray(x, dtype=float)
        shift = np.floor(x - self._x0)
        return self._spline(x - shift) + shift

    def inverse_grid(self, ts):
        if not self.monotone:
            raise ValueError("non-monotone tabulated map has no monotone inverse")
        ts = np.asarray(ts, dtype=float)
        if self.space == CIRCLE:
            return _bisect_circle_inverse(self.lift, ts)
        lo, hi = float(self._spline(self.nodes[0])), float(self._spline(self.nodes[-1]))
        tc = np.clip(ts, min(lo, hi), max(lo, hi))
        return _bisect_interval_inverse(self._spline, tc, float(self.nodes[0]), float(self.nodes[-1]))

    def params(self) -> dict:
        return {
            "family": self.family,
            "space": self.space,
            "nodes": self.nodes.tolist(),
            "values": self.values.tolist(),
            "node_derivs": None if self._node_derivs is None else self._node_derivs.tolist(),
        }


_FAMILIES = {
    "affine_interval": lambda p: AffineMap(p["a"], p["b"]),
    "rotation": lambda p: Rotation(p["c"]),
    "perturbed_rotation": lambda p: PerturbedRotation(
        p["c"], p["amp"], p.get("harmonic", 1), p.get("phase", 0.0)
    ),
    "moebius_circle": lambda p: MoebiusMap(p["matrix"]),
    "tabulated_monotone": lambda p: TabulatedMap(
        p["nodes"], p["values"], p.get("space", INTERVAL), p.get("node_derivs")
    ),
}


def map_from_params(params: dict) -> MapSpec:
    """Rebuild a map from its ``params()`` dictionary."""
    fam = params.get("family")
    if fam not in _FAMILIES:
        raise ValueError(f"unknown map family {fam!r}")
    return _FAMILIES[fam](params)


def _bisect_circle_inverse(lift, ts, iters: int = 64):
    ts = np.asarray(ts, dtype=float) % 1.0
    l0 = float(lift(np.array(0.0)))
    m = np.ceil(l0 - ts)
    target = ts + m
    target = np.where(target < l0, target + 1.0, target)
    target = np.where(target >= l0 + 1.0, target - 1.0, target)
    lo = np.zeros_like(ts)
    hi = np.ones_like(ts)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = lift(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (0.5 * (lo + hi)) % 1.0


def _bisect_interval_inverse(f, ts, a: float, b: float, iters: int = 64):
    ts = np.asarray(ts, dtype=float)
    fa, fb = float(f(a)), float(f(b))
    increasing = fb >= fa
    lo = np.full_like(ts, a)
    hi = np.full_like(ts, b)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        below = (val < ts) if increasing else (val > ts)
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


class SystemSpec:
    """A finite family of maps of one phase space plus map probabilities.

    Validation: matching spaces, probabilities positive and summing to 1
    within 1e-12, and (for 1-D spaces) every map checked on a 2048-point grid
    for range containment and a derivative bounded away from zero whenever the
    family provides one.
    """

    def __init__(self, maps, probs, name: str = "", check: bool = True):
        maps = tuple(maps)
        if not maps:
            raise ValueError("a system needs at least one map")
        spaces = {m.space for m in maps}
        if len(spaces) != 1:
            raise ValueError(f"all maps must share one phase space, got {sorted(spaces)}")
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (len(maps),):
            raise ValueError("probs must align with maps")
        if np.any(probs <= 0.0):
            raise ValueError("probs must all be positive")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValueError(f"probs must sum to 1 within 1e-12, got {float(probs.sum())!r}")
        self.maps = maps
        self.probs = probs.copy()
        self.probs.setflags(write=False)
        self.space = next(iter(spaces))
        self.name = name
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        cum.setflags(write=False)
        self.cum = cum
        if check and self.space in (CIRCLE, INTERVAL):
            self._grid_check()

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    def _grid_check(self, points: int = 2048):
        g = np.linspace(0.0, 1.0, points) if self.space == INTERVAL else np.arange(points) / points
        for m in self.maps:
            y = np.asarray(m(g), dtype=float)
            if self.space == INTERVAL and (y.min() < -1e-9 or y.max() > 1.0 + 1e-9):
                raise ValueError(f"{m!r} leaves the interval on the check grid")
            if m.has_derivative:
                d = np.asarray(m.deriv(g), dtype=float)
                if d.min() <= 0.0 and d.max() >= 0.0:
                    raise ValueError(f"{m!r} derivative changes sign on the check grid")
                if np.min(np.abs(d)) < 1e-9:
                    raise ValueError(f"{m!r} derivative is not bounded away from zero")

    def word_stream(self, seed: int, stream_id: int = 0) -> "WordStream":
        return WordStream(int(seed), int(stream_id), tuple(float(p) for p in self.probs))

    def params(self) -> dict:
        return {
            "name": self.name,
            "space": self.space,
            "probs": [float(p) for p in self.probs],
            "maps": [m.params() for m in self.maps],
        }

    def __repr__(self) -> str:
        label = self.name or "system"
        return f"SystemSpec<{label}: {self.n_maps} maps on {self.space}>"


_M64 = 1 << 64


@dataclass(frozen=True)
class WordStream:
    """A reproducible symbol stream keyed by (seed, stream_id).

    Counter-based (Philox), so distinct stream ids never overlap and the
    first n symbols are the same however they are consumed: draw(n) equals
    the concatenation of any block traversal.
    """

    seed: int
    stream_id: int
    probs: tuple

    def _rng(self) -> np.random.Generator:
        key = ((self.stream_id % _M64) << 64) | (self.seed % _M64)
        return np.random.Generator(np.random.Philox(key=key))

    def _cumulative(self) -> np.ndarray:
        cum = np.cumsum(np.asarray(self.probs, dtype=float))
        cum[-1] = 1.0
        return cum

    def draw(self, n: int) -> np.ndarray:
        """The first n symbols of this stream."""
        cum = self._cumulative()
        u = self._rng().random(int(n))
        return np.searchsorted(cum, u, side="right")

    def blocks(self, n_rows: int, width: int, max_elems: int = 1 << 21):
        """Yield (start_row, block) covering an (n_rows, width) symbol matrix.

        Rows are replica steps or replica indices depending on the caller;
        the matrix equals draw(n_rows * width).reshape(n_rows, width).
        """
        cum = self._cumulative()
        rng = self._rng()
        rows = max(1, int(max_elems) // max(1, int(width)))
        start = 0
        while start < n_rows:
            m = min(rows, n_rows - start)
            u = rng.random((m, int(width)))
            yield start, np.searchsorted(cum, u.ravel(), side="right").reshape(m, int(width))
            start += m

    def uniforms(self, n: int) -> np.ndarray:
        """Auxiliary uniform variates from the same keyed stream."""
        return self._rng().random(int(n))


@dataclass(frozen=True)
class TrajectoryRecord:
    """A sampled orbit: points, cumulative log-derivative, and the word used.

    ``log_deriv_partial[k]`` is sum_{j<k} log |f'_{i_{j+1}}(X_j)| so entry 0 is
    0.0 and the array has n+1 entries; it is empty when some map in play has
    no derivative.
    """

    points: np.ndarray
    log_deriv_partial: np.ndarray
    word_prefix: np.ndarray


@dataclass(frozen=True)
class SkewState:
    """A point of the skew product: a word, a read position, and a phase point."""

    word: np.ndarray
    pos: int
    x: object


def apply_map(m: MapSpec, x):
    """Evaluate one map at a point or array."""
    return m(x)


def derivative(m: MapSpec, x):
    """|f'(x)| for a map with derivative support."""
    return np.abs(m.deriv(x))


def _resolve_word(system: SystemSpec, word, n: int) -> np.ndarray:
    if isinstance(word, WordStream):
        return word.draw(n)
    symbols = np.asarray(word, dtype=np.int64).reshape(-1)
    if symbols.size < n:
        raise ValueError(f"word of length {symbols.size} cannot drive {n} steps")
    if symbols.size and (symbols.min() < 0 or symbols.max() >= system.n_maps):
        raise ValueError("word contains out-of-range symbols")
    return symbols[:n]


def iterate(system: SystemSpec, x0, word, n: int) -> TrajectoryRecord:
    """Run n steps from x0 driven by a word or a WordStream.

    Returns the full orbit (n+1 points), the cumulative log-derivative along
    it when available, and the symbols actually used. Bit-for-bit reproducible
    for equal inputs.
    """
    symbols = _resolve_word(system, word, n)
    want_ld = all(m.has_derivative for m in system.maps)
    if system.space == PROJECTIVE:
        x = _as_unit_vector(x0)
        points = np.empty((n + 1, x.size), dtype=float)
        points[0] = x
        for k, s in enumerate(symbols.tolist()):
            x = system.maps[s](x)
            points[k + 1] = x
        return TrajectoryRecord(points, np.empty(0), symbols)
    fns = [m.scalar_fn() for m in system.maps]
    points = np.empty(n + 1, dtype=float)
    x = float(x0)
    points[0] = x
    if want_ld:
        dfns = [m.scalar_deriv_fn() for m in system.maps]
        ldp = np.empty(n + 1, dtype=float)
        ldp[0] = 0.0
        acc = 0.0
        for k, s in enumerate(symbols.tolist()):
            acc += math.log(abs(dfns[s](x)))
            x = fns[s](x)
            points[k + 1] = x
            ldp[k + 1] = acc
        return TrajectoryRecord(points, ldp, symbols)
    for k, s in enumerate(symbols.tolist()):
        x = fns[s](x)
        points[k + 1] = x
    return TrajectoryRecord(points, np.empty(0), symbols)


def _as_unit_vector(x0) -> np.ndarray:
    from .geometry import ProjectivePoint

    if isinstance(x0, ProjectivePoint):
        return np.array(x0.vec)
    v = np.asarray(x0, dtype=float).reshape(-1)
    nrm = float(np.linalg.norm(v))
    if nrm < 1e-12:
        raise ValueError("projective state cannot be the zero vector")
    return v / nrm


def skew_step(system: SystemSpec, state: SkewState) -> SkewState:
    """One step of the skew product: shift the word, move the fiber point."""
    word = np.asarray(state.word, dtype=np.int64)
    if state.pos >= word.size:
        raise ValueError("skew state has exhausted its word")
    s = int(word[state.pos])
    if not 0 <= s < system.n_maps:
        raise ValueError(f"symbol {s} out of range")
    fx = system.maps[s](state.x) if system.space == PROJECTIVE else float(system.maps[s](state.x))
    return SkewState(word, state.pos + 1, fx)


def enumerate_words(system: SystemSpec, n: int, budget: int = WORD_BUDGET):
    """Yield every length-n word with its probability weight, first slot slowest.

    Refuses when N^n exceeds the budget (default 2^24), reporting the
    required count so the caller can switch to sampling.
    """
    total = system.n_maps**n
    if total > budget:
        raise BudgetExceededError(
            f"exact enumeration needs N^n = {total} words, over the budget of {budget}; "
            "use Monte Carlo sampling instead"
        )
    probs = [float(p) for p in system.probs]
    for word in itertools.product(range(system.n_maps), repeat=n):
        weight = 1.0
        for s in word:
            weight *= probs[s]
        yield word, weight


def word_matrix(system: SystemSpec, n: int, budget: int = WORD_BUDGET) -> np.ndarray:
    """All length-n words as an (N^n, n) int8 matrix in enumeration order."""
    nmaps = system.n_maps
    total = nmaps**n
    if total > budget:
        raise BudgetExceededError(
            f"exact enumeration needs N^n = {total} words, over the budget of {budget}; "
            "use Monte Carlo sampling instead"
        )
    idx = np.arange(total, dtype=np.int64)
    out = np.empty((total, n), dtype=np.int8)
    for j in range(n):
        out[:, j] = (idx // (nmaps ** (n - 1 - j))) % nmaps
    return out


def word_weights(system: SystemSpec, words: np.ndarray) -> np.ndarray:
    """Probability weight of each row of a word matrix."""
    probs = np.asarray(system.probs, dtype=float)
    w = np.ones(words.shape[0], dtype=float)
    for j in range(words.shape[1]):
        w *= probs[words[:, j].astype(np.int64)]
    return w


def ensemble_apply(system: SystemSpec, xs: np.ndarray, srow: np.ndarray, log_deriv=None):
    """Advance a vector of states one step under per-state symbols, in place.

    When ``log_deriv`` is given it accumulates log |f'| evaluated before the
    move, aligned with TrajectoryRecord's convention.
    """
    for i, f in enumerate(system.maps):
        mask = srow == i
        if not mask.any():
            continue
        xi = xs[mask]
        if log_deriv is not None:
            log_deriv[mask] += np.log(np.abs(system.maps[i].deriv(xi)))
        xs[mask] = f(xi)


def ensemble_apply_many(system: SystemSpec, arrays, srow: np.ndarray):
    """Advance several aligned state vectors under one shared symbol row."""
    for i, f in enumerate(system.maps):
        mask = srow == i
        if not mask.any():
            continue
        for a in arrays:
            a[mask] = f(a[mask])
