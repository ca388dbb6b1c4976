"""Synchronization diagnostics: paired orbits, decay-rate fits, average
contraction searches, local contraction probes, and proximality scans.

Everything is driven by seeded WordStreams, so every number here is
reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CIRCLE, INTERVAL, PROJECTIVE, ProjectivePoint, base_distance
from .systems import SystemSpec, WordStream, ensemble_apply_many
from .util import RefusalError, Z99, linear_fit

__all__ = [
    "SyncTrace",
    "RateFit",
    "AverageSyncResult",
    "CASearchResult",
    "ProximalityVerdict",
    "paired_orbit",
    "fit_sync_rate",
    "average_sync_sum",
    "local_contraction_probe",
    "contraction_on_average_search",
    "proximality_probe",
]

DISTANCE_FLOOR = 1e-14

_AVG_BASE = 3 << 16
_LCP_BASE = (3 << 16) | 1
_CAS_BASE = (3 << 16) | 2
_CAS_PAIRS = (3 << 16) | 3
_PROX_BASE = (3 << 16) | 4


@dataclass(frozen=True)
class SyncTrace:
    """Distances along one paired orbit, k = 0..n, plus word metadata."""

    distances: np.ndarray
    x: object
    y: object
    seed: int | None
    stream_id: int | None

    @property
    def n_steps(self) -> int:
        return int(self.distances.shape[0]) - 1


@dataclass(frozen=True)
class RateFit:
    """Least-squares exponential rate of a distance trace.

    rate is the slope of log d_k against k over the entries at or above the
    numeric floor 1e-14; censored_at is the first index below the floor, if
    any. r2 is 1.0 for a perfect fit (constant traces included).
    """

    rate: float
    intercept: float
    r2: float
    censored_at: int | None


@dataclass(frozen=True)
class AverageSyncResult:
    """Partial sums sum_{m<=k} E-hat[d^alpha at step m] and a boundedness call."""

    partial_sums: np.ndarray
    alpha: float
    bounded: bool
    tail_fraction: float


@dataclass(frozen=True)
class CASearchResult:
    """Best snowflake exponent found by the average-contraction search."""

    alphas: np.ndarray
    lambdas: np.ndarray
    upper_bounds: np.ndarray
    best_alpha: float
    best_lambda: float
    certified: bool
    pairs_used: int


@dataclass(frozen=True)
class ProximalityVerdict:
    x: float
    y: float
    min_distance: float
    verdict: str


def _pair_distances_scalar(system: SystemSpec, x: float, y: float, symbols) -> np.ndarray:
    fns = [m.scalar_fn() for m in system.maps]
    circle = system.space == CIRCLE
    n = len(symbols)
    out = np.empty(n + 1)
    a, b = float(x), float(y)
    if circle:
        d = abs(a % 1.0 - b % 1.0)
        out[0] = min(d, 1.0 - d)
    else:
        out[0] = abs(a - b)
    for k, s in enumerate(symbols):
        f = fns[s]
        a = f(a)
        b = f(b)
        if circle:
            d = abs(a - b)
            out[k + 1] = min(d, 1.0 - d)
        else:
            out[k + 1] = abs(a - b)
    return out


def paired_orbit(system: SystemSpec, x, y, word, n: int) -> SyncTrace:
    """Distances between two orbits driven by one shared word.

    Exchanging x and y returns bit-identical distances: every step and the
    distance formula are symmetric in the two states.
    """
    from .systems import _resolve_word

    symbols = _resolve_word(system, word, n)
    seed = word.seed if isinstance(word, WordStream) else None
    sid = word.stream_id if isinstance(word, WordStream) else None
    if system.space == PROJECTIVE:
        from .systems import _as_unit_vector

        a = _as_unit_vector(x)
        b = _as_unit_vector(y)
        out = np.empty(n + 1)
        out[0] = _proj_dist(a, b)
        for k, s in enumerate(symbols.tolist()):
            f = system.maps[s]
            a = f(a)
            b = f(b)
            out[k + 1] = _proj_dist(a, b)
        return SyncTrace(out, x, y, seed, sid)
    dists = _pair_distances_scalar(system, float(x), float(y), symbols.tolist())
    return SyncTrace(dists, float(x), float(y), seed, sid)


def _proj_dist(a: np.ndarray, b: np.ndarray) -> float:
    g = float(np.dot(a, b))
    return math.sqrt(max(0.0, 1.0 - g * g))


def fit_sync_rate(trace: SyncTrace, floor: float = DISTANCE_FLOOR) -> RateFit:
    """Exponential decay rate of a distance trace by least squares on log d.

    Entries below the floor are censored; fewer than 8 usable entries is a
    refusal rather than a fit.
    """
    d = np.asarray(trace.distances, dtype=float)
    usable = d >= floor
    below = np.nonzero(~usable)[0]
    censored_at = int(below[0]) if below.size else None
    ks = np.nonzero(usable)[0]
    if ks.size < 8:
        raise RefusalError(
            f"only {ks.size} distances at or above the floor {floor:g}; "
            "need at least 8 for a rate fit"
        )
    slope, intercept, r2 = linear_fit(ks.astype(float), np.log(d[ks]))
    return RateFit(slope, intercept, r2, censored_at)


def average_sync_sum(
    system: SystemSpec,
    x,
    y,
    alpha: float,
    n: int,
    replicas: int,
    seed: int = 0,
) -> AverageSyncResult:
    """Partial sums of E-hat[d^alpha(X_k^x, X_k^y)] over k = 0..n.

    The expectation is over ``replicas`` independent words (one shared stream,
    so the result is reproducible). Boundedness verdict: the last decile of
    steps contributes under 1% of the total.
    """
    if replicas < 100:
        raise ValueError("average_sync_sum needs replicas >= 100")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    stream = system.word_stream(seed, _AVG_BASE)
    means = np.empty(n + 1)
    if system.space == PROJECTIVE:
        from .systems import _as_unit_vector

        a0 = _as_unit_vector(x)
        b0 = _as_unit_vector(y)
        av = np.tile(a0, (replicas, 1))
        bv = np.tile(b0, (replicas, 1))
        means[0] = _proj_dist(a0, b0) ** alpha
        step = 0
        for _, block in stream.blocks(n, replicas):
            for row in block:
                _apply_rows(system, (av, bv), row)
                g = np.einsum("ij,ij->i", av, bv)
                d = np.sqrt(np.maximum(0.0, 1.0 - g * g))
                step += 1
                means[step] = float(np.mean(d**alpha))
    else:
        av = np.full(replicas, float(x))
        bv = np.full(replicas, float(y))
        means[0] = base_distance(system.space, float(x), float(y)) ** alpha
        circle = system.space == CIRCLE
        step = 0
        for _, block in stream.blocks(n, replicas):
            for row in block:
                ensemble_apply_many(system, (av, bv), row)
                d = np.abs(av - bv)
                if circle:
                    d = np.minimum(d, 1.0 - d)
                step += 1
                means[step] = float(np.mean(d**alpha))
    sums = np.cumsum(means)
    m0 = int(math.floor(0.9 * n))
    total = float(sums[-1])
    tail = float(sums[-1] - sums[m0])
    frac = tail / total if total > 0.0 else 0.0
    return AverageSyncResult(sums, float(alpha), frac < 0.01, frac)


def _apply_rows(system: SystemSpec, arrays, srow: np.ndarray):
    """ensemble_apply_many for (n, d) row-vector states."""
    for i, f in enumerate(system.maps):
        mask = srow == i
        if not mask.any():
            continue
        for a in arrays:
            a[mask] = f(a[mask])


def local_contraction_probe(
    system: SystemSpec,
    x,
    radius: float,
    n: int,
    replicas: int,
    q_target: float,
    seed: int = 0,
) -> float:
    """Fraction of words along which the ball B(x, radius) stays q-contracted.

    A word succeeds when diam(f_word^k(B)) <= q_target^k for every k <= n.
    On the interval and circle the ball is an arc and monotonicity makes the
    two endpoints exact; on projective space the ball is tracked through a
    64-direction sample.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if n < 1:
        raise ValueError("n must be positive")
    stream = system.word_stream(seed, _LCP_BASE)
    qk = q_target ** np.arange(1, n + 1)
    ok = np.ones(replicas, dtype=bool)
    if system.space == PROJECTIVE:
        cloud = _projective_ball(system, x, radius, 64)
        flat = np.tile(cloud, (replicas, 1))
        step = 0
        for _, block in stream.blocks(n, replicas):
            for row in block:
                _apply_rows(system, (flat,), np.repeat(row, cloud.shape[0]))
                pts = flat.reshape(replicas, cloud.shape[0], -1)
                g = np.einsum("rkd,rld->rkl", pts, pts)
                min_gsq = np.min(g * g, axis=(1, 2))
                diam = np.sqrt(np.maximum(0.0, 1.0 - min_gsq))
                ok &= diam <= qk[step]
                step += 1
        return float(np.mean(ok))
    xf = float(x)
    if system.space == CIRCLE:
        lo = np.full(replicas, (xf - radius) % 1.0)
        hi = np.full(replicas, (xf + radius) % 1.0)
    else:
        lo = np.full(replicas, max(0.0, xf - radius))
        hi = np.full(replicas, min(1.0, xf + radius))
    circle = system.space == CIRCLE
    step = 0
    for _, block in stream.blocks(n, replicas):
        for row in block:
            ensemble_apply_many(system, (lo, hi), row)
            if circle:
                diam = np.minimum((hi - lo) % 1.0, 0.5)
            else:
                lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
                diam = hi - lo
            ok &= diam <= qk[step]
            step += 1
    return float(np.mean(ok))


def _projective_ball(system: SystemSpec, x, radius: float, count: int) -> np.ndarray:
    from .systems import _as_unit_vector

    center = _as_unit_vector(x if not isinstance(x, ProjectivePoint) else x.vec)
    d = center.size
    phi_max = math.asin(min(1.0, radius))
    ts = np.linspace(-1.0, 1.0, count)
    if d == 2:
        tangent = np.array([-center[1], center[0]])
        ang = phi_max * ts
        return np.cos(ang)[:, None] * center + np.sin(ang)[:, None] * tangent
    # deterministic tangent fan from a fixed auxiliary stream
    aux = WordStream(0xD1AE, _LCP_BASE, (1.0,))
    raw = aux.uniforms(count * d).reshape(count, d) - 0.5
    raw -= np.outer(raw @ center, center)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    tang = raw / norms
    ang = phi_max * np.abs(ts)
    pts = np.cos(ang)[:, None] * center + np.sin(ang)[:, None] * tang
    pts[0] = center
    return pts


def contraction_on_average_search(
    system: SystemSpec,
    alphas,
    pairs: int,
    horizon: int,
    seed: int = 0,
    replicas: int = 256,
) -> CASearchResult:
    """Scan snowflake exponents for average contraction at a fixed horizon.

    For each sampled pair the k-step ratio E-hat[d^alpha(X_k^x, X_k^y)] /
    d^alpha(x, y) is estimated over ``replicas`` words; lambda-hat is the
    worst (largest) ratio over pairs. The pair sample mixes uniform pairs,
    near-diagonal pairs at offsets 1e-6..1e-1, and antipodal pairs. Success
    means lambda-hat < 1 with its 99% upper confidence bound below 1.
    """
    if pairs < 1000:
        raise ValueError("contraction_on_average_search needs at least 1000 pairs")
    alphas = np.asarray(alphas, dtype=float).reshape(-1)
    if alphas.size == 0 or np.any(alphas <= 0.0) or np.any(alphas > 1.0):
        raise ValueError("alphas must lie in (0, 1]")
    if system.space == PROJECTIVE:
        raise RefusalError("pair construction is defined for 1-D phase spaces")
    xs, ys = _make_pairs(system.space, pairs, WordStream(seed, _CAS_PAIRS, (1.0,)))
    d0 = _dist_1d(system.space, xs, ys)
    keep = d0 >= 1e-12
    xs, ys, d0 = xs[keep], ys[keep], d0[keep]
    p = xs.size
    av = np.repeat(xs, replicas)
    bv = np.repeat(ys, replicas)
    stream = system.word_stream(seed, _CAS_BASE)
    for _, block in stream.blocks(horizon, p * replicas):
        for row in block:
            ensemble_apply_many(system, (av, bv), row)
    dk = _dist_1d(system.space, av, bv).reshape(p, replicas)
    lambdas = np.empty(alphas.size)
    ubs = np.empty(alphas.size)
    for j, al in enumerate(alphas):
        vals = dk**al
        mean = vals.mean(axis=1)
        se = vals.std(axis=1, ddof=1) / math.sqrt(replicas)
        ratio = mean / d0**al
        ub = (mean + Z99 * se) / d0**al
        lambdas[j] = float(ratio.max())
        ubs[j] = float(ub.max())
    best = int(np.argmin(lambdas))
    certified = bool(lambdas[best] < 1.0 and ubs[best] < 1.0)
    return CASearchResult(
        alphas, lambdas, ubs, float(alphas[best]), float(lambdas[best]), certified, p
    )


def _dist_1d(space: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b)
    if space == CIRCLE:
        d = np.minimum(d, 1.0 - d)
    return d


def _make_pairs(space: str, pairs: int, stream: WordStream):
    n_uni = pairs // 3
    n_near = pairs // 3
    n_anti = pairs - n_uni - n_near
    u = stream.uniforms(2 * n_uni + 2 * n_near + n_anti)
    xs_u = u[:n_uni]
    ys_u = u[n_uni : 2 * n_uni]
    xs_n = u[2 * n_uni : 2 * n_uni + n_near]
    un = u[2 * n_uni + n_near : 2 * n_uni + 2 * n_near]
    # offsets log-uniform over [1e-6, 1e-1], alternating sign
    delta = 10.0 ** (-6.0 + 5.0 * un)
    sign = np.where(np.arange(n_near) % 2 == 0, 1.0, -1.0)
    if space == CIRCLE:
        ys_n = (xs_n + sign * delta) % 1.0
    else:
        ys_n = xs_n + sign * delta
        flip = (ys_n < 0.0) | (ys_n > 1.0)
        ys_n[flip] = xs_n[flip] - sign[flip] * delta[flip]
        ys_n = np.clip(ys_n, 0.0, 1.0)
    xs_a = u[2 * n_uni + 2 * n_near :]
    if space == CIRCLE:
        ys_a = (xs_a + 0.5) % 1.0
    else:
        ys_a = np.where(xs_a < 0.5, 1.0, 0.0)
    xs = np.concatenate([xs_u, xs_n, xs_a])
    ys = np.concatenate([ys_u, ys_n, ys_a])
    return xs, ys


def proximality_probe(
    system: SystemSpec,
    pair_grid,
    horizon: int,
    replicas: int,
    tol: float,
    seed: int = 0,
) -> list[ProximalityVerdict]:
    """Scan pairs for evidence of approach below ``tol`` along random words.

    Per pair: the minimum distance over all replicas and steps 1..horizon.
    Verdict "proximal_evidence" when that minimum dips to tol or below, else
    "no_approach_below".
    """
    pair_grid = [(float(a), float(b)) for a, b in pair_grid]
    p = len(pair_grid)
    if p == 0:
        raise ValueError("pair_grid must not be empty")
    xs = np.repeat(np.array([a for a, _ in pair_grid]), replicas)
    ys = np.repeat(np.array([b for _, b in pair_grid]), replicas)
    best = np.full(p * replicas, np.inf)
    stream = system.word_stream(seed, _PROX_BASE)
    for _, block in stream.blocks(horizon, p * replicas):
        for row in block:
            ensemble_apply_many(system, (xs, ys), row)
            np.minimum(best, _dist_1d(system.space, xs, ys), out=best)
    mins = best.reshape(p, replicas).min(axis=1)
    out = []
    for (a, b), mn in zip(pair_grid, mins):
        verdict = "proximal_evidence" if mn <= tol else "no_approach_below"
        out.append(ProximalityVerdict(a, b, float(mn), verdict))
    return out
