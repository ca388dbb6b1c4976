"""Linear cocycles over an i.i.d. base: matrix products, exponents, projectivization.

Products are re-orthonormalized by QR every 16 steps, accumulating the log
diagonal of R; the exponent estimates are per-replica time averages of those
logs. The projectivized cocycle plugs straight into the 1-D toolkit (it is a
SystemSpec on the projective space), which is how the contraction-rate check
reuses the ball probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PROJECTIVE
from .synchronization import local_contraction_probe
from .systems import _FAMILIES, MapSpec, SystemSpec, WordStream
from .util import OverflowGuardError, RefusalError

__all__ = [
    "QR_BLOCK",
    "LOG_FLOOR",
    "ProjectiveMap",
    "CocycleSpec",
    "ProductResult",
    "SpectrumEstimate",
    "LcVerification",
    "product_stream",
    "estimate_spectrum",
    "projective_system",
    "verify_lc_rate",
    "cocycle_gallery",
    "cocycle_gallery_ids",
]

QR_BLOCK = 16
LOG_FLOOR = -700.0
_SPECTRUM_BASE = 6 << 16


class ProjectiveMap(MapSpec):
    """Action of an invertible matrix on unit direction vectors.

    States are unit row vectors with the sign convention handled by callers;
    batches are (m, d) arrays. No scalar derivative is exposed (the projective
    toolkit measures contraction geometrically instead).
    """

    family = "projective"
    space = PROJECTIVE
    has_derivative = False

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("projective map needs a square matrix")
        d = m.shape[0]
        if not 2 <= d <= 8:
            raise ValueError(f"matrix dimension must be in [2, 8], got {d}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix entries must be finite")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise ValueError("projective map needs an invertible matrix")
        m.setflags(write=False)
        self.matrix = m
        self.dim = d

    def __call__(self, x):
        v = np.asarray(x, dtype=float)
        if v.ndim == 1:
            w = self.matrix @ v
            return w / np.linalg.norm(w)
        w = v @ self.matrix.T
        return w / np.linalg.norm(w, axis=-1, keepdims=True)

    def params(self) -> dict:
        return {"family": self.family, "matrix": self.matrix.tolist()}


_FAMILIES["projective"] = lambda p: ProjectiveMap(p["matrix"])


class CocycleSpec:
    """A finite family of invertible matrices with selection probabilities."""

    def __init__(self, matrices, probs, name: str = ""):
        mats = []
        for a in matrices:
            m = np.array(a, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("cocycle matrices must be square")
            if not np.all(np.isfinite(m)):
                raise ValueError("cocycle matrices must be finite")
            with np.errstate(over="ignore"):
                det = abs(float(np.linalg.det(m)))
            if det <= 1e-12:
                raise ValueError("cocycle matrices must be invertible")
            m.setflags(write=False)
            mats.append(m)
        if not mats:
            raise ValueError("cocycle needs at least one matrix")
        d = mats[0].shape[0]
        if not 2 <= d <= 8:
            raise ValueError(f"matrix dimension must be in [2, 8], got {d}")
        if any(m.shape[0] != d for m in mats):
            raise ValueError("all cocycle matrices must share one dimension")
        p = np.asarray(probs, dtype=float)
        if p.shape != (len(mats),):
            raise ValueError("need exactly one probability per matrix")
        if np.any(p <= 0.0) or abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError("probabilities must be positive and sum to 1")
        p.setflags(write=False)
        self.matrices = tuple(mats)
        self.probs = p
        self.name = name
        self.dim = d
        self.n_mats = len(mats)

    def word_stream(self, seed: int, stream_id: int = 0) -> WordStream:
        return WordStream(seed, stream_id, tuple(float(q) for q in self.probs))

    def expected_log_det(self) -> float:
        return float(
            sum(p * math.log(abs(np.linalg.det(m))) for p, m in zip(self.probs, self.matrices))
        )


@dataclass(frozen=True)
class ProductResult:
    """QR-accumulated product data: sum of log |diag R| and the final frame."""

    log_diag: np.ndarray
    q: np.ndarray
    steps: int


@dataclass(frozen=True)
class SpectrumEstimate:
    """Lyapunov exponents in ascending order with per-exponent standard errors."""

    chis: np.ndarray
    stderr: np.ndarray
    gap_top: float
    q_lc: float
    n: int
    replicas: int


@dataclass(frozen=True)
class LcVerification:
    fraction: float
    q_target: float
    radius: float
    n: int
    replicas: int
    spectrum: SpectrumEstimate


def _reorth(b: np.ndarray, logs: np.ndarray):
    """QR re-orthonormalization step; accumulates log |diag R| into logs."""
    if not np.all(np.isfinite(b)):
        raise OverflowGuardError(
            "matrix product overflowed between re-orthonormalizations; "
            "per-map scales must keep 16-step blocks within double range"
        )
    q, r = np.linalg.qr(b)
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    if np.any(diag < math.exp(LOG_FLOOR)):
        raise OverflowGuardError(
            "matrix product underflowed the log-scale floor of -700 within one block"
        )
    logs += np.log(diag)
    return q


def product_stream(cocycle: CocycleSpec, word, n: int, block: int = QR_BLOCK) -> ProductResult:
    """Product of n sampled matrices with periodic QR re-orthonormalization.

    ``word`` is a WordStream or an explicit symbol array. log_diag[j] sums the
    log diagonal entries of the R factors, so log_diag / n estimates the j-th
    exponent (descending in j) and log_diag.sum() equals the log determinant
    magnitude of the whole product.
    """
    if n < 1:
        raise ValueError("product_stream needs n >= 1")
    if isinstance(word, WordStream):
        symbols = word.draw(n)
    else:
        symbols = np.asarray(word, dtype=np.int64).reshape(-1)
        if symbols.size < n:
            raise ValueError(f"word of length {symbols.size} cannot drive {n} steps")
        if symbols.min() < 0 or symbols.max() >= cocycle.n_mats:
            raise ValueError("word contains out-of-range symbols")
        symbols = symbols[:n]
    d = cocycle.dim
    b = np.eye(d)
    logs = np.zeros(d)
    with np.errstate(over="ignore", invalid="ignore"):
        for k, s in enumerate(symbols.tolist()):
            b = cocycle.matrices[s] @ b
            if (k + 1) % block == 0:
                b = _reorth(b, logs)
        if n % block:
            b = _reorth(b, logs)
    return ProductResult(logs, b, n)


def estimate_spectrum(
    cocycle: CocycleSpec, n: int = 2000, replicas: int = 100, seed: int = 0
) -> SpectrumEstimate:
    """Replica-averaged Lyapunov spectrum from QR-accumulated products.

    chis come out ascending (chis[-1] is the top exponent); gap_top is the
    difference of the top two and q_lc = exp(-gap_top / 2) is the local
    contraction rate target implied by the gap.
    """
    if n < 1 or replicas < 2:
        raise ValueError("estimate_spectrum needs n >= 1 and replicas >= 2")
    d = cocycle.dim
    stream = cocycle.word_stream(seed, _SPECTRUM_BASE)
    b = np.tile(np.eye(d), (replicas, 1, 1))
    logs = np.zeros((replicas, d))
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for _, blk in stream.blocks(n, replicas):
            for row in blk:
                for i, m in enumerate(cocycle.matrices):
                    mask = row == i
                    if mask.any():
                        b[mask] = np.matmul(m, b[mask])
                step += 1
                if step % QR_BLOCK == 0:
                    b = _reorth(b, logs)
        if step % QR_BLOCK:
            b = _reorth(b, logs)
    per = logs / n
    chis = per.mean(axis=0)[::-1].copy()
    stderr = (per.std(axis=0, ddof=1) / math.sqrt(replicas))[::-1].copy()
    gap_top = float(chis[-1] - chis[-2])
    return SpectrumEstimate(chis, stderr, gap_top, math.exp(-gap_top / 2.0), n, replicas)


def projective_system(cocycle: CocycleSpec, name: str | None = None) -> SystemSpec:
    """The projectivized cocycle as a SystemSpec on direction space."""
    maps = tuple(ProjectiveMap(m) for m in cocycle.matrices)
    label = name if name is not None else (cocycle.name + "_projective" if cocycle.name else "")
    return SystemSpec(maps, tuple(float(q) for q in cocycle.probs), name=label)


def verify_lc_rate(
    cocycle: CocycleSpec,
    x=None,
    radius: float = 1e-3,
    n: int = 200,
    replicas: int = 256,
    seed: int = 0,
    spectrum: SpectrumEstimate | None = None,
) -> LcVerification:
    """Check the projectivized cocycle contracts small balls at the gap rate.

    Runs the ball probe at q_target = (1 + q_lc) / 2, halfway between the
    spectral prediction and no contraction at all. Refuses when the top gap
    is not positive (an isometric or gapless cocycle has no rate to verify).
    The default center is the first coordinate axis.
    """
    est = spectrum if spectrum is not None else estimate_spectrum(cocycle, 1000, 64, seed)
    if est.gap_top <= 1e-9:
        raise RefusalError(
            f"top Lyapunov gap {est.gap_top:.3e} is not positive; "
            "there is no contraction rate to verify"
        )
    q_target = (1.0 + est.q_lc) / 2.0
    center = np.zeros(cocycle.dim)
    center[0] = 1.0
    if x is not None:
        center = np.asarray(x, dtype=float)
    frac = local_contraction_probe(
        projective_system(cocycle), center, radius, n, replicas, q_target, seed
    )
    return LcVerification(float(frac), q_target, radius, n, replicas, est)


def _rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def cocycle_gallery(name: str) -> CocycleSpec:
    """Named cocycles used throughout the tests and the command line."""
    builders = {
        "diag_rot": lambda: CocycleSpec(
            [np.diag([2.0, 0.5]), _rotation_matrix(math.pi / 4.0)],
            (0.5, 0.5),
            name="diag_rot",
        ),
        "single_hyperbolic": lambda: CocycleSpec(
            [np.array([[2.0, 1.0], [0.0, 0.5]])], (1.0,), name="single_hyperbolic"
        ),
        "rotation_only": lambda: CocycleSpec(
            [_rotation_matrix(2.0 * math.pi * (math.sqrt(2.0) - 1.0))],
            (1.0,),
            name="rotation_only",
        ),
    }
    if name not in builders:
        raise KeyError(f"unknown cocycle {name!r}; known ids: {sorted(builders)}")
    return builders[name]()


def cocycle_gallery_ids() -> tuple[str, ...]:
    return ("diag_rot", "single_hyperbolic", "rotation_only")
