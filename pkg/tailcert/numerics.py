"""
Dense linear algebra and seeded randomness shared by every other module.

Data Structures:
- Matrix / Vector: float64 numpy arrays, checked finite on entry
- RngStream: (seed, stream_id) pair keyed into a numpy SeedSequence

Algorithms:
- Power iteration on mᵀm for the dominant singular value (estimate)
- Certificate-facing operator norms from svdvals, capped by Frobenius
- Cholesky with the failing pivot reported
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.linalg import svdvals

from tailcert.config import get_settings
from tailcert.errors import DefinitenessError, DomainError, NonConvergenceError, ShapeError

logger = logging.getLogger(__name__)

RNG_ALGORITHM = (
    f"numpy.random.PCG64 seeded by SeedSequence(seed, spawn_key=(stream_id,)); "
    f"numpy {np.__version__}"
)

# Stream used when power iteration stagnates on a null start vector.
_RESTART_STREAM = 0x5EED


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ShapeError(f"{name} must be a nonempty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{name} has non-finite entries")
    return m


def as_vector(data, name: str = "vector") -> np.ndarray:
    v = np.array(data, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] == 0:
        raise ShapeError(f"{name} must be a nonempty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} has non-finite entries")
    return v


@dataclass(frozen=True)
class RngStream:
    """
    Reproducible random stream.
    Equal (seed, stream_id) give bit-identical draws; distinct stream ids are
    independent because they enter the SeedSequence spawn key.
    """
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= value < 2**64:
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(sequence))

    def spawn(self, k: int) -> List["RngStream"]:
        """k child streams, deterministic in (seed, stream_id)."""
        children = []
        for i in range(k):
            child_id = np.random.SeedSequence((self.stream_id, i)).generate_state(1, np.uint64)[0]
            children.append(RngStream(self.seed, int(child_id)))
        return children


def frobenius_norm(m) -> float:
    m = as_matrix(m)
    return float(np.linalg.norm(m, "fro"))


def spectral_norm(m, tol: Optional[float] = None, max_iters: Optional[int] = None) -> float:
    """
    Dominant singular value by power iteration on mᵀm.

    The estimate ||m x|| for a unit iterate x never exceeds σ_max, and with
    nearly tied top singular values it can stall more than tol below it.
    Callers that need an upper bound go through safe_operator_norm instead.
    """
    settings = get_settings()
    tol = settings.spectral_tol if tol is None else tol
    max_iters = settings.spectral_max_iters if max_iters is None else max_iters
    if tol <= 0 or max_iters <= 0:
        raise DomainError("tol and max_iters must be positive")

    m = as_matrix(m)
    if not np.any(m):
        return 0.0

    x = np.ones(m.shape[1]) / math.sqrt(m.shape[1])
    restarted = False
    estimate = 0.0
    stop = tol * 1e-2

    for iteration in range(max_iters):
        v = m @ x
        new_estimate = float(np.linalg.norm(v))
        w = m.T @ v
        w_norm = float(np.linalg.norm(w))

        if w_norm == 0.0:
            # Start vector in the null space; restart from a seeded random direction.
            if restarted:
                raise NonConvergenceError("power iteration stagnated twice", estimate)
            restarted = True
            x = RngStream(0, _RESTART_STREAM).generator().standard_normal(m.shape[1])
            x /= np.linalg.norm(x)
            continue

        x = w / w_norm
        if iteration > 0 and abs(new_estimate - estimate) <= stop * new_estimate:
            return new_estimate
        estimate = new_estimate

    raise NonConvergenceError(f"power iteration did not converge in {max_iters} iterations", estimate)


def operator_norm_bound(m, tol: Optional[float] = None) -> float:
    """σ_max from a full SVD, inflated by (1 + tol) to absorb rounding."""
    tol = get_settings().spectral_tol if tol is None else tol
    if tol < 0:
        raise DomainError("tol must be nonnegative")
    m = as_matrix(m)
    return float(svdvals(m, check_finite=False)[0]) * (1.0 + tol)


def safe_operator_norm(m, tol: Optional[float] = None) -> float:
    """min(σ_max·(1 + tol), ||m||_F): the operator-norm bound certificates are built on."""
    frobenius = frobenius_norm(m)
    try:
        bound = operator_norm_bound(m, tol)
    except np.linalg.LinAlgError as e:
        logger.warning(f"[WARNING] SVD failed ({e}); falling back to the Frobenius norm")
        return frobenius
    return min(bound, frobenius)


def cholesky(sigma) -> np.ndarray:
    """
    Lower-triangular L with L Lᵀ = sigma.

    Raises DefinitenessError naming the first pivot that is not positive
    (pivot ≤ 1e-12 · max diagonal).
    """
    sigma = as_matrix(sigma, "sigma")
    n, cols = sigma.shape
    if n != cols:
        raise ShapeError(f"sigma must be square, got {sigma.shape}")

    scale = float(np.max(np.abs(sigma)))
    if np.max(np.abs(sigma - sigma.T)) > 1e-10 * scale:
        raise DefinitenessError("sigma is not symmetric")

    max_diagonal = float(np.max(np.diag(sigma)))
    if max_diagonal <= 0:
        raise DefinitenessError("sigma has no positive diagonal entry", 0)
    threshold = math.sqrt(1e-12 * max_diagonal)

    symmetric = 0.5 * (sigma + sigma.T)
    try:
        lower = np.linalg.cholesky(symmetric)
    except np.linalg.LinAlgError:
        raise DefinitenessError("sigma is not positive definite", _failing_pivot(symmetric))

    small = np.flatnonzero(np.diag(lower) <= threshold)
    if small.size:
        raise DefinitenessError("sigma is numerically singular", int(small[0]))
    return lower


def _failing_pivot(sigma: np.ndarray) -> int:
    """Index of the first leading principal block that fails to factor."""
    for k in range(1, sigma.shape[0] + 1):
        try:
            np.linalg.cholesky(sigma[:k, :k])
        except np.linalg.LinAlgError:
            return k - 1
    return sigma.shape[0] - 1
