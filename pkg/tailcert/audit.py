"""
Empirical tail diagnostics for generated samples.

Data Structures:
- SampleSet: (n, p) sample matrix plus free-text provenance
- EmpiricalTailReport: exceedance curve vs certified bound for one direction

Algorithms:
- Exceedance curve by binary search over sorted projections
- ψ₂ / ψ₁ Orlicz norm estimates by root finding on log-mean-exp
- Hill tail index from descending order statistics
- Union-bound maxima check and binomial-slack certificate comparison
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import logsumexp

from tailcert.certificates import (
    ConstantMode,
    Family,
    TailCertificate,
    certify_gaussian,
    evaluate_grid,
    is_vacuous,
    quantile,
)
from tailcert.config import get_settings
from tailcert.errors import DomainError, ShapeError
from tailcert.latents import GaussianLatent, certificate_params, sample
from tailcert.network import Activation, certified_lipschitz, forward, generator_widths, random_network
from tailcert.numerics import RngStream

logger = logging.getLogger(__name__)

COMPARISON_NOTE = (
    "comparison mechanics (binomial slack, minimum expected exceedances, "
    "direction panel) are tool decisions, not part of any theorem"
)


class Centering(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"


@dataclass(frozen=True, eq=False)
class SampleSet:
    samples: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ShapeError(f"samples must be a nonempty (n, p) array, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise DomainError("samples contain non-finite values")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def p(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class Violation:
    t: float
    empirical: float
    bound: float
    slack: float


@dataclass(frozen=True)
class Verdict:
    consistent: bool
    underpowered: bool = False
    violation: Optional[Violation] = None

    def to_record(self) -> Dict:
        if self.consistent:
            return {"verdict": "consistent_with_certificate", "underpowered": self.underpowered}
        return {"verdict": "violation", **self.violation.__dict__}


@dataclass(frozen=True)
class HillResult:
    k: int
    index_estimate: float


@dataclass(frozen=True, eq=False)
class EmpiricalTailReport:
    direction: np.ndarray
    centering: Centering
    grid: np.ndarray
    empirical_exceedance: np.ndarray
    certificate_bound: np.ndarray
    vacuous: np.ndarray
    psi2_estimate: float
    psi1_estimate: float
    hill: Optional[HillResult]
    verdict: Verdict
    direction_normalized: bool = False

    def to_record(self) -> Dict:
        return {
            "direction": self.direction.tolist(),
            "direction_normalized": self.direction_normalized,
            "centering": self.centering.value,
            "grid": self.grid.tolist(),
            "empirical_exceedance": self.empirical_exceedance.tolist(),
            "certificate_bound": self.certificate_bound.tolist(),
            "vacuous": self.vacuous.tolist(),
            "psi2_estimate": self.psi2_estimate,
            "psi1_estimate": self.psi1_estimate,
            "hill": None if self.hill is None else self.hill.__dict__,
            "verdict": self.verdict.to_record(),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.grid,
                "empirical_exceedance": self.empirical_exceedance,
                "certificate_bound": self.certificate_bound,
                "vacuous": self.vacuous,
            }
        )


@dataclass(frozen=True)
class GrowthCheck:
    passed: bool
    max_deviation: float
    allowance: float
    n: int
    delta: float


@dataclass(frozen=True, eq=False)
class AuditResult:
    reports: List[EmpiricalTailReport]
    growth_checks: List[Optional[GrowthCheck]] = field(default_factory=list)

    @property
    def violated(self) -> bool:
        return any(not r.verdict.consistent for r in self.reports)

    def to_record(self) -> Dict:
        return {
            "verdict": "violation" if self.violated else "consistent_with_certificate",
            "note": COMPARISON_NOTE,
            "directions": [
                {**report.to_record(), "max_growth": None if check is None else check.__dict__}
                for report, check in zip(self.reports, self.growth_checks)
            ],
        }


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

def _unit(u, p: int):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (p,):
        raise ShapeError(f"direction must have {p} entries, got shape {u.shape}")
    norm = float(np.linalg.norm(u))
    if norm == 0:
        raise DomainError("direction must be nonzero")
    if abs(norm - 1.0) <= 1e-12:
        return u, False
    logger.warning(f"[WARNING] Direction had norm {norm:.6g}; normalized")
    return u / norm, True


def center_of(s: SampleSet, centering: Centering = Centering.MEAN) -> np.ndarray:
    if Centering(centering) is Centering.MEDIAN:
        return np.median(s.samples, axis=0)
    return np.mean(s.samples, axis=0)


def projections(s: SampleSet, u, centering: Centering = Centering.MEAN) -> np.ndarray:
    """uᵀ(x_i − center) for every sample."""
    u, _ = _unit(u, s.p)
    return (s.samples - center_of(s, centering)) @ u


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("grid must be a nonempty list of t values")
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise DomainError("grid must be nonnegative and sorted ascending")
    return grid


def exceedance_curve(s: SampleSet, u, centering: Centering = Centering.MEAN, grid=()) -> np.ndarray:
    """Fraction of samples with |uᵀ(x − center)| ≥ t for each t in grid."""
    grid = _check_grid(grid)
    magnitudes = np.sort(np.abs(projections(s, u, centering)))
    at_least = s.n - np.searchsorted(magnitudes, grid, side="left")
    return at_least / s.n


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _deviations(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 2:
        raise DomainError("need at least two values")
    if not np.all(np.isfinite(values)):
        raise DomainError("values contain non-finite entries")
    return values - values.mean()


def orlicz_psi2_estimate(values) -> float:
    """Smallest K with mean(exp((v − v̄)² / K²)) ≤ 2."""
    d = _deviations(values)
    if np.ptp(values) == 0:
        return 0.0
    n = d.size
    m = float(np.max(np.abs(d)))
    target = math.log(n) + math.log(2.0)

    def excess(k):
        return logsumexp((d / k) ** 2) - target

    lo = 0.5 * m / math.sqrt(math.log(2.0 * n))
    hi = 2.0 * m / math.sqrt(math.log(2.0))
    return float(brentq(excess, lo, hi, xtol=1e-14 * m, rtol=1e-10))


def orlicz_psi1_estimate(values) -> float:
    """Smallest K with mean(exp(|v − v̄| / K)) ≤ 2."""
    d = np.abs(_deviations(values))
    if np.ptp(values) == 0:
        return 0.0
    n = d.size
    m = float(np.max(d))
    target = math.log(n) + math.log(2.0)

    def excess(k):
        return logsumexp(d / k) - target

    lo = 0.5 * m / math.log(2.0 * n)
    hi = 2.0 * m / math.log(2.0)
    return float(brentq(excess, lo, hi, xtol=1e-14 * m, rtol=1e-10))


def hill_estimator(values, k: int) -> float:
    """
    Tail index [ (1/k) Σ_{i≤k} ln(X_(i) / X_(k+1)) ]^{-1} over descending
    order statistics X_(1) ≥ ... ≥ X_(n).
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())[::-1]
    n = x.size
    if not 1 <= k < n:
        raise DomainError(f"need 1 <= k < n, got k={k}, n={n}")
    if np.any(x < 0):
        raise DomainError("Hill estimator needs nonnegative magnitudes")
    reference = x[k]
    if reference <= 0:
        raise DomainError(f"order statistic X_({k + 1}) is zero")
    mean_log = float(np.mean(np.log(x[:k] / reference)))
    if mean_log <= 0:
        raise DomainError(f"top {k + 1} order statistics are tied")
    return 1.0 / mean_log


def default_hill_k(n: int) -> int:
    settings = get_settings()
    return max(1, min(settings.hill_cap, n // settings.hill_divisor, n - 1))


# ---------------------------------------------------------------------------
# Certificate comparisons
# ---------------------------------------------------------------------------

def max_growth_check(
    s: SampleSet,
    u,
    cert: TailCertificate,
    delta: float = 0.01,
    centering: Centering = Centering.MEAN,
) -> GrowthCheck:
    """
    Union bound over the n samples: with probability ≥ 1 − delta every
    |uᵀ(x_i − center)| stays below quantile(cert, delta / n).
    """
    if cert.family is not Family.SUB_GAUSSIAN:
        raise DomainError("max_growth_check needs a sub-Gaussian certificate")
    deviation = float(np.max(np.abs(projections(s, u, centering))))
    allowance = quantile(cert, delta / s.n)
    return GrowthCheck(
        passed=deviation <= allowance,
        max_deviation=deviation,
        allowance=allowance,
        n=s.n,
        delta=delta,
    )


def compare_to_certificate(
    s: SampleSet,
    u,
    cert: TailCertificate,
    grid,
    centering: Centering = Centering.MEAN,
    slack_sigmas: Optional[float] = None,
    min_expected: Optional[float] = None,
    hill_k: Optional[int] = None,
) -> EmpiricalTailReport:
    """
    Violation iff some grid t with bound b ≥ min_expected/n has empirical
    exceedance > b + slack_sigmas·√(b(1 − b)/n).
    """
    settings = get_settings()
    slack_sigmas = settings.slack_sigmas if slack_sigmas is None else slack_sigmas
    min_expected = settings.min_expected_exceedances if min_expected is None else min_expected
    centering = Centering(centering)

    grid = _check_grid(grid)
    u, normalized = _unit(u, s.p)
    empirical = exceedance_curve(s, u, centering, grid)
    bound = evaluate_grid(cert, grid)
    slack = slack_sigmas * np.sqrt(bound * (1.0 - bound) / s.n)
    testable = bound >= min_expected / s.n
    failing = np.flatnonzero(testable & (empirical > bound + slack))

    if failing.size:
        i = int(failing[0])
        verdict = Verdict(
            consistent=False,
            violation=Violation(t=float(grid[i]), empirical=float(empirical[i]),
                                bound=float(bound[i]), slack=float(slack[i])),
        )
        logger.warning(f"[WARNING] Certificate violated at t={grid[i]:.6g}: "
                       f"empirical {empirical[i]:.4g} > bound {bound[i]:.4g} + slack {slack[i]:.2g}")
    else:
        verdict = Verdict(consistent=True, underpowered=not bool(np.any(testable)))

    signed = projections(s, u, centering)
    psi2 = orlicz_psi2_estimate(signed) if s.n >= 2 else 0.0
    psi1 = orlicz_psi1_estimate(signed) if s.n >= 2 else 0.0
    hill = None
    if s.n >= 2:
        k = default_hill_k(s.n) if hill_k is None else hill_k
        try:
            hill = HillResult(k=k, index_estimate=hill_estimator(np.abs(signed), k))
        except DomainError as e:
            logger.info(f"[STATS] Hill index unavailable: {e}")

    return EmpiricalTailReport(
        direction=u,
        centering=centering,
        grid=grid,
        empirical_exceedance=empirical,
        certificate_bound=bound,
        vacuous=is_vacuous(cert, grid),
        psi2_estimate=psi2,
        psi1_estimate=psi1,
        hill=hill,
        verdict=verdict,
        direction_normalized=normalized,
    )


def direction_panel(p: int, rng: RngStream, k: Optional[int] = None) -> np.ndarray:
    """The p canonical axes followed by k seeded random unit directions."""
    k = get_settings().random_directions if k is None else k
    random_dirs = rng.generator().standard_normal((k, p))
    random_dirs /= np.linalg.norm(random_dirs, axis=1, keepdims=True)
    return np.vstack([np.eye(p), random_dirs])


def default_grid(cert: TailCertificate, s: SampleSet, steps: Optional[int] = None) -> np.ndarray:
    """0 … quantile(cert, 1/n); the observed range when the certificate is vacuous."""
    steps = get_settings().grid_steps if steps is None else steps
    upper = quantile(cert, 1.0 / s.n) if s.n > 1 else math.inf
    if not math.isfinite(upper) or upper <= 0:
        spread = np.max(np.abs(s.samples - s.samples.mean(axis=0)))
        upper = float(spread) if spread > 0 else 1.0
    return np.linspace(0.0, upper, steps)


def audit_samples(
    s: SampleSet,
    cert: TailCertificate,
    directions,
    grid=None,
    centering: Centering = Centering.MEAN,
    delta: float = 0.01,
) -> AuditResult:
    """compare_to_certificate per direction; max-growth checks are reported, not gated."""
    if cert.p != s.p:
        logger.warning(f"[WARNING] Certificate is for p={cert.p}, samples have p={s.p}")
    grid = default_grid(cert, s) if grid is None else grid
    reports, checks = [], []
    for u in np.atleast_2d(directions):
        reports.append(compare_to_certificate(s, u, cert, grid, centering))
        if cert.family is Family.SUB_GAUSSIAN:
            checks.append(max_growth_check(s, u, cert, delta, centering))
        else:
            checks.append(None)
    result = AuditResult(reports=reports, growth_checks=checks)
    status = "violation" if result.violated else "consistent"
    logger.info(f"[STATS] Audited {s.n} samples over {len(reports)} directions: {status}")
    return result


def survival_curve(values) -> pd.DataFrame:
    """Empirical P(|X| ≥ x) at each nonzero magnitude, on log10 axes."""
    magnitudes = np.sort(np.abs(np.asarray(values, dtype=np.float64).ravel()))
    n = magnitudes.size
    survival = (n - np.arange(n)) / n
    keep = magnitudes > 0
    return pd.DataFrame(
        {"log10_t": np.log10(magnitudes[keep]), "log10_survival": np.log10(survival[keep])}
    )


# ---------------------------------------------------------------------------
# Generator sensitivity sweep
# ---------------------------------------------------------------------------

def sensitivity_sweep(
    depths: Sequence[int],
    latent_dims: Sequence[int],
    rng: RngStream,
    n: int,
    output_dim: int = 2,
) -> pd.DataFrame:
    """
    For each (depth, latent_dim): a random ReLU generator with a linear output
    layer, standard Gaussian pushforward samples, the tight Gaussian
    certificate, and the resulting audit and tail-index figures.
    """
    rows = []
    streams = iter(rng.spawn(3 * len(depths) * len(latent_dims)))
    for depth in depths:
        for latent_dim in latent_dims:
            widths = generator_widths(depth, latent_dim, output_dim)
            net = random_network(next(streams), widths, Activation.RELU, 1.0,
                                 output_activation=Activation.IDENTITY)
            latent = GaussianLatent.standard(latent_dim)
            lip = certified_lipschitz(net)
            cert = certify_gaussian(lip, certificate_params(latent), output_dim, ConstantMode.TIGHT)
            s = SampleSet(forward(net, sample(latent, next(streams), n)),
                          provenance=f"sweep depth={depth} latent_dim={latent_dim}")
            result = audit_samples(s, cert, direction_panel(output_dim, next(streams)))
            magnitudes = np.linalg.norm(s.samples - s.samples.mean(axis=0), axis=1)
            try:
                hill = hill_estimator(magnitudes, default_hill_k(n))
            except DomainError:
                hill = float("nan")
            rows.append({
                "depth": depth,
                "latent_dim": latent_dim,
                "widths": "-".join(str(w) for w in widths),
                "lipschitz": lip.value,
                "certificate_scale": cert.scale,
                "verdict": "violation" if result.violated else "consistent",
                "max_growth_passed": all(c.passed for c in result.growth_checks if c is not None),
                "hill_index": hill,
                "psi2_axis0": result.reports[0].psi2_estimate,
            })
            logger.info(f"[STATS] depth={depth} latent_dim={latent_dim}: Lipschitz {lip.value:.4g}, hill {hill:.3g}")
    return pd.DataFrame(rows)
