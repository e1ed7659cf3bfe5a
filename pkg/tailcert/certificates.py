"""
Closed-form tail certificates for push-forward generators.

Every certificate has the shape

    P(|uᵀ(f̂(z) − E f̂(z))| ≥ t) ≤ min(1, prefactor · exp(−(t / scale)^k))

with k = 2 (sub-Gaussian) or k = 1 (sub-exponential). Two constant modes:

- tight: single-direction inequalities with every constant explicit
- paper_form: theorem-statement shapes C²·p·(...) with a configurable absolute
  constant C, flagged in the provenance as assumed
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, Field

from tailcert.config import get_settings
from tailcert.errors import DomainError
from tailcert.latents import CertificateParams
from tailcert.network import LipschitzBound

logger = logging.getLogger(__name__)


class Family(str, Enum):
    SUB_GAUSSIAN = "sub_gaussian"
    SUB_EXPONENTIAL = "sub_exponential"


class ConstantMode(str, Enum):
    TIGHT = "tight"
    PAPER_FORM = "paper_form"

    @classmethod
    def parse(cls, text: str) -> "ConstantMode":
        return cls.PAPER_FORM if text in ("paper", "paper_form") else cls(text)


class Theorem:
    """Provenance ids of the concentration results behind each certificate."""
    GAUSSIAN = "gaussian-lipschitz-concentration"
    LOG_CONCAVE = "log-concave-cheeger-concentration"
    STRONGLY_LOG_CONCAVE = "strongly-log-concave-concentration"
    MANIFOLD = "gromov-levy-manifold-concentration"
    DIFFUSION = "diffusion-augmented-gaussian-concentration"


@dataclass(frozen=True, eq=False)
class TailCertificate:
    family: Family
    scale: float
    constant_mode: ConstantMode
    p: int
    provenance: Dict = field(default_factory=dict)
    prefactor: float = 2.0

    def __post_init__(self):
        if not self.scale >= 0:
            raise DomainError(f"certificate scale must be nonnegative, got {self.scale}")
        if self.p < 1:
            raise DomainError(f"output dimension must be positive, got {self.p}")

    def unclamped(self, t):
        t = np.asarray(t, dtype=np.float64)
        if math.isinf(self.scale):
            return np.full_like(t, self.prefactor)
        if self.scale == 0:
            return np.where(t > 0, 0.0, self.prefactor)
        power = 2 if self.family is Family.SUB_GAUSSIAN else 1
        return self.prefactor * np.exp(-((t / self.scale) ** power))


def evaluate(cert: TailCertificate, t: float) -> float:
    """Certified bound on P(|uᵀ(x − E x)| ≥ t), clamped to [0, 1]."""
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    return float(min(1.0, cert.unclamped(t)))


def evaluate_grid(cert: TailCertificate, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if np.any(grid < 0):
        raise DomainError("grid values must be nonnegative")
    return np.minimum(1.0, cert.unclamped(grid))


def is_vacuous(cert: TailCertificate, t):
    """True where the closed form exceeds 1 and carries no information; t may be a grid."""
    flags = np.asarray(cert.unclamped(t)) > 1.0
    return bool(flags) if flags.ndim == 0 else flags


def vacuous_below(cert: TailCertificate) -> float:
    """The t under which the closed form exceeds 1: scale·(ln prefactor)^(1/k)."""
    if cert.prefactor <= 1.0:
        return 0.0
    if math.isinf(cert.scale):
        return math.inf
    power = 2 if cert.family is Family.SUB_GAUSSIAN else 1
    return cert.scale * math.log(cert.prefactor) ** (1.0 / power)


def quantile(cert: TailCertificate, delta: float) -> float:
    """Smallest t with evaluate(cert, t) ≤ delta."""
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if math.isinf(cert.scale):
        return math.inf
    if cert.scale == 0:
        return 0.0

    level = math.log(cert.prefactor / delta)
    if cert.family is Family.SUB_GAUSSIAN:
        t = cert.scale * math.sqrt(level)
    else:
        t = cert.scale * level
    # Rounding can leave the closed-form root a few ulps short.
    while evaluate(cert, t) > delta:
        t = float(np.nextafter(t, math.inf))
    return t


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _provenance(
    theorem: str,
    lip: LipschitzBound,
    params: Optional[CertificateParams],
    mode: ConstantMode,
    assumed: Dict,
    **extra,
) -> Dict:
    record = {
        "theorem": theorem,
        "constant_mode": mode.value,
        "lipschitz": lip.to_record(),
        "latent_params": params.to_record() if params is not None else {},
        "assumed_constants": assumed,
    }
    record.update(extra)
    return record


def resolve_paper_constant(paper_constant: Optional[float]) -> float:
    c = get_settings().paper_constant if paper_constant is None else paper_constant
    if not c > 0:
        raise DomainError("absolute constant C must be positive")
    return c


def certify_gaussian(
    lip: LipschitzBound,
    params: CertificateParams,
    p: int,
    mode: ConstantMode = ConstantMode.TIGHT,
    paper_constant: Optional[float] = None,
) -> TailCertificate:
    """
    Gaussian latent N(μ, Σ).
    tight: C_p² = 2·𝓛²·||Σ||; paper_form: C_p² = C²·p·𝓛²·||Σ||.
    """
    mode = ConstantMode(mode)
    sigma_norm = params.require("sigma_op_norm")
    if mode is ConstantMode.TIGHT:
        scale_sq = 2.0 * lip.value**2 * sigma_norm
        assumed = {}
    else:
        c = resolve_paper_constant(paper_constant)
        scale_sq = c**2 * p * lip.value**2 * sigma_norm
        assumed = {"C": c}
    cert = TailCertificate(
        family=Family.SUB_GAUSSIAN,
        scale=math.sqrt(scale_sq),
        constant_mode=mode,
        p=p,
        provenance=_provenance(Theorem.GAUSSIAN, lip, params, mode, assumed),
    )
    logger.info(f"[OK] Gaussian certificate ({mode.value}): scale {cert.scale:.6g}")
    return cert


def certify_logconcave(
    lip: LipschitzBound,
    params: CertificateParams,
    p: int,
    mode: ConstantMode = ConstantMode.TIGHT,
    paper_constant: Optional[float] = None,
    c6: Optional[float] = None,
) -> TailCertificate:
    """
    Log-concave latent with Cheeger constant Ψ_z (sub-exponential).
    tight: exp(−Ψ·t / (C₆·𝓛·||Σ^{1/2}||)); paper_form: 2exp(−t/C_p),
    C_p = C·√p·𝓛·||Σ^{1/2}|| / Ψ.
    """
    mode = ConstantMode(mode)
    cheeger = params.require("cheeger")
    sqrt_norm = params.require("sigma_sqrt_op_norm")
    assumed = {"cheeger_source": params.cheeger_source or "user-supplied"}
    if mode is ConstantMode.TIGHT:
        c6 = get_settings().c6 if c6 is None else c6
        scale = c6 * lip.value * sqrt_norm / cheeger
        prefactor = 1.0
        assumed["C6"] = c6
    else:
        c = resolve_paper_constant(paper_constant)
        scale = c * math.sqrt(p) * lip.value * sqrt_norm / cheeger
        prefactor = 2.0
        assumed["C"] = c
    cert = TailCertificate(
        family=Family.SUB_EXPONENTIAL,
        scale=scale,
        constant_mode=mode,
        p=p,
        provenance=_provenance(Theorem.LOG_CONCAVE, lip, params, mode, assumed),
        prefactor=prefactor,
    )
    logger.info(f"[OK] Log-concave certificate ({mode.value}): scale {cert.scale:.6g}")
    return cert


def certify_strongly_logconcave(
    lip: LipschitzBound,
    params: CertificateParams,
    p: int,
    mode: ConstantMode = ConstantMode.TIGHT,
    paper_constant: Optional[float] = None,
) -> TailCertificate:
    """
    γ-strongly log-concave latent.
    tight: C_p² = 4·𝓛²/γ; paper_form: C_p² = C²·p·𝓛²·||Σ||/γ.
    """
    mode = ConstantMode(mode)
    gamma = params.require("gamma")
    if mode is ConstantMode.TIGHT:
        scale_sq = 4.0 * lip.value**2 / gamma
        assumed = {}
    else:
        c = resolve_paper_constant(paper_constant)
        scale_sq = c**2 * p * lip.value**2 * params.require("sigma_op_norm") / gamma
        assumed = {"C": c}
    if params.gamma_source:
        assumed["gamma_source"] = params.gamma_source
    cert = TailCertificate(
        family=Family.SUB_GAUSSIAN,
        scale=math.sqrt(scale_sq),
        constant_mode=mode,
        p=p,
        provenance=_provenance(Theorem.STRONGLY_LOG_CONCAVE, lip, params, mode, assumed),
    )
    logger.info(f"[OK] Strongly log-concave certificate ({mode.value}): scale {cert.scale:.6g}")
    return cert


def certify_manifold(
    lip: LipschitzBound,
    params: CertificateParams,
    p: int,
    mode: ConstantMode = ConstantMode.TIGHT,
    paper_constant: Optional[float] = None,
) -> TailCertificate:
    """
    Latent uniform on a manifold with Ricci curvature ≥ λ > 0, embedded with
    Lipschitz constant L_φ.
    tight: C_λ² = 2·𝓛²·L_φ²/λ; paper_form: C_λ² = C²·p·𝓛²·L_φ²/λ.
    """
    mode = ConstantMode(mode)
    ricci = params.require("ricci_lower")
    embedding = params.require("embedding_lipschitz")
    if not ricci > 0:
        raise DomainError(f"Ricci lower bound must be positive, got {ricci}")
    if mode is ConstantMode.TIGHT:
        scale_sq = 2.0 * lip.value**2 * embedding**2 / ricci
        assumed = {}
    else:
        c = resolve_paper_constant(paper_constant)
        scale_sq = c**2 * p * lip.value**2 * embedding**2 / ricci
        assumed = {"C": c}
    cert = TailCertificate(
        family=Family.SUB_GAUSSIAN,
        scale=math.sqrt(scale_sq),
        constant_mode=mode,
        p=p,
        provenance=_provenance(Theorem.MANIFOLD, lip, params, mode, assumed),
    )
    logger.info(f"[OK] Manifold certificate ({mode.value}): scale {cert.scale:.6g}")
    return cert


def certify_for_latent(
    lip: LipschitzBound,
    latent,
    params: CertificateParams,
    p: int,
    mode: ConstantMode = ConstantMode.TIGHT,
    paper_constant: Optional[float] = None,
) -> TailCertificate:
    """Pick the certificate matching a latent family."""
    kind = latent.kind
    if kind == "gaussian":
        return certify_gaussian(lip, params, p, mode, paper_constant)
    if kind == "slc":
        return certify_strongly_logconcave(lip, params, p, mode, paper_constant)
    if kind == "sphere":
        return certify_manifold(lip, params, p, mode, paper_constant)
    return certify_logconcave(lip, params, p, mode, paper_constant)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

class CertificateRecord(BaseModel):
    family: Family
    scale: float = Field(ge=0)
    prefactor: float = Field(gt=0)
    constant_mode: ConstantMode
    p: int = Field(gt=0)
    provenance: Dict
    vacuous_below: Optional[float] = None


def certificate_to_record(cert: TailCertificate) -> Dict:
    record = CertificateRecord(
        family=cert.family,
        scale=cert.scale,
        prefactor=cert.prefactor,
        constant_mode=cert.constant_mode,
        p=cert.p,
        provenance=cert.provenance,
        vacuous_below=vacuous_below(cert),
    )
    # Python-mode dump keeps an infinite scale as float("inf") for json.dumps.
    data = record.model_dump()
    data["family"] = record.family.value
    data["constant_mode"] = record.constant_mode.value
    return data


def certificate_from_record(data: Dict) -> TailCertificate:
    record = CertificateRecord.model_validate(data)
    return TailCertificate(
        family=record.family,
        scale=record.scale,
        constant_mode=record.constant_mode,
        p=record.p,
        provenance=record.provenance,
        prefactor=record.prefactor,
    )
