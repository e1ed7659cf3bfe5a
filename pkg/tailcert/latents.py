"""
Latent distributions and the parameters their concentration certificates need.

Every latent family knows how to draw samples and which constants (||Σ||,
Ψ_z, γ, λ, L_φ) it can vouch for. Constants that are assumptions rather than
theorems carry a source string that ends up in the certificate provenance.
"""

import json
import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from tailcert.config import get_settings
from tailcert.errors import CapabilityError, DomainError, ShapeError, UsageError
from tailcert.numerics import RngStream, as_matrix, as_vector, cholesky, safe_operator_norm

logger = logging.getLogger(__name__)

HEURISTIC_CHEEGER = "heuristic, not a theorem"
USER_SUPPLIED = "user-supplied"


@dataclass(frozen=True)
class CertificateParams:
    sigma_op_norm: float
    sigma_sqrt_op_norm: float
    cheeger: Optional[float] = None
    cheeger_source: Optional[str] = None
    gamma: Optional[float] = None
    gamma_source: Optional[str] = None
    ricci_lower: Optional[float] = None
    embedding_lipschitz: Optional[float] = None

    def require(self, name: str) -> float:
        value = getattr(self, name)
        if value is None:
            raise CapabilityError(f"latent distribution provides no {name}")
        return value

    def to_record(self) -> Dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


class LatentSpec:
    """Base for latent families; subclasses implement draw/params/to_record."""

    kind = "latent"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def params(self, cheeger: Optional[float], gamma: Optional[float]) -> CertificateParams:
        raise NotImplementedError

    def to_record(self) -> Dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GaussianLatent(LatentSpec):
    mu: np.ndarray
    sigma: np.ndarray

    kind = "gaussian"

    def __post_init__(self):
        mu = as_vector(self.mu, "mu")
        sigma = as_matrix(self.sigma, "sigma")
        if sigma.shape != (mu.shape[0], mu.shape[0]):
            raise ShapeError(f"sigma shape {sigma.shape} does not match mu dimension {mu.shape[0]}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_lower", cholesky(sigma))

    @classmethod
    def standard(cls, dim: int, scale: float = 1.0) -> "GaussianLatent":
        return cls(mu=np.zeros(dim), sigma=scale * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def draw(self, gen, n):
        g = gen.standard_normal((n, self.dim))
        return self.mu + g @ self._lower.T

    def params(self, cheeger=None, gamma=None):
        sigma_norm = safe_operator_norm(self.sigma)
        return CertificateParams(
            sigma_op_norm=sigma_norm,
            sigma_sqrt_op_norm=math.sqrt(sigma_norm),
            cheeger=cheeger,
            cheeger_source=USER_SUPPLIED if cheeger is not None else None,
            gamma=gamma if gamma is not None else 1.0 / sigma_norm,
            gamma_source=USER_SUPPLIED if gamma is not None else "1/||Sigma|| of the Gaussian",
        )

    def to_record(self):
        return {"kind": self.kind, "mu": self.mu.tolist(), "sigma": self.sigma.tolist()}


@dataclass(frozen=True, eq=False)
class StronglyLogConcaveLatent(LatentSpec):
    """γ-strongly log-concave latent realized by a Gaussian base, γ = 1/||Σ||."""
    base: GaussianLatent

    kind = "slc"

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def gamma(self) -> float:
        return 1.0 / safe_operator_norm(self.base.sigma)

    def draw(self, gen, n):
        return self.base.draw(gen, n)

    def params(self, cheeger=None, gamma=None):
        return self.base.params(cheeger, gamma)

    def to_record(self):
        record = self.base.to_record()
        record["kind"] = self.kind
        return record


@dataclass(frozen=True)
class UniformCubeLatent(LatentSpec):
    dimension: int
    half_side: float = 1.0

    kind = "cube"

    def __post_init__(self):
        if self.dimension < 1 or not self.half_side > 0:
            raise DomainError("cube needs dim >= 1 and a positive half side")

    @property
    def dim(self) -> int:
        return self.dimension

    def draw(self, gen, n):
        return gen.uniform(-self.half_side, self.half_side, size=(n, self.dimension))

    def params(self, cheeger=None, gamma=None):
        # Per-coordinate variance h²/3; the isotropic rescaling is folded into ||Σ^{1/2}||.
        std = self.half_side / math.sqrt(3.0)
        return _convex_body_params(std, cheeger, gamma)

    def to_record(self):
        return {"kind": self.kind, "d": self.dimension, "h": self.half_side}


@dataclass(frozen=True)
class UniformBallLatent(LatentSpec):
    dimension: int
    radius: float = 1.0

    kind = "ball"

    def __post_init__(self):
        if self.dimension < 1 or not self.radius > 0:
            raise DomainError("ball needs dim >= 1 and a positive radius")

    @property
    def dim(self) -> int:
        return self.dimension

    def draw(self, gen, n):
        direction = gen.standard_normal((n, self.dimension))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = self.radius * gen.random(n) ** (1.0 / self.dimension)
        return direction * radii[:, None]

    def params(self, cheeger=None, gamma=None):
        std = self.radius / math.sqrt(self.dimension + 2.0)
        return _convex_body_params(std, cheeger, gamma)

    def to_record(self):
        return {"kind": self.kind, "d": self.dimension, "r": self.radius}


@dataclass(frozen=True)
class SphereLatent(LatentSpec):
    """Uniform on r·S^{d_ext − 1}, intrinsic dimension d_ext − 1 ≥ 2."""
    ambient_dim: int
    radius: float = 1.0

    kind = "sphere"

    def __post_init__(self):
        if self.ambient_dim < 3:
            raise DomainError(f"sphere needs ambient dimension >= 3, got {self.ambient_dim}")
        if not self.radius > 0:
            raise DomainError("sphere radius must be positive")

    @property
    def dim(self) -> int:
        return self.ambient_dim

    @property
    def intrinsic_dim(self) -> int:
        return self.ambient_dim - 1

    def draw(self, gen, n):
        g = gen.standard_normal((n, self.ambient_dim))
        return self.radius * g / np.linalg.norm(g, axis=1, keepdims=True)

    def params(self, cheeger=None, gamma=None):
        if gamma is not None:
            raise CapabilityError("a uniform sphere latent is not strongly log-concave")
        sigma_norm = self.radius**2 / self.ambient_dim
        return CertificateParams(
            sigma_op_norm=sigma_norm,
            sigma_sqrt_op_norm=math.sqrt(sigma_norm),
            cheeger=cheeger,
            cheeger_source=USER_SUPPLIED if cheeger is not None else None,
            ricci_lower=(self.intrinsic_dim - 1) / self.radius**2,
            embedding_lipschitz=1.0,
        )

    def to_record(self):
        return {"kind": self.kind, "d": self.ambient_dim, "r": self.radius}


def _convex_body_params(std: float, cheeger: Optional[float], gamma: Optional[float]) -> CertificateParams:
    if gamma is not None:
        raise CapabilityError("uniform convex-body latents are not strongly log-concave")
    if cheeger is None:
        cheeger = get_settings().default_cheeger
        source = HEURISTIC_CHEEGER
        logger.warning(f"[WARNING] Using default Cheeger constant {cheeger} ({source})")
    else:
        source = USER_SUPPLIED
    return CertificateParams(
        sigma_op_norm=std**2,
        sigma_sqrt_op_norm=std,
        cheeger=cheeger,
        cheeger_source=source,
    )


def sample(spec: LatentSpec, rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. draws as an (n, dim) array."""
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    return spec.draw(rng.generator(), n)


def certificate_params(
    spec: LatentSpec, cheeger: Optional[float] = None, gamma: Optional[float] = None
) -> CertificateParams:
    """
    Constants for the certificate of this latent family.
    cheeger / gamma are user overrides; cube and ball fall back to the configured
    heuristic Cheeger constant, flagged as such.
    """
    if cheeger is not None and not cheeger > 0:
        raise DomainError("Cheeger constant must be positive")
    if gamma is not None and not gamma > 0:
        raise DomainError("gamma must be positive")
    return spec.params(cheeger, gamma)


def geodesic_distance(x, y, radius: float) -> np.ndarray:
    """Great-circle distance r·arccos(xᵀy / r²) between points of r·S^{d−1}."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cosine = np.clip(np.sum(x * y, axis=-1) / radius**2, -1.0, 1.0)
    return radius * np.arccos(cosine)


# ---------------------------------------------------------------------------
# Command-line mini-grammar and JSON records
# ---------------------------------------------------------------------------

_DIAG = re.compile(r"^diag\(([^)]*)\)$")


def parse_matrix_token(token: str, dim: int) -> np.ndarray:
    """'I' → identity, '4' → 4·I, 'diag(1;4)' → diagonal matrix."""
    token = token.strip()
    if token == "I":
        return np.eye(dim)
    match = _DIAG.match(token)
    if match:
        entries = [float(v) for v in match.group(1).split(";")]
        if len(entries) != dim:
            raise UsageError(f"diag() needs {dim} entries, got {len(entries)}")
        return np.diag(entries)
    try:
        return float(token.rstrip("I") or 1.0) * np.eye(dim)
    except ValueError:
        raise UsageError(f"cannot parse matrix {token!r}; use I, a number, or diag(a;b;...)")


def parse_options(text: str):
    """'kind:k=v,k=v' → (kind, {k: v})."""
    kind, _, rest = text.partition(":")
    options = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"expected key=value, got {item!r} in {text!r}")
        options[key.strip()] = value.strip()
    return kind.strip().lower(), options


def int_option(options: Dict, key: str, text: str) -> int:
    if key not in options:
        raise UsageError(f"{text!r} needs {key}=")
    try:
        return int(options[key])
    except ValueError:
        raise UsageError(f"{key} must be an integer in {text!r}")


def float_option(options: Dict, key: str, text: str, default: Optional[float] = None) -> float:
    if key not in options:
        if default is None:
            raise UsageError(f"{text!r} needs {key}=")
        return default
    try:
        return float(options[key])
    except ValueError:
        raise UsageError(f"{key} must be a number in {text!r}")


def record_field(record: Dict, key: str):
    """record[key], or a UsageError naming the missing field."""
    if key not in record:
        raise UsageError(f"{record.get('kind')!r} record is missing {key!r}")
    return record[key]


def parse_latent_spec(text: str) -> LatentSpec:
    """
    gaussian:d=64,sigma=I   slc:d=4,sigma=2   cube:d=2,h=1   ball:d=3,r=1   sphere:d=64,r=1
    """
    kind, options = parse_options(text)
    d = int_option(options, "d", text)
    if kind in ("gaussian", "slc"):
        mu = np.full(d, float_option(options, "mu", text, 0.0))
        base = GaussianLatent(mu=mu, sigma=parse_matrix_token(options.get("sigma", "I"), d))
        return base if kind == "gaussian" else StronglyLogConcaveLatent(base)
    if kind == "cube":
        return UniformCubeLatent(d, float_option(options, "h", text, 1.0))
    if kind == "ball":
        return UniformBallLatent(d, float_option(options, "r", text, 1.0))
    if kind == "sphere":
        return SphereLatent(d, float_option(options, "r", text, 1.0))
    raise UsageError(f"unknown latent kind {kind!r}")


def latent_from_record(record: Dict) -> LatentSpec:
    if not isinstance(record, dict):
        raise UsageError(f"latent record must be a JSON object, got {type(record).__name__}")
    kind = record.get("kind")
    if kind in ("gaussian", "slc"):
        base = GaussianLatent(mu=record_field(record, "mu"), sigma=record_field(record, "sigma"))
        return base if kind == "gaussian" else StronglyLogConcaveLatent(base)
    if kind == "cube":
        return UniformCubeLatent(int(record_field(record, "d")), float(record.get("h", 1.0)))
    if kind == "ball":
        return UniformBallLatent(int(record_field(record, "d")), float(record.get("r", 1.0)))
    if kind == "sphere":
        return SphereLatent(int(record_field(record, "d")), float(record.get("r", 1.0)))
    raise UsageError(f"unknown latent kind {kind!r}")


def load_latent(text: str) -> LatentSpec:
    """Mini-grammar, or a JSON record when text starts with '{'."""
    if text.lstrip().startswith("{"):
        return latent_from_record(json.loads(text))
    return parse_latent_spec(text)
