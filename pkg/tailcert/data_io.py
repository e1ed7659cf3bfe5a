"""
Heavy-tailed reference targets, price CSV ingestion, and sample-set files.

Targets:
- Student-t with dof ν: mode + A·g / √(w/ν), g ∼ N(0, I), w ∼ χ²_ν, A = chol(scale)
- Cauchy is Student-t with ν = 1
- Gaussian: μ + A·g

Returns are simple returns in basis points by default, (c_t − c_{t−1}) / c_{t−1} · 10⁴,
with log returns ln(c_t / c_{t−1}) · 10⁴ available on request.
"""

import io
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from tailcert.audit import SampleSet
from tailcert.errors import DomainError, IngestionError, ShapeError, UsageError
from tailcert.fileio import atomic_write_text
from tailcert.latents import float_option, int_option, parse_matrix_token, parse_options, record_field
from tailcert.numerics import RngStream, as_matrix, as_vector, cholesky

logger = logging.getLogger(__name__)

BASIS_POINTS = 1e4


class ReturnKind(str, Enum):
    SIMPLE = "simple"
    LOG = "log"


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StudentTTarget:
    mode: np.ndarray
    scale: np.ndarray
    dof: float = 1.0

    kind = "student"

    def __post_init__(self):
        mode = as_vector(self.mode, "mode")
        scale = as_matrix(self.scale, "scale")
        if scale.shape != (mode.shape[0], mode.shape[0]):
            raise ShapeError(f"scale shape {scale.shape} does not match mode dimension {mode.shape[0]}")
        if not self.dof > 0:
            raise DomainError(f"dof must be positive, got {self.dof}")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "_lower", cholesky(scale))

    @property
    def dim(self) -> int:
        return self.mode.shape[0]

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        g = gen.standard_normal((n, self.dim))
        w = gen.chisquare(self.dof, size=n)
        return self.mode + (g @ self._lower.T) / np.sqrt(w / self.dof)[:, None]

    def to_record(self) -> Dict:
        return {"kind": self.kind, "mode": self.mode.tolist(), "scale": self.scale.tolist(), "dof": self.dof}


class CauchyTarget(StudentTTarget):
    """Multivariate Cauchy: Student-t with one degree of freedom."""

    kind = "cauchy"

    def __init__(self, mode, scale):
        super().__init__(mode=mode, scale=scale, dof=1.0)

    @classmethod
    def standard(cls, dim: int) -> "CauchyTarget":
        return cls(np.zeros(dim), np.eye(dim))

    def to_record(self) -> Dict:
        return {"kind": self.kind, "mode": self.mode.tolist(), "scale": self.scale.tolist()}


@dataclass(frozen=True, eq=False)
class GaussianTarget:
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

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return self.mu + gen.standard_normal((n, self.dim)) @ self._lower.T

    def to_record(self) -> Dict:
        return {"kind": self.kind, "mu": self.mu.tolist(), "sigma": self.sigma.tolist()}


TargetSpec = Union[StudentTTarget, CauchyTarget, GaussianTarget]


def sample_target(spec: TargetSpec, rng: RngStream, n: int) -> SampleSet:
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    samples = spec.draw(rng.generator(), n)
    return SampleSet(samples, provenance=f"{spec.kind} target, seed={rng.seed}, stream={rng.stream_id}")


def parse_target_spec(text: str) -> TargetSpec:
    """cauchy:d=2[,scale=I]   student:d=2,dof=3   gaussian:d=2,sigma=I, or a JSON record."""
    if text.lstrip().startswith("{"):
        return target_from_record(json.loads(text))
    kind, options = parse_options(text)
    d = int_option(options, "d", text)
    center_key = "mode" if "mode" in options else "mu"
    center = np.full(d, float_option(options, center_key, text, 0.0))
    if kind == "cauchy":
        return CauchyTarget(center, parse_matrix_token(options.get("scale", "I"), d))
    if kind == "student":
        dof = float_option(options, "dof", text)
        return StudentTTarget(center, parse_matrix_token(options.get("scale", "I"), d), dof)
    if kind == "gaussian":
        return GaussianTarget(center, parse_matrix_token(options.get("sigma", "I"), d))
    raise UsageError(f"unknown target kind {kind!r}")


def target_from_record(record: Dict) -> TargetSpec:
    if not isinstance(record, dict):
        raise UsageError(f"target record must be a JSON object, got {type(record).__name__}")
    kind = record.get("kind")
    if kind == "cauchy":
        return CauchyTarget(record_field(record, "mode"), record_field(record, "scale"))
    if kind == "student":
        return StudentTTarget(
            record_field(record, "mode"), record_field(record, "scale"), float(record_field(record, "dof"))
        )
    if kind == "gaussian":
        return GaussianTarget(record_field(record, "mu"), record_field(record, "sigma"))
    raise UsageError(f"unknown target kind {kind!r}")


# ---------------------------------------------------------------------------
# Price ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Closes aligned on common dates: one column per instrument."""
    dates: List[str]
    closes: np.ndarray
    sources: List[str]


def _read_closes(path: Path, price_column: str, date_column: str) -> pd.Series:
    try:
        frame = pd.read_csv(path, sep=",", dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestionError(str(path), f"cannot read CSV: {e}")

    for column in (date_column, price_column):
        if column not in frame.columns:
            raise IngestionError(str(path), f"missing column {column!r}")

    # Header is line 1, so data row i sits on line i + 2.
    dates = pd.to_datetime(frame[date_column].str.strip(), format="ISO8601", errors="coerce")
    bad = np.flatnonzero(dates.isna().to_numpy())
    if bad.size:
        raise IngestionError(str(path), f"unparseable date {frame[date_column].iloc[bad[0]]!r}", int(bad[0]) + 2)

    closes = pd.to_numeric(frame[price_column].str.strip(), errors="coerce")
    bad = np.flatnonzero(closes.isna().to_numpy())
    if bad.size:
        raise IngestionError(str(path), f"unparseable price {frame[price_column].iloc[bad[0]]!r}", int(bad[0]) + 2)
    bad = np.flatnonzero((closes <= 0).to_numpy())
    if bad.size:
        raise IngestionError(str(path), f"nonpositive price {closes.iloc[bad[0]]!r}", int(bad[0]) + 2)

    dup = np.flatnonzero(dates.duplicated().to_numpy())
    if dup.size:
        raise IngestionError(str(path), f"duplicate date {frame[date_column].iloc[dup[0]]!r}", int(dup[0]) + 2)

    series = pd.Series(closes.to_numpy(dtype=np.float64), index=dates.dt.normalize())
    return series.sort_index()


def load_price_series(csv_paths: Sequence[Union[str, Path]], price_column: str, date_column: str) -> PriceSeries:
    """Inner-join closes from every file on date, ascending."""
    if not csv_paths:
        raise UsageError("at least one CSV is required")
    columns = {}
    for i, path in enumerate(csv_paths):
        columns[f"dim_{i}"] = _read_closes(Path(path), price_column, date_column)
        logger.info(f"[OK] Read {len(columns[f'dim_{i}'])} closes from {path}")
    joined = pd.concat(columns, axis=1, join="inner").sort_index()
    if len(joined) < 2:
        raise IngestionError(",".join(str(p) for p in csv_paths), "fewer than two common dates")
    return PriceSeries(
        dates=[d.strftime("%Y-%m-%d") for d in joined.index],
        closes=joined.to_numpy(dtype=np.float64),
        sources=[str(p) for p in csv_paths],
    )


def returns_from_closes(closes: np.ndarray, kind: ReturnKind = ReturnKind.SIMPLE) -> np.ndarray:
    closes = np.asarray(closes, dtype=np.float64)
    previous, current = closes[:-1], closes[1:]
    if ReturnKind(kind) is ReturnKind.LOG:
        return np.log(current / previous) * BASIS_POINTS
    return (current - previous) / previous * BASIS_POINTS


def ingest_returns(
    csv_paths: Sequence[Union[str, Path]],
    price_column: str = "Close",
    date_column: str = "Date",
    kind: ReturnKind = ReturnKind.SIMPLE,
) -> SampleSet:
    """Daily returns in basis points, one column per instrument, n = joined rows − 1."""
    kind = ReturnKind(kind)
    prices = load_price_series(csv_paths, price_column, date_column)
    returns = returns_from_closes(prices.closes, kind)
    provenance = (
        f"{kind.value} returns in basis points from {', '.join(prices.sources)}; "
        f"{prices.dates[0]}..{prices.dates[-1]}"
    )
    logger.info(f"[OK] Ingested {returns.shape[0]} returns for {returns.shape[1]} instruments")
    return SampleSet(returns, provenance=provenance)


# ---------------------------------------------------------------------------
# Sample-set files
# ---------------------------------------------------------------------------

def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def sample_frame(s: SampleSet) -> pd.DataFrame:
    return pd.DataFrame(s.samples, columns=[f"dim_{i}" for i in range(s.p)])


def write_sample_set(
    s: SampleSet, path: Union[str, Path], seed: Optional[int] = None, spec: Optional[Dict] = None
) -> Path:
    """CSV with a dim_0..dim_{p−1} header plus a JSON metadata sidecar."""
    buffer = io.StringIO()
    sample_frame(s).to_csv(buffer, index=False, lineterminator="\n")
    path = atomic_write_text(path, buffer.getvalue())
    meta = {"provenance": s.provenance, "seed": seed, "spec": spec, "n": s.n, "p": s.p}
    atomic_write_text(sidecar_path(path), json.dumps(meta, indent=2, sort_keys=True))
    logger.info(f"[OK] Wrote {s.n} samples to {path}")
    return path


def read_sample_set(path: Union[str, Path]) -> SampleSet:
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestionError(str(path), f"cannot read samples: {e}")
    expected = [f"dim_{i}" for i in range(frame.shape[1])]
    if list(frame.columns) != expected:
        raise IngestionError(str(path), f"header must be {','.join(expected)}")
    values = frame.apply(pd.to_numeric, errors="coerce")
    bad = np.flatnonzero(values.isna().any(axis=1).to_numpy())
    if bad.size:
        raise IngestionError(str(path), "non-numeric sample value", int(bad[0]) + 2)

    provenance = ""
    meta = sidecar_path(path)
    if meta.exists():
        provenance = json.loads(meta.read_text(encoding="utf-8")).get("provenance", "")
    return SampleSet(values.to_numpy(dtype=np.float64), provenance=provenance)
