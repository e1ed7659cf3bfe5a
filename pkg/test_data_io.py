"""
Tests for tailcert.data_io: heavy-tailed targets, return ingestion and
sample-set files.
"""

import json
import math

import numpy as np
import pandas as pd
import pytest

from tailcert.audit import SampleSet, orlicz_psi2_estimate
from tailcert.data_io import (
    CauchyTarget,
    GaussianTarget,
    ReturnKind,
    StudentTTarget,
    ingest_returns,
    load_price_series,
    parse_target_spec,
    read_sample_set,
    sample_target,
    sidecar_path,
    write_sample_set,
)
from tailcert.errors import DefinitenessError, DomainError, IngestionError, UsageError
from tailcert.numerics import RngStream


def write_prices(path, dates, closes, date_col="Date", price_col="Close"):
    pd.DataFrame({date_col: dates, price_col: closes}).to_csv(path, index=False)
    return path


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------

def test_cauchy_median():
    s = sample_target(CauchyTarget.standard(1), RngStream(1), 100_000)
    assert abs(np.median(s.samples)) <= 0.05


def test_cauchy_tail_probability():
    s = sample_target(CauchyTarget.standard(1), RngStream(2), 100_000)
    exact = (2 / math.pi) * (math.pi / 2 - math.atan(10.0))
    assert abs(np.mean(np.abs(s.samples) > 10.0) - exact) <= 0.01


def test_large_dof_student_is_near_gaussian():
    student = sample_target(StudentTTarget(np.zeros(1), np.eye(1), 1e6), RngStream(3), 10_000)
    gaussian = sample_target(GaussianTarget(np.zeros(1), np.eye(1)), RngStream(4), 10_000)
    a = orlicz_psi2_estimate(student.samples.ravel())
    b = orlicz_psi2_estimate(gaussian.samples.ravel())
    assert math.isfinite(a)
    assert a == pytest.approx(b, rel=0.1)


def test_target_sampling_is_deterministic():
    spec = CauchyTarget(np.zeros(2), [[2.0, 0.3], [0.3, 1.0]])
    a = sample_target(spec, RngStream(5), 100)
    b = sample_target(spec, RngStream(5), 100)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_target_rejects_indefinite_scale():
    with pytest.raises(DefinitenessError):
        CauchyTarget(np.zeros(2), [[1.0, 2.0], [2.0, 1.0]])


def test_sample_target_rejects_zero_n():
    with pytest.raises(DomainError):
        sample_target(CauchyTarget.standard(2), RngStream(1), 0)


def test_parse_target_specs():
    cauchy = parse_target_spec("cauchy:d=2")
    assert cauchy.kind == "cauchy" and cauchy.dof == 1.0
    np.testing.assert_array_equal(parse_target_spec("cauchy:d=2,scale=4").scale, 4 * np.eye(2))
    assert parse_target_spec("student:d=2,dof=3").dof == 3.0
    assert parse_target_spec("gaussian:d=2,sigma=I").kind == "gaussian"
    spec = parse_target_spec('{"kind": "student", "mode": [1, 2], "scale": [[1, 0], [0, 1]], "dof": 5}')
    np.testing.assert_array_equal(spec.mode, [1.0, 2.0])


@pytest.mark.parametrize(
    "text",
    ["cauchy:scale=I", "student:d=2", "laplace:d=2", "cauchy:d=x", "student:d=2,dof=three", "cauchy:d=2,mode=left"],
)
def test_parse_target_errors(text):
    with pytest.raises(UsageError):
        parse_target_spec(text)


@pytest.mark.parametrize(
    "text, field",
    [
        ('{"kind": "cauchy", "scale": [[1, 0], [0, 1]]}', "mode"),
        ('{"kind": "student", "mode": [0, 0], "scale": [[1, 0], [0, 1]]}', "dof"),
        ('{"kind": "gaussian", "mu": [0, 0]}', "sigma"),
    ],
)
def test_target_record_missing_field_is_usage_error(text, field):
    with pytest.raises(UsageError, match=repr(field)):
        parse_target_spec(text)


# ---------------------------------------------------------------------------
# Return ingestion
# ---------------------------------------------------------------------------

def test_single_return_in_basis_points(tmp_path):
    path = write_prices(tmp_path / "a.csv", ["2020-01-01", "2020-01-02"], [100.0, 101.0])
    s = ingest_returns([path])
    assert (s.n, s.p) == (1, 1)
    assert s.samples[0, 0] == pytest.approx(100.0, rel=1e-12)
    assert "simple returns" in s.provenance


def test_constant_prices_give_zero_returns(tmp_path):
    path = write_prices(tmp_path / "a.csv", ["2020-01-01", "2020-01-02", "2020-01-03"], [50.0] * 3)
    assert np.all(ingest_returns([path]).samples == 0)


def test_two_instruments_4097_rows(tmp_path):
    dates = pd.date_range("2000-01-03", periods=4097, freq="D").strftime("%Y-%m-%d")
    gen = RngStream(1).generator()
    a = 100 * np.exp(np.cumsum(0.01 * gen.standard_normal(4097)))
    b = 50 * np.exp(np.cumsum(0.01 * gen.standard_normal(4097)))
    s = ingest_returns([write_prices(tmp_path / "a.csv", dates, a), write_prices(tmp_path / "b.csv", dates, b)])
    assert (s.n, s.p) == (4096, 2)
    parsed_a = pd.read_csv(tmp_path / "a.csv")["Close"].to_numpy()
    expected = (parsed_a[1:] - parsed_a[:-1]) / parsed_a[:-1] * 1e4
    np.testing.assert_allclose(s.samples[:, 0], expected, rtol=1e-9)


def test_inner_join_sorts_and_aligns(tmp_path):
    a = write_prices(tmp_path / "a.csv", ["2020-01-03", "2020-01-01", "2020-01-02"], [102.0, 100.0, 101.0])
    b = write_prices(tmp_path / "b.csv", ["2020-01-01", "2020-01-03", "2020-01-04"], [10.0, 11.0, 12.0])
    prices = load_price_series([a, b], "Close", "Date")
    assert prices.dates == ["2020-01-01", "2020-01-03"]
    np.testing.assert_array_equal(prices.closes, [[100.0, 10.0], [102.0, 11.0]])


def test_log_returns(tmp_path):
    path = write_prices(tmp_path / "a.csv", ["2020-01-01", "2020-01-02"], [100.0, 110.0])
    s = ingest_returns([path], kind=ReturnKind.LOG)
    assert s.samples[0, 0] == pytest.approx(math.log(1.1) * 1e4, rel=1e-12)
    assert s.provenance.startswith("log returns")


def test_custom_column_names(tmp_path):
    path = write_prices(tmp_path / "a.csv", ["2020-01-01", "2020-01-02"], [1.0, 2.0], "day", "adj_close")
    s = ingest_returns([path], price_column="adj_close", date_column="day")
    assert s.samples[0, 0] == pytest.approx(1e4)


def test_missing_column(tmp_path):
    path = write_prices(tmp_path / "a.csv", ["2020-01-01", "2020-01-02"], [1.0, 2.0], price_col="Open")
    with pytest.raises(IngestionError) as info:
        ingest_returns([path])
    assert "Close" in str(info.value)


def test_unparseable_price_names_line(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("Date,Close\n2020-01-01,100\n2020-01-02,abc\n", encoding="utf-8")
    with pytest.raises(IngestionError) as info:
        ingest_returns([path])
    assert info.value.row == 3


def test_nonpositive_price_names_line(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("Date,Close\n2020-01-01,100\n2020-01-02,101\n2020-01-03,0\n", encoding="utf-8")
    with pytest.raises(IngestionError) as info:
        ingest_returns([path])
    assert info.value.row == 4


def test_bad_date_names_line(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("Date,Close\nyesterday,100\n2020-01-02,101\n", encoding="utf-8")
    with pytest.raises(IngestionError) as info:
        ingest_returns([path])
    assert info.value.row == 2


def test_disjoint_dates(tmp_path):
    a = write_prices(tmp_path / "a.csv", ["2020-01-01", "2020-01-02"], [1.0, 2.0])
    b = write_prices(tmp_path / "b.csv", ["2021-01-01", "2021-01-02"], [1.0, 2.0])
    with pytest.raises(IngestionError):
        ingest_returns([a, b])


def test_missing_file(tmp_path):
    with pytest.raises(IngestionError):
        ingest_returns([tmp_path / "nope.csv"])


# ---------------------------------------------------------------------------
# Sample-set files
# ---------------------------------------------------------------------------

def test_write_and_read_sample_set(tmp_path):
    s = SampleSet(RngStream(1).generator().standard_normal((50, 3)), provenance="unit test")
    path = write_sample_set(s, tmp_path / "out" / "samples.csv", seed=1, spec={"kind": "gaussian"})
    assert path.read_text(encoding="utf-8").splitlines()[0] == "dim_0,dim_1,dim_2"
    meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    assert meta["seed"] == 1 and meta["spec"] == {"kind": "gaussian"}
    again = read_sample_set(path)
    np.testing.assert_array_equal(again.samples, s.samples)
    assert again.provenance == "unit test"


def test_read_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n", encoding="utf-8")
    with pytest.raises(IngestionError):
        read_sample_set(path)
