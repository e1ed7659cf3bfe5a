"""
Tests for tailcert.certificates: closed forms, evaluation, quantiles,
serialization.
"""

import json
import math

import numpy as np
import pytest

from tailcert.certificates import (
    ConstantMode,
    Family,
    TailCertificate,
    Theorem,
    certificate_from_record,
    certificate_to_record,
    certify_for_latent,
    certify_gaussian,
    certify_logconcave,
    certify_manifold,
    certify_strongly_logconcave,
    evaluate,
    evaluate_grid,
    is_vacuous,
    quantile,
    vacuous_below,
)
from tailcert.errors import CapabilityError, DomainError
from tailcert.latents import CertificateParams, GaussianLatent, SphereLatent, UniformCubeLatent, certificate_params
from tailcert.network import LipschitzBound


def lip(value=1.0):
    return LipschitzBound(value=value)


def unit_params(**kwargs):
    return CertificateParams(sigma_op_norm=1.0, sigma_sqrt_op_norm=1.0, **kwargs)


# ---------------------------------------------------------------------------
# Gaussian
# ---------------------------------------------------------------------------

def test_gaussian_tight_examples():
    cert = certify_gaussian(lip(), unit_params(), p=2)
    assert evaluate(cert, 2.0) == pytest.approx(2 * math.exp(-2), rel=1e-12)
    assert evaluate(cert, 0.0) == 1.0


def test_gaussian_large_sigma_is_vacuous_at_two():
    params = CertificateParams(sigma_op_norm=4.0, sigma_sqrt_op_norm=2.0)
    cert = certify_gaussian(lip(), params, p=2)
    assert evaluate(cert, 2.0) == 1.0
    assert is_vacuous(cert, 2.0)
    assert not is_vacuous(cert, 10.0)


def test_gaussian_paper_form_records_constant():
    cert = certify_gaussian(lip(), unit_params(), p=3, mode=ConstantMode.PAPER_FORM, paper_constant=2.0)
    assert cert.scale == pytest.approx(math.sqrt(4 * 3))
    assert cert.provenance["assumed_constants"] == {"C": 2.0}
    assert cert.provenance["theorem"] == Theorem.GAUSSIAN


def test_paper_form_dominates_tight():
    tight = certify_gaussian(lip(1.7), unit_params(), p=1)
    paper = certify_gaussian(lip(1.7), unit_params(), p=1, mode=ConstantMode.PAPER_FORM, paper_constant=2.0)
    grid = np.linspace(0, 20, 201)
    assert np.all(evaluate_grid(paper, grid) >= evaluate_grid(tight, grid))


def test_gaussian_needs_sigma_norm():
    with pytest.raises(CapabilityError):
        certify_gaussian(lip(), CertificateParams(sigma_op_norm=None, sigma_sqrt_op_norm=1.0), p=1)


@pytest.mark.parametrize("d", [2, 64, 512])
def test_tight_gaussian_is_dimension_free(d):
    reference = certify_gaussian(lip(1.5), certificate_params(GaussianLatent.standard(2)), p=2)
    cert = certify_gaussian(lip(1.5), certificate_params(GaussianLatent.standard(d)), p=2)
    assert cert.scale == pytest.approx(reference.scale, rel=1e-12)


# ---------------------------------------------------------------------------
# Log-concave
# ---------------------------------------------------------------------------

def test_logconcave_tight_example():
    cert = certify_logconcave(lip(), unit_params(cheeger=1.0), p=2, c6=1.0)
    assert cert.family is Family.SUB_EXPONENTIAL
    assert cert.prefactor == 1.0
    assert evaluate(cert, math.log(2)) == pytest.approx(0.5, rel=1e-12)
    assert evaluate(cert, 0.0) == 1.0


def test_logconcave_cheeger_halves_quantile():
    slow = certify_logconcave(lip(), unit_params(cheeger=1.0), p=2, c6=1.0)
    fast = certify_logconcave(lip(), unit_params(cheeger=2.0), p=2, c6=1.0)
    for delta in (0.1, 0.01):
        assert quantile(fast, delta) == pytest.approx(quantile(slow, delta) / 2, rel=1e-12)


def test_logconcave_paper_form():
    cert = certify_logconcave(lip(2.0), unit_params(cheeger=0.5), p=4,
                              mode=ConstantMode.PAPER_FORM, paper_constant=2.0)
    assert cert.scale == pytest.approx(2.0 * 2.0 * 2.0 / 0.5)
    assert cert.prefactor == 2.0


def test_logconcave_records_heuristic_cheeger():
    latent = UniformCubeLatent(2, 1.0)
    cert = certify_for_latent(lip(), latent, certificate_params(latent), p=2)
    assert cert.provenance["assumed_constants"]["cheeger_source"] == "heuristic, not a theorem"
    assert "C6" in cert.provenance["assumed_constants"]


def test_logconcave_needs_cheeger():
    with pytest.raises(CapabilityError):
        certify_logconcave(lip(), unit_params(), p=1)


# ---------------------------------------------------------------------------
# Strongly log-concave and manifold
# ---------------------------------------------------------------------------

def test_strongly_logconcave_example():
    cert = certify_strongly_logconcave(lip(), unit_params(gamma=1.0), p=2)
    assert evaluate(cert, 2.0) == pytest.approx(2 * math.exp(-1), rel=1e-12)


def test_strongly_logconcave_gamma_four_halves_scale():
    base = certify_strongly_logconcave(lip(), unit_params(gamma=1.0), p=2)
    sharper = certify_strongly_logconcave(lip(), unit_params(gamma=4.0), p=2)
    assert sharper.scale == pytest.approx(base.scale / 2, rel=1e-12)


def test_strongly_logconcave_needs_gamma():
    with pytest.raises(CapabilityError):
        certify_strongly_logconcave(lip(), unit_params(), p=2)


def test_manifold_unit_sphere_example():
    params = CertificateParams(sigma_op_norm=1 / 64, sigma_sqrt_op_norm=1 / 8,
                               ricci_lower=62.0, embedding_lipschitz=1.0)
    cert = certify_manifold(lip(), params, p=2)
    assert evaluate(cert, 1.0) == pytest.approx(2 * math.exp(-31), rel=1e-9)


def test_manifold_doubling_lambda_halves_scale_squared():
    a = certify_manifold(lip(), unit_params(ricci_lower=3.0, embedding_lipschitz=1.0), p=2)
    b = certify_manifold(lip(), unit_params(ricci_lower=6.0, embedding_lipschitz=1.0), p=2)
    assert b.scale**2 == pytest.approx(a.scale**2 / 2, rel=1e-12)


def test_manifold_rejects_nonpositive_curvature():
    with pytest.raises(DomainError):
        certify_manifold(lip(), unit_params(ricci_lower=0.0, embedding_lipschitz=1.0), p=2)


def test_dispatch_by_latent_kind():
    sphere = SphereLatent(8)
    cert = certify_for_latent(lip(), sphere, certificate_params(sphere), p=2)
    assert cert.provenance["theorem"] == Theorem.MANIFOLD


# ---------------------------------------------------------------------------
# evaluate / quantile
# ---------------------------------------------------------------------------

def sub_gaussian(scale=1.0):
    return TailCertificate(family=Family.SUB_GAUSSIAN, scale=scale, constant_mode=ConstantMode.TIGHT, p=1)


def test_evaluate_at_scale():
    assert evaluate(sub_gaussian(3.0), 3.0) == pytest.approx(2 / math.e)


def test_evaluate_is_monotone():
    values = [evaluate(sub_gaussian(2.0), t) for t in range(11)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[0] == 1.0


def test_evaluate_rejects_negative_t():
    with pytest.raises(DomainError):
        evaluate(sub_gaussian(), -1.0)


def test_quantile_inverts_example():
    assert quantile(sub_gaussian(1.0), 2 / math.e) == pytest.approx(1.0, rel=1e-12)


def test_quantile_near_one():
    assert quantile(sub_gaussian(2.0), 1 - 1e-12) == pytest.approx(2.0 * math.sqrt(math.log(2)), rel=1e-6)


@pytest.mark.parametrize("family", list(Family))
@pytest.mark.parametrize("delta", [0.1, 0.01, 0.001])
def test_quantile_round_trip(family, delta):
    cert = TailCertificate(family=family, scale=1.7, constant_mode=ConstantMode.TIGHT, p=1)
    t = quantile(cert, delta)
    assert evaluate(cert, t) <= delta
    assert evaluate(cert, t - 1e-9 * t) > delta


def test_quantile_rejects_bad_delta():
    with pytest.raises(DomainError):
        quantile(sub_gaussian(), 1.0)


def test_sub_exponential_decays_slower_past_scale():
    scale = 1.5
    gauss = sub_gaussian(scale)
    expo = TailCertificate(family=Family.SUB_EXPONENTIAL, scale=scale,
                           constant_mode=ConstantMode.PAPER_FORM, p=1)
    grid = np.linspace(scale * 1.001, 10 * scale, 100)
    assert np.all(evaluate_grid(expo, grid) >= evaluate_grid(gauss, grid))


def test_infinite_scale_is_vacuous():
    cert = sub_gaussian(math.inf)
    assert evaluate(cert, 1e12) == 1.0
    assert quantile(cert, 0.01) == math.inf


def test_rejects_negative_scale():
    with pytest.raises(DomainError):
        sub_gaussian(-1.0)


def test_vacuous_below_is_where_the_closed_form_crosses_one():
    cert = sub_gaussian(2.0)
    edge = vacuous_below(cert)
    assert edge == pytest.approx(2.0 * math.sqrt(math.log(2.0)), rel=1e-12)
    assert is_vacuous(cert, edge * 0.999)
    assert not is_vacuous(cert, edge * 1.001)


def test_vacuous_below_edge_cases():
    expo = TailCertificate(family=Family.SUB_EXPONENTIAL, scale=3.0, constant_mode=ConstantMode.TIGHT,
                           p=1, prefactor=1.0)
    assert vacuous_below(expo) == 0.0
    assert vacuous_below(sub_gaussian(math.inf)) == math.inf
    assert vacuous_below(sub_gaussian(0.0)) == 0.0


def test_is_vacuous_over_a_grid():
    flags = is_vacuous(sub_gaussian(2.0), np.array([0.0, 1.0, 2.0, 5.0]))
    np.testing.assert_array_equal(flags, [True, True, False, False])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_record_round_trip_through_json():
    cert = certify_logconcave(lip(1.3), unit_params(cheeger=0.2), p=2, c6=1.0)
    again = certificate_from_record(json.loads(json.dumps(certificate_to_record(cert))))
    assert again.scale == cert.scale
    assert again.family is cert.family
    assert again.prefactor == cert.prefactor
    assert again.provenance == cert.provenance


def test_record_keeps_infinite_scale():
    record = json.loads(json.dumps(certificate_to_record(sub_gaussian(math.inf))))
    assert certificate_from_record(record).scale == math.inf


def test_record_names_mode():
    record = certificate_to_record(sub_gaussian())
    assert record["constant_mode"] == "tight"
    assert record["family"] == "sub_gaussian"


def test_record_flags_vacuous_range():
    record = json.loads(json.dumps(certificate_to_record(sub_gaussian(2.0))))
    assert record["vacuous_below"] == pytest.approx(2.0 * math.sqrt(math.log(2.0)), rel=1e-12)
    assert certificate_from_record(record).scale == 2.0
