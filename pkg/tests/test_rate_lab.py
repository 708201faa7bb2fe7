from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specbesov.grid_core import make_grid, named_coefficient
from specbesov.homogenization import operator_pairs
from specbesov.operator_spectral import assemble, decompose
from specbesov.rate_lab import (
    CONVERGENCE_CHECKS,
    REGISTRY,
    BoundCertificate,
    InequalitySpec,
    RegistryError,
    assert_registry_complete,
    censored_decay_fit,
    fit_rate,
    get_spec,
    measure_inequality,
    operator_norm,
    random_band_limited,
)

A256 = named_coefficient(make_grid(1, 256), "sin")
PAIRS = operator_pairs(A256, [0.25, 0.125, 0.0625])


@given(st.floats(-3, 3), st.floats(1e-3, 1e3))
def test_fit_rate_recovers_power_laws(p, C):
    x = np.array([0.25, 0.125, 0.0625, 0.03125])
    fit = fit_rate(x, C * x**p)
    assert fit.slope == pytest.approx(p, abs=1e-9)
    assert np.exp(fit.intercept) == pytest.approx(C, rel=1e-8)
    assert fit.r2 == pytest.approx(1.0)


@pytest.mark.parametrize("x,y", [([1, 2], [1, 2]), ([1, -2, 3], [1, 2, 3]), ([1, 2, 3], [1, np.nan, 3]),
                                 ([1, 2, 3], [1, -1, 3])])
def test_fit_rate_rejects_bad_input(x, y):
    with pytest.raises(ValueError):
        fit_rate(x, y)


def test_fit_rate_floors_zeros():
    fit = fit_rate([1, 2, 3], [0, 0, 0])
    assert fit.floored == 3 and fit.slope == pytest.approx(0.0)


def test_censored_fit_stops_at_the_floor():
    k = 2.0 ** np.arange(1, 8)
    y = np.array([1e-2, 1e-4, 1e-6, 1e-15, 1e-16, 1e-15, 1e-16])
    fit = censored_decay_fit(k, y)
    assert fit.abscissae.size == 4 and fit.slope < -5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_operator_norm_matches_svd(seed):
    M = np.random.default_rng(seed).standard_normal((12, 12))
    assert operator_norm(M, np.random.default_rng(seed), iterations=200) == pytest.approx(
        np.linalg.norm(M, 2), rel=1e-3)


def test_operator_norm_of_zero():
    assert operator_norm(np.zeros((4, 4))) == 0.0


def test_random_band_limited(caplog):
    dec = PAIRS[0].ctx0.dec
    f = random_band_limited(dec, 2, 4, np.random.default_rng(0))
    assert dec.grid.lp_norm(f, 2) == pytest.approx(1.0)
    c = dec.coeffs(f)
    outside = (dec.lambdas < 4) | (dec.lambdas > 16)
    assert np.max(np.abs(c[outside])) < 1e-10
    with caplog.at_level(logging.WARNING):
        z = random_band_limited(dec, 20, 21, np.random.default_rng(0))
    assert np.all(z == 0) and "empty band" in caplog.text


def _toy(power, family="convergence"):
    def draw(dec, rng):
        return {"c": abs(rng.standard_normal()) + 0.5}

    return InequalitySpec("toy", lambda P, I: I["c"] * P.eps**power, lambda P, I: I["c"], draw, family)


def test_measure_inequality_fits_a_synthetic_rate():
    cert = measure_inequality(_toy(0.7), PAIRS, samples=4)
    assert cert.verdict and cert.details["rate"]["slope"] == pytest.approx(0.7, abs=1e-9)
    bad = measure_inequality(_toy(0.0), PAIRS, samples=4)
    assert not bad.verdict  # no decay
    exact = measure_inequality(InequalitySpec("z", lambda P, I: 0.0, lambda P, I: 1.0, lambda d, r: {}), PAIRS, 2)
    assert exact.verdict and exact.details["exact"]


def test_measure_inequality_uniform_family_and_skips():
    cert = measure_inequality(_toy(0.0, "uniform"), PAIRS, samples=3)
    assert cert.verdict and cert.details["spread"] == pytest.approx(1.0)
    deg = InequalitySpec("d", lambda P, I: 1.0, lambda P, I: 0.0, lambda d, r: {})
    c = measure_inequality(deg, PAIRS, samples=2)
    assert c.details["skipped"] == 6
    with pytest.raises(ValueError):
        measure_inequality(deg, [], 1)


def test_registry_is_complete_and_consistent():
    assert_registry_complete(REGISTRY)
    conv = {n for n, s in REGISTRY.items() if s.family == "convergence"}
    assert conv == set(CONVERGENCE_CHECKS)
    assert len(REGISTRY) == 25
    broken = {k: v for k, v in REGISTRY.items() if k != CONVERGENCE_CHECKS[0]}
    with pytest.raises(RegistryError):
        assert_registry_complete(broken)
    with pytest.raises(KeyError, match="available"):
        get_spec("nope")


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_every_registry_spec_evaluates(name):
    cert = measure_inequality(get_spec(name), PAIRS, samples=2, seed=3)
    assert isinstance(cert, BoundCertificate)
    assert np.all(np.isfinite(cert.details["worst_ratio"]))
    assert cert.details["skipped"] < 2 * len(PAIRS)
    d = cert.as_dict()
    assert d["verdict"] in ("pass", "fail") and d["params"]["kappa"] == 0.05
