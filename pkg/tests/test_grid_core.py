from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from specbesov.grid_core import (
    CoefficientField,
    coefficient_from_table,
    constant_coefficient,
    make_grid,
    mean_project,
    named_coefficient,
    rescale_coefficient,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("N", [7, 6, 9, 0])
def test_grid_rejects_bad_sizes(N):
    with pytest.raises(ValueError):
        make_grid(1, N)


def test_grid_rejects_bad_dimension():
    with pytest.raises(ValueError):
        make_grid(4, 8)


def test_grid_geometry():
    g = make_grid(2, 8)
    assert g.size == 64 and g.shape == (8, 8) and g.cell_volume == pytest.approx(1 / 64)
    x = g.coords()
    assert x.shape == (64, 2) and x.min() == 0 and x.max() == pytest.approx(7 / 8)


@given(arrays(float, 16, elements=finite), st.integers(-20, 20))
def test_shift_is_invertible(f, k):
    g = make_grid(1, 16)
    np.testing.assert_array_equal(g.shift(g.shift(f, 0, k), 0, -k), f)


def test_shift_moves_along_the_requested_axis():
    g = make_grid(2, 8)
    x = g.coords()
    f = x[:, 0] + 10 * x[:, 1]
    np.testing.assert_allclose(g.shift(f, 1, 1) - f, np.where(np.isclose(x[:, 1], 7 / 8), -70 / 8, 10 / 8))


@given(arrays(float, (3, 16), elements=finite))
def test_mean_project_splits_exactly(f):
    g = make_grid(1, 16)
    mean, fl = mean_project(g, f)
    np.testing.assert_allclose(mean[:, None] + fl, f, atol=1e-9)
    np.testing.assert_allclose(fl.mean(axis=-1), 0.0, atol=1e-10)


def test_centered_gradient_is_second_order():
    errs = []
    for N in (32, 64, 128):
        g = make_grid(1, N)
        x = g.coords()[:, 0]
        d = g.centered_gradient(np.sin(2 * np.pi * x))[0]
        errs.append(np.max(np.abs(d - 2 * np.pi * np.cos(2 * np.pi * x))))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_sin_profile_samples_and_cells():
    g = make_grid(1, 64)
    A = named_coefficient(g, "sin", 0.25)
    x = g.coords()[:, 0]
    np.testing.assert_allclose(A.scalar(), 2 + np.sin(2 * np.pi * 4 * x), atol=1e-12)
    np.testing.assert_allclose(A.cell_entries[:, 0, 0], 2 + np.sin(2 * np.pi * 4 * (x + g.h / 2)), atol=1e-12)
    assert A.m == 4


def test_rescale_composes():
    g = make_grid(1, 128)
    A = named_coefficient(g, "sin", 0.5)
    B = rescale_coefficient(A, 0.25)
    assert B.eps == pytest.approx(0.125)
    np.testing.assert_array_equal(B.entries, named_coefficient(g, "sin", 0.125).entries)


@pytest.mark.parametrize("eps", [0.3, 2.0, -0.5])
def test_eps_must_be_inverse_integer(eps):
    with pytest.raises(ValueError):
        named_coefficient(make_grid(1, 64), "sin", eps)


def test_under_resolved_eps_rejected():
    with pytest.raises(ValueError, match="resolve"):
        named_coefficient(make_grid(1, 32), "sin", 0.125)


def test_non_elliptic_and_nonsymmetric_rejected():
    g = make_grid(1, 16)
    with pytest.raises(ValueError, match="elliptic"):
        CoefficientField(g, lambda y: np.sin(2 * np.pi * y[:, 0])[:, None, None])
    g2 = make_grid(2, 16)
    with pytest.raises(ValueError, match="symmetric"):
        CoefficientField(g2, lambda y: np.broadcast_to(np.array([[2.0, 1.0], [0.0, 2.0]]), (len(y), 2, 2)))


def test_unknown_profile():
    with pytest.raises(ValueError, match="unknown profile"):
        named_coefficient(make_grid(1, 16), "nope")


def test_constant_coefficient_scalar_broadcast():
    A = constant_coefficient(make_grid(2, 8), [[3.0]])
    np.testing.assert_array_equal(A.entries[5], 3 * np.eye(2))


def test_checker_profile_in_2d():
    A = named_coefficient(make_grid(2, 16), "checker")
    assert A.entries.shape == (256, 2, 2) and A.ellipticity >= 1


def test_fingerprint_distinguishes_fields():
    g = make_grid(1, 64)
    a, b = named_coefficient(g, "sin", 0.5), named_coefficient(g, "sin", 0.25)
    assert a.fingerprint() == named_coefficient(g, "sin", 0.5).fingerprint()
    assert a.fingerprint() != b.fingerprint()


def test_coefficient_from_table(tmp_path):
    y = np.linspace(0, 1, 33)[:-1]
    path = tmp_path / "a.csv"
    np.savetxt(path, np.c_[y, 2 + np.sin(2 * np.pi * y)], delimiter=",", header="y,a")
    g = make_grid(1, 32)
    A = coefficient_from_table(g, path)
    np.testing.assert_allclose(A.scalar(), 2 + np.sin(2 * np.pi * g.coords()[:, 0]), atol=1e-12)
