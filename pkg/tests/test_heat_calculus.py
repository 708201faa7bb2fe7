from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specbesov.grid_core import constant_coefficient, make_grid, named_coefficient
from specbesov.heat_calculus import (
    TimeGrid,
    duhamel,
    heat_apply,
    heat_comm_bound,
    heat_orbit,
    heat_para_comm,
    ou_modal,
    para_lo_hi_batch,
    parabolic_holder_norm,
    phi1,
    phi2,
    project_normals,
    reference_drive,
    stationary_modal_ou,
    theta_heat_kernel,
    weighted_norm,
)
from specbesov.homogenization import discrete_theta
from specbesov.operator_spectral import assemble, decompose
from specbesov.paracalculus import ParaContext, para_lo_hi

DEC = decompose(assemble(named_coefficient(make_grid(1, 64), "sin", 0.25)))
FLAT = decompose(assemble(constant_coefficient(make_grid(1, 64), [[1.0]])))


@given(st.floats(-50, 50, allow_nan=False))
def test_phi_functions_match_definitions(z):
    if abs(z) > 1e-2:
        assert phi1(np.array(z)) == pytest.approx(np.expm1(z) / z, rel=1e-12)
        assert phi2(np.array(z)) == pytest.approx((np.expm1(z) - z) / z**2, rel=1e-8)
    else:
        assert phi1(np.array(z)) == pytest.approx(1 + z / 2 + z**2 / 6 + z**3 / 24 + z**4 / 120, rel=1e-12)
        assert phi2(np.array(z)) == pytest.approx(0.5 + z / 6 + z**2 / 24 + z**3 / 120, rel=1e-10)


def test_phi_functions_continuous_at_cutoff():
    z = np.array([-1e-4 * (1 - 1e-9), -1e-4 * (1 + 1e-9)])
    assert abs(np.diff(phi1(z))[0]) < 1e-12 and abs(np.diff(phi2(z))[0]) < 1e-12


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.1, 4)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 16)
    tg = TimeGrid(0.1, 10)
    assert tg.dt == pytest.approx(0.01) and tg.nodes[-1] == pytest.approx(0.1)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 0.05), st.floats(0, 0.05), st.floats(0, 2))
def test_semigroup_property(s, t, damping):
    f = np.random.default_rng(0).standard_normal(64)
    lhs = heat_apply(DEC, s + t, f, damping)
    rhs = heat_apply(DEC, s, heat_apply(DEC, t, f, damping), damping)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_heat_apply_rejects_negative_time():
    with pytest.raises(ValueError):
        heat_apply(DEC, -1.0, np.zeros(64))


def test_heat_preserves_mean_and_orbit_matches():
    f = np.random.default_rng(1).standard_normal(64)
    tg = TimeGrid(0.02, 8)
    orb = heat_orbit(DEC, tg, f)
    for k, t in enumerate(tg.nodes):
        np.testing.assert_allclose(orb[k], heat_apply(DEC, t, f), atol=1e-12)
    np.testing.assert_allclose(orb.mean(axis=1), f.mean(), atol=1e-12)


def test_duhamel_exact_for_linear_in_time_forcing():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal(64), rng.standard_normal(64)
    tg = TimeGrid(0.03, 12)
    F = a[None] + tg.nodes[:, None] * b[None]
    out = duhamel(DEC, tg, F, damping=0.5)
    r = DEC.lambdas**2 + 0.5
    T = tg.T
    ca, cb = DEC.coeffs(a), DEC.coeffs(b)
    # int_0^T e^{-(T-s) r} (ca + s cb) ds
    I0 = -np.expm1(-r * T) / r
    I1 = T / r - (-np.expm1(-r * T)) / r**2
    np.testing.assert_allclose(out[-1], DEC.synth(ca * I0 + cb * I1), atol=1e-10)


def test_para_batch_and_heat_commutator():
    A = DEC.coefficient
    ctx = ParaContext(DEC, A)
    rng = np.random.default_rng(3)
    tg = TimeGrid(0.01, 8)
    F, G = rng.standard_normal((9, 64)), rng.standard_normal((9, 64))
    np.testing.assert_allclose(para_lo_hi_batch(DEC, F, G)[4], para_lo_hi(ctx, F[4], G[4]), atol=1e-11)
    C = heat_para_comm(DEC, tg, np.ones((9, 64)), G)
    assert C.shape == (9, 64)
    np.testing.assert_allclose(C[0], 0.0, atol=1e-12)


def test_project_normals_is_orthonormal():
    Z = np.random.default_rng(4).standard_normal((4000, 64))
    z = project_normals(DEC, Z)
    np.testing.assert_allclose(np.var(z, axis=0), 1.0, atol=0.12)


def test_reference_drive_gives_the_same_field_for_every_operator():
    Z = np.random.default_rng(5).standard_normal((3, 64))
    f1 = DEC.synth(reference_drive(DEC, FLAT, 1 / 16, Z))
    f2 = FLAT.synth(reference_drive(FLAT, FLAT, 1 / 16, Z))
    np.testing.assert_allclose(f1, f2, atol=1e-10)


def test_ou_variances_are_stationary():
    tg = TimeGrid(0.01, 8)
    rng = np.random.default_rng(6)
    paths = np.stack([ou_modal(FLAT, tg, 1 / 8, rng.standard_normal(64), rng.standard_normal((8, 64)))
                      for _ in range(3000)])
    act = (FLAT.lambdas <= 8) & (FLAT.lambdas > 0)
    target = 1 / (2 * FLAT.lambdas[act] ** 2)
    for k in (0, 8):
        np.testing.assert_allclose(np.var(paths[:, k, act], axis=0) / target, 1.0, atol=0.12)
    assert np.all(paths[:, :, ~act] == 0)
    with pytest.raises(ValueError):
        ou_modal(FLAT, tg, 1 / 8, np.zeros(64), np.zeros((8, 64)), include_mean=True)
    assert stationary_modal_ou(FLAT, 1 / 8, rng, tg).shape == (9, 64)


def test_weighted_norm_on_a_power_law():
    tg = TimeGrid(1.0, 64)
    F = np.zeros((65, 4))
    F[1:] = tg.nodes[1:, None] ** -0.5
    w = weighted_norm(tg, F, 1.0, None, lambda x: np.max(np.abs(x), axis=-1))
    assert w["sup"] == pytest.approx(1.0) and w["holder"] == 0.0


def test_heat_comm_bound_is_positive_and_decreasing_in_t():
    b = [heat_comm_bound(4, t, 0.5, 0.5) for t in (0.0, 0.01, 0.1)]
    assert b[0] > b[1] > b[2] > 0


def test_parabolic_holder_norm_scales_and_validates():
    g = make_grid(1, 64)
    tg = TimeGrid(0.05, 16)
    F = np.random.default_rng(7).standard_normal((17, 64))
    n = parabolic_holder_norm(g, tg, F, -0.5)
    assert n > 0 and parabolic_holder_norm(g, tg, 3 * F, -0.5) == pytest.approx(3 * n)
    with pytest.raises(ValueError):
        parabolic_holder_norm(g, tg, F, 0.5)


def test_theta_kernel_has_unit_mass_and_matches_discrete_series():
    z = np.linspace(0, 1, 2001)[:-1]
    k = theta_heat_kernel(0.01, z)
    assert np.mean(k) == pytest.approx(1.0, abs=1e-12)
    errs = []
    for N in (128, 256, 512):
        zz = np.arange(N) / N
        errs.append(np.max(np.abs(discrete_theta(N, 0.01, zz) - theta_heat_kernel(0.01, zz))))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05) and errs[1] / errs[2] == pytest.approx(4, rel=0.05)
