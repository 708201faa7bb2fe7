from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specbesov.grid_core import CoefficientField, constant_coefficient, make_grid, named_coefficient, rescale_coefficient
from specbesov.homogenization import (
    block_convergence_rate,
    block_difference_norm,
    block_linf_difference_norm,
    cluster_eigenvalues,
    eigen_convergence_report,
    green_bound_checks,
    heat_kernel,
    homo_operator_gap,
    homogenized_coefficient,
    homogenized_matrix,
    multiplicity_groups,
    operator_pairs,
    oscillation_certificate,
    projection_gap_certificate,
    solve_corrector,
    spectral_projection,
    weyl_fit,
)
from specbesov.operator_spectral import assemble, decompose

A128 = named_coefficient(make_grid(1, 128), "sin")
D0 = decompose(assemble(homogenized_coefficient(A128)))
D8 = decompose(assemble(rescale_coefficient(A128, 0.125)))


def test_abar_is_the_discrete_harmonic_mean():
    b = A128.cell_entries[:, 0, 0]
    assert homogenized_matrix(A128)[0, 0] == pytest.approx(1 / np.mean(1 / b), rel=1e-12)
    assert homogenized_matrix(A128)[0, 0] == pytest.approx(np.sqrt(3), abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0.5, 5.0), min_size=3, max_size=3))
def test_harmonic_mean_for_random_profiles(c):
    def func(y, c=c):
        x = y[:, 0]
        a = c[0] + 0.4 * c[1] * np.sin(2 * np.pi * x) ** 2 + 0.2 * c[2] * np.cos(4 * np.pi * x) ** 2
        return a[:, None, None]

    A = CoefficientField(make_grid(1, 64), func)
    chi = solve_corrector(A)
    assert chi.ok
    assert homogenized_matrix(A, chi)[0, 0] == pytest.approx(1 / np.mean(1 / A.cell_entries[:, 0, 0]), rel=1e-10)


def test_constant_coefficient_homogenizes_to_itself():
    A = constant_coefficient(make_grid(2, 8), [[2.0, 0.3], [0.3, 1.5]])
    np.testing.assert_allclose(homogenized_matrix(A), [[2.0, 0.3], [0.3, 1.5]], atol=1e-10)


def test_2d_laminate_bounds():
    A = named_coefficient(make_grid(2, 16), "checker")
    Ab = homogenized_matrix(A)
    ev = np.linalg.eigvalsh(Ab)
    b = A.cell_entries[:, 0, 0]
    assert 1 / np.mean(1 / b) - 1e-9 <= ev.min() and ev.max() <= np.mean(b) + 1e-9
    np.testing.assert_allclose(Ab, Ab.T, atol=0)


def test_homogenized_coefficient_independent_of_eps():
    a = homogenized_coefficient(rescale_coefficient(A128, 0.25)).entries
    np.testing.assert_allclose(a, homogenized_coefficient(A128).entries, atol=1e-12)


def test_weyl_fit_flat_1d():
    assert weyl_fit(D0).slope == pytest.approx(1.0, abs=0.1)


def test_eigen_report_contents():
    rep = eigen_convergence_report(A128, [0.5, 0.25, 0.125], decs={0.0: D0, 0.125: D8})
    assert set(rep.weyl) == {"0", "0.5", "0.25", "0.125"}
    assert rep.C_KLS == pytest.approx(1.5 * rep.kls_ratio_over_eps[-1])
    assert np.all(np.diff(rep.kls_max_ratio) < 0)
    names = [c.name for c in rep.certificates()]
    assert "kls_exponent" in names


def test_clusters_cover_the_shell_and_intervals_nest():
    cl = cluster_eigenvalues(D0, 3, 0.125, 0.01, threshold=0.5)
    lam = D0.lambdas
    shell = (lam > 0.75 * 4) & (lam < 2 * 16)
    covered = np.zeros(lam.size, bool)
    for (s, e), (a, b) in zip(cl.classes, cl.intervals):
        covered[s:e + 1] = True
        mu = 1 / (1 + lam[s:e + 1] ** 2)
        assert np.all((mu >= a) & (mu <= b))
    assert np.all(covered[shell])
    with pytest.raises(ValueError):
        cluster_eigenvalues(D0, -1, 0.1, 1.0)


def test_multiplicity_groups_are_degenerate_pairs():
    cl = multiplicity_groups(D0, 3)
    for s, e in cl.classes:
        assert e - s <= 1
        assert D0.lambdas[e] - D0.lambdas[s] < 1e-6


def test_riesz_certificate_holds():
    cert = projection_gap_certificate(D8, D0, multiplicity_groups(D0, 3))
    assert cert.verdict and 0 < cert.measured < 1


def test_spectral_projection_is_a_projection():
    P = spectral_projection(D8, (0.0, 0.01))
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    np.testing.assert_allclose(P, P.T, atol=1e-12)


def test_block_differences():
    rng = np.random.default_rng(0)
    assert block_difference_norm(D0, D0, 3, rng) == 0.0
    assert block_difference_norm(D8, D0, 4, rng) > 0
    assert block_linf_difference_norm(D8, D0, 4) >= block_difference_norm(D8, D0, 4, rng) * 0.1
    fits = block_convergence_rate(A128, [3], [0.5, 0.25, 0.125], decs={0.0: D0, 0.125: D8})
    assert fits[3].slope > 0.35


def test_oscillation_rate_and_mean_check():
    fit = oscillation_certificate(lambda y: np.sin(2 * np.pi * y), 0.5, [0.25, 0.125, 0.0625], N=256)
    assert fit.slope == pytest.approx(0.5, abs=0.1)
    with pytest.raises(ValueError):
        oscillation_certificate(lambda y: 1 + np.sin(2 * np.pi * y), 0.5, [0.25, 0.125, 0.0625], N=64)


def test_homo_operator_gap_rates():
    fits = homo_operator_gap(A128, [0.5, 0.25, 0.125], decs={0.0: D0, 0.125: D8})
    assert fits["inverse"].slope > 0.9 and fits["resolvent"].slope > 0.9
    assert max(fits["gradient"].ordinates) < 1e-9  # exact in one dimension


def test_operator_pairs():
    pairs = operator_pairs(A128, [0.25, 0.125], decs={0.0: D0, 0.125: D8})
    assert [p.eps for p in pairs] == [0.25, 0.125]
    assert pairs[0].ctx0.dec is D0 and pairs[1].ctx.dec is D8 and pairs[0].ctx.L == 1


def test_heat_kernel_mass_and_green_checks():
    K = heat_kernel(D8, 0.01)
    np.testing.assert_allclose(K.sum(axis=1) / 128, 1.0, atol=1e-10)
    certs = green_bound_checks(named_coefficient(make_grid(1, 64), "sin", 0.25))
    assert all(c.verdict for c in certs), [c.name for c in certs if not c.verdict]
