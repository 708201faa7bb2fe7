from __future__ import annotations

import numpy as np
import pytest

from specbesov import spde_engine as se
from specbesov.grid_core import make_grid, named_coefficient
from specbesov.heat_calculus import TimeGrid
from specbesov.operator_spectral import assemble, decompose
from specbesov.paracalculus import ParaContext

A64 = named_coefficient(make_grid(1, 64), "sin", 0.25)
CTX = ParaContext(decompose(assemble(A64)), A64)
TG = TimeGrid(0.02, 32)


@pytest.fixture(scope="module")
def kpz():
    enh = se.build_kpz_enhancement(CTX, TG, se.NoiseModel(2**-4, seed=1), 8)
    return enh, se.solve_fixed_point_kpz(CTX, enh, np.zeros(64))


@pytest.fixture(scope="module")
def phi4():
    enh = se.build_phi4_enhancement_1d(CTX, TG, se.NoiseModel(2**-4, seed=1, damping=1.0), 8)
    return enh, se.solve_fixed_point_phi4(CTX, enh, np.zeros(64))


def test_noise_model_and_helpers():
    with pytest.raises(ValueError):
        se.NoiseModel(0.0)
    tg, nb = se.extended_grid(TimeGrid(0.05, 50), 0.15)
    assert nb == 150 and tg.M == 200 and tg.T == pytest.approx(0.2)
    a = se.grid_normals(se.NoiseModel(0.1, seed=3), 2, 5, 16)
    b = se.grid_normals(se.NoiseModel(0.1, seed=3), 2, 5, 16)
    c = se.grid_normals(se.NoiseModel(0.1, seed=3), 3, 5, 16)
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])


def test_kpz_solution_is_a_mild_solution(kpz):
    enh, state = kpz
    assert state.residual < se.PICARD_TOL
    h = se.kpz_reconstruct(CTX, enh, state)
    assert h.shape == (TG.M + 1, 64)
    assert se.kpz_mild_residual(CTX, enh, h) < 1e-8
    assert np.isfinite(se.kpz_solution_norm(CTX, TG, state))


def test_phi4_solution_is_a_mild_solution(phi4):
    enh, state = phi4
    Phi = se.phi4_reconstruct(enh, state)
    assert se.phi4_mild_residual(CTX, enh, Phi) < 1e-10
    assert np.isfinite(se.phi4_solution_norm(CTX, TG, state))


def test_kpz_enhancement_is_reproducible():
    a = se.build_kpz_enhancement(CTX, TG, se.NoiseModel(2**-4, seed=5), 8)
    b = se.build_kpz_enhancement(CTX, TG, se.NoiseModel(2**-4, seed=5), 8)
    for k, v in a.collection().items():
        np.testing.assert_array_equal(v, b.collection()[k])


def test_phi4_needs_damping_and_samples():
    with pytest.raises(ValueError):
        se.build_phi4_enhancement_1d(CTX, TG, se.NoiseModel(2**-4), 8)
    with pytest.raises(ValueError):
        se.build_phi4_enhancement_1d(CTX, TG, se.NoiseModel(2**-4, damping=1.0), 4)


def test_zero_enhancement_matches_reference_stepper():
    x = CTX.grid.coords()[:, 0]
    u0 = 0.5 * np.sin(2 * np.pi * x)
    tg = TimeGrid(0.02, 400)
    st = se.solve_fixed_point_kpz(CTX, se.KpzEnhancement.zero(CTX, tg), u0)
    ref = se.semi_implicit_reference(CTX, u0, 0.02, 4000, "kpz")
    assert np.max(np.abs(st.u[-1] - ref)) < 1e-5
    sp = se.solve_fixed_point_phi4(CTX, se.Phi4Enhancement.zero(CTX, tg), u0)
    refp = se.semi_implicit_reference(CTX, u0, 0.02, 4000, "phi4", damping=se.PHI4_DAMPING)
    assert np.max(np.abs(sp.u[-1] - refp)) < 1e-6


def test_reference_stepper_rejects_unknown_nonlinearity():
    with pytest.raises(ValueError):
        se.semi_implicit_reference(CTX, np.zeros(64), 0.01, 10, "burgers")


def test_mean_zero_handles_constant_rows():
    F = np.vstack([np.full(64, 1.4e-17), np.arange(64.0)])
    out = se._mean_zero(F)
    assert np.all(out[0] == 0) and abs(out[1].mean()) < 1e-12


def test_picard_detects_growth():
    with pytest.raises(se.NonContraction):
        se._picard(lambda u, us: (2 * u + 1, us), np.zeros(3), np.zeros(3), lambda d: float(np.max(np.abs(d))))


def test_convergence_report_helpers():
    rep = se.ConvergenceReport("kpz", [0.25, 0.125, 0.0625], 0.1, [1], 0.05, 50, 8)
    rep.solution_gap = [3.0, 2.0, 1.0]
    rep.flux_gap = [1.0, 2.0, 0.5]
    rep.x_norms = [1.0, 1.5, 1.2]
    assert rep.strictly_decreasing("solution_gap") and not rep.strictly_decreasing("flux_gap")
    assert rep.uniform_ratio == pytest.approx(1.5)
    assert rep.as_dict()["uniform_ratio"] == pytest.approx(1.5)


def test_experiment_validation():
    with pytest.raises(ValueError, match="unknown experiment"):
        se.epsilon_convergence_experiment(A64, [0.5], 0.1, which="gpam")
    A2 = named_coefficient(make_grid(2, 16), "sin")
    with pytest.raises(ValueError, match="dimension one"):
        se.epsilon_convergence_experiment(A2, [1.0], 0.1)


@pytest.mark.parametrize("which", se.EXPERIMENTS)
def test_small_experiment_runs_end_to_end(which):
    A = named_coefficient(make_grid(1, 64), "sin")
    rep = se.epsilon_convergence_experiment(A, [1.0, 0.5, 0.25], 2**-5, seeds=(1,), which=which,
                                            T=0.02, M=16, mc_samples=8)
    assert not rep.partial
    assert len(rep.solution_gap) == 3 and all(np.isfinite(rep.solution_gap))
    assert set(rep.fits) >= {"solution_gap", "flux_gap"}
    assert np.all(np.asarray(rep.x_norms) > 0)
