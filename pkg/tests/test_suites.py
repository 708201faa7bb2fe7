from __future__ import annotations

import numpy as np
import pytest

from specbesov import suites as S
from specbesov.grid_core import make_grid, named_coefficient
from specbesov.lp_blocks import besov_norm, block_table
from specbesov.operator_spectral import assemble, decompose


def test_run_config_defaults():
    cfg = S.RunConfig()
    assert cfg.n(512) == 512 and cfg.eps_list([0.5]) == [0.5]
    cfg = S.RunConfig(N=64, eps=[0.25])
    assert cfg.n(512) == 64 and cfg.eps_list([0.5]) == [0.25]


def test_dec_cache_reuses_decompositions(tmp_path):
    cache = S.DecCache(str(tmp_path))
    A = named_coefficient(make_grid(1, 32), "sin", 0.5)
    assert cache.get(A) is cache.get(named_coefficient(make_grid(1, 32), "sin", 0.5))
    assert len(list(tmp_path.glob("*.npz"))) == 1


def test_saturating_input_has_flat_weighted_blocks():
    dec = decompose(assemble(named_coefficient(make_grid(1, 128), "sin", 0.25)))
    f = S.saturating_input(dec, -0.5, np.random.default_rng(0))
    tab = block_table(dec)
    w = np.array([2.0 ** (-0.5 * j) * np.max(np.abs(b)) for j, b in zip(tab.js, tab.all_blocks(f))])
    assert besov_norm(dec, -0.5, f) == pytest.approx(w.max())
    assert w[w > 0].min() > 0.2 * w.max()


def test_d1_suite_passes():
    certs = S.suite_d1(S.RunConfig(), S.DecCache())
    assert all(c.verdict for c in certs), [(c.name, c.measured) for c in certs]


def test_registry_suite_subset():
    certs = S.suite_registry(S.RunConfig(samples=2), S.DecCache(), ["prec_good", "uniform_prec"])
    assert [c.name for c in certs] == ["prec_good", "uniform_prec"]
