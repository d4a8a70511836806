import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import eigh_tridiagonal

from memtrap.errors import NoGuidedModeError, ValidationError
from memtrap.geometry import WaveguideCrossSection
from memtrap.modesolver import (evanescent_decay_length, solve_mode, solve_slab_te,
                                slab_upper_bound)


def slab_fd(n_core, n_clad, t_nm, lam, h=0.25, half_window=3000.0):
    """Independent oracle: 1D finite-difference TE slab on a fine grid."""
    x = np.arange(-half_window, half_window + h / 2, h)
    # each node carries the permittivity averaged over its own cell
    cover = np.clip((t_nm / 2 - (np.abs(x) - h / 2)) / h, 0.0, 1.0)
    n2 = n_clad**2 + cover * (n_core**2 - n_clad**2)
    k0 = 2 * math.pi / lam
    d = -2.0 / h**2 + k0**2 * n2
    e = np.full(x.size - 1, 1.0 / h**2)
    w = eigh_tridiagonal(d, e, eigvals_only=True, select="i",
                         select_range=(x.size - 1, x.size - 1))
    return math.sqrt(w[0]) / k0


@pytest.mark.parametrize("n_core, t, lam", [(1.76, 100, 937), (1.76, 50, 793), (2.05, 100, 937),
                                            (1.76, 400, 852)])
def test_slab_matches_fine_finite_difference(n_core, t, lam):
    assert solve_slab_te(n_core, 1.0, t, lam) == pytest.approx(slab_fd(n_core, 1.0, t, lam), abs=2e-5)


def test_slab_reference_values():
    assert solve_slab_te(1.76, 1.0, 100, 937) == pytest.approx(1.17459, abs=1e-5)
    assert solve_slab_te(1.76, 1.0, 20000, 937) == pytest.approx(1.75985, abs=1e-5)


@given(n_core=st.floats(1.3, 3.5), t=st.floats(10, 2000), lam=st.floats(400, 1600))
def test_slab_index_bounded_and_satisfies_dispersion(n_core, t, lam):
    n = solve_slab_te(n_core, 1.0, t, lam)
    assert 1.0 < n < n_core
    k0 = 2 * math.pi / lam
    kappa, gamma = k0 * math.sqrt(n_core**2 - n**2), k0 * math.sqrt(n**2 - 1)
    assert kappa * t / 2 <= math.pi / 2 + 1e-9
    assert kappa * math.tan(kappa * t / 2) == pytest.approx(gamma, rel=1e-6, abs=1e-9)


@given(t1=st.floats(20, 500), dt=st.floats(1, 200))
def test_slab_index_grows_with_thickness(t1, dt):
    assert solve_slab_te(1.76, 1.0, t1 + dt, 937) > solve_slab_te(1.76, 1.0, t1, 937)


def test_decay_length():
    assert evanescent_decay_length(1.15310, 937) == pytest.approx(937 / (2 * math.pi * math.sqrt(1.15310**2 - 1)))
    with pytest.raises(NoGuidedModeError):
        evanescent_decay_length(1.0, 937)


@pytest.fixture(scope="module")
def mode937(trap):
    return trap.red_mode


def test_reference_mode_index_and_bounds(mode937, xs):
    # between the membrane-only slab and the ridge-thick slab
    assert solve_slab_te(1.76, 1.0, 50, 937) < mode937.n_eff < slab_upper_bound(xs, 937)
    assert mode937.n_eff == pytest.approx(1.1531, abs=5e-4)


def test_mode_normalized_to_one_mw(mode937):
    assert mode937.power_mw() == pytest.approx(1.0, rel=1e-12)


def test_mode_symmetric_and_positive(mode937):
    E = mode937.field
    assert np.max(np.abs(E - E[::-1])) <= 1e-9 * np.max(np.abs(E))
    assert E[np.unravel_index(np.argmax(np.abs(E)), E.shape)] > 0


def test_half_domain_matches_full(mode937, half_trap):
    half = half_trap.red_mode
    assert half.n_eff == pytest.approx(mode937.n_eff, abs=1e-10)
    assert np.allclose(half.field, mode937.field, rtol=0, atol=1e-6 * np.abs(mode937.field).max())


def test_field_decays_with_slab_rate_above_ridge(mode937):
    """Far above the ridge centre the field falls off like exp(-y / L)."""
    E, y = mode937.field, mode937.y_nm
    i = E.shape[0] // 2
    sel = (y > 600) & (y < 1000)
    slope = np.polyfit(y[sel], np.log(E[i, sel]), 1)[0]
    # 2D spreading only makes the decay faster than the 1D estimate
    assert -1.0 / slope == pytest.approx(mode937.decay_length_nm, rel=0.15)


def test_wide_ridge_approaches_slab():
    xs = WaveguideCrossSection(w_wg_um=20.0)
    mode = solve_mode(xs, 937, 20.0, half_domain=True)
    assert mode.n_eff == pytest.approx(solve_slab_te(1.76, 1.0, 100, 937), abs=2e-3)


def test_second_order_mesh_convergence(xs):
    n = [solve_mode(xs, 937, h, half_domain=True).n_eff for h in (20.0, 10.0, 5.0)]
    order = math.log2(abs(n[0] - n[1]) / abs(n[1] - n[2]))
    assert 1.7 < order < 2.5


def test_higher_index_core_confines_more(xs):
    lo = solve_mode(xs, 937, 20.0, half_domain=True).n_eff
    hi = solve_mode(WaveguideCrossSection(n_core=2.05), 937, 20.0, half_domain=True).n_eff
    assert hi > lo


def test_csv_export(mode937):
    text = mode937.to_csv()
    first = text.splitlines()[:2]
    assert first[0] == "x_nm,y_nm,E"
    assert len(text.splitlines()) == mode937.field.size + 1
    assert "n_eff=" in mode937.summary()


@pytest.mark.parametrize("kw", [dict(h_nm=25.0), dict(h_nm=0.0), dict(margin_x_nm=1000.0)])
def test_solver_preconditions(xs, kw):
    with pytest.raises(ValidationError):
        solve_mode(xs, 937, **kw)


def test_cross_section_validation():
    with pytest.raises(ValidationError):
        WaveguideCrossSection(t_wg_nm=50, t_mem_nm=50)
    with pytest.raises(ValidationError):
        WaveguideCrossSection(n_core=1.0)
    with pytest.raises(ValidationError):
        solve_slab_te(1.0, 1.5, 100, 937)
