import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import constants as const

from memtrap.atomtrap import (CS_LINES, BLUE_FRACTION, combine_and_characterize,
                              cs_ground_polarizability, depth_vs_power, dipole_potential)
from memtrap.errors import NoTrapError, ValidationError

AU = const.physical_constants["atomic unit of electric polarizability"][0]


def alpha_oscillator_strength(lam_nm):
    """Independent form: sum of (e^2/m) f / (w0^2 - w^2) with f from the lifetime."""
    w = 2 * math.pi * const.c / (lam_nm * 1e-9)
    total = 0.0
    for lam0, tau_ns, weight in CS_LINES:
        w0 = 2 * math.pi * const.c / (lam0 * 1e-9)
        gamma = 1 / (tau_ns * 1e-9)
        f_one = 2 * math.pi * const.epsilon_0 * const.m_e * const.c**3 * gamma / (const.e**2 * w0**2)
        total += const.e**2 / const.m_e * 3 * weight * f_one / (w0**2 - w**2)
    return total


@pytest.mark.parametrize("lam", [793, 937, 1064, 532, 1550, 880])
def test_polarizability_matches_oscillator_strength_form(lam):
    assert cs_ground_polarizability(lam).alpha_si == pytest.approx(alpha_oscillator_strength(lam), rel=1e-12)


def test_polarizability_signs_and_scale():
    assert cs_ground_polarizability(937).atomic_units == pytest.approx(2950, rel=0.02)
    assert cs_ground_polarizability(793).alpha_si < 0
    # static limit: the D lines carry all of the ~401 au except ~16 au from the core
    assert cs_ground_polarizability(1e7).atomic_units == pytest.approx(401 - 16, rel=0.02)


@pytest.mark.parametrize("lam", [852.0, 894.9, 851.5])
def test_polarizability_rejects_near_resonance(lam):
    with pytest.raises(ValidationError):
        cs_ground_polarizability(lam)


@pytest.fixture(scope="module")
def fig3b(trap):
    return trap.report(3.27, 2.73)


def test_reference_trap(fig3b):
    assert fig3b.depth_uk == pytest.approx(350, rel=0.4)
    assert 0 < fig3b.height_nm < 300
    assert fig3b.depth_uk == pytest.approx(min(-fig3b.u_min_uk, fig3b.surface_barrier_uk - fig3b.u_min_uk))
    assert fig3b.powers_mw == {"793nm": 3.27, "937nm": 2.73}


def test_trap_report_text(fig3b):
    lines = dict(l.split(": ") for l in fig3b.to_text().strip().splitlines())
    assert float(lines["depth_uK"]) == pytest.approx(fig3b.depth_uk, rel=1e-5)
    assert {"trap_height_nm", "u_min_uK", "surface_barrier_uK"} <= set(lines)


def test_depth_scales_linearly(trap):
    assert trap.depth(30.0) / trap.depth(6.0) == pytest.approx(5.0, abs=1e-9)
    assert trap.depth(20.6) == pytest.approx(1200, rel=0.4)


@given(c=st.floats(0.01, 100.0))
def test_potential_linear_in_power(trap, c):
    u1 = dipole_potential(trap.red_mode, 1.0, trap.alpha_red).u_uk
    uc = dipole_potential(trap.red_mode, c, trap.alpha_red).u_uk
    assert np.allclose(uc, c * u1, rtol=1e-12, atol=0)


def test_red_attracts_blue_repels(trap):
    red = dipole_potential(trap.red_mode, 1.0, trap.alpha_red).u_uk
    blue = dipole_potential(trap.blue_mode, 1.0, trap.alpha_blue).u_uk
    assert red.max() <= 0 and red.min() < 0
    assert blue.min() >= 0 and blue.max() > 0


def test_potential_formula_at_one_node(trap):
    m = trap.red_mode
    u = dipole_potential(m, 2.0, trap.alpha_red).u_uk
    i, j = m.field.shape[0] // 2, np.argmin(np.abs(m.y_nm - 300))
    expected = -trap.alpha_red.alpha_si * (0.5 * const.epsilon_0 * const.c * m.field[i, j] ** 2 * 2.0) \
        / (2 * const.epsilon_0 * const.c) / const.k * 1e6
    assert u[i, j] == pytest.approx(expected, rel=1e-12)


def test_more_blue_pushes_trap_outward(trap):
    heights = [trap.report(pb, 2.73).height_nm for pb in (2.8, 3.27, 4.0, 5.0)]
    assert all(b > a for a, b in zip(heights, heights[1:]))


def test_single_color_has_no_trap(trap):
    with pytest.raises(NoTrapError):
        trap.report(0.0, 3.0)
    with pytest.raises(NoTrapError):
        trap.report(3.0, 0.0)


def test_mismatched_inputs_rejected(trap, half_trap):
    with pytest.raises(ValidationError):
        dipole_potential(trap.red_mode, 1.0, trap.alpha_blue)
    with pytest.raises(ValidationError):
        dipole_potential(trap.red_mode, -1.0, trap.alpha_red)
    with pytest.raises(ValidationError):
        dipole_potential(trap.red_mode, 1.0, trap.alpha_red, grid=(trap.red_mode.x_nm[:-1], trap.red_mode.y_nm))
    other = dipole_potential(trap.blue_mode, 1.0, trap.alpha_blue)
    small = other.scaled(1.0)
    object.__setattr__(small, "x_nm", small.x_nm + 1.0)
    with pytest.raises(ValidationError):
        combine_and_characterize(small, dipole_potential(trap.red_mode, 1.0, trap.alpha_red))


def test_depth_vs_power_validation_and_cache(xs):
    with pytest.raises(ValidationError):
        depth_vs_power(xs, 6.0, blue_fraction=1.0, half_domain=True)
    with pytest.raises(ValidationError):
        depth_vs_power(xs, 0.0, half_domain=True)
    d6 = depth_vs_power(xs, 6.0, half_domain=True)
    assert depth_vs_power(xs, 12.0, BLUE_FRACTION, half_domain=True) == pytest.approx(2 * d6, rel=1e-12)


def test_depth_refinement_h10_to_h5(half_trap, xs):
    from memtrap.atomtrap import TwoColorTrap
    fine = TwoColorTrap(xs, 5.0, half_domain=True)
    assert fine.depth(6.0) == pytest.approx(half_trap.depth(6.0), rel=0.05)


def test_potential_csv(fig3b):
    head = fig3b.potential.to_csv().splitlines()[0]
    assert head == "x_nm,y_nm,U_uK"
