import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from memtrap.errors import ValidationError
from memtrap.powerlab import (PowerMeasurement, ScatterTrace, facet_coupling,
                              fit_propagation_loss, synthetic_trace, waveguide_power)


def test_waveguide_power_examples():
    assert waveguide_power(PowerMeasurement(10, 0.4)) == pytest.approx(2.0)
    assert waveguide_power(PowerMeasurement(3, 3)) == pytest.approx(3.0)
    assert waveguide_power(PowerMeasurement(1, 0.2)) == pytest.approx(0.4472, abs=1e-4)


@given(p_in=st.floats(1e-3, 1e3), frac=st.floats(0, 1))
def test_waveguide_power_identity_and_symmetry(p_in, frac):
    p_out = p_in * frac
    pw = waveguide_power(PowerMeasurement(p_in, p_out))
    assert pw**2 == pytest.approx(p_in * p_out, rel=1e-12, abs=1e-300)
    if p_out > 0:
        assert waveguide_power(PowerMeasurement(p_out, p_out)) <= pw + 1e-12


@pytest.mark.parametrize("p_in, p_out", [(0, 0), (-1, 0), (1, 2), (1, -0.1)])
def test_measurement_validation(p_in, p_out):
    with pytest.raises(ValidationError):
        PowerMeasurement(p_in, p_out)


def test_facet_coupling_examples():
    assert facet_coupling(PowerMeasurement(1, 0.2), 1.0, 1.0) == pytest.approx(0.5017, abs=1e-4)
    assert facet_coupling(PowerMeasurement(1, 0.25), 0.0, 1.0) == pytest.approx(0.5)
    assert facet_coupling(PowerMeasurement(1, 1), 0.0, 1.0) == pytest.approx(1.0)


def test_facet_coupling_inconsistent_inputs():
    with pytest.raises(ValidationError):
        facet_coupling(PowerMeasurement(1, 0.9), 3.0, 1.0)
    with pytest.raises(ValidationError):
        facet_coupling(PowerMeasurement(1, 0.5), 1.0, 0.0)


@given(t=st.floats(1e-4, 1), alpha=st.floats(0, 3), length=st.floats(0.01, 1))
def test_facet_coupling_round_trip(t, alpha, length):
    m = PowerMeasurement(1.0, t * 10 ** (-alpha * length / 10))
    eta = facet_coupling(m, alpha, length)
    assert m.p_in_mw * eta**2 * 10 ** (-alpha * length / 10) == pytest.approx(m.p_out_mw, rel=1e-9)


def test_noiseless_fit():
    fit = fit_propagation_loss(synthetic_trace(1.0))
    assert fit.alpha_db_per_cm == pytest.approx(1.0, abs=1e-3)
    assert fit.stderr_db_per_cm < 1e-6


def test_constant_intensity_is_lossless():
    fit = fit_propagation_loss(ScatterTrace(np.arange(5.0), np.full(5, 3.0)))
    assert fit.alpha_db_per_cm == pytest.approx(0.0, abs=1e-12)


@given(c=st.floats(1e-6, 1e6), seed=st.integers(0, 2**31))
def test_fit_scale_invariant(c, seed):
    tr = synthetic_trace(1.0, noise=0.02, seed=seed)
    a = fit_propagation_loss(tr).alpha_db_per_cm
    b = fit_propagation_loss(ScatterTrace(tr.position_cm, c * tr.intensity)).alpha_db_per_cm
    assert b == pytest.approx(a, abs=1e-12)


def test_noisy_fit_is_calibrated():
    hits = 0
    for seed in range(200):
        fit = fit_propagation_loss(synthetic_trace(1.0, 3.0, 30, noise=0.02, seed=seed))
        hits += abs(fit.alpha_db_per_cm - 1.0) <= 3 * fit.stderr_db_per_cm
    assert hits >= 190


@pytest.mark.parametrize("x, y", [
    ([0, 1], [1, 1]),
    ([0, 0, 0], [1, 2, 3]),
    ([0, 2, 1], [1, 1, 1]),
    ([0, 1, 2], [1, 0, 1]),
    ([0, 1, 2], [1, -1, 1]),
])
def test_trace_validation(x, y):
    with pytest.raises(ValidationError):
        ScatterTrace(np.array(x, float), np.array(y, float))


def test_trace_csv_round_trip(tmp_path):
    tr = synthetic_trace(1.0, noise=0.02, seed=3)
    path = tmp_path / "trace.csv"
    path.write_text(tr.to_csv())
    back = ScatterTrace.read_csv(path)
    np.testing.assert_allclose(back.intensity, tr.intensity, rtol=1e-11)
    (tmp_path / "bad.csv").write_text("x,y\n0,1\n")
    with pytest.raises(ValidationError):
        ScatterTrace.read_csv(tmp_path / "bad.csv")


def test_fit_outputs():
    fit = fit_propagation_loss(synthetic_trace(1.0))
    assert "alpha_db_per_cm: 1.000" in fit.to_text()
    assert json.loads(fit.to_json())["n_samples"] == 30
