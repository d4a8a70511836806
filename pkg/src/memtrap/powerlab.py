"""Analysis helpers for fiber-coupled transmission measurements.

Covers the in-waveguide power estimate from input and output powers, loss
extraction from the decay of scattered light along the guide and per-facet
coupling efficiency.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ValidationError

TRACE_HEADER = ("position_cm", "intensity")


@dataclass(frozen=True)
class PowerMeasurement:
    """Powers (mW) measured before the input fiber and after the output fiber."""

    p_in_mw: float
    p_out_mw: float

    def __post_init__(self):
        if not self.p_in_mw > 0:
            raise ValidationError("must be positive", "p_in_mw")
        if not 0.0 <= self.p_out_mw <= self.p_in_mw:
            raise ValidationError("must lie in [0, p_in_mw]", "p_out_mw")

    @property
    def transmission(self) -> float:
        return self.p_out_mw / self.p_in_mw


@dataclass(frozen=True, eq=False)
class ScatterTrace:
    position_cm: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.position_cm, dtype=float)
        y = np.asarray(self.intensity, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValidationError("positions and intensities must be 1D and equally long", "trace")
        if x.size < 3:
            raise ValidationError("need at least 3 samples", "trace")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ValidationError("non-finite sample", "trace")
        if np.any(y <= 0):
            raise ValidationError("intensities must be positive", "intensity")
        if np.ptp(x) == 0:
            raise ValidationError("degenerate fit: all positions equal", "position_cm")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("positions must be strictly increasing", "position_cm")
        object.__setattr__(self, "position_cm", x)
        object.__setattr__(self, "intensity", y)

    @classmethod
    def read_csv(cls, path: str | Path) -> "ScatterTrace":
        """Read a ``position_cm,intensity`` file with a one-line header."""
        text = Path(path).read_text()
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ValidationError(f"expected header {','.join(TRACE_HEADER)}", "trace")
        rows = [r for r in reader if r and any(c.strip() for c in r)]
        try:
            data = np.array([[float(a), float(b)] for a, b in rows])
        except ValueError as exc:
            raise ValidationError(f"malformed row: {exc}", "trace") from None
        if data.size == 0:
            raise ValidationError("need at least 3 samples", "trace")
        return cls(data[:, 0], data[:, 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack([self.position_cm, self.intensity]), delimiter=",",
                   header=",".join(TRACE_HEADER), comments="", fmt="%.12g")
        return buf.getvalue()


def synthetic_trace(alpha_db_per_cm: float = 1.0, length_cm: float = 3.0, n: int = 30,
                    noise: float = 0.0, seed: int | None = None, i0: float = 1.0) -> ScatterTrace:
    """Exponential decay ``i0 * 10**(-alpha x / 10)`` with optional multiplicative
    Gaussian noise of relative size ``noise``."""
    x = np.linspace(0.0, length_cm, n)
    y = i0 * 10.0 ** (-0.1 * alpha_db_per_cm * x)
    if noise:
        rng = np.random.default_rng(seed)
        y = y * (1.0 + noise * rng.standard_normal(n))
    return ScatterTrace(x, y)


def waveguide_power(m: PowerMeasurement) -> float:
    """Power inside the guide (mW), assuming equal coupling at both facets."""
    return math.sqrt(m.p_in_mw * m.p_out_mw)


@dataclass(frozen=True)
class LossFit:
    alpha_db_per_cm: float
    stderr_db_per_cm: float
    intercept_log10: float
    n_samples: int

    def to_text(self) -> str:
        return (f"alpha_db_per_cm: {self.alpha_db_per_cm:.3f}\n"
                f"stderr_db_per_cm: {self.stderr_db_per_cm:.3g}\n"
                f"n_samples: {self.n_samples}\n")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def fit_propagation_loss(trace: ScatterTrace) -> LossFit:
    """Least-squares line through ``log10(intensity)`` against position.

    The loss in dB/cm is ``-10 * slope``; its standard error follows from the
    regression residuals.
    """
    res = stats.linregress(trace.position_cm, np.log10(trace.intensity))
    return LossFit(float(-10.0 * res.slope), float(10.0 * res.stderr), float(res.intercept),
                   int(trace.position_cm.size))


def facet_coupling(m: PowerMeasurement, alpha_db_per_cm: float, length_cm: float) -> float:
    """Per-facet coupling efficiency given the propagation loss over ``length_cm``."""
    if not length_cm > 0:
        raise ValidationError("must be positive", "length_cm")
    if alpha_db_per_cm < 0:
        raise ValidationError("must be non-negative", "alpha_db_per_cm")
    eta = math.sqrt(m.transmission * 10.0 ** (alpha_db_per_cm * length_cm / 10.0))
    if eta > 1.0 + 1e-12:
        raise ValidationError(
            f"inconsistent inputs: coupling efficiency {eta:.4g} exceeds 1", "alpha_db_per_cm")
    return min(eta, 1.0)
