"""Transmission of free-standing dielectric films (characteristic-matrix method)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ValidationError
from .output import csv_text

Polarization = Literal["s", "p", "circular"]

REPORT_HEADER = ("d_nm", "T_s", "T_p", "T_circ")


@dataclass(frozen=True)
class FilmStack:
    """Lossless layers ``(index, thickness_nm)`` ordered from the incidence side,
    with the same ambient medium on both sides."""

    layers: tuple = ()
    ambient: float = 1.0

    def __post_init__(self):
        layers = tuple((float(n), float(d)) for n, d in self.layers)
        for n, d in layers:
            if n < 1.0:
                raise ValidationError(f"layer index {n} < 1", "layers")
            if d < 0.0:
                raise ValidationError(f"layer thickness {d} < 0", "layers")
        object.__setattr__(self, "layers", layers)

    @classmethod
    def single(cls, n: float, d_nm: float) -> "FilmStack":
        return cls(((n, d_nm),))


def _check_angle(theta_deg):
    if not 0.0 <= theta_deg < 90.0:
        raise ValidationError("incidence angle must lie in [0, 90) degrees", "theta_deg")


def _rt_single_pol(stack: FilmStack, wavelength_nm: float, theta_deg: float, pol: str):
    n0 = stack.ambient
    s0 = n0 * math.sin(math.radians(theta_deg))
    cos0 = math.cos(math.radians(theta_deg))

    def admittance(n, cos_t):
        return n * cos_t if pol == "s" else n / cos_t

    M = np.eye(2, dtype=complex)
    for n, d in stack.layers:
        cos_t = np.sqrt(complex(1.0 - (s0 / n) ** 2))
        delta = 2 * math.pi * n * d * cos_t / wavelength_nm
        eta = admittance(n, cos_t)
        layer = np.array([[np.cos(delta), 1j * np.sin(delta) / eta],
                          [1j * eta * np.sin(delta), np.cos(delta)]])
        M = M @ layer
    eta0 = admittance(n0, cos0)
    den = eta0 * M[0, 0] + eta0 * eta0 * M[0, 1] + M[1, 0] + eta0 * M[1, 1]
    r = (eta0 * M[0, 0] + eta0 * eta0 * M[0, 1] - M[1, 0] - eta0 * M[1, 1]) / den
    t = 2 * eta0 / den
    return float(abs(r) ** 2), float(abs(t) ** 2)


def film_reflectance_transmittance(stack: FilmStack, wavelength_nm: float, theta_deg: float = 0.0,
                                   pol: Polarization = "circular") -> tuple[float, float]:
    """Power reflectance and transmittance ``(R, T)``.

    ``circular`` is the mean of the s and p results.
    """
    _check_angle(theta_deg)
    if pol == "circular":
        rs, ts = _rt_single_pol(stack, wavelength_nm, theta_deg, "s")
        rp, tp = _rt_single_pol(stack, wavelength_nm, theta_deg, "p")
        return 0.5 * (rs + rp), 0.5 * (ts + tp)
    if pol not in ("s", "p"):
        raise ValidationError(f"unknown polarization {pol!r}", "pol")
    return _rt_single_pol(stack, wavelength_nm, theta_deg, pol)


def film_transmittance(stack: FilmStack, wavelength_nm: float, theta_deg: float = 0.0,
                       pol: Polarization = "circular") -> float:
    return film_reflectance_transmittance(stack, wavelength_nm, theta_deg, pol)[1]


def find_ar_thickness(n: float, wavelength_nm: float, theta_deg: float = 0.0) -> float:
    """Thinnest non-zero film of index ``n`` that is fully transmitting
    (half-wave condition along the refracted ray)."""
    if not n > 1.0:
        raise ValidationError("must exceed 1", "n")
    _check_angle(theta_deg)
    s = math.sin(math.radians(theta_deg))
    return wavelength_nm / (2.0 * math.sqrt(n * n - s * s))


def membrane_transmission_report(thicknesses_nm: Sequence[float], wavelength_nm: float,
                                 theta_deg: float = 45.0, n: float = 1.76):
    """Rows ``(d_nm, T_s, T_p, T_circ)`` for single membranes of index ``n``."""
    rows = []
    for d in thicknesses_nm:
        stack = FilmStack.single(n, d)
        ts = film_transmittance(stack, wavelength_nm, theta_deg, "s")
        tp = film_transmittance(stack, wavelength_nm, theta_deg, "p")
        rows.append((float(d), ts, tp, 0.5 * (ts + tp)))
    return rows


def report_csv(rows) -> str:
    return csv_text(REPORT_HEADER, rows)
