"""Two-color evanescent-field dipole trap for ground-state cesium.

A blue-detuned mode (793 nm) repels atoms from the surface and a red-detuned
mode (937 nm) attracts them; the sum has a minimum a few hundred nanometres
above the ridge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import constants as const
from scipy import ndimage

from .errors import NoTrapError, ValidationError
from .geometry import WaveguideCrossSection
from .modesolver import ModeSolution, solve_mode
from .output import grid_csv

BLUE_NM = 793.0
RED_NM = 937.0
#: Reference operating point: 3.27 mW blue with 2.73 mW red.
BLUE_FRACTION = 3.27 / 6.00

# Cs D lines: vacuum wavelength (nm), excited-state lifetime (ns), line weight.
# Values from the standard "Cesium D Line Data" compilation (rev. 2.2.1, 2019).
CS_D1 = (894.59295986, 34.791, 1.0 / 3.0)
CS_D2 = (852.34727582, 30.473, 2.0 / 3.0)
CS_LINES = (CS_D1, CS_D2)


@dataclass(frozen=True)
class Polarizability:
    wavelength_nm: float
    alpha_si: float  # C m^2 / V

    @property
    def atomic_units(self) -> float:
        au = const.physical_constants["atomic unit of electric polarizability"][0]
        return self.alpha_si / au


def cs_ground_polarizability(wavelength_nm: float) -> Polarizability:
    """Scalar ground-state polarizability from the D1 + D2 lines, including
    counter-rotating terms."""
    for lam0, _, _ in CS_LINES:
        if abs(wavelength_nm - lam0) < 1.0:
            raise ValidationError(f"{wavelength_nm} nm is within 1 nm of a Cs resonance", "wavelength_nm")
    omega = 2 * math.pi * const.c / (wavelength_nm * 1e-9)
    alpha = 0.0
    for lam0, tau_ns, weight in CS_LINES:
        w0 = 2 * math.pi * const.c / (lam0 * 1e-9)
        gamma = 1.0 / (tau_ns * 1e-9)
        alpha += weight * 3 * math.pi * const.epsilon_0 * const.c**3 * gamma / w0**3 * (
            1.0 / (w0 - omega) + 1.0 / (w0 + omega))
    return Polarizability(float(wavelength_nm), alpha)


@dataclass(frozen=True, eq=False)
class PotentialMap:
    """Potential energy / k_B in microkelvin on a mode grid."""

    x_nm: np.ndarray
    y_nm: np.ndarray
    u_uk: np.ndarray
    solid: np.ndarray = field(repr=False)
    surface_y_nm: float = 0.0
    powers_mw: dict = field(default_factory=dict)

    def same_grid(self, other: "PotentialMap") -> bool:
        return (self.u_uk.shape == other.u_uk.shape and np.allclose(self.x_nm, other.x_nm)
                and np.allclose(self.y_nm, other.y_nm))

    def __add__(self, other: "PotentialMap") -> "PotentialMap":
        if not self.same_grid(other):
            raise ValidationError("potential maps are on different grids", "grid")
        return PotentialMap(self.x_nm, self.y_nm, self.u_uk + other.u_uk, self.solid | other.solid,
                            self.surface_y_nm, {**self.powers_mw, **other.powers_mw})

    def scaled(self, c: float) -> "PotentialMap":
        return PotentialMap(self.x_nm, self.y_nm, c * self.u_uk, self.solid, self.surface_y_nm,
                            {k: c * v for k, v in self.powers_mw.items()})

    def to_csv(self) -> str:
        return grid_csv(self.x_nm, self.y_nm, self.u_uk, ("x_nm", "y_nm", "U_uK"))


def dipole_potential(mode: ModeSolution, power_mw: float, alpha: Polarizability,
                     grid: tuple | None = None) -> PotentialMap:
    """U = -alpha I / (2 eps0 c) for ``power_mw`` in the mode, in microkelvin.

    ``grid``, when given as ``(x_nm, y_nm)``, must match the mode grid.
    """
    if grid is not None:
        gx, gy = (np.asarray(g, float) for g in grid)
        if gx.shape != mode.x_nm.shape or gy.shape != mode.y_nm.shape or not (
                np.allclose(gx, mode.x_nm) and np.allclose(gy, mode.y_nm)):
            raise ValidationError("requested grid does not match the mode grid", "grid")
    if not math.isclose(alpha.wavelength_nm, mode.wavelength_nm, rel_tol=1e-9):
        raise ValidationError(f"polarizability at {alpha.wavelength_nm} nm used with a "
                              f"{mode.wavelength_nm} nm mode", "alpha")
    if power_mw < 0:
        raise ValidationError("must be non-negative", "power_mw")
    intensity = mode.intensity() * power_mw  # mode carries 1 mW
    u = -alpha.alpha_si * intensity / (2 * const.epsilon_0 * const.c) / const.k * 1e6
    return PotentialMap(mode.x_nm, mode.y_nm, u, mode.dielectric(), mode.xsection.t_wg_nm,
                        {f"{mode.wavelength_nm:g}nm": float(power_mw)})


@dataclass(frozen=True, eq=False)
class TrapReport:
    potential: PotentialMap = field(repr=False)
    x_nm: float
    height_nm: float  # above the ridge top
    u_min_uk: float
    depth_uk: float
    surface_barrier_uk: float
    escape_level_uk: float
    powers_mw: dict

    def to_text(self) -> str:
        lines = [
            f"trap_x_nm: {self.x_nm:.6g}",
            f"trap_height_nm: {self.height_nm:.6g}",
            f"u_min_uK: {self.u_min_uk:.6g}",
            f"depth_uK: {self.depth_uk:.6g}",
            f"surface_barrier_uK: {self.surface_barrier_uk:.6g}",
            f"escape_level_uK: {self.escape_level_uk:.6g}",
        ]
        lines += [f"power_{k}_mW: {v:.6g}" for k, v in sorted(self.powers_mw.items())]
        return "\n".join(lines) + "\n"


def _escape_level(u, free, start, targets, iters=60):
    """Lowest level L such that ``start`` connects to a target cell through free
    cells with U <= L (the minimax path barrier). ``inf`` if never connected."""
    if not targets.any():
        return math.inf
    lo = float(u[start])
    hi = float(u[free].max())

    def connected(level):
        labels, _ = ndimage.label(free & (u <= level))
        lab = labels[start]
        return lab != 0 and bool(np.any(labels[targets] == lab))

    if not connected(hi):
        return math.inf
    if connected(lo):
        return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if connected(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-9 * max(1.0, abs(hi)):
            break
    return hi


def combine_and_characterize(u_blue: PotentialMap, u_red: PotentialMap) -> TrapReport:
    """Sum two color potentials and locate / characterize the trap above the ridge.

    The minimum is searched on the vertical through the waveguide centre and
    refined with a parabola through the three lowest samples. The depth is the
    lower of the two barriers on that line, measured from the minimum: the
    potential maximum between the minimum and the ridge top, and zero (free
    space far from the structure). ``escape_level_uk`` is the lowest potential
    level at which the minimum connects to any surface or the domain edge in
    2D; it flags lateral leaks such as paths down the ridge sidewalls.
    """
    total = u_blue + u_red
    u, y = total.u_uk, total.y_nm
    free = ~total.solid
    nx = u.shape[0]
    # even grid: the centre line sits between the two middle columns
    cols = [nx // 2 - 1, nx // 2] if nx % 2 == 0 else [nx // 2]
    line = u[cols].mean(axis=0)
    above = np.nonzero((y > total.surface_y_nm) & free[cols].all(axis=0))[0]
    if above.size < 3:
        raise NoTrapError("no free-space samples above the waveguide")
    seg = line[above]
    k = int(np.argmin(seg))
    if k == 0 or k == seg.size - 1 or not seg[k] < 0:
        raise NoTrapError("no trap: potential has no minimum above the surface")
    j = above[k]
    y1 = y[j]
    f0, f1, f2 = line[j - 1], line[j], line[j + 1]
    denom = f0 - 2 * f1 + f2
    h = y1 - y[j - 1]
    if denom > 0:
        shift = 0.5 * h * (f0 - f2) / denom
        y_min = y1 + shift
        u_min = f1 - 0.125 * (f0 - f2) ** 2 / denom
    else:
        y_min, u_min = y1, f1

    # barrier toward the surface: highest point of the centre-line profile
    # between the ridge top and the minimum
    surf_level = float(line[above[0]:j + 1].max())
    # far from the structure U -> 0, so escaping to free space costs -U_min
    depth = min(-u_min, surf_level - u_min)
    if not depth > 0:
        raise NoTrapError("no trap: no positive-depth minimum above the surface")
    # lowest level that connects the minimum to any surface or the domain edge
    # through the full 2D map, reported as a diagnostic of lateral leaks
    targets = free & ndimage.binary_dilation(total.solid)
    targets[[0, -1], :] |= free[[0, -1], :]
    targets[:, [0, -1]] |= free[:, [0, -1]]
    escape = _escape_level(u, free, (cols[-1], j), targets)
    return TrapReport(potential=total, x_nm=0.0, height_nm=float(y_min - total.surface_y_nm),
                      u_min_uk=float(u_min), depth_uk=float(depth),
                      surface_barrier_uk=surf_level, escape_level_uk=float(escape),
                      powers_mw=dict(total.powers_mw))


class TwoColorTrap:
    """Blue and red modes of one cross-section, solved once and reused for any powers."""

    def __init__(self, xsection: WaveguideCrossSection, h_nm: float = 10.0, *,
                 blue_nm: float = BLUE_NM, red_nm: float = RED_NM, **mode_kw):
        self.xsection = xsection
        self.blue_mode = solve_mode(xsection, blue_nm, h_nm, **mode_kw)
        self.red_mode = solve_mode(xsection, red_nm, h_nm, **mode_kw)
        self.alpha_blue = cs_ground_polarizability(blue_nm)
        self.alpha_red = cs_ground_polarizability(red_nm)

    def potentials(self, p_blue_mw: float, p_red_mw: float):
        return (dipole_potential(self.blue_mode, p_blue_mw, self.alpha_blue),
                dipole_potential(self.red_mode, p_red_mw, self.alpha_red))

    def report(self, p_blue_mw: float, p_red_mw: float) -> TrapReport:
        return combine_and_characterize(*self.potentials(p_blue_mw, p_red_mw))

    def depth(self, p_total_mw: float, blue_fraction: float = BLUE_FRACTION) -> float:
        if not 0.0 < blue_fraction < 1.0:
            raise ValidationError("must lie in (0, 1)", "blue_fraction")
        if not p_total_mw > 0:
            raise ValidationError("must be positive", "p_total_mw")
        return self.report(blue_fraction * p_total_mw, (1 - blue_fraction) * p_total_mw).depth_uk


@lru_cache(maxsize=8)
def _trap_for(xsection: WaveguideCrossSection, h_nm: float, half_domain: bool) -> TwoColorTrap:
    return TwoColorTrap(xsection, h_nm, half_domain=half_domain)


def depth_vs_power(xsection: WaveguideCrossSection, p_total_mw: float,
                   blue_fraction: float = BLUE_FRACTION, h_nm: float = 10.0,
                   half_domain: bool = False) -> float:
    """Trap depth (uK) for ``p_total_mw`` split ``blue_fraction`` : rest between colors."""
    return _trap_for(xsection, float(h_nm), half_domain).depth(p_total_mw, blue_fraction)
