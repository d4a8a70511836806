"""Waveguide cross-section, device plan-view designs and thermal-mask rasterization.

Plan-view coordinates are in micrometres with the origin at the centre of the
atom-loading zone. ``x`` runs along the waveguide, ``y`` across it. Mask arrays
are indexed ``[i, j]`` with ``i`` along ``x`` and ``j`` along ``y``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import ndimage

from .errors import ValidationError

#: Sub-samples per cell edge used to estimate material coverage of a cell.
SUPERSAMPLE = 8


@dataclass(frozen=True)
class WaveguideCrossSection:
    """Ridge membrane waveguide: a ``t_wg_nm`` thick ridge of width ``w_wg_um``
    standing on a ``t_mem_nm`` membrane of the same material.

    ``t_wg_nm`` is the full ridge height measured from the membrane underside.
    """

    w_wg_um: float = 1.6
    t_wg_nm: float = 100.0
    t_mem_nm: float = 50.0
    n_core: float = 1.76
    n_amb: float = 1.0

    def __post_init__(self):
        if not self.w_wg_um > 0:
            raise ValidationError("must be positive", "w_wg_um")
        if not self.t_mem_nm > 0:
            raise ValidationError("must be positive", "t_mem_nm")
        if not self.t_mem_nm < self.t_wg_nm:
            raise ValidationError("membrane must be thinner than the ridge", "t_mem_nm")
        if not self.n_amb >= 1.0:
            raise ValidationError("must be >= 1", "n_amb")
        if not self.n_core > self.n_amb:
            raise ValidationError("core index must exceed ambient index", "n_core")


@dataclass(frozen=True)
class Straight:
    """Free-standing strip bridging a circular hole of diameter ``span_um`` in a
    silicon-backed membrane."""

    span_um: float
    window_mm: float = 6.0

    @property
    def largest_feature_um(self) -> float:
        return self.span_um


@dataclass(frozen=True)
class HybridNeedle:
    """Two silicon needles ``gap_um`` apart, joined by a membrane strip whose
    untapered central section is ``span_um`` long."""

    span_um: float
    gap_um: float
    window_mm: float = 6.0

    @property
    def largest_feature_um(self) -> float:
        return self.gap_um


@dataclass(frozen=True)
class Infinity:
    """Window-wide membrane with two circular holes of diameter
    ``hole_diameter_um`` touching the waveguide line from opposite sides."""

    hole_diameter_um: float
    window_mm: float = 6.0

    @property
    def span_um(self) -> float:
        return self.hole_diameter_um

    @property
    def largest_feature_um(self) -> float:
        return 2 * self.hole_diameter_um


DeviceDesign = Union[Straight, HybridNeedle, Infinity]

VARIANTS = {"straight": Straight, "hybrid_needle": HybridNeedle, "infinity": Infinity}


def variant_name(design: DeviceDesign) -> str:
    for name, cls in VARIANTS.items():
        if isinstance(design, cls):
            return name
    raise ValidationError(f"unknown design type {type(design).__name__}", "variant")


def make_design(variant: str, span_um: float, gap_um: float | None = None,
                window_mm: float = 6.0) -> DeviceDesign:
    """Build a design from a variant name and its span (hole diameter for infinity)."""
    key = variant.lower().replace("-", "_")
    if key in ("hybrid", "needle"):
        key = "hybrid_needle"
    if key not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}", "variant")
    if key == "hybrid_needle":
        if gap_um is None:
            raise ValidationError("required for hybrid_needle", "gap_um")
        return HybridNeedle(span_um, gap_um, window_mm)
    if key == "infinity":
        return Infinity(span_um, window_mm)
    return Straight(span_um, window_mm)


@dataclass(frozen=True)
class MaterialProperties:
    k_w_per_mk: float = 1.0
    alpha_db_per_cm: float = 1.0
    emissivity: float = 0.05
    t_fail_k: float = 2354.0
    t_amb_k: float = 300.0
    absorbed_fraction: float = 1.0

    def __post_init__(self):
        if not self.k_w_per_mk > 0:
            raise ValidationError("must be positive", "k_w_per_mk")
        if not self.alpha_db_per_cm >= 0:
            raise ValidationError("must be non-negative", "alpha_db_per_cm")
        if not 0.0 <= self.emissivity <= 1.0:
            raise ValidationError("must lie in [0, 1]", "emissivity")
        if not self.t_amb_k > 0:
            raise ValidationError("must be positive", "t_amb_k")
        if not self.t_fail_k > self.t_amb_k:
            raise ValidationError("must exceed t_amb_k", "t_fail_k")
        if not 0.0 <= self.absorbed_fraction <= 1.0:
            raise ValidationError("must lie in [0, 1]", "absorbed_fraction")

    @property
    def alpha_per_m(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha_db_per_cm * math.log(10.0) / 10.0 * 100.0


class CellKind(enum.IntEnum):
    HOLE = 0
    MEMBRANE = 1
    RIDGE = 2
    SILICON = 3


@dataclass(frozen=True, eq=False)
class ThermalMask:
    """Rasterized plan view of a suspended device.

    Attributes
    ----------
    cell_um : float
        Square cell edge.
    kind : ndarray of int8
        :class:`CellKind` per cell.
    thickness_nm : ndarray
        Effective sheet thickness, i.e. the cell-averaged material thickness.
        Zero on hole and silicon cells.
    fill : ndarray
        Fraction of the cell area covered by membrane (radiating area).
    path : ndarray, shape (m, 2)
        Ordered ``(i, j)`` indices of the waveguide cells between the two
        silicon contacts.
    x_um, y_um : ndarray
        Cell-centre coordinates along each axis.
    """

    cell_um: float
    kind: np.ndarray
    thickness_nm: np.ndarray
    fill: np.ndarray
    path: np.ndarray
    x_um: np.ndarray
    y_um: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.kind.shape

    @property
    def path_length_um(self) -> float:
        """Waveguide length between the two silicon contacts."""
        return len(self.path) * self.cell_um

    def area_um2(self, kind: CellKind) -> float:
        return float(np.count_nonzero(self.kind == kind)) * self.cell_um**2

    def open_regions_um2(self) -> list[float]:
        """Void area of each connected region not fully covered by material,
        largest first. Partially covered cells count by their uncovered part."""
        void = (self.fill < 1.0) & (self.kind != CellKind.SILICON)
        labels, n = ndimage.label(void)
        weights = np.where(void, 1.0 - self.fill, 0.0)
        areas = ndimage.sum(weights, labels, index=np.arange(1, n + 1)) * self.cell_um**2
        return sorted((float(a) for a in np.atleast_1d(areas)), reverse=True)

    def membrane_area_um2(self) -> float:
        covered = self.kind != CellKind.SILICON
        return float(np.sum(self.fill[covered])) * self.cell_um**2


def validate_design(design: DeviceDesign) -> DeviceDesign:
    """Return ``design`` unchanged, or raise :class:`ValidationError` naming the
    first violated invariant."""
    if not isinstance(design, (Straight, HybridNeedle, Infinity)):
        raise ValidationError(f"unknown design type {type(design).__name__}", "variant")
    if not design.window_mm > 0:
        raise ValidationError("must be positive", "window_mm")
    if isinstance(design, Infinity):
        if not design.hole_diameter_um > 0:
            raise ValidationError("must be positive", "hole_diameter_um")
    else:
        if not design.span_um > 0:
            raise ValidationError("must be positive", "span_um")
    if isinstance(design, HybridNeedle):
        if not design.gap_um > 0:
            raise ValidationError("must be positive", "gap_um")
        if not design.gap_um > design.span_um:
            raise ValidationError("gap must exceed span", "gap_um")
    if design.largest_feature_um > design.window_mm * 1000.0:
        raise ValidationError("window edge must be at least the largest feature", "window_mm")
    return design


def domain_side_um(design: DeviceDesign) -> float:
    """Side of the simulated square around the loading zone."""
    return max(4.0 * design.span_um, 1000.0)


def _band_cover(center, cell, width):
    """Fraction of [center - cell/2, center + cell/2] inside [-width/2, width/2]."""
    lo = np.maximum(center - cell / 2, -width / 2)
    hi = np.minimum(center + cell / 2, width / 2)
    return np.clip(hi - lo, 0.0, None) / cell


def _coverage(indicator, x, y, cell, ss=SUPERSAMPLE):
    """Area fraction of each cell for which ``indicator(X, Y)`` holds."""
    offs = (np.arange(ss) + 0.5) / ss * cell - cell / 2
    out = np.zeros((x.size, y.size))
    for dx in offs:
        X, Y = np.meshgrid(x + dx, y, indexing="ij")
        for dy in offs:
            out += indicator(X, Y + dy)
    return out / ss**2


def rasterize_mask(design: DeviceDesign, xsection: WaveguideCrossSection, cell_um: float,
                   *, w_strip_um: float = 10.0, w_taper_um: float = 100.0) -> ThermalMask:
    """Rasterize a device into a :class:`ThermalMask`.

    The simulated square has side ``max(4 * span, 1 mm)`` with silicon contact on
    its outer ring. The waveguide runs along the central row. Cell kinds follow
    the material present at the cell; sheet thickness and radiating area are
    coverage weighted so that features narrower than a cell (the strip, the
    cusps next to the infinity holes) keep their conductance.
    """
    validate_design(design)
    span = design.span_um
    if not cell_um > 0:
        raise ValidationError("must be positive", "cell_um")
    if cell_um > span / 20.0:
        raise ValidationError(f"cell too coarse: {cell_um} um > span/20 = {span / 20.0} um", "cell_um")
    if not w_strip_um >= xsection.w_wg_um:
        raise ValidationError("strip must be at least as wide as the waveguide", "w_strip_um")
    side = domain_side_um(design)
    if side > design.window_mm * 1000.0:
        raise ValidationError(f"feature exceeds window: simulated side {side} um", "window_mm")
    if isinstance(design, HybridNeedle):
        if not w_taper_um >= w_strip_um:
            raise ValidationError("taper must be at least as wide as the strip", "w_taper_um")
        if design.gap_um + 4 * cell_um > side:
            raise ValidationError("feature exceeds window: needle gap does not fit the simulated square", "gap_um")

    n = int(math.ceil(side / cell_um - 1e-9))
    if n % 2 == 0:
        n += 1
    c = (np.arange(n) - n // 2) * cell_um
    X, Y = np.meshgrid(c, c, indexing="ij")
    r = span / 2.0

    if isinstance(design, Straight):
        def silicon(X, Y):
            return X**2 + Y**2 >= r * r

        def sheet(X, Y):
            return np.zeros(X.shape, bool)

        strip_w = np.full(n, w_strip_um)
    elif isinstance(design, Infinity):
        def silicon(X, Y):
            return np.zeros(X.shape, bool)

        def sheet(X, Y):
            return (X**2 + (Y - r) ** 2 >= r * r) & (X**2 + (Y + r) ** 2 >= r * r)

        strip_w = np.full(n, w_strip_um)
    else:
        half_gap = design.gap_um / 2.0
        taper_len = (design.gap_um - span) / 2.0

        def silicon(X, Y):
            return (np.abs(X) >= half_gap) & (np.abs(Y) <= w_taper_um / 2.0)

        def sheet(X, Y):
            return np.zeros(X.shape, bool)

        ax = np.abs(c)
        frac = np.clip((ax - span / 2.0) / taper_len, 0.0, 1.0)
        strip_w = np.where(ax <= span / 2.0, w_strip_um, w_strip_um + (w_taper_um - w_strip_um) * frac)

    sheet_fill = _coverage(sheet, c, c, cell_um)
    strip_fill = _band_cover(Y, cell_um, strip_w[:, None])
    fill = sheet_fill + strip_fill - sheet_fill * strip_fill
    ridge_fill = _band_cover(Y, cell_um, xsection.w_wg_um)
    thickness = fill * xsection.t_mem_nm + ridge_fill * (xsection.t_wg_nm - xsection.t_mem_nm)

    is_si = silicon(X, Y)
    is_si[0, :] = is_si[-1, :] = True
    is_si[:, 0] = is_si[:, -1] = True

    kind = np.full((n, n), CellKind.HOLE, dtype=np.int8)
    kind[fill > 0] = CellKind.MEMBRANE
    j0 = n // 2
    kind[:, j0] = CellKind.RIDGE
    kind[is_si] = CellKind.SILICON
    thickness[is_si] = 0.0
    fill[is_si] = 0.0

    # waveguide path: the contiguous non-silicon run of the central row that
    # contains the loading-zone centre
    row_si = is_si[:, j0]
    i0 = n // 2
    lo = i0
    while lo > 0 and not row_si[lo - 1]:
        lo -= 1
    hi = i0
    while hi < n - 1 and not row_si[hi + 1]:
        hi += 1
    # central-row cells outside the path sit on silicon anyway
    path = np.column_stack([np.arange(lo, hi + 1), np.full(hi - lo + 1, j0)])

    return ThermalMask(
        cell_um=float(cell_um), kind=kind, thickness_nm=thickness, fill=fill, path=path,
        x_um=c.copy(), y_um=c.copy(),
        meta={"variant": variant_name(design), "span_um": span, "w_strip_um": w_strip_um,
              "w_taper_um": w_taper_um, "w_wg_um": xsection.w_wg_um},
    )


def strip_mask(length_um: float, width_um: float, thickness_nm: float, cell_um: float) -> ThermalMask:
    """Single-row uniform strip clamped by silicon at both ends.

    Used to check the thermal solver against the analytic heated-rod profile.
    """
    m = int(round(length_um / cell_um))
    if m < 1 or not math.isclose(m * cell_um, length_um, rel_tol=1e-9):
        raise ValidationError("length must be a whole number of cells", "length_um")
    kind = np.full((m + 2, 1), CellKind.RIDGE, dtype=np.int8)
    kind[0, 0] = kind[-1, 0] = CellKind.SILICON
    # cells wider than long: scale thickness so the conducting section is width * thickness
    t_eff = np.full((m + 2, 1), thickness_nm * width_um / cell_um)
    t_eff[0, 0] = t_eff[-1, 0] = 0.0
    fill = np.where(kind == CellKind.SILICON, 0.0, width_um / cell_um)
    x = (np.arange(m + 2) - 0.5) * cell_um
    path = np.column_stack([np.arange(1, m + 1), np.zeros(m, int)])
    return ThermalMask(cell_um=float(cell_um), kind=kind, thickness_nm=t_eff, fill=fill,
                       path=path, x_um=x, y_um=np.zeros(1), meta={"variant": "strip"})
