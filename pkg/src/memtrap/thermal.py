"""Steady-state heat balance of a suspended membrane device.

The membrane is treated as a sheet: in-plane conduction with conductance
``k * t(x, y)``, gray-body radiation from both faces and a line heat source
along the waveguide from optical absorption. Cell-centred finite volumes,
Dirichlet (ambient) temperature on silicon cells, insulated elsewhere.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage, optimize

from .errors import ConvergenceError, ValidationError
from .geometry import (CellKind, HybridNeedle, Infinity, MaterialProperties, ThermalMask,
                       WaveguideCrossSection, make_design, rasterize_mask)

try:
    import pyamg
except ImportError:  # pragma: no cover - exercised only without pyamg
    pyamg = None

log = logging.getLogger(__name__)

SIGMA_SB = 5.670374419e-8  # W / (m^2 K^4)

#: Emissivity and strip width fitted to the 10 mW peak temperatures of the
#: full-size infinity (1200 K) and hybrid-needle (1400 K) devices at 5 um cells.
#: Regenerate with ``memtrap calibrate``.
CALIBRATED = {"emissivity": 0.0922, "w_strip_um": 6.44}

#: Full-size devices used as calibration anchors: (design, power mW, peak K).
CALIBRATION_ANCHORS = (
    (Infinity(400.0), 10.0, 1200.0),
    (HybridNeedle(400.0, 610.0), 10.0, 1400.0),
)

#: Taper length on each side of the hybrid-needle span, from 250/460 and 400/610 um devices.
NEEDLE_TAPER_UM = 105.0

_DIRECT_SOLVE_MAX = 20000


@dataclass(frozen=True)
class SolverSettings:
    tol_k: float = 0.01
    max_iter: int = 10000
    relax: float = 1.0
    diverge_window: int = 50

    def __post_init__(self):
        if not self.tol_k > 0:
            raise ValidationError("must be positive", "thermal.tol_k")
        if not self.max_iter >= 1:
            raise ValidationError("must be >= 1", "thermal.max_iter")
        if not 0 < self.relax <= 1:
            raise ValidationError("must lie in (0, 1]", "thermal.relax")


@dataclass(frozen=True, eq=False)
class ThermalField:
    temperature_k: np.ndarray
    residual_k: float
    iterations: int
    power_mw: float
    mask: ThermalMask = field(repr=False)
    balance: dict = field(default_factory=dict, repr=False)

    @property
    def peak_k(self) -> float:
        return float(self.temperature_k.max())


class HeatProblem:
    """Discretized operator for one mask + material pair.

    Holds the conduction matrix, the silicon-contact terms and the radiating
    areas, and caches an AMG preconditioner across Newton steps and powers.
    """

    def __init__(self, mask: ThermalMask, mat: MaterialProperties,
                 settings: SolverSettings | None = None):
        self.mask = mask
        self.mat = mat
        self.settings = settings or SolverSettings()
        h = mask.cell_um * 1e-6
        t = mask.thickness_nm * 1e-9
        kind = mask.kind
        si = kind == CellKind.SILICON
        unk = (~si) & (kind != CellKind.HOLE) & (t > 0)

        labels, nlab = ndimage.label(unk)
        if nlab:
            touching = np.unique(labels[ndimage.binary_dilation(si) & unk])
            floating = np.setdiff1d(np.arange(1, nlab + 1), touching)
            if floating.size and mat.emissivity == 0.0:
                # no conduction path and no radiation: pin to ambient
                unk &= ~np.isin(labels, floating)
        self.unknown = unk
        idx = -np.ones(kind.shape, dtype=np.int64)
        n = int(unk.sum())
        idx[unk] = np.arange(n)
        self.index = idx
        self.n = n

        k = mat.k_w_per_mk
        ia, ib, g, = [], [], []
        for axis in (0, 1):
            sa = [slice(None), slice(None)]
            sb = [slice(None), slice(None)]
            sa[axis] = slice(0, -1)
            sb[axis] = slice(1, None)
            ta, tb = t[tuple(sa)], t[tuple(sb)]
            ua, ub = unk[tuple(sa)], unk[tuple(sb)]
            sia, sib = si[tuple(sa)], si[tuple(sb)]
            with np.errstate(invalid="ignore", divide="ignore"):
                gh = np.where(ua & ub, 2 * k * ta * tb / (ta + tb), 0.0)
            # silicon contact sits on the shared face: half-cell conduction length
            gh = np.where(ua & sib, 2 * k * ta, gh)
            gh = np.where(ub & sia, 2 * k * tb, gh)
            sel = gh > 0
            ia.append(idx[tuple(sa)][sel])
            ib.append(idx[tuple(sb)][sel])
            g.append(gh[sel])
        ia, ib, g = np.concatenate(ia), np.concatenate(ib), np.concatenate(g)
        inner = (ia >= 0) & (ib >= 0)
        diag = np.bincount(ia[ia >= 0], g[ia >= 0], minlength=n) + np.bincount(ib[ib >= 0], g[ib >= 0], minlength=n)
        rows = np.concatenate([ia[inner], ib[inner], np.arange(n)])
        cols = np.concatenate([ib[inner], ia[inner], np.arange(n)])
        vals = np.concatenate([-g[inner], -g[inner], diag])
        self.K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        # conductance from each unknown straight into silicon
        to_si = np.zeros(n)
        a_si = (ia >= 0) & (ib < 0)
        b_si = (ib >= 0) & (ia < 0)
        np.add.at(to_si, ia[a_si], g[a_si])
        np.add.at(to_si, ib[b_si], g[b_si])
        self.g_si = to_si
        self.rad_area = 2.0 * mat.emissivity * SIGMA_SB * mask.fill[unk] * h * h
        self._precond = None

    # -- sources --------------------------------------------------------
    def line_source(self, p_wg_mw: float) -> np.ndarray:
        """Absorbed power per unit length (W/m) on each path cell.

        The guided power is ``p_wg_mw`` at the loading-zone centre and decays
        as exp(-alpha * s) along the propagation direction.
        """
        s = self.mask.x_um[self.mask.path[:, 0]] * 1e-6
        alpha = self.mat.alpha_per_m
        return self.mat.absorbed_fraction * alpha * p_wg_mw * 1e-3 * np.exp(-alpha * s)

    def cell_source(self, line_w_per_m) -> np.ndarray:
        line_w_per_m = np.broadcast_to(np.asarray(line_w_per_m, float), (len(self.mask.path),))
        Q = np.zeros(self.n)
        h = self.mask.cell_um * 1e-6
        pi, pj = self.mask.path[:, 0], self.mask.path[:, 1]
        cells = self.index[pi, pj]
        ok = cells >= 0
        if np.any(line_w_per_m[~ok] != 0):
            raise ValidationError("waveguide path crosses a cell with no conduction path", "mask")
        np.add.at(Q, cells[ok], line_w_per_m[ok] * h)
        return Q

    # -- linear algebra ---------------------------------------------------
    def _linsolve(self, J, r):
        if pyamg is None or self.n <= _DIRECT_SOLVE_MAX:
            return spla.spsolve(J.tocsc(), r)
        for attempt in range(2):
            if self._precond is None:
                ml = pyamg.smoothed_aggregation_solver(J, symmetry="hermitian")
                self._precond = ml.aspreconditioner(cycle="V")
            x, info = spla.cg(J, r, M=self._precond, rtol=1e-12, atol=0.0, maxiter=400)
            if info == 0:
                return x
            self._precond = None
        return spla.spsolve(J.tocsc(), r)

    # -- nonlinear solve -------------------------------------------------
    def solve(self, Q: np.ndarray, T0: np.ndarray | None = None):
        """Newton iteration on K T + A (T^4 - Ta^4) = b + Q. Returns (T, iters, last update)."""
        Ta = self.mat.t_amb_k
        st = self.settings
        b = self.g_si * Ta + Q
        T = np.full(self.n, Ta) if T0 is None else np.maximum(np.asarray(T0, float).copy(), Ta)
        if self.n == 0:
            return T, 0, 0.0
        A = self.rad_area
        prev = math.inf
        growth = 0
        update = math.inf
        for it in range(1, st.max_iter + 1):
            R = self.K @ T + A * (T**4 - Ta**4) - b
            rn = float(np.max(np.abs(R)))
            growth = growth + 1 if rn > prev else 0
            if growth >= st.diverge_window:
                raise ConvergenceError(f"thermal solve diverged after {it} iterations")
            prev = rn
            J = self.K + sp.diags(4.0 * A * T**3)
            dT = self._linsolve(J.tocsr(), -R)
            if not np.all(np.isfinite(dT)):
                raise ConvergenceError("thermal solve diverged (non-finite update)")
            step = st.relax * dT
            T = T + step
            update = float(np.max(np.abs(step)))
            if update < st.tol_k:
                return T, it, update
        raise ConvergenceError(f"thermal solve not converged after {st.max_iter} iterations "
                               f"(last update {update:.3g} K)")

    def to_grid(self, T: np.ndarray) -> np.ndarray:
        grid = np.full(self.mask.shape, self.mat.t_amb_k)
        grid[self.unknown] = T
        return grid

    def balance(self, T: np.ndarray, Q: np.ndarray) -> dict:
        Ta = self.mat.t_amb_k
        absorbed = float(Q.sum())
        conducted = float(np.sum(self.g_si * (T - Ta)))
        radiated = float(np.sum(self.rad_area * (T**4 - Ta**4)))
        return {"absorbed_w": absorbed, "conducted_w": conducted, "radiated_w": radiated}

    def field(self, T, iters, update, Q, power_mw) -> ThermalField:
        return ThermalField(self.to_grid(T), update, iters, power_mw, self.mask, self.balance(T, Q))


def steady_state_temperature(mask: ThermalMask, mat: MaterialProperties, p_wg_mw: float,
                             settings: SolverSettings | None = None,
                             problem: HeatProblem | None = None,
                             initial: ThermalField | None = None) -> ThermalField:
    """Temperature of the device carrying ``p_wg_mw`` of guided power."""
    if not p_wg_mw >= 0:
        raise ValidationError("must be non-negative", "p_wg_mw")
    problem = problem or HeatProblem(mask, mat, settings)
    Q = problem.cell_source(problem.line_source(p_wg_mw))
    T0 = None if initial is None else initial.temperature_k[problem.unknown]
    T, it, upd = problem.solve(Q, T0)
    return problem.field(T, it, upd, Q, p_wg_mw)


def solve_line_source(mask: ThermalMask, mat: MaterialProperties, line_w_per_m,
                      settings: SolverSettings | None = None) -> ThermalField:
    """Steady state for an explicit per-length source along the waveguide path."""
    problem = HeatProblem(mask, mat, settings)
    Q = problem.cell_source(line_w_per_m)
    T, it, upd = problem.solve(Q)
    return problem.field(T, it, upd, Q, float("nan"))


def peak_temperature(field: ThermalField) -> float:
    return field.peak_k


def failure_power(mask: ThermalMask, mat: MaterialProperties,
                  settings: SolverSettings | None = None, *,
                  tol_mw: float = 0.1, p_max_mw: float = 1000.0, p_start_mw: float = 1.0) -> float:
    """Guided power at which the peak temperature reaches ``mat.t_fail_k``.

    Geometric bracketing from ``p_start_mw`` then bisection to ``tol_mw``.
    """
    problem = HeatProblem(mask, mat, settings)
    target = mat.t_fail_k
    lo, lo_field = 0.0, None
    p = min(p_start_mw, p_max_mw)
    while True:
        f = steady_state_temperature(mask, mat, p, problem=problem, initial=lo_field)
        if f.peak_k >= target:
            hi = p
            break
        lo, lo_field = p, f
        if p >= p_max_mw:
            raise ConvergenceError(f"bracket failure: peak {f.peak_k:.1f} K at {p_max_mw} mW "
                                   f"is below T_fail = {target} K")
        p = min(2.0 * p, p_max_mw)
    while hi - lo > tol_mw:
        mid = 0.5 * (lo + hi)
        f = steady_state_temperature(mask, mat, mid, problem=problem, initial=lo_field)
        if f.peak_k >= target:
            hi = mid
        else:
            lo, lo_field = mid, f
    return 0.5 * (lo + hi)


def family_design(family: str, span_um: float, taper_um: float = NEEDLE_TAPER_UM):
    """Design of the given family at ``span_um``; hybrid needles keep a fixed taper."""
    key = family.lower().replace("-", "_")
    gap = span_um + 2.0 * taper_um if key in ("hybrid_needle", "hybrid", "needle") else None
    return make_design(family, span_um, gap)


def _failure_point(args):
    family, span, mat, xsection, cell_um, w_strip_um, w_taper_um, settings = args
    design = family_design(family, span)
    mask = rasterize_mask(design, xsection, cell_um, w_strip_um=w_strip_um, w_taper_um=w_taper_um)
    return failure_power(mask, mat, settings)


def worker_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("MEMTRAP_WORKERS", default)))
    except ValueError:
        raise ValidationError("must be an integer", "MEMTRAP_WORKERS") from None


def failure_power_curve(family: str, spans_um, mat: MaterialProperties,
                        xsection: WaveguideCrossSection | None = None, *, cell_um: float = 5.0,
                        w_strip_um: float = CALIBRATED["w_strip_um"], w_taper_um: float = 100.0,
                        settings: SolverSettings | None = None, workers: int | None = None):
    """Failure power for each span of one design family. Returns [(span, p_fail_mw)]."""
    spans = [float(s) for s in spans_um]
    if any(b <= a for a, b in zip(spans, spans[1:])):
        raise ValidationError("spans must be sorted ascending", "spans_um")
    xsection = xsection or WaveguideCrossSection()
    jobs = [(family, s, mat, xsection, cell_um, w_strip_um, w_taper_um, settings) for s in spans]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            powers = list(ex.map(_failure_point, jobs))
    else:
        powers = [_failure_point(j) for j in jobs]
    return list(zip(spans, powers))


def anchor_peaks(emissivity: float, w_strip_um: float, *, cell_um: float = 5.0,
                 mat: MaterialProperties | None = None,
                 xsection: WaveguideCrossSection | None = None,
                 anchors=CALIBRATION_ANCHORS, w_taper_um: float = 100.0):
    """Peak temperatures of the calibration anchors for a given (emissivity, strip width)."""
    mat = replace(mat or MaterialProperties(), emissivity=emissivity)
    xsection = xsection or WaveguideCrossSection()
    out = []
    for design, p_mw, _ in anchors:
        mask = rasterize_mask(design, xsection, cell_um, w_strip_um=w_strip_um, w_taper_um=w_taper_um)
        out.append(steady_state_temperature(mask, mat, p_mw).peak_k)
    return out


def calibrate(*, cell_um: float = 5.0, mat: MaterialProperties | None = None,
              xsection: WaveguideCrossSection | None = None, anchors=CALIBRATION_ANCHORS,
              start=(0.05, 10.0), eps_bounds=(1e-4, 1.0), strip_bounds=(2.0, 60.0),
              max_evals: int = 80):
    """Fit (emissivity, strip width) to the anchor peak temperatures.

    Minimizes the summed squared log-ratio of simulated to target peaks with a
    bounded simplex search over (log10 emissivity, strip width).
    Returns ``(emissivity, w_strip_um, peaks_k)``.
    """
    xsection = xsection or WaveguideCrossSection()
    targets = np.array([a[2] for a in anchors])
    strip_lo = max(strip_bounds[0], xsection.w_wg_um)
    cache = {}

    def objective(v):
        key = (round(float(v[0]), 9), round(float(v[1]), 9))
        if key not in cache:
            peaks = anchor_peaks(10.0 ** v[0], v[1], cell_um=cell_um, mat=mat,
                                 xsection=xsection, anchors=anchors)
            cache[key] = float(np.sum(np.log(np.array(peaks) / targets) ** 2))
            log.info("calibrate eps=%.4g w_strip=%.3f -> %s", 10 ** v[0], v[1], peaks)
        return cache[key]

    x0 = [math.log10(start[0]), start[1]]
    res = optimize.minimize(
        objective, x0, method="Nelder-Mead",
        bounds=[(math.log10(eps_bounds[0]), math.log10(eps_bounds[1])), (strip_lo, strip_bounds[1])],
        options={"xatol": 1e-3, "fatol": 1e-6, "maxfev": max_evals,
                 "initial_simplex": [x0, [x0[0] + 0.3, x0[1]], [x0[0], x0[1] + 5.0]]},
    )
    eps, strip = 10.0 ** res.x[0], float(res.x[1])
    peaks = anchor_peaks(eps, strip, cell_um=cell_um, mat=mat, xsection=xsection, anchors=anchors)
    return eps, strip, peaks


def calibrated_material(base: MaterialProperties | None = None) -> MaterialProperties:
    base = base or MaterialProperties()
    if CALIBRATED["emissivity"] is None:
        return base
    return replace(base, emissivity=CALIBRATED["emissivity"])
