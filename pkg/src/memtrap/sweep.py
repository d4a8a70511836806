"""Design-space sweeps over the waveguide cross-section.

Grid points are independent. They may be evaluated in worker processes, but the
output table is always emitted in lexicographic grid order.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .atomtrap import BLUE_FRACTION, TwoColorTrap
from .errors import ConvergenceError, MemtrapError, NoTrapError, ValidationError
from .geometry import MaterialProperties, WaveguideCrossSection, make_design, rasterize_mask
from .output import csv_text
from .thermal import CALIBRATED, calibrated_material, failure_power, worker_count

log = logging.getLogger(__name__)

AXES = ("w_wg_um", "t_wg_nm", "t_mem_nm")
OBJECTIVES = ("depth_per_mw", "depth_at_power", "p_fail")
# refinement stops below these parameter changes
PARAM_TOL = {"w_wg_um": 0.010, "t_wg_nm": 1.0, "t_mem_nm": 1.0}
OBJECTIVE_RTOL = 0.005


@dataclass(frozen=True)
class SweepSpec:
    """Grid over cross-section parameters.

    ``axes`` maps a parameter name (``w_wg_um``, ``t_wg_nm``, ``t_mem_nm``) to
    its values. Parameters without an axis take their value from ``base``.
    """

    axes: dict
    objective: str = "depth_per_mw"
    base: WaveguideCrossSection = field(default_factory=WaveguideCrossSection)
    blue_fraction: float = BLUE_FRACTION
    power_mw: float = 1.0
    h_nm: float = 10.0
    max_points: int = 200
    # p_fail objective only
    design_variant: str = "infinity"
    span_um: float = 125.0
    gap_um: float | None = None
    cell_um: float = 5.0
    material: MaterialProperties = field(default_factory=calibrated_material)
    w_strip_um: float = CALIBRATED["w_strip_um"]

    def __post_init__(self):
        if not self.axes:
            raise ValidationError("at least one axis is required", "axes")
        axes = {}
        for name, values in self.axes.items():
            if name not in AXES:
                raise ValidationError(f"unknown axis {name!r}; expected one of {AXES}", "axes")
            vals = tuple(float(v) for v in values)
            if not vals:
                raise ValidationError(f"axis {name} has no values", "axes")
            axes[name] = vals
        object.__setattr__(self, "axes", {k: axes[k] for k in AXES if k in axes})
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"unknown objective {self.objective!r}", "objective")
        t_wg = self.axes.get("t_wg_nm", (self.base.t_wg_nm,))
        t_mem = self.axes.get("t_mem_nm", (self.base.t_mem_nm,))
        # a membrane value that no ridge value exceeds can never form a valid
        # point; individual pairs with t_mem >= t_wg are reported per row instead
        if max(t_mem) >= max(t_wg):
            raise ValidationError("every membrane thickness must be below some ridge thickness",
                                  "t_mem_nm")
        if self.n_points > self.max_points:
            raise ValidationError(f"grid has {self.n_points} points, cap is {self.max_points}",
                                  "max_points")
        if not 0.0 < self.blue_fraction < 1.0:
            raise ValidationError("must lie in (0, 1)", "blue_fraction")
        if not self.power_mw > 0:
            raise ValidationError("must be positive", "power_mw")

    @property
    def names(self) -> tuple:
        return tuple(self.axes)

    @property
    def n_points(self) -> int:
        return math.prod(len(v) for v in self.axes.values())

    def points(self):
        """Parameter tuples in lexicographic order of the axis values."""
        return list(itertools.product(*(sorted(set(v)) for v in self.axes.values())))

    def xsection(self, point) -> WaveguideCrossSection:
        """Cross-section at one grid point; raises for a membrane not thinner
        than its ridge."""
        return replace(self.base, **dict(zip(self.names, point)))


def evaluate(spec: SweepSpec, xs: WaveguideCrossSection) -> float:
    """Objective of one cross-section: trap depth in uK per mW or at ``power_mw``,
    or the failure power in mW."""
    if spec.objective == "p_fail":
        design = make_design(spec.design_variant, spec.span_um, spec.gap_um)
        mask = rasterize_mask(design, xs, spec.cell_um, w_strip_um=spec.w_strip_um)
        return failure_power(mask, spec.material)
    trap = TwoColorTrap(xs, spec.h_nm, half_domain=True)
    if spec.objective == "depth_per_mw":
        return trap.depth(1.0, spec.blue_fraction)
    return trap.depth(spec.power_mw, spec.blue_fraction)


def _status(exc: Exception) -> str:
    if isinstance(exc, NoTrapError):
        return "no trap"
    if isinstance(exc, ConvergenceError):
        return "not converged"
    return "invalid"


def _evaluate_point(args):
    spec, point = args
    try:
        xs = spec.xsection(point)
        return evaluate(spec, xs), "ok"
    except MemtrapError as exc:
        log.info("sweep point %s failed: %s", point, exc)
        return math.nan, _status(exc)


@dataclass(frozen=True)
class SweepResult:
    names: tuple
    rows: list  # (params..., objective, status)

    def to_csv(self) -> str:
        return csv_text(self.names + ("objective", "status"), self.rows)

    def best(self):
        ok = [r for r in self.rows if r[-1] == "ok"]
        if not ok:
            return None
        return max(ok, key=lambda r: r[-2])


def grid_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Evaluate every grid point. Failing points keep a status and a NaN objective."""
    points = spec.points()
    workers = worker_count() if workers is None else workers
    jobs = [(spec, p) for p in points]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_evaluate_point, jobs))
    else:
        results = [_evaluate_point(j) for j in jobs]
    rows = [tuple(p) + r for p, r in zip(points, results)]
    return SweepResult(spec.names, rows)


@dataclass(frozen=True)
class OptimizationResult:
    params: dict
    objective: float
    seed_params: dict
    seed_objective: float
    evaluations: int
    grid: SweepResult


def optimize_depth_per_mw(bounds: dict, seed: SweepSpec, workers: int | None = None,
                          max_evals: int = 60) -> OptimizationResult:
    """Grid search over ``seed`` then a bounded simplex refinement from its best point.

    ``bounds`` maps each axis name to ``(low, high)`` and must contain the seed
    grid. The returned objective is never below the best grid value.
    """
    if seed.objective != "depth_per_mw":
        seed = replace(seed, objective="depth_per_mw")
    names = seed.names
    if set(bounds) != set(names):
        raise ValidationError(f"bounds must cover exactly the axes {names}", "bounds")
    lo = np.array([float(bounds[n][0]) for n in names])
    hi = np.array([float(bounds[n][1]) for n in names])
    if np.any(hi < lo):
        raise ValidationError("bound low exceeds high", "bounds")
    for i, n in enumerate(names):
        if min(seed.axes[n]) < lo[i] or max(seed.axes[n]) > hi[i]:
            raise ValidationError(f"seed grid leaves the bounds on {n}", "bounds")

    grid = grid_sweep(seed, workers)
    best = grid.best()
    if best is None:
        raise NoTrapError("all seed grid points are infeasible")
    x_best = np.array(best[:len(names)], dtype=float)
    f_best = float(best[-2])
    seed_params = dict(zip(names, x_best.tolist()))

    scale = np.array([PARAM_TOL[n] for n in names])
    free = hi > lo
    cache = {}

    def objective(z):
        x = x_best.copy()
        x[free] = np.clip(z * scale[free], lo[free], hi[free])
        key = tuple(np.round(x, 9))
        if key not in cache:
            try:
                xs = seed.xsection(tuple(x))
                if xs.t_mem_nm >= xs.t_wg_nm:
                    raise ValidationError("membrane not thinner than ridge", "t_mem_nm")
                cache[key] = evaluate(seed, xs)
            except MemtrapError:
                cache[key] = -math.inf
        return -cache[key] if math.isfinite(cache[key]) else 1e30

    evals = 0
    x_opt, f_opt = x_best, f_best
    if np.any(free):
        z0 = x_best[free] / scale[free]
        zlo, zhi = lo[free] / scale[free], hi[free] / scale[free]
        step = np.maximum(10.0, 0.1 * (zhi - zlo))
        simplex = [z0]
        for i in range(z0.size):
            z = z0.copy()
            # step inward from whichever bound is closer
            z[i] += step[i] if z0[i] + step[i] <= zhi[i] else -step[i]
            simplex.append(np.clip(z, zlo, zhi))
        cache[tuple(np.round(x_best, 9))] = f_best
        res = optimize.minimize(
            objective, z0, method="Nelder-Mead",
            bounds=list(zip(zlo, zhi)),
            options={"xatol": 1.0, "fatol": OBJECTIVE_RTOL * abs(f_best), "maxfev": max_evals,
                     "initial_simplex": np.array(simplex)})
        evals = len(cache)
        if -res.fun > f_best:
            x_opt = x_best.copy()
            x_opt[free] = np.clip(res.x * scale[free], lo[free], hi[free])
            f_opt = float(-res.fun)
    return OptimizationResult(dict(zip(names, x_opt.tolist())), f_opt, seed_params, f_best,
                              evals, grid)
