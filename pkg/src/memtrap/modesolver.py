"""Finite-difference quasi-TE mode solver for the ridge membrane waveguide.

The dominant transverse field ``E_x`` (parallel to the membrane) obeys the
semivectorial Helmholtz equation

    d/dx[(1/eps) d/dx(eps E)] + d2E/dy2 + k0^2 eps E = beta^2 E

discretized with a five-point stencil on a uniform grid and E = 0 on the
window boundary. The fundamental mode is picked out by shifted inverse power
iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import constants as const
from scipy import optimize

from .errors import ConvergenceError, NoGuidedModeError, ValidationError
from .geometry import WaveguideCrossSection
from .output import grid_csv

#: Normalization power of every returned mode.
NORM_POWER_W = 1e-3


def solve_slab_te(n_core: float, n_clad: float, t_nm: float, wavelength_nm: float) -> float:
    """Effective index of the TE0 mode of a symmetric slab.

    With ``u = kappa t / 2`` and the normalized frequency
    ``V = k0 t / 2 * sqrt(n_core^2 - n_clad^2)``, the fundamental mode solves
    ``u tan(u) = sqrt(V^2 - u^2)`` for ``u`` in ``(0, min(V, pi / 2))``, which is
    bracketed and solved by bisection.
    """
    if not n_core > n_clad:
        raise ValidationError("core index must exceed cladding index", "n_core")
    if not (t_nm > 0 and wavelength_nm > 0):
        raise ValidationError("thickness and wavelength must be positive", "t_nm")
    k0 = 2 * math.pi / wavelength_nm
    V = 0.5 * k0 * t_nm * math.sqrt(n_core**2 - n_clad**2)

    def g(u):
        return u * math.tan(u) - math.sqrt(max(V * V - u * u, 0.0))

    hi = min(V, math.pi / 2) * (1 - 1e-15)
    u = optimize.bisect(g, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return math.sqrt(n_core**2 - (2 * u / (k0 * t_nm)) ** 2)


def evanescent_decay_length(n_eff: float, wavelength_nm: float) -> float:
    """Field 1/e decay length in vacuum, ``1 / (k0 sqrt(n_eff^2 - 1))``, in nm."""
    if not n_eff > 1.0:
        raise NoGuidedModeError(f"unguided: n_eff = {n_eff} <= 1")
    return wavelength_nm / (2 * math.pi * math.sqrt(n_eff * n_eff - 1.0))


def slab_upper_bound(xs: WaveguideCrossSection, wavelength_nm: float) -> float:
    """Index of an unbounded slab as thick as the ridge: no ridge mode exceeds it,
    so shifting here makes the fundamental the nearest eigenvalue."""
    return solve_slab_te(xs.n_core, xs.n_amb, xs.t_wg_nm, wavelength_nm)


@dataclass(frozen=True, eq=False)
class ModeSolution:
    """Fundamental quasi-TE mode carrying 1 mW.

    ``field`` holds E_x in V/m on the grid ``x_nm`` x ``y_nm`` (``[i, j]``
    indexing). ``y = 0`` is the membrane underside, so the ridge top is at
    ``y = xsection.t_wg_nm``.
    """

    wavelength_nm: float
    n_eff: float
    field: np.ndarray
    x_nm: np.ndarray
    y_nm: np.ndarray
    h_nm: float
    xsection: WaveguideCrossSection
    eps: np.ndarray = field(repr=False)
    iterations: int = 0

    @property
    def decay_length_nm(self) -> float:
        return evanescent_decay_length(self.n_eff, self.wavelength_nm)

    def power_mw(self) -> float:
        dA = (self.h_nm * 1e-9) ** 2
        return 0.5 * self.n_eff * const.epsilon_0 * const.c * float(np.sum(self.field**2)) * dA * 1e3

    def intensity(self) -> np.ndarray:
        """Local field intensity ``eps0 c |E|^2 / 2`` in W/m^2 for 1 mW guided."""
        return 0.5 * const.epsilon_0 * const.c * self.field**2

    def dielectric(self) -> np.ndarray:
        """Boolean map of grid nodes whose cell is mostly material."""
        return self.eps > 0.5 * (self.xsection.n_core**2 + self.xsection.n_amb**2)

    def to_csv(self) -> str:
        return grid_csv(self.x_nm, self.y_nm, self.field, ("x_nm", "y_nm", "E"))

    def summary(self) -> str:
        return (f"wavelength_nm={self.wavelength_nm:.6g} n_eff={self.n_eff:.6g} "
                f"decay_length_nm={self.decay_length_nm:.6g}")


def _interval_cover(c, h, a, b):
    lo = np.maximum(c - h / 2, a)
    hi = np.minimum(c + h / 2, b)
    return np.clip(hi - lo, 0.0, None) / h


def permittivity_grid(xs: WaveguideCrossSection, x_nm, y_nm, h_nm):
    """Cell-averaged relative permittivity on the node grid."""
    fy_mem = _interval_cover(y_nm, h_nm, 0.0, xs.t_mem_nm)
    fy_rib = _interval_cover(y_nm, h_nm, xs.t_mem_nm, xs.t_wg_nm)
    half_w = xs.w_wg_um * 500.0
    fx_rib = _interval_cover(x_nm, h_nm, -half_w, half_w)
    frac = fy_mem[None, :] + fx_rib[:, None] * fy_rib[None, :]
    return xs.n_amb**2 + (xs.n_core**2 - xs.n_amb**2) * frac


def helmholtz_operator(eps, h_nm, wavelength_nm, eps_outside, semivectorial=True, mirror_left=False):
    """Sparse operator whose eigenvalues are beta^2 (nm^-2).

    With ``mirror_left`` the grid is the right half of an even field and the
    left edge is a symmetry plane rather than a wall.
    """
    nx, ny = eps.shape
    k0 = 2 * math.pi / wavelength_nm
    idx = np.arange(nx * ny).reshape(nx, ny)
    inv_h2 = 1.0 / h_nm**2
    rows, cols, vals = [], [], []
    diag = k0**2 * eps - 2 * inv_h2
    # y direction: plain second difference
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:, 1:], idx[:, :-1])):
        rows.append(a.ravel())
        cols.append(b.ravel())
        vals.append(np.full(a.size, inv_h2))
    if semivectorial:
        ep = np.pad(eps, ((1, 1), (0, 0)), constant_values=eps_outside)
        if mirror_left:
            ep[0] = eps[0]
        e_plus = 0.5 * (ep[1:-1] + ep[2:])
        e_minus = 0.5 * (ep[1:-1] + ep[:-2])
        diag = diag - eps * (1.0 / e_plus + 1.0 / e_minus) * inv_h2
        if mirror_left:
            # ghost node equals its mirror image
            diag[0] += eps[0] / e_minus[0] * inv_h2
        rows.append(idx[:-1].ravel())
        cols.append(idx[1:].ravel())
        vals.append((eps[1:] / e_plus[:-1]).ravel() * inv_h2)
        rows.append(idx[1:].ravel())
        cols.append(idx[:-1].ravel())
        vals.append((eps[:-1] / e_minus[1:]).ravel() * inv_h2)
    else:
        diag = diag - 2 * inv_h2
        if mirror_left:
            diag[0] += inv_h2
        for a, b in ((idx[:-1], idx[1:]), (idx[1:], idx[:-1])):
            rows.append(a.ravel())
            cols.append(b.ravel())
            vals.append(np.full(a.size, inv_h2))
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(nx * ny, nx * ny))


def inverse_iteration(A, shift, x0, *, max_iter=500, tol=1e-10):
    """Eigenpair of ``A`` nearest ``shift``. Returns (eigenvalue, vector, iterations)."""
    n = A.shape[0]
    lu = spla.splu((A - shift * sp.identity(n, format="csc")).tocsc())
    x = x0 / np.linalg.norm(x0)
    lam_prev = None
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        mu = float(np.dot(x, y))
        lam = shift + 1.0 / mu
        x = y / np.linalg.norm(y)
        if lam_prev is not None and abs(lam - lam_prev) < tol * abs(lam):
            return lam, x, it
        lam_prev = lam
    raise ConvergenceError(f"mode solver not converged after {max_iter} iterations")


def mode_grid(xs: WaveguideCrossSection, h_nm: float, margin_x_nm: float, margin_y_nm: float):
    half = xs.w_wg_um * 500.0 + margin_x_nm
    nx = 2 * int(math.ceil(half / h_nm - 1e-9))
    x = (np.arange(nx) - (nx - 1) / 2.0) * h_nm
    ny = int(math.ceil((xs.t_wg_nm + 2 * margin_y_nm) / h_nm - 1e-9))
    y = -margin_y_nm + (np.arange(ny) + 0.5) * h_nm
    return x, y


def solve_mode(xsection: WaveguideCrossSection, wavelength_nm: float, h_nm: float = 10.0, *,
               margin_x_nm: float = 3000.0, margin_y_nm: float = 2000.0,
               semivectorial: bool = True, n_guess: float | None = None,
               max_iter: int = 500, tol: float = 1e-10, half_domain: bool = False) -> ModeSolution:
    """Fundamental quasi-TE mode of ``xsection``, normalized to carry 1 mW.

    The window extends ``margin_x_nm`` beyond the ridge sides and
    ``margin_y_nm`` above the ridge and below the membrane. ``half_domain``
    solves only ``x > 0`` with an even-symmetry plane at ``x = 0`` (half the
    unknowns) and mirrors the result.
    """
    if not 0 < h_nm <= 20.0:
        raise ValidationError("grid spacing must be in (0, 20] nm", "h_nm")
    if min(margin_x_nm, margin_y_nm) < 2000.0:
        raise ValidationError("window must extend >= 2 um beyond the ridge", "margin_nm")
    if not wavelength_nm > 0:
        raise ValidationError("must be positive", "wavelength_nm")
    x, y = mode_grid(xsection, h_nm, margin_x_nm, margin_y_nm)
    eps = permittivity_grid(xsection, x, y, h_nm)
    nx = x.size
    work_eps = eps[nx // 2:] if half_domain else eps
    A = helmholtz_operator(work_eps, h_nm, wavelength_nm, xsection.n_amb**2, semivectorial,
                           mirror_left=half_domain)
    k0 = 2 * math.pi / wavelength_nm
    if n_guess is None:
        n_guess = slab_upper_bound(xsection, wavelength_nm)
    # a start vector concentrated on the core keeps the even fundamental dominant
    X, Y = np.meshgrid(x[nx // 2:] if half_domain else x, y, indexing="ij")
    w = xsection.w_wg_um * 1000.0
    x0 = np.exp(-(X / w) ** 2 - ((Y - xsection.t_wg_nm / 2) / 300.0) ** 2).ravel()
    lam, v, iters = inverse_iteration(A, (k0 * n_guess) ** 2, x0, max_iter=max_iter, tol=tol)
    n_eff = math.sqrt(lam) / k0 if lam > 0 else 0.0
    if not n_eff > xsection.n_amb:
        raise NoGuidedModeError(f"no guided mode: n_eff = {n_eff:.6g} <= n_amb")
    E = v.reshape(work_eps.shape)
    if half_domain:
        E = np.concatenate([E[::-1], E])
    if E[np.unravel_index(np.argmax(np.abs(E)), E.shape)] < 0:
        E = -E
    dA = (h_nm * 1e-9) ** 2
    power = 0.5 * n_eff * const.epsilon_0 * const.c * float(np.sum(E**2)) * dA
    E = E * math.sqrt(NORM_POWER_W / power)
    return ModeSolution(wavelength_nm=float(wavelength_nm), n_eff=n_eff, field=E, x_nm=x, y_nm=y,
                        h_nm=float(h_nm), xsection=xsection, eps=eps, iterations=iters)
