"""Chemoattractant solve ``-Lap v = -u v``, ``v = v_bar`` on the boundary.

The problem is rewritten for ``z = v_bar - v``::

    (-Lap + u) z = v_bar * u,    z = 0 on the boundary,

which is symmetric positive definite whenever ``u >= 0`` and is solved by
preconditioned conjugate gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import _spectral
from .core import (Dirichlet, Field, Grid, face_energy, grad_lp_norm, integrate, laplacian,
                   lp_norm)

#: entries of u in (-ROUNDOFF_FLOOR, 0) are treated as round-off and clamped
ROUNDOFF_FLOOR = 1e-12


class EllipticError(RuntimeError):
    pass


class ConvergenceFailure(EllipticError):
    pass


class MaximumPrincipleViolation(EllipticError):
    pass


@dataclass(frozen=True)
class EllipticSolution:
    v: Field
    z: Field
    iterations: int
    residual: float
    v_bar: float


@dataclass(frozen=True)
class EllipticEstimateReport:
    """Measured sides of the elliptic a-priori estimates for one solve.

    ``gn_ratio`` and ``c1_estimate`` are ``None`` when ``u`` vanishes.
    """

    energy_lhs: float
    energy_rhs: float
    identity_rhs: float
    identity_defect: float
    gn_ratio: Optional[float]
    c1_estimate: Optional[float]

    @property
    def energy_margin(self) -> float:
        return self.energy_rhs - self.energy_lhs


@lru_cache(maxsize=16)
def dirichlet_laplacian(grid: Grid) -> sp.csr_matrix:
    """Sparse -Lap with zero boundary value half a cell outside the centres."""
    mats = []
    for n, h in zip(grid.n_cells, grid.h):
        main = np.full(n, 2.0)
        main[0] = main[-1] = 3.0
        if n == 1:
            main[:] = 4.0
        t = sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1]) / h**2
        mats.append(t)
    if grid.dim == 1:
        out = mats[0]
    else:
        nx, ny = grid.n_cells
        out = sp.kron(mats[0], sp.eye(ny)) + sp.kron(sp.eye(nx), mats[1])
    return sp.csr_matrix(out)


def pcg(matvec, b, x0, precond, tol, maxiter):
    """Preconditioned conjugate gradients on flat vectors.

    Stops when ``||b - A x||_2 <= tol * ||b||_2`` for the true residual;
    the recurrence is restarted from ``b - A x`` whenever the recursively
    updated residual claims convergence but the true one disagrees.
    Returns ``(x, iterations, relative_residual)``.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = x0.copy()
    target = tol * bnorm
    k = 0
    for _restart in range(5):
        r = b - matvec(x)
        if np.linalg.norm(r) <= target:
            break
        s = precond(r)
        p = s.copy()
        rs = r @ s
        while k < maxiter:
            ap = matvec(p)
            alpha = rs / (p @ ap)
            x += alpha * p
            r -= alpha * ap
            k += 1
            if np.linalg.norm(r) <= target:
                break
            s = precond(r)
            rs_new = r @ s
            p = s + (rs_new / rs) * p
            rs = rs_new
        if k >= maxiter:
            break
    res = np.linalg.norm(b - matvec(x)) / bnorm
    return x, k, res


def _admissible_u(u: Field) -> np.ndarray:
    vals = u.values
    if vals.min() < -ROUNDOFF_FLOOR:
        raise ValueError(f"u must be nonnegative, min(u) = {vals.min():.3e}")
    return np.maximum(vals, 0.0)


def solve_v(u: Field, v_bar: float, tol: float = 1e-10, x0: Optional[Field] = None,
            preconditioner: str = "fft", maxiter: Optional[int] = None) -> EllipticSolution:
    """Solve for the chemoattractant given a nonnegative density ``u``.

    Parameters
    ----------
    u : Field
        Cell density, ``u >= 0``.
    v_bar : float
        Constant boundary value, ``> 0``.
    tol : float
        Relative residual target for CG.
    x0 : Field, optional
        Warm start for ``z = v_bar - v``.
    preconditioner : {"fft", "jacobi", "none"}
        ``"fft"`` inverts ``-Lap + mean(u)`` exactly by a sine transform.
    maxiter : int, optional
        Iteration cap, default ``50 * max(n_cells)``.
    """
    if not v_bar > 0:
        raise ValueError("v_bar must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = u.grid
    uu = _admissible_u(u).ravel()
    b = v_bar * uu
    lap = dirichlet_laplacian(grid)
    a = lap + sp.diags(uu)
    a = a.tocsr()

    if preconditioner == "fft":
        shift = float(uu.mean())
        def precond(r):
            return _spectral.solve_shifted(r, grid.n_cells, grid.h, "dirichlet", shift).ravel()
    elif preconditioner == "jacobi":
        dinv = 1.0 / a.diagonal()
        def precond(r):
            return dinv * r
    elif preconditioner == "none":
        def precond(r):
            return r
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    start = np.zeros(grid.size) if x0 is None else np.array(x0.values, dtype=float).ravel()
    cap = 50 * max(grid.n_cells) if maxiter is None else maxiter
    z, its, res = pcg(a.dot, b, start, precond, tol, cap)
    if res > tol:
        raise ConvergenceFailure(
            f"CG stopped at relative residual {res:.3e} > {tol:.1e} after {its} iterations")

    slack = 10 * tol * v_bar
    if z.min() < -slack or z.max() > v_bar + slack:
        raise MaximumPrincipleViolation(
            f"computed v outside [0, v_bar]: min v = {v_bar - z.max():.3e}, "
            f"max v = {v_bar - z.min():.3e}")
    zf = Field(grid, z, Dirichlet(0.0))
    vf = Field(grid, v_bar - z, Dirichlet(v_bar))
    return EllipticSolution(v=vf, z=zf, iterations=its, residual=res, v_bar=v_bar)


def elliptic_residual(u: Field, v: Field, v_bar: float) -> np.ndarray:
    """Cell residual of ``-Lap v + u v`` with boundary value ``v_bar``."""
    vv = v.with_bc(Dirichlet(v_bar))
    return -laplacian(vv) + u.values * v.values


def elliptic_report(u: Field, sol: EllipticSolution) -> EllipticEstimateReport:
    """Evaluate the energy identity and the gradient estimates for one solve."""
    if u.grid != sol.z.grid:
        raise ValueError("u and solution live on different grids")
    v_bar = sol.v_bar
    uu = Field(u.grid, _admissible_u(u))
    z = sol.z
    lhs = face_energy(z)
    l1 = integrate(uu)
    rhs = v_bar**2 * l1
    ident = integrate(Field(u.grid, uu.values * z.values * (v_bar - z.values)))
    defect = abs(lhs - ident) / max(lhs, np.finfo(float).tiny)
    if lhs == 0.0 and ident == 0.0:
        defect = 0.0
    gn = c1 = None
    if l1 > 0:
        l2 = lp_norm(uu, 2)
        l3 = lp_norm(uu, 3)
        gn = grad_lp_norm(sol.v, 4) ** 4 / (v_bar**4 * l1 * l2**2)
        c1 = grad_lp_norm(sol.v, math.inf) / (v_bar * l3)
    return EllipticEstimateReport(energy_lhs=lhs, energy_rhs=rhs, identity_rhs=ident,
                                  identity_defect=defect, gn_ratio=gn, c1_estimate=c1)
