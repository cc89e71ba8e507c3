"""Finite-volume reference solvers for steady Darcy flow and transient transport.

Both solvers work on the cell-centred grids of :mod:`adepinn.fields`.
Boundary conditions follow the transport problem: prescribed inflow flux
``q`` and Dirichlet concentration ``0`` at ``x1 = 0``, fixed head ``H`` and
zero concentration gradient at ``x1 = L1``, no flow through ``x2 = 0, L2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .exceptions import InvalidInputError, SolverFailureError, StabilityError
from .fields import FieldGrid, dispersion_tensor


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def solve_darcy_fd(K, H, q, tol=1e-10):
    """Head field of div(K grad h) = 0 on a five-point stencil.

    Inter-cell conductivities are harmonic means; the fixed-head face at
    ``x1 = L1`` uses the half-cell distance to the boundary.
    """
    if K.kind != "conductivity":
        raise InvalidInputError("K must be a conductivity field")
    nx1, nx2 = K.shape
    if nx1 < 3 or nx2 < 3:
        raise InvalidInputError("Darcy solve needs at least a 3x3 grid")
    dx1, dx2 = K.spacing
    k = K.values
    idx = np.arange(nx1 * nx2).reshape(nx1, nx2)

    t1 = _harmonic(k[:-1], k[1:]) * dx2 / dx1      # (nx1-1, nx2)
    t2 = _harmonic(k[:, :-1], k[:, 1:]) * dx1 / dx2  # (nx1, nx2-1)
    t_out = k[-1] * dx2 / (0.5 * dx1)

    rows, cols, vals = [], [], []
    diag = np.zeros((nx1, nx2))
    for tr, a, b in ((t1, idx[:-1], idx[1:]), (t2, idx[:, :-1], idx[:, 1:])):
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [-tr.ravel(), -tr.ravel()]
    diag[:-1] += t1
    diag[1:] += t1
    diag[:, :-1] += t2
    diag[:, 1:] += t2
    diag[-1] += t_out
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    A = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nx1 * nx2, nx1 * nx2))

    b = np.zeros((nx1, nx2))
    b[0] += q * dx2
    b[-1] += t_out * H
    b = b.ravel()
    try:
        h = spsolve(A.tocsc(), b)
    except RuntimeError as exc:  # singular factorization
        raise SolverFailureError(f"Darcy system could not be factorized: {exc}") from exc
    res = np.linalg.norm(A @ h - b) / max(np.linalg.norm(b), 1e-300)
    if not np.all(np.isfinite(h)) or res > tol:
        raise SolverFailureError(f"Darcy solve residual {res:.3e} exceeds {tol:.1e}")
    return K.like(h, "head")


def darcy_face_velocities(K, h, H, q, phi):
    """Seepage velocity normal to every cell face from the discrete fluxes.

    Returns ``(w1, w2)`` with shapes ``(nx1+1, nx2)`` and ``(nx1, nx2+1)``.
    These are exactly divergence free up to the Darcy solver residual.
    """
    dx1, dx2 = K.spacing
    k, hv = K.values, h.values
    w1 = np.zeros((K.nx1 + 1, K.nx2))
    w1[0] = q
    w1[1:-1] = _harmonic(k[:-1], k[1:]) * (hv[:-1] - hv[1:]) / dx1
    w1[-1] = k[-1] * (hv[-1] - H) / (0.5 * dx1)
    w2 = np.zeros((K.nx1, K.nx2 + 1))
    w2[:, 1:-1] = _harmonic(k[:, :-1], k[:, 1:]) * (hv[:, :-1] - hv[:, 1:]) / dx2
    return w1 / phi, w2 / phi


def cross_section_fluxes(K, h, H, q):
    """Volumetric flux through every vertical grid line, inlet to outlet."""
    w1, _ = darcy_face_velocities(K, h, H, q, 1.0)
    return w1.sum(axis=1) * K.spacing[1]


def gaussian_source(grid, spec):
    """Cell-centre samples of the Gaussian release, rescaled to total mass M."""
    x1, x2 = grid.centers()
    u = np.exp(-((x1 - spec.x1_star) ** 2 + (x2 - spec.x2_star) ** 2) / (2 * spec.epsilon ** 2))
    area = grid.spacing[0] * grid.spacing[1]
    return u * spec.M / (u.sum() * area)


@dataclass
class ADESolution:
    """Snapshots of a transport solve; iterates like the list of fields."""

    times: np.ndarray
    snapshots: list

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, k):
        return self.snapshots[k]

    def mass(self):
        return np.array([s.values.sum() * s.spacing[0] * s.spacing[1] for s in self.snapshots])


def solve_ade_fd(v1, v2, spec, nt_save, face_velocities=None, T=None, initial=None,
                 dispersion=None, dispersion_mode="standard", safety=0.9,
                 advection="corrected"):
    """Explicit upwind / central finite-volume transport solve.

    Parameters
    ----------
    v1, v2 : FieldGrid
        Cell-centred seepage velocity.  Face velocities are their averages
        unless ``face_velocities`` (from :func:`darcy_face_velocities`) is
        given.
    spec : ProblemSpec
        Source, dispersivities and horizon.
    nt_save : int
        Number of snapshots, uniformly spaced on ``[0, T]`` inclusive.
    dispersion : tuple (D11, D22, D12), optional
        Constant dispersion tensor overriding the velocity-dependent one.
    advection : {"corrected", "upwind"}
        ``"upwind"`` is plain first-order donor cell.  ``"corrected"``
        subtracts the leading numerical diffusion of donor cell plus forward
        Euler, ``|w| dx / 2 - w**2 dt / 2``, from the face dispersion, clipped
        at zero so the update stays monotone.
    """
    if advection not in ("corrected", "upwind"):
        raise InvalidInputError(f"unknown advection scheme {advection!r}")
    if not v1.same_grid(v2):
        raise InvalidInputError("velocity components must share a grid")
    if nt_save < 1:
        raise InvalidInputError("nt_save must be at least 1")
    T = spec.T if T is None else T
    nx1, nx2 = v1.shape
    dx1, dx2 = v1.spacing
    area = dx1 * dx2

    if face_velocities is None:
        w1 = np.zeros((nx1 + 1, nx2))
        w1[1:-1] = 0.5 * (v1.values[:-1] + v1.values[1:])
        w1[0], w1[-1] = v1.values[0], v1.values[-1]
        w2 = np.zeros((nx1, nx2 + 1))
        w2[:, 1:-1] = 0.5 * (v2.values[:, :-1] + v2.values[:, 1:])
        c1, c2 = v1.values, v2.values
    else:
        w1, w2 = face_velocities
        c1 = 0.5 * (w1[:-1] + w1[1:])
        c2 = 0.5 * (w2[:, :-1] + w2[:, 1:])

    if dispersion is None:
        d11, d22, d12, d21 = dispersion_tensor(c1, c2, spec.Dw, spec.aL, spec.aT, dispersion_mode)
    else:
        d11, d22, d12 = (np.full((nx1, nx2), float(d)) for d in dispersion)
        d21 = d12
    # face values of the tensor
    d11f = 0.5 * (d11[:-1] + d11[1:])
    d12f = 0.5 * (d12[:-1] + d12[1:])
    d22f = 0.5 * (d22[:, :-1] + d22[:, 1:])
    d21f = 0.5 * (d21[:, :-1] + d21[:, 1:])
    cross = bool(np.any(d12 != 0) or np.any(d21 != 0))

    rate = (np.abs(c1) / dx1 + np.abs(c2) / dx2 + 2 * d11 / dx1 ** 2 + 2 * d22 / dx2 ** 2).max()
    rate = max(rate, np.abs(w1).max() / dx1, np.abs(w2).max() / dx2)
    dt_max = safety / rate
    if dt_max < T * 1e-8:
        raise StabilityError(f"stable time step {dt_max:.3e} is below T*1e-8")

    def face_dispersion(dt):
        if advection == "upwind":
            return d11f, d22f
        wi, wj = w1[1:-1], w2[:, 1:-1]
        e1 = np.maximum(d11f - 0.5 * np.abs(wi) * dx1 + 0.5 * wi ** 2 * dt, 0.0)
        e2 = np.maximum(d22f - 0.5 * np.abs(wj) * dx2 + 0.5 * wj ** 2 * dt, 0.0)
        return e1, e2

    u = gaussian_source(v1, spec) if initial is None else np.array(initial, dtype=float)
    u = u.reshape(nx1, nx2)
    times = np.linspace(0.0, T, nt_save) if nt_save > 1 else np.array([T])
    snaps, t = [], 0.0
    cache = {}
    for target in times:
        while t < target - 1e-14 * T:
            dt = min(dt_max, target - t)
            if dt not in cache:
                cache.clear()
                cache[dt] = face_dispersion(dt)
            e1, e2 = cache[dt]
            u = u + dt * _ade_rhs(u, w1, w2, d11, e1, d12f, e2, d21f, cross, dx1, dx2, area)
            t = target if dt == target - t else t + dt
        snaps.append(v1.like(u.copy(), "concentration"))
    return ADESolution(times, snaps)


def _ade_rhs(u, w1, w2, d11, d11f, d12f, d22f, d21f, cross, dx1, dx2, area):
    nx1, nx2 = u.shape
    f1 = np.zeros((nx1 + 1, nx2))
    f2 = np.zeros((nx1, nx2 + 1))

    wi = w1[1:-1]
    f1[1:-1] = wi * np.where(wi > 0, u[:-1], u[1:]) - d11f * (u[1:] - u[:-1]) / dx1
    # inlet: zero concentration outside, absorbing for dispersion
    f1[0] = np.where(w1[0] > 0, 0.0, w1[0] * u[0]) - d11[0] * u[0] / (0.5 * dx1)
    # outlet: zero gradient, advective outflow only
    f1[-1] = w1[-1] * u[-1]

    wj = w2[:, 1:-1]
    f2[:, 1:-1] = wj * np.where(wj > 0, u[:, :-1], u[:, 1:]) - d22f * (u[:, 1:] - u[:, :-1]) / dx2

    if cross:
        up = np.pad(u, ((0, 0), (1, 1)), mode="edge")
        du2 = (up[:, 2:] - up[:, :-2]) / (2 * dx2)
        f1[1:-1] -= d12f * 0.5 * (du2[:-1] + du2[1:])
        up = np.pad(u, ((1, 1), (0, 0)), mode="edge")
        up[0] = -u[0]  # Dirichlet ghost at the inlet
        du1 = (up[2:] - up[:-2]) / (2 * dx1)
        f2[:, 1:-1] -= d21f * 0.5 * (du1[:, :-1] + du1[:, 1:])

    return -((f1[1:] - f1[:-1]) * dx2 + (f2[:, 1:] - f2[:, :-1]) * dx1) / area
