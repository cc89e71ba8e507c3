"""Error norms and plume moments on grids."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import InvalidInputError, UndefinedMetricError


def _values(f):
    return np.asarray(getattr(f, "values", f), dtype=float)


def rel_l2_at_time(u_hat, u_ref):
    """sqrt(sum (u_hat - u)^2 / sum u^2) over all grid nodes."""
    a, b = _values(u_hat), _values(u_ref)
    if a.shape != b.shape:
        raise InvalidInputError(f"grid shapes differ: {a.shape} vs {b.shape}")
    den = np.sum(b * b)
    if not den > 0:
        raise UndefinedMetricError("reference field has zero norm")
    return float(np.sqrt(np.sum((a - b) ** 2) / den))


def rel_l2_time_avg(pairs):
    """Relative L2 error with numerator and denominator pooled over snapshots."""
    num = den = 0.0
    pairs = list(pairs)
    if not pairs:
        raise UndefinedMetricError("no snapshots")
    for u_hat, u_ref in pairs:
        a, b = _values(u_hat), _values(u_ref)
        if a.shape != b.shape:
            raise InvalidInputError(f"grid shapes differ: {a.shape} vs {b.shape}")
        num += np.sum((a - b) ** 2)
        den += np.sum(b * b)
    if not den > 0:
        raise UndefinedMetricError("reference fields have zero norm")
    return float(np.sqrt(num / den))


@dataclass
class PlumeDiagnostics:
    mass: float
    x1c: float
    x2c: float
    center_defined: bool = True


def plume_diagnostics(u, spacing, origin=(0.0, 0.0)):
    """Mass and centre of mass by the 2-D trapezoidal rule.

    ``u`` holds nodal values on a regular grid with node ``(i, j)`` at
    ``origin + (i*dx1, j*dx2)``.  When the mass is not positive the centre
    is NaN and ``center_defined`` is False.
    """
    u = _values(u)
    dx1, dx2 = spacing
    x1 = origin[0] + dx1 * np.arange(u.shape[0])
    x2 = origin[1] + dx2 * np.arange(u.shape[1])

    def integrate(f):
        return float(trapezoid(trapezoid(f, dx=dx2, axis=1), dx=dx1))

    mass = integrate(u)
    if not mass > 0:
        return PlumeDiagnostics(mass, np.nan, np.nan, False)
    return PlumeDiagnostics(mass, integrate(u * x1[:, None]) / mass,
                            integrate(u * x2[None, :]) / mass)


def field_diagnostics(grid):
    """Plume diagnostics of a cell-centred FieldGrid (nodes at cell centres)."""
    dx1, dx2 = grid.spacing
    return plume_diagnostics(grid.values, grid.spacing, (0.5 * dx1, 0.5 * dx2))


def write_metrics_csv(path, rows):
    """rows: iterables of (time, rel_l2, mass, x1c, x2c)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "rel_l2", "mass", "x1c", "x2c"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
