"""Residual and boundary operators on network jets.

The operators take :class:`~adepinn.autodiff.Jets` (value plus input
derivatives at a batch of points ``(x~1, x~2, t~)``) so that the same code
serves traced networks, plain evaluation and analytic stand-ins.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..exceptions import InvalidInputError

RESIDUAL_PAIRS = ((0, 0), (1, 1))
RESIDUAL_PAIRS_CROSS = ((0, 0), (0, 1), (1, 1))


def transport_operator(j, cv, conservative=False):
    """``u_t + v.grad u - div(D grad u)`` in dimensionless variables.

    The divergence is expanded by the product rule with the coefficient
    derivatives carried in ``cv``.
    """
    u1, u2 = j.d(0), j.d(1)
    out = j.d(2) + cv.v1 * u1 + cv.v2 * u2
    if conservative:
        out = out + cv.div_v * j.value
    out = out - cv.D11 * j.d2(0, 0) - cv.D22 * j.d2(1, 1)
    if cv.has_cross:
        out = out - (cv.D12 + cv.D21) * j.d2(0, 1)
    if cv.varying:
        out = out - (cv.dD11_1 + cv.dD12_2) * u1 - (cv.dD22_2 + cv.dD21_1) * u2
    return out


def residual_normalized_jets(j, cv, source, conservative=False):
    """Residual of the normalized equation: operator minus ``s(t) * u~``."""
    return transport_operator(j, cv, conservative) - source * j.value


def residual_raw_jets(j, cv, T, conservative=False):
    """Physical-units residual of an un-normalized network ``u(x~, t~)``."""
    return transport_operator(j, cv, conservative) * (1.0 / T)


def pairs_for(cv):
    return RESIDUAL_PAIRS_CROSS if cv.has_cross else RESIDUAL_PAIRS


def _points(point, d=3):
    X = np.atleast_2d(np.asarray(point, dtype=float))
    if X.shape[1] != d:
        raise InvalidInputError(f"points must have {d} coordinates")
    return X


def residual_normalized(params_u, point, coeffs, nets=None):
    """Normalized residual at one or more points (numpy)."""
    X = _points(point)
    try:
        cv = coeffs.at(X, nets)
    except Exception as exc:
        raise type(exc)(f"coefficient evaluation failed at points {X[:3].tolist()}...: {exc}") from exc
    j = params_u.network().jets(X, order=2, pairs=pairs_for(cv))
    r = residual_normalized_jets(j, cv, coeffs.source(X[:, 2]), coeffs.conservative)
    return ad.value_of(r)


def residual_raw(params_u, point, coeffs, nets=None):
    X = _points(point)
    cv = coeffs.at(X, nets)
    j = params_u.network().jets(X, order=2, pairs=pairs_for(cv))
    return ad.value_of(residual_raw_jets(j, cv, coeffs.T, coeffs.conservative))


def neumann_jets(j, normals, target):
    n = np.asarray(normals, dtype=float).reshape(-1, 2)
    return j.d(0) * n[:, 0] + j.d(1) * n[:, 1] - target


def neumann_operator(params_u, point, normal, target=0.0):
    """``grad u . n - target`` with the gradient in dimensionless coordinates."""
    X = _points(point)
    normal = np.broadcast_to(np.asarray(normal, dtype=float), (len(X), 2))
    j = params_u.network().jets(X, order=1)
    return ad.value_of(neumann_jets(j, normal, np.asarray(target, dtype=float)))


def darcy_residual_jets(kj, hj, aspect):
    """``d1(k dh/dx1) + aspect**2 d2(k dh/dx2)`` with ``aspect = L1 / L2``."""
    r2 = aspect ** 2
    return (kj.d(0) * hj.d(0) + kj.value * hj.d2(0, 0)
            + (kj.d(1) * hj.d(1) + kj.value * hj.d2(1, 1)) * r2)


def darcy_residual(params_k, params_h, point, aspect):
    X = _points(point, 2)
    kj = params_k.network().jets(X, order=1)
    hj = params_h.network().jets(X, order=2, pairs=RESIDUAL_PAIRS)
    return ad.value_of(darcy_residual_jets(kj, hj, aspect))
