"""Loss assemblies for forward, backward and inverse transport problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..exceptions import InvalidPlanError
from .operators import (darcy_residual_jets, neumann_jets, pairs_for, residual_normalized_jets,
                        residual_raw_jets)

MODES = ("normalized", "raw")

# loss term -> LossWeights attribute
TERM_WEIGHTS = {
    "ic": "lambda_ic_or_tc",
    "bcd": "lambda_bcd",
    "bcn": "lambda_bcn",
    "res": "lambda_res",
    "data_u": "lambda_data",
    "data_k": "lambda_data",
    "data_h": "lambda_data",
    "darcy_res": "lambda_darcy_res",
    "darcy_bcd": "lambda_darcy_bcd",
    "darcy_bcn": "lambda_darcy_bcn",
}


@dataclass
class MeasurementSet:
    """Normalized observations.

    ``u_obs`` rows are ``(x~1, x~2, t~, u / g(t))``; ``k_obs`` and ``h_obs``
    rows are ``(x~1, x~2, K / K_max)`` and ``(x~1, x~2, h / h_max)``.
    """

    u_obs: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    k_obs: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    h_obs: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    K_max: float = 1.0
    h_max: float = 1.0
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u_obs = np.asarray(self.u_obs, dtype=float).reshape(-1, 4)
        self.k_obs = np.asarray(self.k_obs, dtype=float).reshape(-1, 3)
        self.h_obs = np.asarray(self.h_obs, dtype=float).reshape(-1, 3)

    @property
    def empty(self):
        return not (len(self.u_obs) or len(self.k_obs) or len(self.h_obs))


def _msq(r):
    return ad.square(r).mean()


def _need(name, n, weight):
    if weight > 0 and n == 0:
        raise InvalidPlanError(f"loss term {name!r} has weight {weight} but no points")


def ade_terms(u_net, plan, weights, coeffs, mode="normalized", nets=None, res_idx=None,
              coeff_values=None):
    """Mean-square loss terms of the transport problem as Vars.

    ``res_idx`` selects a minibatch of residual points.  ``coeff_values``
    may carry precomputed coefficients at all residual points.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    terms = {}
    w = weights
    _need("ic", len(plan.ic), w.lambda_ic_or_tc)
    _need("bcd", len(plan.bcd), w.lambda_bcd)
    _need("bcn", len(plan.bcn), w.lambda_bcn)
    _need("res", len(plan.residual), w.lambda_res)

    if w.lambda_ic_or_tc > 0:
        terms["ic"] = _msq(u_net(plan.ic_points3) - plan.ic_values)
    if w.lambda_bcd > 0:
        terms["bcd"] = _msq(u_net(plan.bcd) - plan.bcd_values)
    if w.lambda_bcn > 0:
        j = u_net.jets(plan.bcn, order=1)
        terms["bcn"] = _msq(neumann_jets(j, plan.bcn_normals(), plan.bcn_values))

    X = plan.residual if res_idx is None else plan.residual[res_idx]
    if coeff_values is None:
        cv = coeffs.at(X, nets)
    else:
        cv = coeff_values if res_idx is None else coeff_values.take(res_idx)
    j = u_net.jets(X, order=2, pairs=pairs_for(cv))
    if mode == "normalized":
        r = residual_normalized_jets(j, cv, coeffs.source(X[:, 2]), coeffs.conservative)
    else:
        r = residual_raw_jets(j, cv, coeffs.T, coeffs.conservative)
    terms["res"] = _msq(r)
    return terms


def weighted_total(terms, weights):
    total = None
    for name, term in terms.items():
        lam = getattr(weights, TERM_WEIGHTS[name])
        if lam == 0:
            continue
        part = term * lam
        total = part if total is None else total + part
    return total


def _finish(fn, paramsets):
    store = {}

    def wrapped(*nets):
        terms = fn(*nets)
        store.update({k: float(ad.value_of(v)) for k, v in terms.items()})
        return terms["__total__"]

    value, grads = ad.value_and_grad(wrapped, paramsets)
    store.pop("__total__", None)
    return value, grads, store


def loss_forward(params_u, plan, weights, coeffs, mode="normalized", res_idx=None,
                 coeff_values=None, nets=None):
    """Weighted forward loss.

    Returns ``(loss, grad, terms)`` with ``grad`` the flat gradient over the
    parameters of ``params_u`` and ``terms`` the unweighted mean squares.
    """
    if plan.anchor_time != -0.5:
        raise InvalidPlanError("forward loss needs an initial-condition plan (anchor -0.5)")
    return _ade_loss(params_u, plan, weights, coeffs, mode, res_idx, coeff_values, nets)


def loss_backward(params_u, plan, weights, coeffs, mode="normalized", res_idx=None,
                  coeff_values=None, nets=None):
    """Backward loss: the condition term holds terminal data at ``t~ = 0.5``."""
    if plan.anchor_time != 0.5:
        raise InvalidPlanError("backward loss needs a terminal-condition plan (anchor +0.5)")
    value, grad, terms = _ade_loss(params_u, plan, weights, coeffs, mode, res_idx,
                                   coeff_values, nets)
    if "ic" in terms:
        terms["tc"] = terms.pop("ic")
    return value, grad, terms


def _ade_loss(params_u, plan, weights, coeffs, mode, res_idx, coeff_values, nets):
    def fn(u_net):
        terms = ade_terms(u_net, plan, weights, coeffs, mode, nets, res_idx, coeff_values)
        terms["__total__"] = weighted_total(terms, weights)
        return terms

    value, grads, terms = _finish(fn, [params_u])
    return value, grads[0], terms


def darcy_terms(k_net, h_net, dplan, weights, aspect, h_bc, q_tilde):
    terms = {}
    if weights.lambda_darcy_res > 0:
        kj = k_net.jets(dplan.residual, order=1)
        hj = h_net.jets(dplan.residual, order=2, pairs=((0, 0), (1, 1)))
        terms["darcy_res"] = _msq(darcy_residual_jets(kj, hj, aspect))
    if weights.lambda_darcy_bcd > 0:
        terms["darcy_bcd"] = _msq(h_net(dplan.bcd) - h_bc)
    if weights.lambda_darcy_bcn > 0:
        n = dplan.bcn_normals()
        target = np.where(dplan.bcn_ids == "x1_min", q_tilde, 0.0)
        kv = k_net(dplan.bcn)
        hj = h_net.jets(dplan.bcn, order=1)
        flux = kv * (hj.d(0) * n[:, 0] + hj.d(1) * n[:, 1])
        terms["darcy_bcn"] = _msq(flux - target)
    return terms


def data_terms(u_net, k_net, h_net, data):
    terms = {}
    if len(data.u_obs):
        terms["data_u"] = _msq(u_net(data.u_obs[:, :3]) - data.u_obs[:, 3])
    if len(data.k_obs):
        terms["data_k"] = _msq(k_net(data.k_obs[:, :2]) - data.k_obs[:, 2])
    if len(data.h_obs):
        terms["data_h"] = _msq(h_net(data.h_obs[:, :2]) - data.h_obs[:, 2])
    return terms


def darcy_scales(spec, K_max, h_max):
    """Aspect ratio, normalized outlet head and normalized inflow flux."""
    return spec.L1 / spec.L2, spec.H / h_max, spec.q * spec.L1 / (K_max * h_max)


def loss_inverse(params_k, params_h, params_u, plans, weights, coeffs, data=None,
                 res_idx=None):
    """Joint Darcy + transport + data loss.

    ``plans`` is ``(ade_plan, darcy_plan)``.  ``coeffs`` must be a
    :class:`~adepinn.pinn.coefficients.DarcyNetCoeffs` so the transport
    coefficients follow the conductivity and head networks.  Returns
    ``(loss, [grad_k, grad_h, grad_u], terms)``.
    """
    ade_plan, dplan = plans
    if data is None or data.empty:
        if weights.lambda_data > 0 and data is None:
            raise InvalidPlanError("lambda_data > 0 but no measurement set was given")
        data = data or MeasurementSet()
    aspect, h_bc, q_t = darcy_scales(coeffs.spec, coeffs.K_max, coeffs.h_max)

    def fn(k_net, h_net, u_net):
        terms = darcy_terms(k_net, h_net, dplan, weights, aspect, h_bc, q_t)
        terms.update(ade_terms(u_net, ade_plan, weights, coeffs, "normalized",
                               (k_net, h_net), res_idx))
        if weights.lambda_data > 0:
            terms.update(data_terms(u_net, k_net, h_net, data))
        terms["__total__"] = weighted_total(terms, weights)
        return terms

    return _finish(fn, [params_k, params_h, params_u])
