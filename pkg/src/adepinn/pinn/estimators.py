"""Estimator front ends with ``fit`` / ``predict`` / ``get_params``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .. import autodiff as ad
from ..analytic import LossWeights, weight_criteria
from ..exceptions import InvalidInputError
from ..optim import OptimConfig
from ..sampling import SampleCounts, build_sample_plan, from_dimless
from ..validation import check_layers, check_points
from .training import TrainConfig, fit_field_dnn, train_forward, train_inverse


def _optim(est):
    return OptimConfig(adam_lr=est.adam_lr, adam_epochs=est.adam_epochs,
                       batch_size=est.batch_size, lbfgs_memory=est.lbfgs_memory,
                       lbfgs_tol=est.lbfgs_tol, lbfgs_max_iters=est.lbfgs_max_iters,
                       seed=est.random_state)


class FieldRegressor(BaseEstimator, RegressorMixin):
    """Fully connected tanh network fitted by mean-square regression.

    Parameters
    ----------
    hidden_layers : tuple of int
    output_activation : {"identity", "sigmoid", "softplus"}
    adam_lr, adam_epochs, batch_size : Adam stage settings.
    lbfgs_memory, lbfgs_tol, lbfgs_max_iters : L-BFGS stage settings.
    random_state : int
        Seeds initialization and minibatch order.
    """

    def __init__(self, hidden_layers=(40, 40, 40, 40), output_activation="identity",
                 adam_lr=1e-3, adam_epochs=2000, batch_size=None, lbfgs_memory=10,
                 lbfgs_tol=1e-10, lbfgs_max_iters=500, random_state=0, log_every=100):
        self.hidden_layers = hidden_layers
        self.output_activation = output_activation
        self.adam_lr = adam_lr
        self.adam_epochs = adam_epochs
        self.batch_size = batch_size
        self.lbfgs_memory = lbfgs_memory
        self.lbfgs_tol = lbfgs_tol
        self.lbfgs_max_iters = lbfgs_max_iters
        self.random_state = random_state
        self.log_every = log_every

    def fit(self, X, y, params0=None):
        X = check_points(X, np.shape(X)[1] if np.ndim(X) == 2 else 1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if len(y) != len(X):
            raise InvalidInputError("X and y differ in length")
        sizes = (X.shape[1],) + check_layers(self.hidden_layers) + (1,)
        if params0 is None:
            params0 = ad.xavier_init(sizes, self.random_state, self.output_activation)
        model = fit_field_dnn(X, y, params0, TrainConfig(_optim(self), self.log_every))
        self.params_ = model.params["field"]
        self.history_ = model.history
        self.loss_ = model.final_loss
        self.stop_reason_ = model.stop_reason
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_points(X, self.n_features_in_)
        return ad.evaluate_batch(self.params_, X)


@dataclass
class TransportProblem:
    """What a transport solver needs to know.

    ``condition(x1, x2)`` gives the physical concentration at the anchor
    time (t = 0 forward, t = T backward); alternatively ``condition_grid``
    is a reference FieldGrid sampled without replacement.  ``boundary(x1,
    x2, t)`` returns ``(u, du/dx1, du/dx2)`` for manufactured boundary data;
    when None the Dirichlet and Neumann data are zero.
    """

    spec: object
    coeffs: object
    condition: object = None
    condition_grid: object = None
    boundary: object = None
    nets: tuple | None = None


class TransportPINN(BaseEstimator):
    """PINN for the transport equation, forward or backward in time.

    ``formulation="normalized"`` learns ``u / g(t)``; ``"raw"`` learns ``u``
    directly (the reference baseline).  ``weights="criteria"`` derives the
    loss weights from the normalizer; otherwise pass a LossWeights.
    """

    def __init__(self, direction="forward", formulation="normalized", sampling="adaptive_time",
                 weights="criteria", hidden_layers=(40, 40, 40, 40), output_activation="identity",
                 n_res=8000, n_ic=None, ic_fraction=0.75, n_bcd_x=16, n_bcn_x=48, n_t=20,
                 adaptive_ratio=0.5, adam_lr=1e-3, adam_epochs=20000, batch_size=1000,
                 lbfgs_memory=10, lbfgs_tol=1e-7, lbfgs_max_iters=5000, random_state=0,
                 log_every=100, checkpoint_dir=None, verbose=False):
        self.direction = direction
        self.formulation = formulation
        self.sampling = sampling
        self.weights = weights
        self.hidden_layers = hidden_layers
        self.output_activation = output_activation
        self.n_res = n_res
        self.n_ic = n_ic
        self.ic_fraction = ic_fraction
        self.n_bcd_x = n_bcd_x
        self.n_bcn_x = n_bcn_x
        self.n_t = n_t
        self.adaptive_ratio = adaptive_ratio
        self.adam_lr = adam_lr
        self.adam_epochs = adam_epochs
        self.batch_size = batch_size
        self.lbfgs_memory = lbfgs_memory
        self.lbfgs_tol = lbfgs_tol
        self.lbfgs_max_iters = lbfgs_max_iters
        self.random_state = random_state
        self.log_every = log_every
        self.checkpoint_dir = checkpoint_dir
        self.verbose = verbose

    # -- helpers ----------------------------------------------------------
    def _normalized(self):
        if self.formulation not in ("normalized", "raw"):
            raise InvalidInputError(f"unknown formulation {self.formulation!r}")
        return self.formulation == "normalized"

    def resolve_weights(self, coeffs):
        if isinstance(self.weights, LossWeights):
            return self.weights
        if self.weights == "criteria":
            return weight_criteria(coeffs.normalizer)
        if isinstance(self.weights, dict):
            return LossWeights(**self.weights)
        raise InvalidInputError(f"cannot interpret weights {self.weights!r}")

    def build_plan(self, problem):
        spec, coeffs = problem.spec, problem.coeffs
        norm = self._normalized()
        anchor = -0.5 if self.direction == "forward" else 0.5
        if self.direction not in ("forward", "backward"):
            raise InvalidInputError(f"unknown direction {self.direction!r}")
        counts = SampleCounts(self.n_res, self.n_ic, self.ic_fraction, self.n_bcd_x,
                              self.n_bcn_x, self.n_t, self.adaptive_ratio)
        scale = 1.0 / float(coeffs.g(anchor)) if norm else 1.0
        plan = build_sample_plan(spec, counts, self.sampling, self.random_state,
                                 ic_grid=problem.condition_grid, ic_fn=problem.condition,
                                 ic_scale=scale, anchor_time=anchor, T=coeffs.T)
        if problem.boundary is None:
            return plan
        return plan.with_targets(bcd_values=self._bc_targets(problem, plan.bcd, None),
                                 bcn_values=self._bc_targets(problem, plan.bcn,
                                                             plan.bcn_normals()))

    def _bc_targets(self, problem, pts, normals):
        spec, coeffs = problem.spec, problem.coeffs
        x1, x2, t = from_dimless(pts[:, 0], pts[:, 1], pts[:, 2], spec, coeffs.T)
        u, u1, u2 = problem.boundary(x1, x2, t)
        g = coeffs.g(pts[:, 2]) if self._normalized() else 1.0
        if normals is None:
            return u / g
        # gradient with respect to dimensionless coordinates
        return (spec.L1 * u1 * normals[:, 0] + spec.L2 * u2 * normals[:, 1]) / g

    # -- estimator API ----------------------------------------------------
    def fit(self, problem, params0=None):
        coeffs = problem.coeffs
        self.weights_ = self.resolve_weights(coeffs)
        self.plan_ = self.build_plan(problem)
        sizes = (3,) + check_layers(self.hidden_layers) + (1,)
        if params0 is None:
            params0 = ad.xavier_init(sizes, self.random_state, self.output_activation)
        cfg = TrainConfig(_optim(self), self.log_every, self.checkpoint_dir, self.verbose)
        model = train_forward(params0, self.plan_, self.weights_, coeffs, cfg,
                              mode=self.formulation, nets=problem.nets,
                              backward=self.direction == "backward")
        self.params_ = model.params["u"]
        self.history_ = model.history
        self.loss_ = model.final_loss
        self.terms_ = model.final_terms
        self.stop_reason_ = model.stop_reason
        self.coeffs_ = coeffs
        self.spec_ = problem.spec
        return self

    def predict_dimless(self, X):
        """Network output at dimensionless points ``(x~1, x~2, t~)``."""
        check_is_fitted(self, "params_")
        return ad.evaluate_batch(self.params_, check_points(X, 3))

    def predict(self, X):
        """Physical concentration at points ``(x1, x2, t)``."""
        check_is_fitted(self, "params_")
        X = check_points(X, 3)
        s, T = self.spec_, self.coeffs_.T
        Xt = np.column_stack([X[:, 0] / s.L1 - 0.5, X[:, 1] / s.L2 - 0.5, X[:, 2] / T - 0.5])
        out = ad.evaluate_batch(self.params_, Xt)
        if self.formulation == "normalized":
            out = out * self.coeffs_.g(Xt[:, 2])
        return out

    def predict_normalized(self, X):
        """``u / g(t)`` at physical points."""
        X = check_points(X, 3)
        g = self.coeffs_.g(X[:, 2] / self.coeffs_.T - 0.5)
        return self.predict(X) / g


class InversePINN(TransportPINN):
    """Joint estimation of conductivity, head and concentration from data.

    ``fit(problem, dplan, data)`` expects ``problem.coeffs`` to be a
    DarcyNetCoeffs; the trained networks are ``params_k_``, ``params_h_``
    and ``params_``.
    """

    def __init__(self, k_hidden_layers=(40, 40, 40), h_hidden_layers=(40, 40, 40), **kw):
        super().__init__(**kw)
        self.k_hidden_layers = k_hidden_layers
        self.h_hidden_layers = h_hidden_layers

    @classmethod
    def _get_param_names(cls):
        return sorted(set(TransportPINN._get_param_names()) |
                      {"k_hidden_layers", "h_hidden_layers"})

    def fit(self, problem, dplan, data):
        coeffs = problem.coeffs
        self.weights_ = self.resolve_weights(coeffs)
        self.plan_ = self.build_plan(problem)
        rs = self.random_state
        pk = ad.xavier_init((2,) + check_layers(self.k_hidden_layers) + (1,), rs + 1, "softplus")
        ph = ad.xavier_init((2,) + check_layers(self.h_hidden_layers) + (1,), rs + 2)
        pu = ad.xavier_init((3,) + check_layers(self.hidden_layers) + (1,), rs,
                            self.output_activation)
        cfg = TrainConfig(_optim(self), self.log_every, self.checkpoint_dir, self.verbose)
        model = train_inverse(pk, ph, pu, (self.plan_, dplan), self.weights_, coeffs, data, cfg)
        self.params_k_ = model.params["k"]
        self.params_h_ = model.params["h"]
        self.params_ = model.params["u"]
        self.history_ = model.history
        self.loss_ = model.final_loss
        self.terms_ = model.final_terms
        self.stop_reason_ = model.stop_reason
        self.coeffs_ = coeffs
        self.spec_ = problem.spec
        return self

    def predict_conductivity(self, X):
        """Physical K at points ``(x1, x2)``."""
        check_is_fitted(self, "params_k_")
        X = check_points(X, 2)
        s = self.spec_
        Xt = np.column_stack([X[:, 0] / s.L1 - 0.5, X[:, 1] / s.L2 - 0.5])
        return self.coeffs_.K_max * ad.evaluate_batch(self.params_k_, Xt)

    def predict_head(self, X):
        check_is_fitted(self, "params_h_")
        X = check_points(X, 2)
        s = self.spec_
        Xt = np.column_stack([X[:, 0] / s.L1 - 0.5, X[:, 1] / s.L2 - 0.5])
        return self.coeffs_.h_max * ad.evaluate_batch(self.params_h_, Xt)
