"""Closed-form Gaussian-plume solutions, the amplitude normalizer and loss weights."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

DEFAULT_DELTA_X_TILDE = 1.0 / 64.0


@dataclass(frozen=True)
class MeanFieldParams:
    """Parameters of the constant-coefficient (mean-field) plume."""

    M: float = 1.0
    epsilon: float = 0.025
    x1_star: float = 0.15
    x2_star: float = 0.25
    V: float = 1.0 / 0.317
    Dx1: float = 0.0929
    Dx2: float = 0.0645
    T: float = 0.5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.Dx1 < 0 or self.Dx2 < 0:
            raise ValueError("dispersion coefficients must be non-negative")
        if self.T <= 0:
            raise ValueError("T must be positive")


@dataclass
class LossWeights:
    """Weights of the PINN loss terms.

    ``lambda_ic_or_tc`` weighs the initial condition in forward runs and the
    terminal condition in backward runs.
    """

    lambda_ic_or_tc: float = 1.0
    lambda_bcd: float = 1.0
    lambda_bcn: float = 1.0
    lambda_res: float = 1.0
    lambda_data: float = 0.0
    lambda_darcy_bcd: float = 1.0
    lambda_darcy_bcn: float = 1.0
    lambda_darcy_res: float = 1.0

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {val}")
        if self.lambda_res <= 0:
            raise ValueError("lambda_res must be positive")

    @property
    def lambda_ic(self):
        return self.lambda_ic_or_tc

    def scaled(self, **factors):
        vals = asdict(self)
        for k, f in factors.items():
            vals[k] *= f
        return LossWeights(**vals)


def solution_1d(x, t, eps, x0, D, v):
    """Gaussian pulse advected with speed v and spread by dispersion D."""
    s2 = eps ** 2 + 2.0 * D * np.asarray(t, dtype=float)
    return np.exp(-(np.asarray(x) - x0 - v * t) ** 2 / (2.0 * s2)) / np.sqrt(2.0 * np.pi * s2)


def _spreads(t, p):
    t = np.asarray(t, dtype=float)
    return p.epsilon ** 2 + 2.0 * p.Dx1 * t, p.epsilon ** 2 + 2.0 * p.Dx2 * t


def mean_field_2d(x1, x2, t, p):
    s1, s2 = _spreads(t, p)
    arg = (np.asarray(x1) - p.x1_star - p.V * t) ** 2 / s1 + (np.asarray(x2) - p.x2_star) ** 2 / s2
    return p.M / (2.0 * np.pi * np.sqrt(s1 * s2)) * np.exp(-0.5 * arg)


def mean_field_2d_derivs(x1, x2, t, p):
    """Value and exact partial derivatives of :func:`mean_field_2d`.

    Returns a dict with keys ``u, u1, u2, ut, u11, u22, u12``.
    """
    t = np.asarray(t, dtype=float)
    s1, s2 = _spreads(t, p)
    u = mean_field_2d(x1, x2, t, p)
    r1 = np.asarray(x1) - p.x1_star - p.V * t
    r2 = np.asarray(x2) - p.x2_star
    u1 = -r1 / s1 * u
    u2 = -r2 / s2 * u
    # d/dt of log u
    dlog = (-p.Dx1 / s1 - p.Dx2 / s2
            + r1 * p.V / s1 + p.Dx1 * r1 ** 2 / s1 ** 2 + p.Dx2 * r2 ** 2 / s2 ** 2)
    return {
        "u": u,
        "u1": u1,
        "u2": u2,
        "ut": dlog * u,
        "u11": (r1 ** 2 / s1 ** 2 - 1.0 / s1) * u,
        "u22": (r2 ** 2 / s2 ** 2 - 1.0 / s2) * u,
        "u12": r1 * r2 / (s1 * s2) * u,
    }


def normalizer_g(t, p):
    """Peak value of the mean-field plume at time t."""
    s1, s2 = _spreads(t, p)
    return p.M / (2.0 * np.pi * np.sqrt(s1 * s2))


def normalizer_dg_dt(t, p):
    s1, s2 = _spreads(t, p)
    return -normalizer_g(t, p) * (p.Dx1 / s1 + p.Dx2 / s2)


def source_decay_f(t, p):
    """Decay factor -(T/g) dg/dt; multiplies u-tilde in the normalized source term."""
    s1, s2 = _spreads(t, p)
    return p.T * (p.Dx1 / s1 + p.Dx2 / s2)


def f_max(p):
    return p.T * (p.Dx1 + p.Dx2) / p.epsilon ** 2


def mean_decay_f(p):
    """Time average of :func:`source_decay_f` over [0, T], in closed form."""
    s1, s2 = _spreads(p.T, p)
    return 0.5 * np.log(s1) + 0.5 * np.log(s2) - np.log(p.epsilon ** 2)


def weight_criteria(p, delta_x_tilde=DEFAULT_DELTA_X_TILDE, floor=1.0):
    """Loss weights that balance the normalized loss terms.

    The initial-condition weight is the square of the time-mean decay factor,
    floored at ``floor`` so that a dispersion-free problem does not switch the
    initial condition off.
    """
    if not 0 < delta_x_tilde < 1:
        raise ValueError("delta_x_tilde must lie in (0, 1)")
    lam = max(float(mean_decay_f(p)) ** 2, floor)
    return LossWeights(
        lambda_ic_or_tc=lam,
        lambda_bcd=lam,
        lambda_bcn=delta_x_tilde ** 2 * lam,
        lambda_res=1.0,
        lambda_data=lam,
    )
