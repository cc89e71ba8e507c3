"""Conductivity fields, Darcy velocity and the dispersion tensor on grids.

Grids are cell centred: cell ``(i, j)`` covers
``[i*dx1, (i+1)*dx1] x [j*dx2, (j+1)*dx2]`` and arrays are indexed
``[i, j]`` (x1 first), flattened row-major for files.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .analytic import MeanFieldParams
from .exceptions import FactorizationError, InvalidInputError

FIELD_MAGIC = "ADEPINN-FIELD"
FIELD_VERSION = 1
FIELD_KINDS = ("conductivity", "head", "concentration", "velocity_x1", "velocity_x2")


@dataclass
class ProblemSpec:
    """Physical setup of the transport problem.

    ``Dw``, ``aL`` and ``aT`` are chosen so that the mean-field dispersion
    ``Dw + aL*V`` and ``Dw + aT*V`` reproduce ``Dx1`` and ``Dx2`` for
    ``V = q/phi``.
    """

    L1: float = 1.0
    L2: float = 0.5
    T: float = 0.5
    x1_star: float = 0.15
    x2_star: float = 0.25
    M: float = 1.0
    epsilon: float = 0.025
    phi: float = 0.317
    H: float = 0.0
    q: float = 1.0
    Dw: float = 0.0614
    aL: float = 0.01
    aT: float = 0.001
    sigma_Y: float = 0.9
    lambda_corr: float = 0.5
    mean_Y: float = 0.0
    Dx1: float = 0.0929
    Dx2: float = 0.0645
    V: float | None = None

    def __post_init__(self):
        for name in ("L1", "L2", "T", "epsilon", "phi", "M"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.aL >= self.aT >= 0:
            raise ValueError("dispersivities must satisfy aL >= aT >= 0")
        if self.sigma_Y < 0:
            raise ValueError("sigma_Y must be non-negative")
        if self.lambda_corr <= 0:
            raise ValueError("lambda_corr must be positive")

    @property
    def mean_velocity(self):
        """Mean-field speed along x1.

        With K replaced by a uniform value the inlet flux fixes the Darcy
        flux, so the speed is q/phi whatever the geometric mean is.
        """
        return self.q / self.phi if self.V is None else self.V

    def h_max(self, k_bar):
        """Inlet head of the uniform-K flow problem."""
        return self.q * self.L1 / k_bar + self.H

    def mean_field(self, T=None):
        return MeanFieldParams(
            M=self.M, epsilon=self.epsilon, x1_star=self.x1_star, x2_star=self.x2_star,
            V=self.mean_velocity, Dx1=self.Dx1, Dx2=self.Dx2, T=self.T if T is None else T)

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class FieldGrid:
    nx1: int
    nx2: int
    spacing: tuple
    values: np.ndarray
    kind: str = "concentration"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nx1, self.nx2 = int(self.nx1), int(self.nx2)
        self.spacing = (float(self.spacing[0]), float(self.spacing[1]))
        if self.kind not in FIELD_KINDS:
            raise InvalidInputError(f"unknown field kind {self.kind!r}")
        if min(self.spacing) <= 0:
            raise InvalidInputError("grid spacing must be positive")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size != self.nx1 * self.nx2:
            raise InvalidInputError(
                f"{vals.size} values do not fill a {self.nx1}x{self.nx2} grid")
        self.values = vals.reshape(self.nx1, self.nx2)
        if self.kind == "conductivity" and not np.all(self.values > 0):
            raise InvalidInputError("conductivity must be strictly positive")

    @property
    def shape(self):
        return (self.nx1, self.nx2)

    @property
    def lengths(self):
        return (self.nx1 * self.spacing[0], self.nx2 * self.spacing[1])

    def centers(self):
        """Cell-centre coordinate arrays x1, x2 of shape (nx1, nx2)."""
        x1 = (np.arange(self.nx1) + 0.5) * self.spacing[0]
        x2 = (np.arange(self.nx2) + 0.5) * self.spacing[1]
        return np.meshgrid(x1, x2, indexing="ij")

    def same_grid(self, other):
        return self.shape == other.shape and np.allclose(self.spacing, other.spacing)

    def like(self, values, kind=None):
        return FieldGrid(self.nx1, self.nx2, self.spacing, values, kind or self.kind)


def uniform_grid(spec, nx1, nx2):
    return (nx1, nx2), (spec.L1 / nx1, spec.L2 / nx2)


def save_field(path, grid):
    """Text file: magic line, header keys, then one value per line."""
    lines = [
        f"{FIELD_MAGIC} {FIELD_VERSION}",
        f"kind {grid.kind}",
        f"nx1 {grid.nx1}",
        f"nx2 {grid.nx2}",
        f"dx1 {grid.spacing[0]!r}",
        f"dx2 {grid.spacing[1]!r}",
    ]
    lines.extend(repr(float(v)) for v in grid.values.reshape(-1))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_field(path):
    with open(path) as fh:
        lines = fh.read().split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != FIELD_MAGIC:
        raise InvalidInputError(f"{path}: not a field file")
    meta = dict(line.split(" ", 1) for line in lines[1:6])
    nx1, nx2 = int(meta["nx1"]), int(meta["nx2"])
    vals = np.array([float(v) for v in lines[6:6 + nx1 * nx2]])
    return FieldGrid(nx1, nx2, (float(meta["dx1"]), float(meta["dx2"])), vals, meta["kind"])


def _se_factor(coords, lam, jitter):
    d = coords[:, None] - coords[None, :]
    cov = np.exp(-d ** 2 / lam ** 2) + jitter * np.eye(coords.size)
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(cov)
        raise FactorizationError(
            f"covariance of {coords.size} points (lambda={lam}, jitter={jitter}) is not "
            f"positive definite: min eigenvalue {w.min():.3e}, max {w.max():.3e}") from exc


def grf_sample(grid_dims, spacing, mean_Y, sigma_Y, lambda_corr, seed, jitter=1e-10):
    """Log-normal conductivity with squared-exponential log covariance.

    The covariance of Y = log K between cell centres is
    ``sigma_Y**2 * exp(-|x - x'|**2 / lambda_corr**2)``.  On a rectangular
    grid it factorizes into a Kronecker product of two 1-D covariances, so
    the dense Cholesky factor is the Kronecker product of two small ones.
    """
    if lambda_corr <= 0:
        raise ValueError("lambda_corr must be positive")
    nx1, nx2 = grid_dims
    dx1, dx2 = spacing
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((nx1, nx2))
    if sigma_Y == 0:
        y = np.full((nx1, nx2), float(mean_Y))
    else:
        l1 = _se_factor((np.arange(nx1) + 0.5) * dx1, lambda_corr, jitter)
        l2 = _se_factor((np.arange(nx2) + 0.5) * dx2, lambda_corr, jitter)
        y = mean_Y + sigma_Y * (l1 @ z @ l2.T)
    return FieldGrid(nx1, nx2, spacing, np.exp(y), "conductivity")


def dispersion_tensor(v1, v2, Dw, aL, aT, mode="standard"):
    """Bear dispersion tensor (D11, D22, D12, D21).

    ``mode="standard"`` omits molecular diffusion from the off-diagonal
    entries; ``mode="as-written"`` adds ``Dw`` there as well.  Where the
    velocity vanishes the tensor is ``Dw * I``.
    """
    if mode not in ("standard", "as-written"):
        raise ValueError(f"unknown dispersion mode {mode!r}")
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    speed = np.hypot(v1, v2)
    safe = np.where(speed > 0, speed, 1.0)
    moving = speed > 0
    d11 = Dw + np.where(moving, (aL * v1 ** 2 + aT * v2 ** 2) / safe, 0.0)
    d22 = Dw + np.where(moving, (aL * v2 ** 2 + aT * v1 ** 2) / safe, 0.0)
    d12 = np.where(moving, (aL - aT) * v1 * v2 / safe, 0.0)
    if mode == "as-written":
        d12 = d12 + np.where(moving, Dw, 0.0)
    return d11, d22, d12, d12.copy()


def darcy_velocity(K, h, phi):
    """Cell-centred seepage velocity -(K/phi) grad h.

    Gradients are central in the interior and one-sided on the edges.
    """
    if not K.same_grid(h):
        raise InvalidInputError("K and h must share a grid")
    dx1, dx2 = K.spacing
    g1 = np.gradient(h.values, dx1, axis=0) if K.nx1 > 1 else np.zeros(K.shape)
    g2 = np.gradient(h.values, dx2, axis=1) if K.nx2 > 1 else np.zeros(K.shape)
    v1 = -K.values / phi * g1
    v2 = -K.values / phi * g2
    return K.like(v1, "velocity_x1"), K.like(v2, "velocity_x2")
