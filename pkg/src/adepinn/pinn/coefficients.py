"""Dimensionless transport coefficients at collocation points.

Every provider returns :class:`CoeffValues`: the scaled velocity
``v~i = vi T / Li``, the scaled dispersion ``D~ij = Dij T / (Li Lj)`` and
the x~-derivatives of ``D~`` needed by the expanded divergence term.
Entries are numpy arrays, or :class:`~adepinn.autodiff.Var` when they depend
on traced conductivity or head networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..analytic import normalizer_g, source_decay_f


@dataclass
class CoeffValues:
    v1: object
    v2: object
    D11: object
    D22: object
    D12: object
    D21: object
    dD11_1: object = 0.0
    dD22_2: object = 0.0
    dD12_2: object = 0.0
    dD21_1: object = 0.0
    div_v: object = 0.0
    has_cross: bool = True
    varying: bool = True

    def take(self, idx):
        def pick(a):
            if isinstance(a, (ad.Var, np.ndarray)) and np.ndim(a.value if isinstance(a, ad.Var) else a):
                return a[idx]
            return a
        kw = {k: pick(v) for k, v in self.__dict__.items() if k not in ("has_cross", "varying")}
        return CoeffValues(**kw, has_cross=self.has_cross, varying=self.varying)


class Dual:
    """First-order forward derivative along x~1 and x~2.

    Components may be numpy arrays or taped Vars, so coefficient
    derivatives stay differentiable with respect to network parameters.
    """

    __slots__ = ("v", "d1", "d2")
    __array_ufunc__ = None

    def __init__(self, v, d1, d2):
        self.v, self.d1, self.d2 = v, d1, d2

    @staticmethod
    def _lift(o):
        return o if isinstance(o, Dual) else Dual(o, 0.0, 0.0)

    def __add__(self, o):
        o = self._lift(o)
        return Dual(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __sub__(self, o):
        o = self._lift(o)
        return Dual(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)

    def __neg__(self):
        return Dual(-self.v, -self.d1, -self.d2)

    def __mul__(self, o):
        o = self._lift(o)
        return Dual(self.v * o.v, self.d1 * o.v + self.v * o.d1, self.d2 * o.v + self.v * o.d2)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = self._lift(o)
        q = self.v / o.v
        return Dual(q, (self.d1 - q * o.d1) / o.v, (self.d2 - q * o.d2) / o.v)


def _sqrt(x):
    return ad.sqrt(x) if isinstance(x, ad.Var) else np.sqrt(x)


def dual_sqrt(a):
    r = _sqrt(a.v)
    return Dual(r, a.d1 / (2.0 * r), a.d2 / (2.0 * r))


def bear_dispersion(v1, v2, Dw, aL, aT, mode="standard", floor=1e-12):
    """Bear dispersion tensor of Dual velocities.

    The speed is regularized as ``sqrt(|v|**2 + floor**2)`` so that its
    derivative exists where the flow stagnates.
    """
    speed = dual_sqrt(v1 * v1 + v2 * v2 + floor ** 2)
    d11 = (v1 * v1 * aL + v2 * v2 * aT) / speed + Dw
    d22 = (v2 * v2 * aL + v1 * v1 * aT) / speed + Dw
    d12 = v1 * v2 * (aL - aT) / speed
    if mode == "as-written":
        d12 = d12 + Dw
    return d11, d22, d12


class DimensionlessCoeffs:
    """Base provider.  Subclasses implement :meth:`at`.

    ``normalizer`` is the :class:`~adepinn.analytic.MeanFieldParams` whose
    peak ``g(t)`` scales the unknown; ``T`` is the time horizon.
    """

    conservative = False

    def __init__(self, spec, normalizer, T=None):
        self.spec = spec
        self.normalizer = normalizer
        self.T = spec.T if T is None else T

    def time(self, tt):
        return (np.asarray(tt) + 0.5) * self.T

    def g(self, tt):
        return normalizer_g(self.time(tt), self.normalizer)

    def source(self, tt):
        """Decay factor s with normalized source ``s * u~``."""
        return source_decay_f(self.time(tt), self.normalizer)

    def at(self, X, nets=None):
        raise NotImplementedError


class UniformFlowCoeffs(DimensionlessCoeffs):
    """Constant velocity ``(V, 0)`` and constant diagonal-plus-cross dispersion."""

    def __init__(self, spec, normalizer, V, D11, D22, D12=0.0, T=None):
        super().__init__(spec, normalizer, T)
        L1, L2, T = spec.L1, spec.L2, self.T
        self.physical = (V, 0.0, D11, D22, D12)
        self.values = CoeffValues(
            v1=V * T / L1, v2=0.0, D11=D11 * T / L1 ** 2, D22=D22 * T / L2 ** 2,
            D12=D12 * T / (L1 * L2), D21=D12 * T / (L1 * L2),
            has_cross=D12 != 0, varying=False)

    @classmethod
    def mean_field(cls, spec, T=None):
        p = spec.mean_field(T)
        return cls(spec, p, p.V, p.Dx1, p.Dx2, 0.0, T)

    def at(self, X, nets=None):
        return self.values


class DarcyNetCoeffs(DimensionlessCoeffs):
    """Velocity and dispersion derived from conductivity and head networks.

    ``k~ = K / K_max`` and ``h~ = h / h_max`` are networks of ``(x~1, x~2)``.
    With ``v = -(K / phi) grad h`` the scaled velocity is
    ``v~i = -K_max h_max T / (phi Li**2) * k~ dh~/dx~i``.
    """

    def __init__(self, spec, normalizer, K_max, h_max, T=None, dispersion_mode="standard",
                 conservative=False):
        super().__init__(spec, normalizer, T)
        self.K_max, self.h_max = float(K_max), float(h_max)
        self.dispersion_mode = dispersion_mode
        self.conservative = conservative
        self._cache = {}

    def _from_jets(self, kj, hj):
        s = self.spec
        c1 = self.K_max * self.h_max / (s.phi * s.L1)
        c2 = self.K_max * self.h_max / (s.phi * s.L2)
        k = Dual(kj.value, kj.d(0), kj.d(1))
        h1 = Dual(hj.d(0), hj.d2(0, 0), hj.d2(0, 1))
        h2 = Dual(hj.d(1), hj.d2(0, 1), hj.d2(1, 1))
        v1 = k * h1 * (-c1)   # physical seepage velocity
        v2 = k * h2 * (-c2)
        d11, d22, d12 = bear_dispersion(v1, v2, s.Dw, s.aL, s.aT, self.dispersion_mode)
        T, L1, L2 = self.T, s.L1, s.L2
        a11, a22, a12 = T / L1 ** 2, T / L2 ** 2, T / (L1 * L2)
        return CoeffValues(
            v1=v1.v * (T / L1), v2=v2.v * (T / L2),
            D11=d11.v * a11, D22=d22.v * a22, D12=d12.v * a12, D21=d12.v * a12,
            dD11_1=d11.d1 * a11, dD22_2=d22.d2 * a22,
            dD12_2=d12.d2 * a12, dD21_1=d12.d1 * a12,
            div_v=v1.d1 * (T / L1) + v2.d2 * (T / L2),
        )

    def at(self, X, nets=None):
        """Coefficients at points ``X`` (n, >=2).

        ``nets`` is ``(k_net, h_net)`` of traced networks, or ``(k_params,
        h_params)`` ParamSets whose values are cached per point array.
        """
        k_src, h_src = nets
        xy = np.ascontiguousarray(np.asarray(X)[:, :2])
        if isinstance(k_src, ad.ParamSet):
            key = (hash(k_src.flat.tobytes()), hash(h_src.flat.tobytes()), xy.shape,
                   hash(xy.tobytes()))
            if key not in self._cache:
                kj = k_src.network().jets(xy, order=1)
                hj = h_src.network().jets(xy, order=2)
                cv = self._from_jets(kj, hj)
                self._cache.clear()
                self._cache[key] = CoeffValues(**{
                    k: (ad.value_of(v) if isinstance(v, ad.Var) else v)
                    for k, v in cv.__dict__.items()})
            return self._cache[key]
        return self._from_jets(k_src.jets(xy, order=1), h_src.jets(xy, order=2))
