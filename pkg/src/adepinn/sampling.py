"""Collocation point sets for PINN training.

All coordinates are dimensionless: ``x~i = xi / Li - 0.5`` and
``t~ = t / T - 0.5``, so the space-time domain is ``[-0.5, 0.5]**3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .analytic import normalizer_g
from .exceptions import InvalidCountError, InvalidInputError

STRATEGIES = ("lhs", "adaptive_time")
# outward unit normals in dimensionless coordinates
BOUNDARY_NORMALS = {
    "x1_min": (-1.0, 0.0),
    "x1_max": (1.0, 0.0),
    "x2_min": (0.0, -1.0),
    "x2_max": (0.0, 1.0),
}
BOUNDARY_IDS = tuple(BOUNDARY_NORMALS)
PLAN_MAGIC = "ADEPINN-PLAN"


def to_dimless(x1, x2, t, spec, T=None):
    T = spec.T if T is None else T
    return (np.asarray(x1) / spec.L1 - 0.5, np.asarray(x2) / spec.L2 - 0.5,
            np.asarray(t) / T - 0.5)


def from_dimless(xt1, xt2, tt, spec, T=None):
    T = spec.T if T is None else T
    return ((np.asarray(xt1) + 0.5) * spec.L1, (np.asarray(xt2) + 0.5) * spec.L2,
            (np.asarray(tt) + 0.5) * T)


def lhs(n, dims, bounds=None, seed=None):
    """Latin hypercube sample of ``n`` points in ``dims`` dimensions.

    Every one of the ``n`` equal bins along each axis holds exactly one
    coordinate.  ``bounds`` is a sequence of ``(low, high)`` per axis,
    default the unit cube.
    """
    if n < 1 or dims < 1:
        raise InvalidCountError("lhs needs n >= 1 and dims >= 1")
    unit = qmc.LatinHypercube(dims, rng=np.random.default_rng(seed)).random(n)
    if bounds is None:
        return unit
    bounds = np.asarray(bounds, dtype=float).reshape(dims, 2)
    return qmc.scale(unit, bounds[:, 0], bounds[:, 1])


def tabulated_time_cdf(p, n_nodes=20001):
    """Nodes and CDF of the normalizer density on ``[0, T]``.

    Nodes cluster quadratically near ``t = 0`` where the density is
    steepest; the CDF is a cumulative trapezoid rule.
    """
    if n_nodes < 10001:
        raise InvalidInputError("CDF table needs at least 1e4 nodes")
    t = p.T * np.linspace(0.0, 1.0, n_nodes) ** 2
    g = normalizer_g(t, p)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))])
    return t, cdf / cdf[-1]


def adaptive_time_sample(n, p, seed=None, ratio=0.5, n_nodes=20001):
    """Residual times: a ``ratio`` share drawn from the normalizer density,
    the rest by 1-D LHS on ``(0, T]``.

    Returns dimensionless times in ``(-0.5, 0.5]``, shuffled.  ``t = 0`` is
    never returned because the initial condition already covers it.
    """
    if n < 1:
        raise InvalidCountError("n must be positive")
    if not 0.0 <= ratio <= 1.0:
        raise InvalidInputError("ratio must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_ad = int(round(ratio * n))
    nodes, cdf = tabulated_time_cdf(p, n_nodes)
    # 1 - U is uniform on (0, 1], so the inverse CDF never hits t = 0
    t_ad = np.interp(1.0 - rng.random(n_ad), cdf, nodes)
    parts = [t_ad]
    if n - n_ad:
        strata = lhs(n - n_ad, 1, seed=rng)[:, 0]
        parts.append(p.T * (1.0 - strata))
    t = np.concatenate(parts)
    rng.shuffle(t)
    return t / p.T - 0.5


@dataclass
class SampleCounts:
    """Point counts; ``n_ic`` may be given as a fraction of grid nodes."""

    n_res: int = 8000
    n_ic: int | None = None
    ic_fraction: float = 0.75
    n_bcd_x: int = 16
    n_bcn_x: int = 48
    n_t: int = 20
    adaptive_ratio: float = 0.5

    def __post_init__(self):
        for name in ("n_res", "n_bcd_x", "n_bcn_x", "n_t"):
            if getattr(self, name) < 0:
                raise InvalidCountError(f"{name} must be non-negative")
        if self.n_ic is not None and self.n_ic < 0:
            raise InvalidCountError("n_ic must be non-negative")
        if not 0.0 < self.ic_fraction:
            raise InvalidCountError("ic_fraction must be positive")

    def scaled(self, factor):
        """Counts multiplied by ``factor`` (at least one point each)."""
        def sc(v):
            return None if v is None else max(1, int(round(v * factor)))
        return SampleCounts(sc(self.n_res), sc(self.n_ic), self.ic_fraction,
                            sc(self.n_bcd_x), sc(self.n_bcn_x), sc(self.n_t),
                            self.adaptive_ratio)


@dataclass
class SamplePlan:
    """Point sets of one training problem.

    Arrays: ``residual`` (n, 3); ``ic`` (n, 2) with ``ic_values``;
    ``bcd`` and ``bcn`` (n, 3) with boundary ids and target values.
    ``anchor_time`` is the dimensionless time of the ``ic`` set: -0.5 for an
    initial condition, +0.5 for a terminal condition.
    """

    residual: np.ndarray
    ic: np.ndarray
    ic_values: np.ndarray
    bcd: np.ndarray
    bcd_ids: np.ndarray
    bcn: np.ndarray
    bcn_ids: np.ndarray
    strategy: str = "lhs"
    anchor_time: float = -0.5
    bcd_values: np.ndarray | None = None
    bcn_values: np.ndarray | None = None
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.residual = np.asarray(self.residual, dtype=float).reshape(-1, 3)
        self.ic = np.asarray(self.ic, dtype=float).reshape(-1, 2)
        self.ic_values = np.asarray(self.ic_values, dtype=float).reshape(-1)
        self.bcd = np.asarray(self.bcd, dtype=float).reshape(-1, 3)
        self.bcn = np.asarray(self.bcn, dtype=float).reshape(-1, 3)
        self.bcd_ids = np.asarray(self.bcd_ids, dtype="<U6").reshape(-1)
        self.bcn_ids = np.asarray(self.bcn_ids, dtype="<U6").reshape(-1)
        if self.bcd_values is None:
            self.bcd_values = np.zeros(len(self.bcd))
        if self.bcn_values is None:
            self.bcn_values = np.zeros(len(self.bcn))
        self.bcd_values = np.asarray(self.bcd_values, dtype=float).reshape(-1)
        self.bcn_values = np.asarray(self.bcn_values, dtype=float).reshape(-1)
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if len(self.ic) != len(self.ic_values):
            raise InvalidInputError("ic points and values differ in length")
        for pts, ids, vals, name in ((self.bcd, self.bcd_ids, self.bcd_values, "bcd"),
                                     (self.bcn, self.bcn_ids, self.bcn_values, "bcn")):
            if not len(pts) == len(ids) == len(vals):
                raise InvalidInputError(f"{name} points, ids and values differ in length")
            if set(ids) - set(BOUNDARY_IDS):
                raise InvalidInputError(f"unknown boundary id in {name}")
        for arr in (self.residual, self.ic, self.bcd, self.bcn):
            if arr.size and (arr.min() < -0.5 or arr.max() > 0.5):
                raise InvalidInputError("plan point outside the dimensionless domain")
        self.counts = {**self.counts, "N_res": len(self.residual), "N_ic": len(self.ic),
                       "N_bcd": len(self.bcd), "N_bcn": len(self.bcn)}

    @property
    def ic_points3(self):
        """IC points with the anchor time appended as third column."""
        return np.column_stack([self.ic, np.full(len(self.ic), self.anchor_time)])

    def bcn_normals(self):
        return np.array([BOUNDARY_NORMALS[i] for i in self.bcn_ids]).reshape(-1, 2)

    def with_targets(self, ic_values=None, bcd_values=None, bcn_values=None):
        kw = dict(self.__dict__)
        for k, v in (("ic_values", ic_values), ("bcd_values", bcd_values),
                     ("bcn_values", bcn_values)):
            if v is not None:
                kw[k] = v
        return SamplePlan(**kw)


def _boundary_points(edge, n_x, slices, rng):
    """``n_x`` LHS positions along one edge at every time slice."""
    pts = []
    for t in slices:
        s = lhs(n_x, 1, [(-0.5, 0.5)], seed=rng)[:, 0]
        fixed = -0.5 if edge.endswith("min") else 0.5
        if edge.startswith("x1"):
            pts.append(np.column_stack([np.full(n_x, fixed), s, np.full(n_x, t)]))
        else:
            pts.append(np.column_stack([s, np.full(n_x, fixed), np.full(n_x, t)]))
    return np.concatenate(pts) if pts else np.zeros((0, 3))


def build_sample_plan(spec, counts, strategy="adaptive_time", seed=None, ic_grid=None,
                      ic_fn=None, ic_scale=1.0, anchor_time=-0.5, T=None,
                      dirichlet_edges=("x1_min",), neumann_edges=("x1_max", "x2_min", "x2_max")):
    """Residual, initial (or terminal) and boundary point sets.

    Parameters
    ----------
    spec : ProblemSpec
    counts : SampleCounts
    strategy : {"lhs", "adaptive_time"}
        ``"lhs"`` draws residual points from a joint 3-D Latin hypercube;
        ``"adaptive_time"`` keeps spatial LHS and draws times with
        :func:`adaptive_time_sample`.
    ic_grid : FieldGrid, optional
        Reference field at the anchor time.  A share ``counts.ic_fraction``
        of its cell centres is drawn without replacement.
    ic_fn : callable, optional
        ``ic_fn(x1, x2)`` in physical units, used with LHS points when no
        grid is given.
    ic_scale : float
        Multiplies the IC targets, e.g. ``1/g(t)`` for normalized targets.
    anchor_time : float
        -0.5 for an initial condition, +0.5 for a terminal condition.
    """
    if strategy not in STRATEGIES:
        raise InvalidInputError(f"unknown strategy {strategy!r}")
    if anchor_time not in (-0.5, 0.5):
        raise InvalidInputError("anchor_time must be -0.5 or 0.5")
    T = spec.T if T is None else T
    rng = np.random.default_rng(seed)
    cube = [(-0.5, 0.5)] * 3

    if counts.n_res:
        if strategy == "lhs":
            res = lhs(counts.n_res, 3, cube, seed=rng)
            res[:, 2] = -res[:, 2]  # maps [-0.5, 0.5) onto (-0.5, 0.5]
        else:
            xy = lhs(counts.n_res, 2, cube[:2], seed=rng)
            tt = adaptive_time_sample(counts.n_res, spec.mean_field(T), seed=rng,
                                      ratio=counts.adaptive_ratio)
            res = np.column_stack([xy, tt])
    else:
        res = np.zeros((0, 3))

    if ic_grid is not None:
        n_nodes = ic_grid.nx1 * ic_grid.nx2
        n_ic = counts.n_ic if counts.n_ic is not None else int(round(counts.ic_fraction * n_nodes))
        if counts.ic_fraction > 1 or n_ic > n_nodes:
            raise InvalidCountError(f"{n_ic} IC points requested from {n_nodes} grid nodes")
        pick = np.sort(rng.choice(n_nodes, size=n_ic, replace=False))
        c1, c2 = ic_grid.centers()
        x1, x2 = c1.reshape(-1)[pick], c2.reshape(-1)[pick]
        vals = ic_grid.values.reshape(-1)[pick]
    elif ic_fn is not None:
        n_ic = counts.n_ic if counts.n_ic is not None else 1000
        if n_ic < 1:
            raise InvalidCountError("n_ic must be positive")
        pts = lhs(n_ic, 2, [(0.0, spec.L1), (0.0, spec.L2)], seed=rng)
        x1, x2 = pts[:, 0], pts[:, 1]
        vals = np.asarray(ic_fn(x1, x2), dtype=float)
    else:
        x1 = x2 = vals = np.zeros(0)
    ic = np.column_stack([x1 / spec.L1 - 0.5, x2 / spec.L2 - 0.5])

    slices = np.arange(1, counts.n_t + 1) / counts.n_t - 0.5 if counts.n_t else []
    if anchor_time == 0.5 and counts.n_t:
        slices = np.arange(0, counts.n_t) / counts.n_t - 0.5

    bcd, bcd_ids = [], []
    for edge in dirichlet_edges:
        pts = _boundary_points(edge, counts.n_bcd_x, slices, rng)
        bcd.append(pts)
        bcd_ids += [edge] * len(pts)

    # Neumann locations shared among edges in proportion to edge length
    lengths = np.array([spec.L2 if e.startswith("x1") else spec.L1 for e in neumann_edges])
    share = np.floor(counts.n_bcn_x * lengths / lengths.sum()).astype(int) if len(lengths) else []
    if len(share):
        share[0] += counts.n_bcn_x - share.sum()
    bcn, bcn_ids = [], []
    for edge, n_x in zip(neumann_edges, share):
        if n_x:
            pts = _boundary_points(edge, n_x, slices, rng)
            bcn.append(pts)
            bcn_ids += [edge] * len(pts)

    return SamplePlan(
        residual=res, ic=ic, ic_values=vals * ic_scale,
        bcd=np.concatenate(bcd) if bcd else np.zeros((0, 3)), bcd_ids=bcd_ids,
        bcn=np.concatenate(bcn) if bcn else np.zeros((0, 3)), bcn_ids=bcn_ids,
        strategy=strategy, anchor_time=anchor_time,
        counts={"N_bcd_x": counts.n_bcd_x, "N_bcn_x": counts.n_bcn_x, "N_t": counts.n_t},
    )


def dump_plan(path, plan):
    """Text dump: header lines then one tagged point per line."""
    out = [f"{PLAN_MAGIC} 1", f"strategy {plan.strategy}", f"anchor {plan.anchor_time!r}",
           "counts " + " ".join(f"{k}={v}" for k, v in plan.counts.items())]
    for p in plan.residual:
        out.append("res " + " ".join(repr(float(v)) for v in p))
    for p, v in zip(plan.ic, plan.ic_values):
        out.append("ic " + " ".join(repr(float(c)) for c in p) + f" {float(v)!r}")
    for tag, pts, ids, vals in (("bcd", plan.bcd, plan.bcd_ids, plan.bcd_values),
                                ("bcn", plan.bcn, plan.bcn_ids, plan.bcn_values)):
        for p, i, v in zip(pts, ids, vals):
            out.append(f"{tag} {i} " + " ".join(repr(float(c)) for c in p) + f" {float(v)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def load_plan(path):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or lines[0][0] != PLAN_MAGIC:
        raise InvalidInputError(f"{path}: not a sample plan file")
    strategy = lines[1][1]
    anchor = float(lines[2][1])
    counts = {k: int(v) for k, v in (kv.split("=") for kv in lines[3][1:])}
    res, ic, icv = [], [], []
    bc = {"bcd": ([], [], []), "bcn": ([], [], [])}
    for row in lines[4:]:
        tag = row[0]
        if tag == "res":
            res.append([float(v) for v in row[1:4]])
        elif tag == "ic":
            ic.append([float(v) for v in row[1:3]])
            icv.append(float(row[3]))
        elif tag in bc:
            bc[tag][0].append([float(v) for v in row[2:5]])
            bc[tag][1].append(row[1])
            bc[tag][2].append(float(row[5]))
        else:
            raise InvalidInputError(f"{path}: unknown role tag {tag!r}")
    return SamplePlan(
        residual=np.array(res).reshape(-1, 3), ic=np.array(ic).reshape(-1, 2),
        ic_values=np.array(icv), bcd=np.array(bc["bcd"][0]).reshape(-1, 3),
        bcd_ids=bc["bcd"][1], bcd_values=np.array(bc["bcd"][2]),
        bcn=np.array(bc["bcn"][0]).reshape(-1, 3), bcn_ids=bc["bcn"][1],
        bcn_values=np.array(bc["bcn"][2]), strategy=strategy, anchor_time=anchor,
        counts=counts,
    )


@dataclass
class DarcyPlan:
    """Spatial point sets for the steady flow constraint.

    ``bcd`` lies on the fixed-head edge ``x~1 = 0.5``; ``bcn`` covers the
    inflow edge and the two no-flow edges with outward normals.
    """

    residual: np.ndarray
    bcd: np.ndarray
    bcn: np.ndarray
    bcn_ids: np.ndarray

    def bcn_normals(self):
        return np.array([BOUNDARY_NORMALS[i] for i in self.bcn_ids]).reshape(-1, 2)


def build_darcy_plan(spec, n_res, n_bc, seed=None):
    """LHS residual points and ``n_bc`` points on each boundary edge."""
    if n_res < 1 or n_bc < 1:
        raise InvalidCountError("Darcy plan needs positive counts")
    rng = np.random.default_rng(seed)
    res = lhs(n_res, 2, [(-0.5, 0.5)] * 2, seed=rng)

    def edge(e):
        return _boundary_points(e, n_bc, [0.0], rng)[:, :2]

    bcn = np.concatenate([edge(e) for e in ("x1_min", "x2_min", "x2_max")])
    ids = np.repeat(["x1_min", "x2_min", "x2_max"], n_bc)
    return DarcyPlan(res, edge("x1_max"), bcn, ids)
