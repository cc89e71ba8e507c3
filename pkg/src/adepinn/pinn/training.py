"""Two-stage (Adam then L-BFGS) training of PINN problems."""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..exceptions import DivergenceError, NumericOverflowError
from ..optim import OptimConfig, adam_minimize, lbfgs_minimize
from .losses import loss_backward, loss_forward, loss_inverse


@dataclass
class TrainConfig:
    optim: OptimConfig = field(default_factory=OptimConfig)
    log_every: int = 50
    checkpoint_dir: str | None = None
    verbose: bool = False


@dataclass
class TrainedModel:
    params: dict
    history: list
    stop_reason: str
    final_loss: float
    final_terms: dict


class _Recorder:
    """Wraps an objective, logs loss terms and remembers the last good point."""

    def __init__(self, objective, cfg, stage_offset=0):
        self.objective = objective
        self.cfg = cfg
        self.rows = []
        self.last_terms = {}
        self.last_good = None
        self.t0 = time.perf_counter()

    def __call__(self, x, idx):
        try:
            loss, grad, terms = self.objective(x, idx)
        except NumericOverflowError as exc:
            raise DivergenceError(str(exc), last_good=self.last_good) from exc
        if np.isfinite(loss) and np.all(np.isfinite(grad)):
            self.last_good = x.copy()
        self.last_terms = terms
        return loss, grad

    def log(self, epoch, stage, loss):
        row = {"epoch": epoch, "stage": stage, "total": float(loss), **self.last_terms,
               "wall_time": time.perf_counter() - self.t0}
        self.rows.append(row)
        if self.cfg.verbose:
            print(f"[{stage} {epoch}] loss={loss:.4e} " +
                  " ".join(f"{k}={v:.3e}" for k, v in self.last_terms.items()), flush=True)


def minibatches(n, batch_size, seed):
    """Endless stream of index arrays covering shuffled passes over ``n`` points."""
    rng = np.random.default_rng(seed)
    if batch_size is None or batch_size >= n:
        while True:
            yield None
    while True:
        perm = rng.permutation(n)
        for s in range(0, n - batch_size + 1, batch_size):
            yield np.sort(perm[s:s + batch_size])


def run_two_stage(objective, x0, n_batch_points, cfg):
    """Adam on minibatches of residual points, then full-batch L-BFGS.

    ``objective(x, idx) -> (loss, grad, terms)`` with ``idx`` the residual
    minibatch or None.  Returns ``(x, rows, stop_reason, loss, terms)``.
    """
    oc = cfg.optim
    rec = _Recorder(objective, cfg)
    batches = minibatches(n_batch_points, oc.batch_size, oc.seed)
    current = {}

    def adam_fun(x, step):
        current["idx"] = next(batches)
        return rec(x, current["idx"])

    def adam_cb(step, loss, x):
        if step % cfg.log_every == 0 or step == oc.adam_epochs - 1:
            rec.log(step, "adam", loss)
        return False

    x = np.array(x0, dtype=float)
    try:
        if oc.adam_epochs:
            x = adam_minimize(adam_fun, x, oc, callback=adam_cb).x
        offset = oc.adam_epochs

        def lbfgs_cb(k, loss, xk):
            if k % cfg.log_every == 0:
                rec.log(offset + k, "lbfgs", loss)
            return False

        if oc.lbfgs_max_iters:
            res = lbfgs_minimize(rec, x, oc, callback=lbfgs_cb)
            # final full-batch terms of the returned iterate
            loss, _ = rec(res.x, None)
            rec.log(offset + res.n_iter, "lbfgs", loss)
            return res.x, rec.rows, res.stop_reason, loss, rec.last_terms
        loss, _ = rec(x, None)
        rec.log(offset, "final", loss)
        return x, rec.rows, "max_iters", loss, rec.last_terms
    except DivergenceError as exc:
        if exc.last_good is None:
            exc.last_good = rec.last_good
        exc.history = rec.rows
        raise


def write_history_csv(path, rows, timings_path=None):
    """Loss history; wall time goes to ``timings_path`` when given so that
    the main file is reproducible bit for bit."""
    if not rows:
        return
    keys = []
    for r in rows:
        for k in r:
            if k not in keys and k != "wall_time":
                keys.append(k)
    main_keys = keys if timings_path else keys + ["wall_time"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(main_keys)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in main_keys])
    if timings_path:
        with open(timings_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "stage", "wall_time"])
            for r in rows:
                w.writerow([r["epoch"], r["stage"], _fmt(r["wall_time"])])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _save_last_good(cfg, templates, names, exc):
    if cfg.checkpoint_dir and exc.last_good is not None:
        os.makedirs(cfg.checkpoint_dir, exist_ok=True)
        for p, name in zip(_split(templates, exc.last_good), names):
            ad.save_params(os.path.join(cfg.checkpoint_dir, f"{name}_last_good.txt"), p)


def _split(templates, x):
    out, pos = [], 0
    for t in templates:
        n = t.flat.size
        out.append(t.with_flat(x[pos:pos + n]))
        pos += n
    return out


def _train(templates, names, objective, n_batch, cfg):
    x0 = np.concatenate([t.flat for t in templates])
    try:
        x, rows, reason, loss, terms = run_two_stage(objective, x0, n_batch, cfg)
    except DivergenceError as exc:
        _save_last_good(cfg, templates, names, exc)
        raise
    params = dict(zip(names, _split(templates, x)))
    if cfg.checkpoint_dir:
        os.makedirs(cfg.checkpoint_dir, exist_ok=True)
        for name, p in params.items():
            ad.save_params(os.path.join(cfg.checkpoint_dir, f"{name}.txt"), p)
    return TrainedModel(params, rows, reason, float(loss), dict(terms))


def fit_field_dnn(X, y, params0, cfg):
    """Mean-square regression of a network onto scattered targets.

    Adam runs on minibatches of ``cfg.optim.batch_size`` points, L-BFGS on
    all of them.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ValueError("X and y differ in length")

    def objective(x, idx):
        p = params0.with_flat(x)
        Xi, yi = (X, y) if idx is None else (X[idx], y[idx])

        def fn(net):
            return ad.square(net(Xi) - yi).mean()

        loss, grads = ad.value_and_grad(fn, [p])
        return loss, grads[0], {"data": loss}

    return _train([params0], ["field"], objective, len(y), cfg)


def train_forward(params_u, plan, weights, coeffs, cfg, mode="normalized", nets=None,
                  backward=False):
    """Train the concentration network with frozen coefficients."""
    cv_all = coeffs.at(plan.residual, nets)
    loss_fn = loss_backward if backward else loss_forward

    def objective(x, idx):
        return loss_fn(params_u.with_flat(x), plan, weights, coeffs, mode, res_idx=idx,
                       coeff_values=cv_all, nets=nets)

    return _train([params_u], ["u"], objective, len(plan.residual), cfg)


def train_inverse(params_k, params_h, params_u, plans, weights, coeffs, data, cfg):
    """Joint training of conductivity, head and concentration networks."""
    templates = [params_k, params_h, params_u]

    def objective(x, idx):
        k, h, u = _split(templates, x)
        loss, grads, terms = loss_inverse(k, h, u, plans, weights, coeffs, data, res_idx=idx)
        return loss, np.concatenate(grads), terms

    return _train(templates, ["k", "h", "u"], objective, len(plans[0].residual), cfg)


def train(problem, *args, **kwargs):
    """Dispatch on ``problem`` in {forward, backward, inverse, regression-demo}."""
    if problem == "forward":
        return train_forward(*args, **kwargs)
    if problem == "backward":
        return train_forward(*args, backward=True, **kwargs)
    if problem == "inverse":
        return train_inverse(*args, **kwargs)
    if problem == "regression-demo":
        return fit_field_dnn(*args, **kwargs)
    raise ValueError(f"unknown problem {problem!r}")
