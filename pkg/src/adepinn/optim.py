"""Adam and L-BFGS for flat parameter vectors.

Both optimizers take ``fun(x, step) -> (loss, grad)``.  ``step`` lets the
objective pick a minibatch; L-BFGS always passes ``None`` (full batch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DivergenceError


@dataclass
class OptimConfig:
    adam_lr: float = 2e-4
    adam_epochs: int = 20000
    batch_size: int | None = 1000
    lbfgs_memory: int = 10
    lbfgs_tol: float = 1e-7
    lbfgs_max_iters: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not self.adam_lr > 0:
            raise ValueError("adam_lr must be positive")
        if self.adam_epochs < 0:
            raise ValueError("adam_epochs must be non-negative")
        if not self.lbfgs_tol > 0:
            raise ValueError("lbfgs_tol must be positive")
        if self.lbfgs_memory < 1:
            raise ValueError("lbfgs_memory must be at least 1")
        if self.lbfgs_max_iters < 0:
            raise ValueError("lbfgs_max_iters must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class OptimResult:
    x: np.ndarray
    loss: float
    history: list
    stop_reason: str = "max_iters"
    n_iter: int = 0


def _check(loss, grad, x, step, what):
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise DivergenceError(f"{what}: non-finite loss or gradient at step {step}", last_good=x)


def adam_minimize(fun, x0, cfg, callback=None, beta1=0.9, beta2=0.999, eps=1e-8):
    """Plain Adam with bias correction.

    ``history`` holds the loss at the start of every step.  The returned
    ``x`` is the final iterate; ``loss`` is its last evaluated loss.
    ``callback(step, loss, x)`` may return True to stop early.
    """
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    history = []
    loss = np.nan
    for k in range(cfg.adam_epochs):
        loss, grad = fun(x, k)
        _check(loss, grad, x, k, "adam")
        history.append(float(loss))
        if callback is not None and callback(k, loss, x):
            return OptimResult(x, float(loss), history, "callback", k)
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        mh = m / (1 - beta1 ** (k + 1))
        vh = v / (1 - beta2 ** (k + 1))
        x = x - cfg.adam_lr * mh / (np.sqrt(vh) + eps)
    return OptimResult(x, float(loss), history, "max_iters", cfg.adam_epochs)


def two_loop_direction(grad, s_list, y_list):
    """L-BFGS search direction ``-H grad`` from stored pairs (oldest first)."""
    q = grad.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_list, y_list)]
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through two points with slopes; None if ill posed."""
    if not np.all(np.isfinite([a, fa, ga, b, fb, gb])) or a == b:
        return None
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    den = gb - ga + 2 * d2
    if den == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / den


def strong_wolfe(phi, f0, g0, alpha0=1.0, c1=1e-4, c2=0.9, max_evals=25, alpha_max=1e10):
    """Line search for the strong Wolfe conditions.

    ``phi(alpha) -> (f, dphi, payload)``.  Returns ``(alpha, f, payload)``
    or ``None`` if no acceptable step was found.
    """
    a_prev, f_prev, g_prev = 0.0, f0, g0
    a = alpha0
    evals = 0

    def zoom(lo, flo, glo, hi, fhi, ghi):
        nonlocal evals
        while evals < max_evals:
            a_j = _cubic_min(lo, flo, glo, hi, fhi, ghi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            margin = 0.1 * (hi_b - lo_b)
            if a_j is None or not (lo_b + margin <= a_j <= hi_b - margin):
                a_j = 0.5 * (lo + hi)
            f_j, g_j, pay = phi(a_j)
            evals += 1
            if not np.isfinite(f_j) or f_j > f0 + c1 * a_j * g0 or f_j >= flo:
                hi, fhi, ghi = a_j, f_j if np.isfinite(f_j) else np.inf, g_j
                if not np.isfinite(f_j):
                    ghi = glo
            else:
                if abs(g_j) <= -c2 * g0:
                    return a_j, f_j, pay
                if g_j * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = a_j, f_j, g_j
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    while evals < max_evals:
        f_a, g_a, pay = phi(a)
        evals += 1
        if not np.isfinite(f_a) or f_a > f0 + c1 * a * g0 or (evals > 1 and f_a >= f_prev):
            if not np.isfinite(f_a):
                f_a, g_a = np.inf, g_prev
            return zoom(a_prev, f_prev, g_prev, a, f_a, g_a)
        if abs(g_a) <= -c2 * g0:
            return a, f_a, pay
        if g_a >= 0:
            return zoom(a, f_a, g_a, a_prev, f_prev, g_prev)
        a_prev, f_prev, g_prev = a, f_a, g_a
        a = min(2.0 * a, alpha_max)
    return None


def lbfgs_minimize(fun, x0, cfg, callback=None):
    """Limited-memory BFGS with a strong Wolfe line search.

    Stops with ``stop_reason`` ``"tol"`` when the loss drops below
    ``cfg.lbfgs_tol``, ``"max_iters"`` after ``cfg.lbfgs_max_iters``
    iterations, or ``"line_search"`` when no acceptable step exists.  The
    best iterate seen is returned.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x, None)
    _check(f, g, x, 0, "lbfgs")
    history = [float(f)]
    s_list, y_list = [], []
    best = (float(f), x.copy())
    for k in range(cfg.lbfgs_max_iters + 1):
        if f < cfg.lbfgs_tol:
            return OptimResult(best[1], best[0], history, "tol", k)
        if k == cfg.lbfgs_max_iters:
            break
        if callback is not None and callback(k, f, x):
            return OptimResult(best[1], best[0], history, "callback", k)
        d = two_loop_direction(g, s_list, y_list)
        gd = float(g @ d)
        if gd >= 0:
            # stale curvature pairs; restart from steepest descent
            s_list, y_list = [], []
            d = -g
            gd = float(g @ d)
            if gd == 0:
                return OptimResult(best[1], best[0], history, "line_search", k)
        alpha0 = 1.0 if s_list else min(1.0, 1.0 / max(np.abs(g).sum(), 1e-300))

        def phi(a):
            xa = x + a * d
            fa, ga = fun(xa, None)
            return float(fa), float(ga @ d) if np.all(np.isfinite(ga)) else np.nan, (xa, ga)

        found = strong_wolfe(phi, float(f), gd, alpha0)
        if found is None:
            return OptimResult(best[1], best[0], history, "line_search", k)
        _, f_new, (x_new, g_new) = found
        s, y = x_new - x, g_new - g
        if float(s @ y) > 1e-12 * float(y @ y):
            s_list.append(s)
            y_list.append(y)
            if len(s_list) > cfg.lbfgs_memory:
                s_list.pop(0)
                y_list.pop(0)
        x, f, g = x_new, f_new, g_new
        history.append(float(f))
        if f < best[0]:
            best = (float(f), x.copy())
    return OptimResult(best[1], best[0], history, "max_iters", cfg.lbfgs_max_iters)
