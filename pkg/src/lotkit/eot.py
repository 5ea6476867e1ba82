"""Entropic optimal transport with cost ``0.5 * |x - y|^2``.

The dual is solved by Sinkhorn iterations written as scaling updates on a
kernel that absorbs the current log-potentials.  Whenever the scalings grow
past a threshold they are folded back into the potentials and the kernel is
rebuilt; if a scaling step breaks down (a row or column of the kernel
underflows) an exact log-sum-exp half step is used instead.  This keeps the
cheap matrix-vector form for the bulk of the iterations while remaining
stable for small regularization.
"""

from dataclasses import dataclass

import numpy as np

from lotkit.errors import ConvergenceError, NumericalError
from lotkit.exact_ot import sq_distances
from lotkit.measures import MapOnSample

_ABSORB_LOG = 50.0
_CHUNK = 2_000_000
_ANNEAL_RATIO = 2.0
_ANNEAL_START = 50.0
_STAGE_TOL = 1e-5
_STAGE_ITERS = 2000


@dataclass(frozen=True)
class EotConfig:
    """Sinkhorn settings.

    Parameters
    ----------
    epsilon : float
        Regularization strength, in squared-distance units.
    max_iter : int
        Iteration cap; exceeding it raises ``ConvergenceError``.
    tol : float
        Target L1 violation of the source marginal (the target marginal is
        exact after every full iteration).
    """

    epsilon: float
    max_iter: int = 10_000
    tol: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class DualPotentials:
    """Solved entropic dual pair.

    Attributes
    ----------
    f, g : ndarray
        Potentials on the source and target atoms, gauge ``sum a_i f_i = 0``.
    epsilon : float
    n_iter : int
        Sinkhorn iterations performed.
    violation : float
        Final L1 marginal violation.
    objective : ndarray or None
        Dual objective after every iteration when requested.
    """

    f: np.ndarray
    g: np.ndarray
    epsilon: float
    n_iter: int = 0
    violation: float = 0.0
    objective: np.ndarray = None


def half_sq_cost(x, y):
    return 0.5 * sq_distances(x, y)


def epsilon_schedule(n, d, alpha_bar=3.0, scale=1.0):
    """Regularization ``scale * n ** (-1 / (d + alpha_bar + 1))``."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if not 1.0 <= alpha_bar <= 3.0:
        raise ValueError("alpha_bar must lie in [1, 3]")
    return float(scale) * float(n) ** (-1.0 / (d + alpha_bar + 1.0))


def _safe_log(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def _lse(M, axis):
    # in-place log-sum-exp along an axis (M is scratch)
    mx = M.max(axis=axis, keepdims=True)
    mx[~np.isfinite(mx)] = 0.0
    M -= mx
    np.exp(M, out=M)
    with np.errstate(divide="ignore"):
        return np.log(M.sum(axis=axis)) + np.squeeze(mx, axis=axis)


def _softmin_rows(g, C, logb, eps):
    # f_i = -eps log sum_j b_j exp((g_j - C_ij) / eps)
    M = g[None, :] - C
    M /= eps
    M += logb[None, :]
    return -eps * _lse(M, 1)


def _softmin_cols(f, C, loga, eps):
    M = f[:, None] - C
    M /= eps
    M += loga[:, None]
    return -eps * _lse(M, 0)


def _kernel(f, g, C, eps):
    K = f[:, None] + g[None, :]
    K -= C
    K /= eps
    np.exp(K, out=K)
    return K


def _sinkhorn(C, a, b, eps, f0, g0, tol, max_iter, record, strict):
    loga, logb = _safe_log(a), _safe_log(b)
    if g0 is None:
        # exact log-domain half step
        f = f0
        g = _softmin_cols(f, C, loga, eps)
    else:
        f, g = f0, g0
    K = _kernel(f, g, C, eps)
    u = np.ones(a.size)
    v = np.ones(b.size)
    # the dual equals <a,f> + <b,g> only once the target marginal is exact
    history = ([float(a @ f + b @ g)] if g0 is None else []) if record else None

    it = 0
    while True:
        w = K @ (b * v)
        if not np.all(np.isfinite(w)) or np.any(w[a > 0] <= 0):
            f = _softmin_rows(g + eps * np.log(v), C, logb, eps)
            g = _softmin_cols(f, C, loga, eps)
            K = _kernel(f, g, C, eps)
            u[:] = 1.0
            v[:] = 1.0
            w = K @ b
        viol = float(np.sum(a * np.abs(u * w - 1.0)))
        if viol <= tol:
            break
        if it >= max_iter:
            if not strict:
                break
            raise ConvergenceError(
                f"Sinkhorn did not converge in {max_iter} iterations "
                f"(marginal violation {viol:.3e})",
                violation=viol,
            )
        it += 1
        with np.errstate(divide="ignore"):
            u = 1.0 / w
            s = K.T @ (a * u)
            v_new = 1.0 / s
        if not (np.all(np.isfinite(v_new)) and np.all(np.isfinite(u))):
            # column breakdown: exact half steps from the last good state
            f = _softmin_rows(g + eps * np.log(v), C, logb, eps)
            g = _softmin_cols(f, C, loga, eps)
            K = _kernel(f, g, C, eps)
            u[:] = 1.0
            v[:] = 1.0
        else:
            v = v_new
            if (
                np.abs(np.log(u)).max() > _ABSORB_LOG
                or np.abs(np.log(v)).max() > _ABSORB_LOG
            ):
                f = f + eps * np.log(u)
                g = g + eps * np.log(v)
                K = _kernel(f, g, C, eps)
                u[:] = 1.0
                v[:] = 1.0
        if record:
            history.append(
                float(a @ (f + eps * np.log(u)) + b @ (g + eps * np.log(v)))
            )
    return f + eps * np.log(u), g + eps * np.log(v), it, viol, history


def solve_dual(source, target, cfg, record_objective=False):
    """Entropic dual potentials between two discrete measures.

    When ``epsilon`` is below 1/50 of the cost range, the solve is
    warm-started through a geometric sequence of larger regularizations
    (halving each stage); only the final stage is held to ``cfg.tol`` and
    counted against ``cfg.max_iter``.

    Parameters
    ----------
    source, target : DiscreteMeasure
    cfg : EotConfig
    record_objective : bool
        Store the dual objective after each final-stage iteration.

    Returns
    -------
    DualPotentials

    Raises
    ------
    ConvergenceError
        If the marginal violation is still above ``cfg.tol`` after
        ``cfg.max_iter`` iterations; carries the final violation.
    """
    if source.dim != target.dim:
        raise ValueError("measures live in different dimensions")
    eps = float(cfg.epsilon)
    a, b = source.weights, target.weights
    C = half_sq_cost(source.support, target.support)

    f = np.zeros(source.n)
    g = None
    stages = []
    e = float(C.max() - C.min())
    while e > _ANNEAL_START * eps or (stages and e > _ANNEAL_RATIO * eps):
        stages.append(e)
        e *= 0.5
    for e in stages:
        f, g, _, _, _ = _sinkhorn(C, a, b, e, f, g, _STAGE_TOL, _STAGE_ITERS, False, False)
    f, g, it, viol, history = _sinkhorn(
        C, a, b, eps, f, g, cfg.tol, cfg.max_iter, record_objective, True
    )

    shift = float(a @ f)
    f = f - shift
    g = g + shift
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NumericalError("non-finite dual potentials")
    obj = np.asarray(history) if record_objective else None
    return DualPotentials(f, g, eps, it, viol, obj)


def dual_objective(pot, source, target):
    """Entropic dual value ``<f,a> + <g,b> - eps <a b^T, exp(...)> + eps``."""
    P = entropic_plan(pot, source, target)
    return float(
        source.weights @ pot.f + target.weights @ pot.g - pot.epsilon * P.sum() + pot.epsilon
    )


def entropic_plan(pot, source, target):
    """Primal coupling ``a_i b_j exp((f_i + g_j - C_ij) / eps)``."""
    C = half_sq_cost(source.support, target.support)
    logp = (pot.f[:, None] + pot.g[None, :] - C) / pot.epsilon
    logp += _safe_log(source.weights)[:, None] + _safe_log(target.weights)[None, :]
    return np.exp(logp)


def entropic_map(pot, target, x):
    """Entropic (conditional-mean) map evaluated at arbitrary points.

    ``T(x) = sum_j p_j(x) y_j`` with ``p_j(x)`` proportional to
    ``b_j exp((g_j - 0.5 |x - y_j|^2) / eps)``; the source potential at
    ``x`` only normalizes and cancels.

    Parameters
    ----------
    pot : DualPotentials
        Solved against ``target``.
    target : DiscreteMeasure
    x : array_like, shape (d,) or (n, d)

    Returns
    -------
    ndarray
        Same leading shape as ``x``.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1 and target.dim > 1 or pts.ndim == 0
    pts = np.atleast_2d(pts)
    if target.dim == 1 and pts.shape[1] != 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[1] != target.dim:
        raise ValueError("evaluation points have the wrong dimension")
    Y = target.support
    bias = pot.g / pot.epsilon + _safe_log(target.weights)
    out = np.empty((pts.shape[0], target.dim))
    step = max(1, _CHUNK // max(1, target.n))
    for lo in range(0, pts.shape[0], step):
        xc = pts[lo : lo + step]
        logits = bias[None, :] - half_sq_cost(xc, Y) / pot.epsilon
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        if not np.all(np.isfinite(p)):
            raise NumericalError("numerically degenerate map")
        out[lo : lo + step] = p @ Y
    return out[0] if single else out


def fit_entropic_map(base_fit, target, eval_points, cfg, eval_weights=None):
    """Fit potentials from ``base_fit`` to ``target``; sample the map.

    Returns
    -------
    MapOnSample
        Entropic map values at ``eval_points``.
    """
    pot = solve_dual(base_fit, target, cfg)
    pts = np.asarray(eval_points, dtype=float)
    return MapOnSample(pts, entropic_map(pot, target, pts), eval_weights)
