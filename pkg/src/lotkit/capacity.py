"""Representational capacity constructions.

One dimension: every monotone map of [0, 1] is an average of threshold
maps ``x -> 1[x >= a]``, so pushforwards of the uniform measure through
such averages reach every measure on [0, 1].  Two dimensions: averages of
vertex maps on the triangle stay a fixed L^1 distance away from the
gradient of ``phi0(x, y) = x^2 / (4 (2 - y))``.
"""

from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import least_squares

from lotkit.exact_ot import wasserstein_1d
from lotkit.measures import CoefficientMeasure, DiscreteMeasure
from lotkit.sampling import make_rng, sample_uniform_triangle
from lotkit.simplex import project_convex_hull

GAP_BOUND = 1.0 / 192.0
VERTICES = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
DEFAULT_GRID = 10_000
_MONO_TOL = 1e-12


# ---------------------------------------------------------------------------
# one dimension


def extreme_map_1d(a, x):
    """Threshold map ``1[x >= a]`` on [0, 1] (vectorized in ``x``)."""
    if not 0.0 <= a <= 1.0:
        raise ValueError("a must lie in [0, 1]")
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0.0) | (xa > 1.0)):
        raise ValueError("x must lie in [0, 1]")
    out = (xa >= a).astype(float)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class MonotoneMap1D:
    """Nondecreasing map of [0, 1] into [0, 1] tabulated on a grid.

    Attributes
    ----------
    grid : ndarray
        Increasing points of [0, 1]; the default grid is ``k / N`` for
        ``k = 0..N``.
    values : ndarray
        Map values at the grid points.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if g.shape != v.shape or g.size == 0:
            raise ValueError("grid and values must be equal-length and non-empty")
        if np.any(np.diff(g) <= 0) or g[0] < 0 or g[-1] > 1:
            raise ValueError("grid must be increasing inside [0, 1]")
        if np.any(np.diff(v) < -_MONO_TOL):
            raise ValueError("map is not nondecreasing")
        if np.any(v < -_MONO_TOL) or np.any(v > 1 + _MONO_TOL):
            raise ValueError("map values must lie in [0, 1]")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", np.clip(np.maximum.accumulate(v), 0.0, 1.0))

    @staticmethod
    def default_grid(n=DEFAULT_GRID):
        return np.arange(n + 1) / n

    @classmethod
    def from_function(cls, fn, n=DEFAULT_GRID):
        g = cls.default_grid(n)
        return cls(g, np.asarray(fn(g), dtype=float))

    @classmethod
    def from_target(cls, target, n=DEFAULT_GRID):
        """Quantile map pushing U[0, 1] onto a measure supported in [0, 1]."""
        x, w = target.sorted_1d()
        F = np.cumsum(w)
        g = cls.default_grid(n)
        j = np.clip(np.searchsorted(F, g - 1e-12, side="left"), 0, x.size - 1)
        return cls(g, x[j])

    def __call__(self, x):
        """Right-continuous step interpolation ``T(max grid point <= x)``."""
        xa = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.grid, xa, side="right") - 1
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        return float(out) if out.ndim == 0 else out


def coeff_measure_from_map(T):
    """Coefficient measure with ``lambda([0, x]) = T(x)`` on the grid.

    Atoms sit at grid points with the jumps of ``T`` as masses, plus an atom
    at 1 carrying ``1 - T(last grid point)``.  Zero-mass atoms are dropped.
    """
    if not isinstance(T, MonotoneMap1D):
        raise TypeError("expected a MonotoneMap1D")
    jumps = np.diff(np.concatenate([[0.0], T.values]))
    if np.any(jumps < -_MONO_TOL):
        raise ValueError("map is not nondecreasing")
    jumps = np.maximum(jumps, 0.0)
    loc = T.grid
    top = 1.0 - T.values[-1]
    if T.grid[-1] == 1.0:
        jumps = jumps.copy()
        jumps[-1] += top
    else:
        loc = np.append(loc, 1.0)
        jumps = np.append(jumps, top)
    keep = jumps > 0
    if not np.any(keep):
        return CoefficientMeasure([1.0], [1.0])
    return CoefficientMeasure(loc[keep], jumps[keep])


def midpoint_grid(n):
    return (np.arange(n) + 0.5) / n


def lbcm_1d_synthesize(coeff, n_base):
    """Pushforward of the ``n_base`` midpoint grid through ``sum m_j 1[x >= a_j]``."""
    if n_base < 1:
        raise ValueError("n_base must be positive")
    x = midpoint_grid(n_base)
    order = np.argsort(coeff.locations, kind="stable")
    a = coeff.locations[order]
    csum = np.concatenate([[0.0], np.cumsum(coeff.masses[order])])
    vals = csum[np.searchsorted(a, x, side="right")]
    return DiscreteMeasure(np.clip(vals, 0.0, 1.0)[:, None])


def density_error(target, grid, map_grid=DEFAULT_GRID):
    """W2 between the target and its synthesis through threshold maps."""
    T = MonotoneMap1D.from_target(target, map_grid)
    synth = lbcm_1d_synthesize(coeff_measure_from_map(T), grid)
    return wasserstein_1d(synth, target)


# ---------------------------------------------------------------------------
# two dimensions


@dataclass(frozen=True)
class VertexMapParams:
    """Offsets ``b`` of the vertex map ``x -> argmax_i <v_i, x> + b_i``."""

    b: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in np.asarray(self.b, dtype=float).ravel())
        if len(b) != 3 or not all(np.isfinite(b)):
            raise ValueError("b must be three finite numbers")
        object.__setattr__(self, "b", b)


def _in_triangle(pts, tol=1e-12):
    return np.all(pts >= -tol, axis=-1) & (pts.sum(axis=-1) <= 1 + tol)


def _vertex_index(b, pts):
    scores = pts @ VERTICES.T + np.asarray(b)[None, :]
    return np.argmax(scores, axis=1)  # lowest index wins ties


def vertex_map_2d(params, x):
    """Vertex assigned to ``x`` (a point or an (n, 2) array) in the triangle."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 2:
        raise ValueError("points must be two dimensional")
    if not np.all(_in_triangle(pts)):
        raise ValueError("point outside the triangle")
    out = VERTICES[_vertex_index(params.b, pts)]
    return out[0] if single else out


def grad_phi0(x, y):
    """Gradient ``(x / (2 (2 - y)), x^2 / (4 (2 - y)^2))`` of ``phi0``."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if np.any(ya >= 2):
        raise ValueError("y must be below 2")
    s = 2.0 - ya
    out = np.stack([xa / (2.0 * s), xa * xa / (4.0 * s * s)], axis=-1)
    return out


@numba.njit(cache=True)
def _combo_eval(pts, w, B):
    # scores are (b0, y + b1, x + b2); ties go to the lowest index
    n = pts.shape[0]
    out = np.zeros((n, 2))
    for k in range(n):
        x = pts[k, 0]
        y = pts[k, 1]
        tx = 0.0
        ty = 0.0
        for i in range(w.size):
            s1 = B[i, 0]
            s2 = y + B[i, 1]
            s3 = x + B[i, 2]
            if s2 > s1 and s2 >= s3:
                ty += w[i]
            elif s3 > s1 and s3 > s2:
                tx += w[i]
        out[k, 0] = tx
        out[k, 1] = ty
    return out


def combo_map(combo, pts):
    """``sum_i w_i T_i(pts)`` for a list of ``(weight, VertexMapParams)``."""
    w = np.array([c[0] for c in combo], dtype=float)
    B = np.array([c[1].b for c in combo], dtype=float).reshape(-1, 3)
    return _combo_eval(np.ascontiguousarray(pts, dtype=float), w, B)


def counterexample_gap(combo, n_mc, seed):
    """Monte-Carlo ``E |sum w_i T_i(X) - grad phi0(X)|`` for X uniform on the triangle.

    Returns
    -------
    gap : float
    stderr : float
    """
    combo = list(combo)
    if not combo:
        raise ValueError("empty combination")
    w = np.array([c[0] for c in combo], dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError("weights must lie in the simplex")
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    pts = sample_uniform_triangle(int(n_mc), seed).support
    err = np.linalg.norm(combo_map(combo, pts) - grad_phi0(pts[:, 0], pts[:, 1]), axis=1)
    return float(err.mean()), float(err.std(ddof=1) / np.sqrt(err.size))


def random_combo(rng, max_atoms=50):
    """Dirichlet-uniform weights over standard normal offsets."""
    rng = make_rng(rng)
    k = int(rng.integers(1, max_atoms + 1))
    w = rng.exponential(size=k)
    w /= w.sum()
    return [(float(wi), VertexMapParams(rng.standard_normal(3))) for wi in w]


def _soft_residuals(theta, pts, target, k, temp):
    logits_w = theta[:k]
    b = theta[k:].reshape(k, 3)
    w = np.exp(logits_w - logits_w.max())
    w /= w.sum()
    s = (pts @ VERTICES.T)[None, :, :] + b[:, None, :]  # (k, n, 3)
    s = (s - s.max(axis=2, keepdims=True)) / temp
    p = np.exp(s)
    p /= p.sum(axis=2, keepdims=True)
    Tk = p @ VERTICES  # (k, n, 2)
    T = np.tensordot(w, Tk, axes=1)
    return T, Tk, p, w


def _fit_soft_combo(theta0, pts, target, k, temp, max_nfev):
    n = pts.shape[0]
    scale = 1.0 / np.sqrt(n)

    def fun(theta):
        T, *_ = _soft_residuals(theta, pts, target, k, temp)
        return ((T - target) * scale).ravel()

    def jac(theta):
        T, Tk, p, w = _soft_residuals(theta, pts, target, k, temp)
        J = np.empty((n, 2, theta.size))
        # weights through softmax: dT/dlogit_j = w_j (T_j - T)
        J[:, :, :k] = np.transpose(w[:, None, None] * (Tk - T[None]), (1, 2, 0))
        # offsets: dT_j/db_jc = p_jc (v_c - T_j) / temp
        for c in range(3):
            d = p[:, :, c : c + 1] * (VERTICES[c][None, None, :] - Tk) / temp  # (k, n, 2)
            J[:, :, k + c :: 3] = np.transpose(w[:, None, None] * d, (1, 2, 0))
        return J.reshape(2 * n, theta.size) * scale

    return least_squares(fun, theta0, jac=jac, method="trf", max_nfev=max_nfev).x


def search_counterexample(n_restarts=100, max_atoms=30, n_fit=1000, n_mc=200_000,
                          seed=0, temps=(0.05, 0.01), max_nfev=60):
    """Least-squares search for a vertex-map average close to ``grad phi0``.

    Each restart fits softened vertex maps (softmax with decreasing
    temperature) by nonlinear least squares on a fixed sample, hardens
    them to true vertex maps, re-fits the weights by a convex-hull
    projection, and scores the result with ``counterexample_gap``.

    Returns
    -------
    list of dict
        One entry per restart: ``atoms``, ``gap``, ``stderr``, ``combo``.
    """
    rng = make_rng(seed)
    pts = sample_uniform_triangle(n_fit, rng).support
    target = grad_phi0(pts[:, 0], pts[:, 1])
    out = []
    for r in range(n_restarts):
        k = int(rng.integers(1, max_atoms + 1))
        theta = np.concatenate([np.zeros(k), rng.standard_normal(3 * k) * 0.5])
        for temp in temps:
            theta = _fit_soft_combo(theta, pts, target, k, temp, max_nfev)
        b = theta[k:].reshape(k, 3)
        params = [VertexMapParams(bi) for bi in b]
        cols = np.stack([VERTICES[_vertex_index(p.b, pts)].ravel() for p in params], axis=1)
        lam = project_convex_hull(cols, target.ravel(), tol=1e-10).values
        combo = [(float(li), p) for li, p in zip(lam, params)]
        gap, se = counterexample_gap(combo, n_mc, rng.integers(2**63))
        out.append({"restart": r, "atoms": k, "gap": gap, "stderr": se, "combo": combo})
    return out
