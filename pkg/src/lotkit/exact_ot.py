"""Exact discrete optimal transport.

The general solver is a primal network simplex on the bipartite
transportation graph (block-search pivoting, strongly feasible spanning
trees rooted at an artificial node), compiled with numba.  One-dimensional
problems additionally get the closed-form monotone (quantile) coupling.
"""

from dataclasses import dataclass

import numba
import numpy as np

from lotkit.errors import BudgetError, NumericalError
from lotkit.measures import DiscreteMeasure, MapOnSample

DENSE_BUDGET = 4_000_000
_CDF_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling matrix between two discrete measures.

    Parameters
    ----------
    plan : ndarray, shape (n, k)
    cost : float
        Total squared-distance cost ``sum plan * |x - y|^2``.
    source, target : DiscreteMeasure, optional
        Marginals the plan was computed for.
    """

    plan: np.ndarray
    cost: float
    source: DiscreteMeasure = None
    target: DiscreteMeasure = None


def sq_distances(x, y):
    """Pairwise squared Euclidean distances, clipped at zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T
    np.maximum(d, 0.0, out=d)
    return d


# ---------------------------------------------------------------------------
# network simplex


@numba.njit(cache=True)
def _detach(u, parent, first_child, next_sib, prev_sib):
    p = parent[u]
    a = prev_sib[u]
    b = next_sib[u]
    if a >= 0:
        next_sib[a] = b
    else:
        first_child[p] = b
    if b >= 0:
        prev_sib[b] = a


@numba.njit(cache=True)
def _attach(u, p, parent, first_child, next_sib, prev_sib):
    parent[u] = p
    h = first_child[p]
    next_sib[u] = h
    prev_sib[u] = -1
    if h >= 0:
        prev_sib[h] = u
    first_child[p] = u


@numba.njit(cache=True)
def _network_simplex(a, b, C, max_iter):
    n, k = C.shape
    N = n + k
    root = N
    n_real = n * k
    n_arcs = n_real + N

    src = np.empty(n_arcs, np.int64)
    tgt = np.empty(n_arcs, np.int64)
    cost = np.empty(n_arcs)
    flow = np.zeros(n_arcs)
    for i in range(n):
        for j in range(k):
            e = i * k + j
            src[e] = i
            tgt[e] = n + j
            cost[e] = C[i, j]

    cmax = 0.0
    for e in range(n_real):
        if abs(cost[e]) > cmax:
            cmax = abs(cost[e])
    art = (cmax + 1.0) * (N + 1)
    tol = 1e-13 * art

    supply = np.empty(N)
    supply[:n] = a
    supply[n:] = -b

    parent = np.full(N + 1, -1, np.int64)
    pred = np.full(N + 1, -1, np.int64)
    fwd = np.zeros(N + 1, np.bool_)
    depth = np.zeros(N + 1, np.int64)
    pi = np.zeros(N + 1)
    first_child = np.full(N + 1, -1, np.int64)
    next_sib = np.full(N + 1, -1, np.int64)
    prev_sib = np.full(N + 1, -1, np.int64)
    in_tree = np.zeros(n_arcs, np.bool_)

    # initial tree: every node hangs off the root through an artificial arc
    for u in range(N):
        e = n_real + u
        in_tree[e] = True
        pred[u] = e
        depth[u] = 1
        _attach(u, root, parent, first_child, next_sib, prev_sib)
        if supply[u] >= 0:
            src[e] = u
            tgt[e] = root
            flow[e] = supply[u]
            cost[e] = 0.0
            fwd[u] = True
            pi[u] = 0.0
        else:
            src[e] = root
            tgt[e] = u
            flow[e] = -supply[u]
            cost[e] = art
            fwd[u] = False
            pi[u] = art

    block = max(int(np.sqrt(n_real)), 10)
    next_arc = 0
    stack = np.empty(N + 1, np.int64)
    it = 0
    while True:
        # block search for the entering arc
        best = 0.0
        in_arc = -1
        cnt = 0
        e = next_arc
        for _ in range(n_real):
            if not in_tree[e]:
                rc = cost[e] + pi[src[e]] - pi[tgt[e]]
                if rc < best:
                    best = rc
                    in_arc = e
            cnt += 1
            e += 1
            if e == n_real:
                e = 0
            if cnt == block:
                if best < -tol:
                    break
                cnt = 0
        if in_arc < 0 or best >= -tol:
            break
        next_arc = e
        it += 1
        if it > max_iter:
            return flow[:n_real], -1

        rc_in = best
        s = src[in_arc]
        t = tgt[in_arc]
        # join node
        u = s
        v = t
        while u != v:
            if depth[u] > depth[v]:
                u = parent[u]
            elif depth[v] > depth[u]:
                v = parent[v]
            else:
                u = parent[u]
                v = parent[v]
        join = u

        # leaving arc: last blocking arc in cycle orientation
        delta = np.inf
        u_out = -1
        side = 0
        u = s
        while u != join:
            if fwd[u]:
                d = flow[pred[u]]
                if d < delta:
                    delta = d
                    u_out = u
                    side = 1
            u = parent[u]
        u = t
        while u != join:
            if not fwd[u]:
                d = flow[pred[u]]
                if d <= delta:
                    delta = d
                    u_out = u
                    side = 2
            u = parent[u]
        if side == 0:
            return flow[:n_real], -2

        # augment
        if delta > 0:
            flow[in_arc] += delta
            u = s
            while u != join:
                if fwd[u]:
                    flow[pred[u]] -= delta
                else:
                    flow[pred[u]] += delta
                u = parent[u]
            u = t
            while u != join:
                if fwd[u]:
                    flow[pred[u]] += delta
                else:
                    flow[pred[u]] -= delta
                u = parent[u]
        flow[pred[u_out]] = 0.0

        if side == 1:
            u_in = s
            v_in = t
        else:
            u_in = t
            v_in = s
        in_tree[pred[u_out]] = False
        in_tree[in_arc] = True

        # re-hang the stem u_in -> ... -> u_out below v_in
        u = u_in
        new_parent = v_in
        new_pred = in_arc
        new_fwd = src[in_arc] == u_in
        while True:
            old_parent = parent[u]
            old_pred = pred[u]
            old_fwd = fwd[u]
            _detach(u, parent, first_child, next_sib, prev_sib)
            _attach(u, new_parent, parent, first_child, next_sib, prev_sib)
            pred[u] = new_pred
            fwd[u] = new_fwd
            if u == u_out:
                break
            new_parent = u
            new_pred = old_pred
            new_fwd = not old_fwd
            u = old_parent

        # shift potentials and depths over the moved subtree
        sigma = -rc_in if u_in == s else rc_in
        top = 0
        stack[0] = u_in
        while top >= 0:
            u = stack[top]
            top -= 1
            pi[u] += sigma
            depth[u] = depth[parent[u]] + 1
            c = first_child[u]
            while c >= 0:
                top += 1
                stack[top] = c
                c = next_sib[c]

    # leftover mass on artificial arcs signals an infeasible instance
    resid = 0.0
    for u in range(N):
        resid += flow[n_real + u]
    status = 0 if resid <= 1e-9 else -3
    return flow[:n_real], status


def network_simplex(a, b, C, max_iter=None):
    """Solve ``min <P, C>`` over couplings of ``a`` and ``b`` exactly.

    Parameters
    ----------
    a : ndarray, shape (n,)
    b : ndarray, shape (k,)
        Nonnegative masses with equal totals.
    C : ndarray, shape (n, k)
        Ground cost.
    max_iter : int, optional
        Pivot cap; defaults to ``100 * n * k + 10000``.

    Returns
    -------
    plan : ndarray, shape (n, k)
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    n, k = C.shape
    if a.shape != (n,) or b.shape != (k,):
        raise ValueError("marginal lengths do not match the cost matrix")
    # exact balance: put the rounding residue on the largest target atom
    b = b * (a.sum() / b.sum())
    b[np.argmax(b)] += a.sum() - b.sum()
    if max_iter is None:
        max_iter = 100 * n * k + 10_000
    flow, status = _network_simplex(a, b, C, int(max_iter))
    if status == -1:
        raise NumericalError("network simplex hit its pivot cap")
    if status == -2:
        raise NumericalError("network simplex found an unbounded cycle")
    if status == -3:
        raise NumericalError("network simplex left mass on artificial arcs")
    plan = flow.reshape(n, k).copy()
    np.maximum(plan, 0.0, out=plan)
    return plan


# ---------------------------------------------------------------------------
# one-dimensional closed forms


def _cdf_tables(measure):
    x, w = measure.sorted_1d()
    return x, np.cumsum(w)


def quantile_map_1d(source, target, x):
    """Monotone rearrangement ``F_target^{-1}(F_source(x))``.

    The source CDF is right-continuous and the target quantile function is
    the left-continuous generalized inverse.  CDF comparisons allow a
    ``1e-12`` slack so that cumulative-sum rounding does not shift ties.

    Parameters
    ----------
    source, target : DiscreteMeasure
        Measures on R^1.
    x : float or array_like
        Evaluation points.
    """
    if source.dim != 1 or target.dim != 1:
        raise ValueError("quantile_map_1d needs measures on R^1")
    xs, Fs = _cdf_tables(source)
    ys, Ft = _cdf_tables(target)
    xq = np.asarray(x, dtype=float)
    idx = np.searchsorted(xs, xq, side="right")
    q = np.where(idx > 0, Fs[np.maximum(idx - 1, 0)], 0.0)
    j = np.searchsorted(Ft, q - _CDF_TOL, side="left")
    j = np.clip(j, 0, ys.size - 1)
    out = ys[j]
    return float(out) if np.ndim(out) == 0 else out


def monotone_plan_1d(source, target):
    """North-west-corner coupling of the sorted supports (optimal in 1-D).

    Returns
    -------
    TransportPlan
        Plan indexed in the original atom order of each measure.
    """
    if source.dim != 1 or target.dim != 1:
        raise ValueError("monotone_plan_1d needs measures on R^1")
    xo = np.argsort(source.support[:, 0], kind="stable")
    yo = np.argsort(target.support[:, 0], kind="stable")
    a = source.weights[xo].copy()
    b = target.weights[yo].copy()
    b *= a.sum() / b.sum()
    plan = np.zeros((a.size, b.size))
    i = j = 0
    while i < a.size and j < b.size:
        m = min(a[i], b[j])
        plan[xo[i], yo[j]] += m
        a[i] -= m
        b[j] -= m
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    C = sq_distances(source.support, target.support)
    return TransportPlan(plan, float((plan * C).sum()), source, target)


# ---------------------------------------------------------------------------
# public solvers


def exact_plan(source, target, budget=DENSE_BUDGET):
    """Exact optimal plan for the squared Euclidean cost.

    Raises
    ------
    BudgetError
        If ``n * k`` exceeds ``budget``.
    """
    n, k = source.n, target.n
    if n * k > budget:
        raise BudgetError(
            f"support product {n * k} exceeds the exact budget {budget}; "
            "use an entropic plan instead"
        )
    if source.dim != target.dim:
        raise ValueError("measures live in different dimensions")
    C = sq_distances(source.support, target.support)
    plan = network_simplex(source.weights, target.weights, C)
    return TransportPlan(plan, float(max((plan * C).sum(), 0.0)), source, target)


def discrete_w2(source, target, budget=DENSE_BUDGET):
    """Exact 2-Wasserstein distance between discrete measures.

    Returns
    -------
    plan : TransportPlan
    w2 : float
        Square root of the optimal squared-distance cost.
    """
    tp = exact_plan(source, target, budget)
    return tp, float(np.sqrt(tp.cost))


def barycentric_projection(plan, target=None):
    """Conditional mean of the target given each source atom.

    Parameters
    ----------
    plan : TransportPlan
        Must carry its ``source`` measure (the base of the returned map).
    target : DiscreteMeasure, optional
        Defaults to ``plan.target``.

    Returns
    -------
    MapOnSample
        Based at the source atoms, weighted by the plan's row sums.
    """
    target = plan.target if target is None else target
    if plan.source is None or target is None:
        raise ValueError("plan must carry its source and target measures")
    P = np.asarray(plan.plan, dtype=float)
    rows = P.sum(axis=1)
    if np.any(rows <= 0):
        raise NumericalError("unmatched source atom")
    images = (P @ target.support) / rows[:, None]
    return MapOnSample(plan.source.support, images, plan.source.weights)


def wasserstein_1d(source, target):
    """Exact W2 on R^1 by integrating the squared quantile difference.

    Both quantile functions are step functions; merging their breakpoints
    in ``[0, 1]`` gives the cost as a finite sum.
    """
    if source.dim != 1 or target.dim != 1:
        raise ValueError("wasserstein_1d needs measures on R^1")
    xs, Fs = _cdf_tables(source)
    ys, Ft = _cdf_tables(target)
    Fs = Fs / Fs[-1]
    Ft = Ft / Ft[-1]
    t = np.unique(np.concatenate([[0.0], Fs, Ft]))
    t = t[t <= 1.0]
    mid = 0.5 * (t[:-1] + t[1:])
    qi = np.clip(np.searchsorted(Fs, mid, side="left"), 0, xs.size - 1)
    qj = np.clip(np.searchsorted(Ft, mid, side="left"), 0, ys.size - 1)
    cost = float(np.sum(np.diff(t) * (xs[qi] - ys[qj]) ** 2))
    return float(np.sqrt(max(cost, 0.0)))
