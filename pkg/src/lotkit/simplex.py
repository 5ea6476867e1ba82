"""Simplex-constrained quadratic optimization.

``min_quadratic_simplex`` minimizes ``lam^T A lam + 2 q^T lam`` over the
probability simplex by projected gradient descent with step ``1/L`` from the
barycenter.  Every 50 iterations it evaluates the Frank-Wolfe duality gap,
which upper-bounds the suboptimality, and tries an active-set polish: the
equality-constrained KKT system on the current support is solved directly
and accepted when it is feasible and certifies a smaller gap.  The polish
turns the linear convergence tail of projected gradient into an exact
finish on the small problems that occur in practice.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from lotkit.errors import NotPSDError
from lotkit.measures import SimplexWeights

PSD_REL_TOL = 1e-8
DEGENERATE_EIG = 1e-10
CHECK_EVERY = 50
POLISH_THRESHOLDS = (1e-12, 1e-9, 1e-6)


@dataclass(frozen=True, eq=False)
class QpResult:
    """Outcome of a simplex QP.

    Attributes
    ----------
    lam : SimplexWeights
    objective : float
    certificate_gap : float
        Frank-Wolfe gap at the returned point (an upper bound on the
        distance to the optimal objective).
    converged : bool
        ``certificate_gap <= tol``.
    degenerate : bool
        The two smallest eigenvalues of the quadratic form are both below
        ``1e-10`` (relative), so the minimizer may not be unique.
    n_iter : int
    """

    lam: SimplexWeights
    objective: float
    certificate_gap: float
    converged: bool = True
    degenerate: bool = False
    n_iter: int = 0

    @property
    def values(self):
        return self.lam.values


def project_simplex(x):
    """Euclidean projection onto the probability simplex.

    Sort-and-threshold algorithm: with ``u`` sorted decreasingly, the
    threshold is ``theta = (sum_{i<=rho} u_i - 1) / rho`` for the largest
    feasible ``rho``; the projection is ``max(x - theta, 0)``.

    Parameters
    ----------
    x : array_like, shape (m,)

    Returns
    -------
    SimplexWeights
    """
    return SimplexWeights(_project(np.asarray(x, dtype=float)))


def _project(x):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError("projection needs a finite non-empty vector")
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, x.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    y = np.maximum(x - theta, 0.0)
    return y / y.sum()


def _objective(A, q, lam):
    return float(lam @ A @ lam + 2.0 * q @ lam)


def _fw_gap(grad, lam):
    return max(float(grad @ lam - grad.min()), 0.0)


def _polish(A, q, lam, thresh):
    """Solve the KKT system on the support of ``lam``; None if infeasible."""
    S = np.flatnonzero(lam > thresh)
    if S.size == 0:
        return None
    s = S.size
    K = np.zeros((s + 1, s + 1))
    K[:s, :s] = A[np.ix_(S, S)]
    K[:s, s] = 1.0
    K[s, :s] = 1.0
    rhs = np.concatenate([-q[S], [1.0]])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    lamS = sol[:s]
    if not np.all(np.isfinite(lamS)) or np.any(lamS < -1e-14):
        return None
    out = np.zeros_like(lam)
    out[S] = np.maximum(lamS, 0.0)
    tot = out.sum()
    if not tot > 0:
        return None
    return out / tot


def _try_polish(A, q, lam, grad, gap, tol):
    # coarser support thresholds drop projected-gradient residue
    obj = _objective(A, q, lam)
    for thresh in POLISH_THRESHOLDS:
        cand = _polish(A, q, lam, thresh)
        if cand is None:
            continue
        cgrad = 2.0 * (A @ cand + q)
        cgap = _fw_gap(cgrad, cand)
        if cgap <= gap and _objective(A, q, cand) <= obj + tol:
            lam, grad, gap = cand, cgrad, cgap
    return lam, grad, gap


def _check_psd(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError("A must be a non-empty square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("A must be finite")
    A = 0.5 * (A + A.T)
    ev = np.linalg.eigvalsh(A)
    scale = max(float(np.abs(ev).max()), 0.0)
    if ev[0] < -PSD_REL_TOL * scale:
        raise NotPSDError("matrix not PSD within tolerance")
    return A, ev, scale


def min_quadratic_simplex(A, tol=1e-9, q=None, max_iter=200_000):
    """Minimize ``lam^T A lam + 2 q^T lam`` over the probability simplex.

    Parameters
    ----------
    A : array_like, shape (m, m)
        Symmetric PSD matrix; small asymmetries are symmetrized.
    tol : float
        Target Frank-Wolfe gap.
    q : array_like, shape (m,), optional
        Linear term (zero by default).
    max_iter : int
        Projected-gradient iteration cap. Reaching it without meeting
        ``tol`` emits a ``RuntimeWarning`` and returns the last iterate
        with ``converged=False``.

    Returns
    -------
    QpResult

    Raises
    ------
    NotPSDError
        If an eigenvalue of ``A`` is below ``-1e-8 * |A|``.
    """
    A, ev, scale = _check_psd(A)
    m = A.shape[0]
    q = np.zeros(m) if q is None else np.asarray(q, dtype=float).ravel()
    if q.shape != (m,):
        raise ValueError("linear term has the wrong length")
    degenerate = m >= 2 and ev[1] < DEGENERATE_EIG * max(scale, 1.0)
    if m == 1:
        lam = np.ones(1)
        return QpResult(SimplexWeights(lam), _objective(A, q, lam), 0.0, True, False, 0)

    L = 2.0 * float(ev[-1])
    lam = np.full(m, 1.0 / m)
    grad = 2.0 * (A @ lam + q)
    gap = _fw_gap(grad, lam)
    it = 0
    if L > 0:
        step = 1.0 / L
        while gap > tol and it < max_iter:
            for _ in range(CHECK_EVERY):
                lam = _project(lam - step * grad)
                grad = 2.0 * (A @ lam + q)
            it += CHECK_EVERY
            gap = _fw_gap(grad, lam)
            lam, grad, gap = _try_polish(A, q, lam, grad, gap, tol)
    else:
        # A == 0: linear objective, minimized at the best vertex
        if np.any(q != 0):
            lam = np.zeros(m)
            lam[int(np.argmin(q))] = 1.0
            grad = 2.0 * q
            gap = _fw_gap(grad, lam)
    converged = gap <= tol
    if not converged:
        warnings.warn(
            f"simplex QP stopped with Frank-Wolfe gap {gap:.3e} > tol {tol:.1e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return QpResult(
        SimplexWeights(lam), _objective(A, q, lam), gap, converged, bool(degenerate), it
    )


def project_convex_hull(B, c, tol=1e-9, max_iter=200_000):
    """Least-squares projection of ``c`` onto the convex hull of B's columns.

    Minimizes ``|B lam - c|^2`` over the simplex by expanding it to
    ``lam^T (B^T B) lam - 2 (B^T c)^T lam + |c|^2``.

    Parameters
    ----------
    B : array_like, shape (d, m)
    c : array_like, shape (d,)

    Returns
    -------
    QpResult
        ``objective`` is the squared residual ``|B lam - c|^2``.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[None, :]
    c = np.asarray(c, dtype=float).ravel()
    if B.shape[0] != c.shape[0]:
        raise ValueError("B rows and c length disagree")
    res = min_quadratic_simplex(B.T @ B, tol=tol, q=-(B.T @ c), max_iter=max_iter)
    lam = res.lam.values
    resid = float(np.sum((B @ lam - c) ** 2))
    return QpResult(
        res.lam, resid, res.certificate_gap, res.converged, res.degenerate, res.n_iter
    )
