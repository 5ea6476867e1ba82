"""Closed-form transport between centered Gaussians.

Matrix square roots, Gaussian optimal transport maps, the Bures-Wasserstein
barycenter fixed point, LBCM covariance synthesis and a finite-difference
maximum-likelihood estimator of barycentric coordinates.
"""

from dataclasses import dataclass

import numpy as np

from lotkit.errors import NotPSDError, NumericalError
from lotkit.measures import SimplexWeights, as_lambda
from lotkit.simplex import _project

SYM_TOL = 1e-10


def _check_spd(S, name="matrix"):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.all(np.isfinite(S)):
        raise ValueError(f"{name} must be finite")
    nrm = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > SYM_TOL * max(nrm, 1e-300):
        raise NotPSDError(f"{name} is not symmetric")
    return 0.5 * (S + S.T)


def _eigh_spd(S, name="matrix"):
    S = _check_spd(S, name)
    w, V = np.linalg.eigh(S)
    if w[0] <= 0:
        raise NotPSDError(f"{name} is not positive definite")
    return w, V


def sqrtm(S, method="eig", iters=10):
    """Principal square root of an SPD matrix.

    Parameters
    ----------
    S : array_like, shape (d, d)
    method : {"eig", "newton_schulz"}
        ``eig`` uses a symmetric eigendecomposition.  ``newton_schulz``
        runs the coupled iteration ``Y <- Y T / 2``, ``Z <- T Z / 2`` with
        ``T = 3I - Z Y`` on ``S / |S|_F`` and rescales by ``sqrt(|S|_F)``.
    iters : int
        Newton-Schulz iteration count.

    Returns
    -------
    ndarray, shape (d, d)
    """
    if method == "eig":
        w, V = _eigh_spd(S)
        X = (V * np.sqrt(w)) @ V.T
        return 0.5 * (X + X.T)
    if method == "newton_schulz":
        S = _check_spd(S)
        return _newton_schulz(S, iters)[0]
    raise ValueError(f"unknown square-root method {method!r}")


def _newton_schulz(S, iters):
    """Coupled Newton-Schulz iteration; returns (sqrt, inverse sqrt)."""
    d = S.shape[0]
    norm = np.linalg.norm(S)
    if not norm > 0:
        raise NotPSDError("matrix is not positive definite")
    I3 = 3.0 * np.eye(d)
    Y = S / norm
    Z = np.eye(d)
    for _ in range(iters):
        T = 0.5 * (I3 - Z @ Y)
        Y = Y @ T
        Z = T @ Z
    r = np.sqrt(norm)
    return Y * r, Z / r


def inv_sqrtm(S):
    w, V = _eigh_spd(S)
    X = (V / np.sqrt(w)) @ V.T
    return 0.5 * (X + X.T)


def gaussian_ot_map(sigma0, sigma1):
    """Linear OT map between N(0, sigma0) and N(0, sigma1).

    ``C = S^{-1/2} (S^{1/2} sigma1 S^{1/2})^{1/2} S^{-1/2}`` with
    ``S = sigma0``; symmetric PSD with ``C sigma0 C = sigma1``.
    """
    w, V = _eigh_spd(sigma0, "sigma0")
    _eigh_spd(sigma1, "sigma1")
    s1 = 0.5 * (np.asarray(sigma1, float) + np.asarray(sigma1, float).T)
    r = (V * np.sqrt(w)) @ V.T
    ri = (V / np.sqrt(w)) @ V.T
    M = r @ s1 @ r
    wm, Vm = np.linalg.eigh(0.5 * (M + M.T))
    mid = (Vm * np.sqrt(np.maximum(wm, 0.0))) @ Vm.T
    C = ri @ mid @ ri
    return 0.5 * (C + C.T)


def _bures_step(Sigma, lam, sigmas):
    # Sigma^{-1/2} (sum_i lam_i (Sigma^{1/2} S_i Sigma^{1/2})^{1/2})^2 Sigma^{-1/2}
    w, V = _eigh_spd(Sigma, "barycenter iterate")
    r = (V * np.sqrt(w)) @ V.T
    ri = (V / np.sqrt(w)) @ V.T
    M = np.zeros_like(Sigma)
    for li, S in zip(lam, sigmas):
        if li == 0:
            continue
        P = r @ S @ r
        wp, Vp = np.linalg.eigh(0.5 * (P + P.T))
        M += li * ((Vp * np.sqrt(np.maximum(wp, 0.0))) @ Vp.T)
    T = ri @ M @ ri
    T = 0.5 * (T + T.T)
    new = T @ Sigma @ T
    return 0.5 * (new + new.T), T


def bures_barycenter(lam, sigmas, fp_iters=200, tol=1e-10, init=None, return_info=False):
    """Bures-Wasserstein barycenter by the map-averaging fixed point.

    Iterates ``Sigma <- T Sigma T`` with ``T = sum_i lam_i T_i`` and
    ``T_i`` the Gaussian OT map from ``Sigma`` to ``sigmas[i]``.

    Parameters
    ----------
    lam : SimplexWeights or array_like
    sigmas : list of ndarray
    fp_iters : int
        Maximum number of fixed-point rounds.
    tol : float
        Stop once ``|Sigma_new - Sigma|_F <= tol``.
    init : ndarray, optional
        Starting point; defaults to the Euclidean mean ``sum lam_i sigmas[i]``.
    return_info : bool
        Also return ``(n_rounds, |T - I|_F)``.
    """
    lam = as_lambda(lam)
    sigmas = [_check_spd(S, "sigma") for S in sigmas]
    if len(sigmas) != lam.size:
        raise ValueError("lambda and sigmas lengths differ")
    if fp_iters < 1:
        raise ValueError("fp_iters must be at least 1")
    Sigma = sum(li * S for li, S in zip(lam, sigmas)) if init is None else _check_spd(init)
    resid = np.inf
    k = 0
    for k in range(1, fp_iters + 1):
        new, T = _bures_step(Sigma, lam, sigmas)
        resid = float(np.linalg.norm(T - np.eye(T.shape[0])))
        change = float(np.linalg.norm(new - Sigma))
        Sigma = new
        if change <= tol:
            break
    if return_info:
        return Sigma, (k, resid)
    return Sigma


def lbcm_covariance(lam, sigma0, sigmas):
    """Covariance of ``(sum lam_i C_i) # N(0, sigma0)``.

    Returns ``B^T sigma0 B`` with ``B = sum_i lam_i C_i`` and ``C_i`` the
    Gaussian OT map from ``sigma0`` to ``sigmas[i]``.
    """
    lam = as_lambda(lam)
    if len(sigmas) != lam.size:
        raise ValueError("lambda and sigmas lengths differ")
    maps = [gaussian_ot_map(sigma0, S) for S in sigmas]
    return lbcm_covariance_from_maps(lam, sigma0, maps)


def lbcm_covariance_from_maps(lam, sigma0, maps):
    B = sum(li * C for li, C in zip(as_lambda(lam), maps))
    S = B.T @ np.asarray(sigma0, float) @ B
    return 0.5 * (S + S.T)


# ---------------------------------------------------------------------------
# maximum likelihood through a truncated barycenter


@dataclass(frozen=True)
class MleConfig:
    """Projected-gradient MLE settings.

    Parameters
    ----------
    eta : float
        Gradient step size.
    max_iters : int
    fp_iters : int
        Fixed-point rounds of the truncated barycenter.
    sq_iters : int
        Newton-Schulz iterations per square root.
    fd_step : float
        Central finite-difference step.
    """

    eta: float = 3e-4
    max_iters: int = 500
    fp_iters: int = 10
    sq_iters: int = 10
    fd_step: float = 1e-5

    def __post_init__(self):
        for name in ("eta", "max_iters", "fp_iters", "sq_iters", "fd_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _ns_batch(S, iters):
    """Batched Newton-Schulz square root and inverse root of SPD stacks."""
    d = S.shape[-1]
    norm = np.sqrt(np.einsum("...ij,...ij->...", S, S))[..., None, None]
    I3 = 3.0 * np.eye(d)
    Y = S / norm
    Z = np.broadcast_to(np.eye(d), S.shape).copy()
    for _ in range(iters):
        T = 0.5 * (I3 - Z @ Y)
        Y = Y @ T
        Z = T @ Z
    r = np.sqrt(norm)
    return Y * r, Z / r


def truncated_barycenter(lams, sigmas, init, fp_iters, sq_iters):
    """Fixed number of barycenter rounds with Newton-Schulz roots.

    Vectorized over a batch of weight vectors ``lams`` of shape (B, m).
    Each round applies ``BC <- R^{-1} (sum_i lam_i (R S_i R)^{1/2})^2 R^{-1}``
    with ``R = BC^{1/2}``, starting from ``init``.

    Returns
    -------
    ndarray, shape (B, d, d)
    """
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    S = np.stack([np.asarray(s, float) for s in sigmas])  # (m, d, d)
    Bn = lams.shape[0]
    BC = np.broadcast_to(np.asarray(init, float), (Bn,) + S.shape[1:]).copy()
    for _ in range(fp_iters):
        R, Ri = _ns_batch(BC, sq_iters)
        P = R[:, None] @ S[None] @ R[:, None]  # (B, m, d, d)
        P = 0.5 * (P + np.swapaxes(P, -1, -2))
        roots, _ = _ns_batch(P, sq_iters)
        M = np.einsum("bm,bmij->bij", lams, roots)
        BC = Ri @ M @ M @ Ri
        BC = 0.5 * (BC + np.swapaxes(BC, -1, -2))
    return BC


def mle_loss_batch(lams, sigma_emp, sigmas, cfg):
    """Gaussian negative log-likelihood ``tr(BC^{-1} S) + logdet BC`` per row."""
    BC = truncated_barycenter(lams, sigmas, sigma_emp, cfg.fp_iters, cfg.sq_iters)
    sign, logdet = np.linalg.slogdet(BC)
    tr = np.trace(np.linalg.solve(BC, np.broadcast_to(sigma_emp, BC.shape)), axis1=-2, axis2=-1)
    out = tr + logdet
    out[sign <= 0] = np.nan
    return out


def mle_loss(lam, sigma_emp, sigmas, cfg=MleConfig()):
    return float(mle_loss_batch(as_lambda(lam)[None, :], sigma_emp, sigmas, cfg)[0])


def mle_lambda(sigma_emp, sigmas, cfg=MleConfig(), return_trace=False):
    """Projected-gradient maximum-likelihood barycentric coordinates.

    The loss is evaluated through ``cfg.fp_iters`` truncated barycenter
    rounds (Newton-Schulz roots, started at ``sigma_emp``) and
    differentiated by central finite differences.  A step whose loss does
    not decrease is rejected and the step size halved, so the loss is
    non-increasing over accepted steps.  Iteration stops at
    ``cfg.max_iters`` or when the accepted step norm drops to ``1e-8``.

    Parameters
    ----------
    sigma_emp : ndarray, shape (d, d)
    sigmas : list of ndarray
    cfg : MleConfig
    return_trace : bool
        Also return the list of losses at accepted iterates.

    Raises
    ------
    NumericalError
        If the loss becomes non-finite.
    """
    sigma_emp = _check_spd(sigma_emp, "sigma_emp")
    sigmas = [_check_spd(s, "sigma") for s in sigmas]
    m = len(sigmas)
    if m == 0:
        raise ValueError("need at least one reference")
    lam = np.full(m, 1.0 / m)
    if m == 1:
        return (SimplexWeights(lam), []) if return_trace else SimplexWeights(lam)
    h = cfg.fd_step
    eye = np.eye(m)
    loss = mle_loss_batch(lam[None], sigma_emp, sigmas, cfg)[0]
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss at lambda={lam.tolist()}")
    trace = [float(loss)]
    eta = cfg.eta
    for _ in range(cfg.max_iters):
        pts = np.concatenate([lam + h * eye, lam - h * eye])
        vals = mle_loss_batch(pts, sigma_emp, sigmas, cfg)
        if not np.all(np.isfinite(vals)):
            raise NumericalError(f"non-finite loss near lambda={lam.tolist()}")
        grad = (vals[:m] - vals[m:]) / (2.0 * h)
        accepted = False
        while eta > 1e-12 * cfg.eta:
            cand = _project(lam - eta * grad)
            step = float(np.linalg.norm(cand - lam))
            if step <= 1e-8:
                break
            new_loss = mle_loss_batch(cand[None], sigma_emp, sigmas, cfg)[0]
            if not np.isfinite(new_loss):
                raise NumericalError(f"non-finite loss at lambda={cand.tolist()}")
            if new_loss <= loss:
                lam, loss, accepted = cand, new_loss, True
                trace.append(float(loss))
                break
            eta *= 0.5
        if not accepted:
            break
    out = SimplexWeights(lam)
    return (out, trace) if return_trace else out


# ---------------------------------------------------------------------------
# covariance estimation experiment

COV_METHODS = ("bcm", "lbcm", "mle", "empirical")
COV_COLUMNS = ("method", "trial", "n", "cov_error_fro", "lambda_error_l2", "wall_time_ms")


def bcm_gram(sigma_emp, sigmas):
    """Gram matrix of displacement fields ``T_i - I`` under N(0, sigma_emp).

    ``A_ij = tr((T_i - I) sigma_emp (T_j - I))`` with ``T_i`` the OT map
    from ``sigma_emp`` to ``sigmas[i]``.
    """
    d = sigma_emp.shape[0]
    D = [gaussian_ot_map(sigma_emp, S) - np.eye(d) for S in sigmas]
    m = len(D)
    A = np.empty((m, m))
    for i in range(m):
        Di = D[i] @ sigma_emp
        for j in range(i, m):
            A[i, j] = A[j, i] = np.trace(Di @ D[j])
    return A


def lbcm_gram(sigma_emp, sigmas, sigma0=None):
    """LOT Gram matrix for Gaussians based at N(0, sigma0).

    ``A_ij = tr((C_i - C_eta) sigma0 (C_j - C_eta))`` with ``C`` the OT
    maps from ``sigma0`` to each reference and to ``sigma_emp``.
    """
    d = sigma_emp.shape[0]
    sigma0 = np.eye(d) if sigma0 is None else sigma0
    Ce = gaussian_ot_map(sigma0, sigma_emp)
    D = [gaussian_ot_map(sigma0, S) - Ce for S in sigmas]
    m = len(D)
    A = np.empty((m, m))
    for i in range(m):
        Di = D[i].T @ sigma0
        for j in range(i, m):
            A[i, j] = A[j, i] = np.trace(Di @ D[j])
    return A


def _clip_gram(A):
    from lotkit.lbcm import clip_gram

    return clip_gram(A)


def estimate_covariance(method, sigma_emp, sigmas, mle_cfg=None, fp_iters=200):
    """Coordinate and covariance estimate for one method.

    Parameters
    ----------
    method : {"bcm", "lbcm", "mle", "empirical"}
    sigma_emp : ndarray
    sigmas : list of ndarray

    Returns
    -------
    lam : ndarray or None
        ``None`` for the empirical baseline.
    cov : ndarray
    """
    from lotkit.simplex import min_quadratic_simplex

    d = sigma_emp.shape[0]
    if method == "empirical":
        return None, sigma_emp
    if method == "bcm":
        lam = min_quadratic_simplex(_clip_gram(bcm_gram(sigma_emp, sigmas))).values
        return lam, bures_barycenter(lam, sigmas, fp_iters=fp_iters)
    if method == "lbcm":
        lam = min_quadratic_simplex(_clip_gram(lbcm_gram(sigma_emp, sigmas))).values
        return lam, lbcm_covariance(lam, np.eye(d), sigmas)
    if method == "mle":
        lam = mle_lambda(sigma_emp, sigmas, mle_cfg or MleConfig()).values
        return lam, bures_barycenter(lam, sigmas, fp_iters=fp_iters)
    raise ValueError(f"unknown method {method!r}")


def run_covariance_experiment(
    m, d, n_grid, trials, seed, methods=COV_METHODS, mle_cfg=None, timing=False
):
    """Covariance estimation with simultaneously diagonalizable references.

    For every trial (seeded ``seed + trial``) draws the reference family,
    a uniform coordinate and the ground-truth Bures barycenter, then for
    each sample size draws ``n`` Gaussian samples and evaluates every
    method on the uncentered second-moment matrix.

    Parameters
    ----------
    m, d : int
    n_grid : sequence of int
    trials : int
    seed : int
    methods : sequence of str
    mle_cfg : MleConfig, optional
    timing : bool
        Fill ``wall_time_ms``; off by default so output is reproducible.

    Returns
    -------
    list of dict
        One row per (trial, n, method) with keys ``COV_COLUMNS``.
        ``lambda_error_l2`` is ``None`` for the empirical baseline.
    """
    import time

    from lotkit.sampling import make_rng, random_covariances, sample_simplex_uniform

    if m < 1 or d < 1 or trials < 1:
        raise ValueError("m, d and trials must be positive")
    for meth in methods:
        if meth not in COV_METHODS:
            raise ValueError(f"unknown method {meth!r}")
    rows = []
    for t in range(trials):
        rng = make_rng(int(seed) + t)
        sigmas = random_covariances(m, d, rng)
        lam_true = sample_simplex_uniform(m, rng).values
        truth = bures_barycenter(lam_true, sigmas, fp_iters=1000, tol=1e-13)
        L = np.linalg.cholesky(truth)
        for n in n_grid:
            X = rng.standard_normal((int(n), d)) @ L.T
            s_emp = X.T @ X / int(n)
            s_emp = 0.5 * (s_emp + s_emp.T)
            for meth in methods:
                t0 = time.perf_counter()
                lam, cov = estimate_covariance(meth, s_emp, sigmas, mle_cfg)
                ms = (time.perf_counter() - t0) * 1e3
                rows.append(
                    {
                        "method": meth,
                        "trial": t,
                        "n": int(n),
                        "cov_error_fro": float(np.linalg.norm(cov - truth)),
                        "lambda_error_l2": None
                        if lam is None
                        else float(np.linalg.norm(lam - lam_true)),
                        "wall_time_ms": ms if timing else None,
                    }
                )
    return rows
