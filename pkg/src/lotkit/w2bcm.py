"""Wasserstein barycentric coding: analysis QP and iterative synthesis.

Analysis fits maps from the target to each reference and minimizes the
quadratic form of the displacement Gram matrix over the simplex.
Synthesis runs damped fixed-point updates that move every atom of the
current iterate toward the weighted average of its barycentric
projections onto the references.
"""

from dataclasses import dataclass

import numpy as np

from lotkit.eot import EotConfig, entropic_plan, epsilon_schedule, fit_entropic_map, solve_dual
from lotkit.errors import NumericalError
from lotkit.exact_ot import (
    DENSE_BUDGET,
    TransportPlan,
    barycentric_projection,
    exact_plan,
    monotone_plan_1d,
    sq_distances,
)
from lotkit.lbcm import gram_from_displacements
from lotkit.measures import DiscreteMeasure, as_lambda, check_common_base
from lotkit.simplex import min_quadratic_simplex


@dataclass(frozen=True)
class BarycenterConfig:
    """Iterative barycenter settings.

    Parameters
    ----------
    alpha : float
        Damping in (0, 1].
    k : int
        Number of rounds.
    plan_backend : {"auto", "exact", "entropic"}
        ``auto`` uses exact plans while ``n * k`` stays within the dense
        budget and entropic plans otherwise.
    epsilon : float, optional
        Entropic regularization; defaults to ``1e-3`` times the squared
        diameter of the combined supports.
    """

    alpha: float = 0.05
    k: int = 200
    plan_backend: str = "auto"
    epsilon: float = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.plan_backend not in ("auto", "exact", "entropic"):
            raise ValueError(f"unknown plan backend {self.plan_backend!r}")


def build_gram_bcm(target_sample, ref_maps_from_target):
    """``A_ij = sum_k w_k <T_i(x_k) - x_k, T_j(x_k) - x_k>`` over target atoms."""
    maps = list(ref_maps_from_target)
    first = check_common_base(maps)
    if not np.array_equal(first.base_points, target_sample.support):
        from lotkit.errors import IncompatibleBaseError

        raise IncompatibleBaseError("incompatible base sample")
    D = np.stack([mp.images - mp.base_points for mp in maps])
    return gram_from_displacements(D, first.base_weights)


def fit_maps_from_target(target, refs, eps=None, alpha_bar=3.0, eps_scale=1.0,
                         eot_tol=1e-6, max_iter=10_000):
    """Entropic maps from the target sample to each reference, on its atoms."""
    if eps is None:
        eps = epsilon_schedule(target.n, target.dim, alpha_bar, eps_scale)
    cfg = EotConfig(epsilon=eps, max_iter=max_iter, tol=eot_tol)
    return [
        fit_entropic_map(target, r, target.support, cfg, target.weights) for r in refs
    ]


def estimate_lambda_bcm(target, refs, eps=None, tol=1e-9, **kwargs):
    """Estimate the barycentric coordinate of ``target`` in the W2 model.

    Returns
    -------
    QpResult
    """
    refs = list(refs)
    if len(refs) == 1:
        return min_quadratic_simplex(np.zeros((1, 1)), tol=tol)
    maps = fit_maps_from_target(target, refs, eps=eps, **kwargs)
    return min_quadratic_simplex(build_gram_bcm(target, maps), tol=tol)


def _plan(rho, ref, cfg):
    backend = cfg.plan_backend
    if backend == "auto":
        backend = "exact" if rho.n * ref.n <= DENSE_BUDGET else "entropic"
    if backend == "exact":
        if rho.dim == 1:
            return monotone_plan_1d(rho, ref)
        return exact_plan(rho, ref)
    pts = np.vstack([rho.support, ref.support])
    diam2 = float(np.max(np.sum((pts - pts.min(0)) ** 2, axis=1))) or 1.0
    eps = cfg.epsilon if cfg.epsilon is not None else 1e-3 * diam2
    pot = solve_dual(rho, ref, EotConfig(epsilon=eps))
    P = entropic_plan(pot, rho, ref)
    cost = float((P * sq_distances(rho.support, ref.support)).sum())
    return TransportPlan(P, cost, rho, ref)


def iterative_barycenter(refs, lam, rho0, cfg=BarycenterConfig(), return_objective=False):
    """Damped barycentric-projection iteration toward the W2 barycenter.

    Each round computes a plan from the current iterate to every
    reference, takes barycentric projections ``T_j`` and moves every atom
    to ``(1 - alpha) x + alpha sum_j lam_j T_j(x)``.  Atom weights never
    change, so the support size stays ``rho0.n``.

    Parameters
    ----------
    refs : list of DiscreteMeasure
    lam : SimplexWeights or array_like
    rho0 : DiscreteMeasure
    cfg : BarycenterConfig
    return_objective : bool
        Also return ``sum_j lam_j W2^2(rho_l, mu_j)`` for ``l = 0..k``
        (one extra round of plans for the final iterate).

    Returns
    -------
    DiscreteMeasure, or (DiscreteMeasure, ndarray)
    """
    refs = list(refs)
    if not refs:
        raise ValueError("need at least one reference")
    lam = as_lambda(lam)
    if lam.size != len(refs):
        raise ValueError("lambda and refs lengths differ")
    active = [j for j in range(len(refs)) if lam[j] > 0]
    rho = rho0
    history = []
    for _ in range(cfg.k):
        target_pts = np.zeros_like(rho.support)
        obj = 0.0
        for j in active:
            tp = _plan(rho, refs[j], cfg)
            obj += lam[j] * tp.cost
            target_pts += lam[j] * barycentric_projection(tp).images
        history.append(obj)
        new = (1.0 - cfg.alpha) * rho.support + cfg.alpha * target_pts
        if not np.all(np.isfinite(new)):
            raise NumericalError("iterate left the finite range")
        rho = DiscreteMeasure(new, rho.weights)
    if return_objective:
        history.append(sum(lam[j] * _plan(rho, refs[j], cfg).cost for j in active))
        return rho, np.asarray(history)
    return rho
