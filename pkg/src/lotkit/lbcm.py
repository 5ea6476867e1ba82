"""Linear barycentric coding model: LOT distance, Gram matrix, analysis, synthesis.

Reference and target measures are embedded through their transport maps
from a shared base measure, evaluated on a base sample.  Analysis finds the
simplex coordinate whose combined map is closest to the target map in
``L^2`` of the base; synthesis pushes the base through a combined map.
"""

from dataclasses import dataclass, field

import numpy as np

from lotkit.eot import EotConfig, epsilon_schedule, fit_entropic_map
from lotkit.exact_ot import quantile_map_1d
from lotkit.measures import (
    DiscreteMeasure,
    MapOnSample,
    check_common_base,
    combine_maps,
    pushforward,
)
from lotkit.simplex import min_quadratic_simplex

GRAM_CLIP = 1e-10


@dataclass(frozen=True, eq=False)
class LbcmProblem:
    """Sampled LBCM instance.

    Attributes
    ----------
    base_sample_fit : DiscreteMeasure
        Base sample used to fit transport potentials.
    base_sample_eval : DiscreteMeasure
        Independent base sample on which maps are evaluated.
    reference_maps : list of MapOnSample
        Maps to each reference, all based on ``base_sample_eval``.
    target_map : MapOnSample, optional
    """

    base_sample_fit: DiscreteMeasure
    base_sample_eval: DiscreteMeasure
    reference_maps: list = field(default_factory=list)
    target_map: MapOnSample = None

    def __post_init__(self):
        maps = list(self.reference_maps)
        if self.target_map is not None:
            maps.append(self.target_map)
        if maps:
            check_common_base(maps)
            if not np.array_equal(maps[0].base_points, self.base_sample_eval.support):
                from lotkit.errors import IncompatibleBaseError

                raise IncompatibleBaseError("incompatible base sample")
        object.__setattr__(self, "reference_maps", list(self.reference_maps))


def lot_distance(Tmu, Tnu):
    """Monte-Carlo LOT distance ``sqrt(sum_k w_k |Tmu(x_k) - Tnu(x_k)|^2)``."""
    check_common_base([Tmu, Tnu])
    diff = Tmu.images - Tnu.images
    return float(np.sqrt(Tmu.base_weights @ np.sum(diff * diff, axis=1)))


def clip_gram(A):
    """Symmetrize and zero eigenvalues below ``-1e-10 * |A|``.

    The matrix is only rebuilt from its eigendecomposition when some
    eigenvalue actually needs clipping.
    """
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    scale = float(np.abs(w).max()) if w.size else 0.0
    bad = w < -GRAM_CLIP * scale
    if np.any(bad):
        w = np.where(bad, 0.0, w)
        A = (V * w) @ V.T
        A = 0.5 * (A + A.T)
    return A


def gram_from_displacements(D, weights):
    """``A_ij = sum_k w_k <D_i[k], D_j[k]>`` for a stack ``D`` of shape (m, n, d)."""
    flat = D * np.sqrt(weights)[None, :, None]
    flat = flat.reshape(D.shape[0], -1)
    return clip_gram(flat @ flat.T)


def build_gram(problem):
    """Estimated LOT Gram matrix ``<T_i - T_eta, T_j - T_eta>`` on the base.

    Raises
    ------
    ValueError
        If the problem has no target map.
    """
    if problem.target_map is None:
        raise ValueError("build_gram needs a target map")
    maps = problem.reference_maps
    if not maps:
        raise ValueError("no reference maps")
    D = np.stack([mp.images - problem.target_map.images for mp in maps])
    return gram_from_displacements(D, problem.target_map.base_weights)


def _split_base(base, split):
    if not split:
        return base, base
    n = base.n // 2
    if n < 1:
        raise ValueError("base sample needs at least two points to split")
    fit = DiscreteMeasure(base.support[:n])
    ev = DiscreteMeasure(base.support[n : 2 * n])
    return fit, ev


def default_epsilon(n, d, alpha_bar=3.0, scale=1.0):
    return epsilon_schedule(n, d, alpha_bar, scale)


def build_problem(base, refs, target=None, eps=None, alpha_bar=3.0, eps_scale=1.0,
                  split=True, eot_tol=1e-6, max_iter=10_000, backend="entropic"):
    """Fit the maps of an LBCM instance.

    Parameters
    ----------
    base : DiscreteMeasure
        With ``split=True`` a sample of size ``2n``: the first half fits
        potentials, the second half evaluates the maps.  With
        ``split=False`` the same (possibly weighted) atoms play both roles.
    refs : list of DiscreteMeasure
    target : DiscreteMeasure, optional
    eps : float, optional
        Regularization; defaults to ``eps_scale * n^(-1/(d + alpha_bar + 1))``.
    backend : {"entropic", "quantile"}
        ``quantile`` uses the exact monotone rearrangement (1-D only).

    Returns
    -------
    LbcmProblem
    """
    fit, ev = _split_base(base, split)
    if eps is None:
        eps = default_epsilon(fit.n, fit.dim, alpha_bar, eps_scale)
    cfg = EotConfig(epsilon=eps, max_iter=max_iter, tol=eot_tol)

    def fit_one(meas):
        if backend == "entropic":
            return fit_entropic_map(fit, meas, ev.support, cfg, ev.weights)
        if backend == "quantile":
            return MapOnSample(
                ev.support, quantile_map_1d(fit, meas, ev.support[:, 0])[:, None], ev.weights
            )
        raise ValueError(f"unknown map backend {backend!r}")

    ref_maps = [fit_one(r) for r in refs]
    tmap = None if target is None else fit_one(target)
    return LbcmProblem(fit, ev, ref_maps, tmap)


def estimate_lambda(base, refs, target, eps=None, tol=1e-9, **kwargs):
    """Estimate the LBCM coordinate of ``target``.

    Fits entropic maps from the base to every reference and to the target,
    builds the Gram matrix on the evaluation half and minimizes its
    quadratic form over the simplex.

    Returns
    -------
    QpResult
    """
    refs = list(refs)
    if len(refs) == 1:
        return min_quadratic_simplex(np.zeros((1, 1)), tol=tol)
    problem = build_problem(base, refs, target, eps=eps, **kwargs)
    return min_quadratic_simplex(build_gram(problem), tol=tol)


def synthesize(lam, problem):
    """Pushforward of the evaluation base through ``sum lam_i T_i``."""
    if not problem.reference_maps:
        raise ValueError("problem has no reference maps")
    return pushforward(combine_maps(lam, problem.reference_maps))
