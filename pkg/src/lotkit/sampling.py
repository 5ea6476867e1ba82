"""Seeded generators for every random experimental input.

Each function accepts either an integer seed or an existing
``numpy.random.Generator`` (PCG64 by default), and is a deterministic
function of its parameters and that seed.
"""

import numpy as np

from lotkit.measures import DiscreteMeasure, SimplexWeights

COV_FLOOR = 1e-3


def make_rng(seed):
    """``numpy.random.Generator`` from a seed or pass-through generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.default_rng(seed)


def sample_gaussian(mean, cov, n, seed):
    """``n`` i.i.d. draws from N(mean, cov) via the Cholesky factor.

    Returns
    -------
    DiscreteMeasure
        Uniformly weighted empirical measure.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise ValueError("mean and cov dimensions disagree")
    if n < 1:
        raise ValueError("n must be positive")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance not positive definite")
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance not positive definite") from None
    z = make_rng(seed).standard_normal((n, mean.size))
    return DiscreteMeasure(mean + z @ L.T)


def sample_uniform(low, high, n, seed):
    """``n`` draws from the uniform law on the interval ``[low, high]``."""
    if not high > low:
        raise ValueError("need high > low")
    if n < 1:
        raise ValueError("n must be positive")
    x = make_rng(seed).uniform(low, high, size=n)
    return DiscreteMeasure(x[:, None])


def uniform_grid(low, high, n):
    """Uniform measure on the ``n`` midpoints of an even partition."""
    x = low + (high - low) * (np.arange(n) + 0.5) / n
    return DiscreteMeasure(x[:, None])


def sample_simplex_uniform(m, seed):
    """Uniform (Dirichlet(1, ..., 1)) draw from the simplex.

    Uses the spacings of ``m - 1`` sorted uniforms on [0, 1].
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    u = np.sort(make_rng(seed).random(m - 1))
    lam = np.diff(np.concatenate([[0.0], u, [1.0]]))
    return SimplexWeights(lam)


def random_orthogonal(d, seed):
    """Haar-distributed orthogonal matrix (QR with sign-corrected R)."""
    z = make_rng(seed).standard_normal((d, d))
    q, r = np.linalg.qr(z)
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    return q * s[None, :]


def random_covariances(m, d, seed):
    """Simultaneously diagonalizable SPD family ``O^T D_i O``.

    One Haar orthogonal ``O`` is shared; each ``D_i`` has i.i.d.
    half-normal diagonal entries floored at ``1e-3``.

    Returns
    -------
    list of ndarray, shape (d, d)
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    rng = make_rng(seed)
    O = random_orthogonal(d, rng)
    out = []
    for _ in range(m):
        diag = np.maximum(np.abs(rng.standard_normal(d)), COV_FLOOR)
        S = (O.T * diag) @ O
        out.append(0.5 * (S + S.T))
    return out


def sample_uniform_triangle(n, seed):
    """Uniform draws on conv{(0,0), (0,1), (1,0)} by folding the unit square."""
    if n < 1:
        raise ValueError("n must be positive")
    u = make_rng(seed).random((n, 2))
    flip = u.sum(axis=1) > 1.0
    u[flip] = 1.0 - u[flip]
    return DiscreteMeasure(u)
