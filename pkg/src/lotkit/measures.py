"""Core value types: discrete measures, simplex coordinates, sampled maps.

All arrays held by these types are copied and marked read-only at
construction, so instances can be shared freely.
"""

import json
from dataclasses import dataclass

import numpy as np

from lotkit import io as _io
from lotkit.errors import IncompatibleBaseError

SUM_TOL = 1e-12
RENORM_TOL = 1e-9


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def _normalized(weights, what):
    """Validate a probability vector, renormalizing tiny drifts."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise ValueError(f"{what} must be non-empty")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{what} must be finite")
    if np.any(w < 0):
        raise ValueError(f"{what} must be nonnegative")
    total = w.sum()
    dev = abs(total - 1.0)
    if dev > RENORM_TOL:
        raise ValueError(f"{what} sum to {total!r}, expected 1")
    if dev > SUM_TOL:
        w = w / total
    return _frozen(w)


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud in R^d.

    Parameters
    ----------
    support : array_like, shape (n, d) or (n,)
        Atom locations; a 1-D array is read as n points in R^1.
    weights : array_like, shape (n,), optional
        Probability masses. Uniform when omitted.
    """

    support: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = _as_points(self.support)
        n = pts.shape[0]
        if n == 0:
            raise ValueError("measure must have at least one atom")
        w = np.full(n, 1.0 / n) if self.weights is None else self.weights
        w = _normalized(w, "weights")
        if w.shape[0] != n:
            raise ValueError(
                f"support has {n} points but weights has {w.shape[0]} entries"
            )
        object.__setattr__(self, "support", _frozen(pts))
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.support.shape[0]

    @property
    def dim(self):
        return self.support.shape[1]

    def mean(self):
        return self.weights @ self.support

    def covariance(self, center=True):
        """Weighted second-moment matrix, centered unless ``center=False``."""
        x = self.support - self.mean() if center else self.support
        return (x * self.weights[:, None]).T @ x

    def sorted_1d(self):
        """Support and weights sorted by location (1-D measures only)."""
        if self.dim != 1:
            raise ValueError("sorted_1d requires a measure on R^1")
        order = np.argsort(self.support[:, 0], kind="stable")
        return self.support[order, 0], self.weights[order]

    # -- serialization ---------------------------------------------------
    def to_csv(self, path):
        header = [f"x_{k + 1}" for k in range(self.dim)] + ["weight"]
        rows = np.column_stack([self.support, self.weights]).tolist()
        _io.write_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path):
        """Read ``x_1..x_d[,weight]`` columns; missing weights mean uniform."""
        header, rows = _io.read_csv(path)
        if not rows:
            raise ValueError(f"{path}: no data rows")
        try:
            data = np.array([[float(v) for v in r] for r in rows], dtype=float)
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric entry ({exc})") from None
        names = [h.strip().lower() for h in header]
        if "weight" in names:
            k = names.index("weight")
            w = data[:, k]
            return cls(np.delete(data, k, axis=1), w / w.sum())
        return cls(data)

    def to_dict(self):
        return {"support": self.support.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, obj):
        return cls(np.asarray(obj["support"], dtype=float), obj.get("weights"))

    def to_json(self):
        return _io.json_text(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    """A point of the probability simplex."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _normalized(self.values, "lambda"))

    @property
    def m(self):
        return self.values.shape[0]

    def __len__(self):
        return self.m

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @classmethod
    def vertex(cls, i, m):
        e = np.zeros(m)
        e[i] = 1.0
        return cls(e)

    @classmethod
    def uniform(cls, m):
        return cls(np.full(m, 1.0 / m))


def as_lambda(lam):
    """Coerce arrays and ``SimplexWeights`` to a validated weight vector."""
    if isinstance(lam, SimplexWeights):
        return lam.values
    return SimplexWeights(lam).values


@dataclass(frozen=True, eq=False)
class MapOnSample:
    """A transport map known through its values on a base sample.

    Parameters
    ----------
    base_points : array_like, shape (n, d)
        Sample from the base measure.
    images : array_like, shape (n, d')
        Map values at ``base_points``.
    base_weights : array_like, shape (n,), optional
        Masses of the base atoms; uniform ``1/n`` when omitted.
    """

    base_points: np.ndarray
    images: np.ndarray
    base_weights: np.ndarray = None

    def __post_init__(self):
        base = _as_points(self.base_points)
        img = _as_points(self.images)
        if base.shape[0] == 0:
            raise ValueError("map must be evaluated on at least one point")
        if img.shape[0] != base.shape[0]:
            raise ValueError("base_points and images must have equal length")
        n = base.shape[0]
        w = np.full(n, 1.0 / n) if self.base_weights is None else self.base_weights
        w = _normalized(w, "base_weights")
        if w.shape[0] != n:
            raise ValueError("base_weights length mismatch")
        object.__setattr__(self, "base_points", _frozen(base))
        object.__setattr__(self, "images", _frozen(img))
        object.__setattr__(self, "base_weights", w)

    @property
    def n(self):
        return self.base_points.shape[0]

    def same_base(self, other):
        """Exact equality of base points and base weights."""
        return (
            self.base_points.shape == other.base_points.shape
            and np.array_equal(self.base_points, other.base_points)
            and np.array_equal(self.base_weights, other.base_weights)
        )

    def displacement(self):
        """``images - base_points`` (requires equal dimensions)."""
        return self.images - self.base_points

    @classmethod
    def from_function(cls, base, fn):
        """Evaluate a vectorized map ``fn`` on a base measure's atoms."""
        if isinstance(base, DiscreteMeasure):
            return cls(base.support, fn(base.support), base.weights)
        pts = _as_points(base)
        return cls(pts, fn(pts))

    @classmethod
    def identity(cls, base):
        return cls.from_function(base, lambda x: np.array(x, copy=True))


@dataclass(frozen=True, eq=False)
class CoefficientMeasure:
    """Mixing measure over an index set (atoms at locations with masses)."""

    locations: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float).ravel()
        mass = _normalized(self.masses, "masses")
        if loc.shape[0] != mass.shape[0]:
            raise ValueError("locations and masses must have equal length")
        object.__setattr__(self, "locations", _frozen(loc))
        object.__setattr__(self, "masses", mass)

    @property
    def atoms(self):
        return list(zip(self.locations.tolist(), self.masses.tolist()))


def check_common_base(maps):
    """Raise unless every map shares the first map's base sample."""
    if len(maps) == 0:
        raise ValueError("at least one map is required")
    first = maps[0]
    for mp in maps[1:]:
        if not first.same_base(mp):
            raise IncompatibleBaseError("incompatible base sample")
    return first


def combine_maps(lam, maps):
    """Pointwise convex combination ``sum_i lam_i maps[i]``.

    Parameters
    ----------
    lam : SimplexWeights or array_like
    maps : list of MapOnSample
        Must share identical base points.

    Returns
    -------
    MapOnSample
    """
    maps = list(maps)
    lam = as_lambda(lam)
    if lam.shape[0] != len(maps):
        raise ValueError(f"got {lam.shape[0]} weights for {len(maps)} maps")
    first = check_common_base(maps)
    # exact pass-through for vertices keeps e_i -> maps[i] bit-identical
    nz = np.flatnonzero(lam)
    if nz.size == 1 and lam[nz[0]] == 1.0:
        return maps[nz[0]]
    images = np.tensordot(lam, np.stack([mp.images for mp in maps]), axes=1)
    return MapOnSample(first.base_points, images, first.base_weights)


def pushforward(mp):
    """Image measure of the base sample under the map."""
    if mp.n == 0:
        raise ValueError("empty map")
    return DiscreteMeasure(mp.images, mp.base_weights)
