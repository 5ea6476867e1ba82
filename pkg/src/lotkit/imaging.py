"""Images as measures: conversion, rasterization, occlusion and reconstruction.

An image becomes a measure with one atom per lit pixel at ``(i/d, j/d)``
(1-indexed).  A measure becomes an image by Gaussian kernel smoothing on
an ``rd x rd`` grid, normalization, thresholding and ``r x r`` block sums.
Occluded digits are reconstructed by estimating a coordinate on occluded
data and synthesizing from the unoccluded references.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from lotkit import io as _io
from lotkit.eot import EotConfig, fit_entropic_map
from lotkit.errors import NumericalError
from lotkit.exact_ot import discrete_w2
from lotkit.lbcm import build_gram, build_problem
from lotkit.measures import DiscreteMeasure, combine_maps, pushforward
from lotkit.sampling import make_rng
from lotkit.simplex import min_quadratic_simplex, project_convex_hull
from lotkit.w2bcm import BarycenterConfig, estimate_lambda_bcm, iterative_barycenter

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
MAX_ATOMS = 1500
METHODS = ("lbcm", "w2bcm", "linear")
BASE_IMAGES = ("uniform", "checkerboard", "circle", "corners")


@dataclass(frozen=True, eq=False)
class GridImage:
    """Nonnegative ``d x d`` pixel grid."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.array(self.pixels, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] < 1:
            raise ValueError("image must be a non-empty square matrix")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("pixels must be finite and nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def d(self):
        return self.pixels.shape[0]

    def mass(self):
        return float(self.pixels.sum())

    def normalized(self):
        s = self.mass()
        if s <= 0:
            raise ValueError("empty image")
        return GridImage(self.pixels / s)

    def to_csv(self, path):
        _io.write_matrix_csv(path, self.pixels)

    @classmethod
    def from_csv(cls, path):
        return cls(_io.read_matrix_csv(path))


@dataclass(frozen=True)
class RasterConfig:
    """Measure-to-image settings: output size, resolution, bandwidth, lower bound."""

    d: int = 28
    r: int = 4
    b: float = 0.05
    lower: float = 1e-6

    def __post_init__(self):
        if self.d < 1 or self.r < 1:
            raise ValueError("d and r must be at least 1")
        if not self.b > 0:
            raise ValueError("bandwidth must be positive")
        if not self.lower >= 0:
            raise ValueError("lower bound must be nonnegative")


def image_to_measure(img):
    """Atoms at ``(i/d, j/d)`` for lit 1-indexed pixels, weights ``I_ij / s``."""
    img = img if isinstance(img, GridImage) else GridImage(img)
    s = img.mass()
    if not s > 0:
        raise ValueError("empty image")
    i, j = np.nonzero(img.pixels > 0)
    pts = np.column_stack([i + 1, j + 1]) / img.d
    return DiscreteMeasure(pts, img.pixels[i, j] / s)


def measure_to_image(support, masses, cfg=RasterConfig()):
    """Kernel-density rasterization of a weighted point cloud.

    Steps: ``K_ij = sum_k m_k exp(-|(i/rd, j/rd) - S_k|^2 / b^2)`` on the
    ``rd x rd`` grid, normalize ``K`` to unit sum, zero entries not above
    the lower bound, sum ``r x r`` blocks and renormalize.

    Raises
    ------
    ValueError
        If thresholding removes every grid cell.
    """
    S = np.atleast_2d(np.asarray(support, dtype=float))
    m = np.asarray(masses, dtype=float).ravel()
    if S.shape[1] != 2 or S.shape[0] != m.size:
        raise ValueError("support must be (n, 2) with one mass per point")
    rd = cfg.r * cfg.d
    g = np.arange(1, rd + 1) / rd
    # the Gaussian kernel separates across the two axes
    Ex = np.exp(-((g[None, :] - S[:, :1]) ** 2) / cfg.b**2)
    Ey = np.exp(-((g[None, :] - S[:, 1:]) ** 2) / cfg.b**2)
    K = (Ex * m[:, None]).T @ Ey
    tot = K.sum()
    if not tot > 0:
        raise ValueError("lower bound too aggressive")
    K = K / tot
    K = K * (K > cfg.lower)
    img = K.reshape(cfg.d, cfg.r, cfg.d, cfg.r).sum(axis=(1, 3))
    s = img.sum()
    if not s > 0:
        raise ValueError("lower bound too aggressive")
    return GridImage(img / s)


def central_block(d, size=10):
    """``(row0, col0, height, width)`` of the centered ``size x size`` block."""
    size = min(size, d)
    r0 = (d - size) // 2
    return (r0, r0, size, size)


def occlude(img, block=None):
    """Zero the pixels of ``block = (row0, col0, height, width)``."""
    img = img if isinstance(img, GridImage) else GridImage(img)
    block = central_block(img.d) if block is None else tuple(int(v) for v in block)
    r0, c0, h, w = block
    if min(block) < 0 or r0 + h > img.d or c0 + w > img.d:
        raise ValueError("occlusion block out of bounds")
    p = np.array(img.pixels)
    p[r0 : r0 + h, c0 : c0 + w] = 0.0
    return GridImage(p)


def base_image(kind, d=28):
    """Procedural base images for the LBCM."""
    i, j = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    if kind == "uniform":
        p = np.ones((d, d))
    elif kind == "checkerboard":
        cell = max(d // 7, 1)
        p = (((i // cell) + (j // cell)) % 2 == 0).astype(float)
    elif kind == "circle":
        c = (d - 1) / 2.0
        rad = np.hypot(i - c, j - c)
        p = (np.abs(rad - 0.35 * d) <= 0.08 * d).astype(float)
    elif kind == "corners":
        q = max(d // 4, 1)
        p = np.zeros((d, d))
        for rs in (slice(0, q), slice(d - q, d)):
            for cs in (slice(0, q), slice(d - q, d)):
                p[rs, cs] = 1.0
    else:
        raise ValueError(f"unknown base image {kind!r}")
    return GridImage(p)


def blob_image(center, d=28, width=0.08, cutoff=1e-3):
    """Gaussian blob at ``center`` in image coordinates, small values cut."""
    g = np.arange(1, d + 1) / d
    ex = np.exp(-((g - center[0]) ** 2) / (2 * width**2))
    ey = np.exp(-((g - center[1]) ** 2) / (2 * width**2))
    p = np.outer(ex, ey)
    p[p < cutoff * p.max()] = 0.0
    return GridImage(p)


def blob_family(m, n_targets, seed, d=28, width=0.08, spread=0.18):
    """Translated blobs: references on a ring, targets inside their hull.

    Returns
    -------
    refs : list of GridImage
    targets : list of GridImage
    """
    rng = make_rng(seed)
    ang = 2 * np.pi * (np.arange(m) / m + rng.uniform(0, 1.0 / m))
    centers = 0.5 + 0.5 / d + spread * np.column_stack([np.cos(ang), np.sin(ang)])
    refs = [blob_image(c, d, width) for c in centers]
    targets = []
    for _ in range(n_targets):
        lam = rng.dirichlet(np.ones(m))
        targets.append(blob_image(lam @ centers, d, width))
    return refs, targets


def subsample(measure, max_atoms=MAX_ATOMS, seed=0):
    """Mass-proportional subsample without replacement, renormalized."""
    if measure.n <= max_atoms:
        return measure
    rng = make_rng(seed)
    idx = np.sort(rng.choice(measure.n, size=max_atoms, replace=False, p=measure.weights))
    w = measure.weights[idx]
    return DiscreteMeasure(measure.support[idx], w / w.sum())


# ---------------------------------------------------------------------------
# reconstruction


@dataclass(frozen=True)
class ReconstructConfig:
    """Reconstruction settings shared by the three methods.

    Attributes
    ----------
    base : str
        Base image for the LBCM (see ``BASE_IMAGES``).
    block : tuple, optional
        Occlusion block; the central 10 x 10 block when omitted.
    epsilon : float
        Entropic regularization for map fits in image coordinates.
    max_atoms : int
        Cap on atoms per measure before entropic solves.
    raster : RasterConfig
    barycenter : BarycenterConfig
    seed : int
    """

    base: str = "uniform"
    block: tuple = None
    epsilon: float = 2e-3
    max_atoms: int = MAX_ATOMS
    raster: RasterConfig = field(default_factory=RasterConfig)
    barycenter: BarycenterConfig = field(default_factory=BarycenterConfig)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Reconstruction:
    image: GridImage
    lam: np.ndarray


def _measures(images, cfg, offset):
    return [
        subsample(image_to_measure(im), cfg.max_atoms, cfg.seed + offset + k)
        for k, im in enumerate(images)
    ]


def _estimate(method, occ_target, occ_refs, cfg):
    m = len(occ_refs)
    if m == 1:
        return np.ones(1)
    if method == "linear":
        B = np.stack([im.normalized().pixels.ravel() for im in occ_refs], axis=1)
        return project_convex_hull(B, occ_target.normalized().pixels.ravel(), tol=1e-12).values
    tgt = _measures([occ_target], cfg, 0)[0]
    refs = _measures(occ_refs, cfg, 1)
    if method == "lbcm":
        base = _measures([occlude(base_image(cfg.base, occ_target.d), cfg.block)], cfg, 10_000)[0]
        prob = build_problem(base, refs, tgt, eps=cfg.epsilon, split=False)
        return min_quadratic_simplex(build_gram(prob), tol=1e-10).values
    if method == "w2bcm":
        return estimate_lambda_bcm(tgt, refs, eps=cfg.epsilon, tol=1e-10).values
    raise ValueError(f"unknown method {method!r}")


def _linear_mixture(lam, refs):
    return GridImage(sum(l * im.normalized().pixels for l, im in zip(lam, refs)))


def synthesize_image(method, lam, refs, cfg=ReconstructConfig()):
    """Image at coordinate ``lam`` built from unoccluded references."""
    lam = np.asarray(lam, dtype=float)
    if method == "linear":
        return _linear_mixture(lam, refs)
    if method == "lbcm":
        base = _measures([base_image(cfg.base, refs[0].d)], cfg, 20_000)[0]
        ecfg = EotConfig(epsilon=cfg.epsilon)
        maps = [
            fit_entropic_map(base, r, base.support, ecfg, base.weights)
            for r in _measures(refs, cfg, 30_000)
        ]
        rho = pushforward(combine_maps(lam, maps))
        return measure_to_image(rho.support, rho.weights, cfg.raster)
    if method == "w2bcm":
        rho0 = image_to_measure(_linear_mixture(lam, refs))
        rho = iterative_barycenter(_measures(refs, cfg, 40_000), lam, rho0, cfg.barycenter)
        return measure_to_image(rho.support, rho.weights, cfg.raster)
    raise ValueError(f"unknown method {method!r}")


def reconstruct(method, occluded_target, refs, cfg=ReconstructConfig()):
    """Estimate a coordinate on occluded data, then synthesize from ``refs``.

    Parameters
    ----------
    method : {"lbcm", "w2bcm", "linear"}
    occluded_target : GridImage
        Target with the block already removed.
    refs : list of GridImage
        Unoccluded references; they are occluded with ``cfg.block`` here.

    Returns
    -------
    Reconstruction
    """
    refs = [r if isinstance(r, GridImage) else GridImage(r) for r in refs]
    if not refs:
        raise ValueError("need at least one reference")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if any(r.d != occluded_target.d for r in refs):
        raise ValueError("images have different sizes")
    occ_refs = [occlude(r, cfg.block) for r in refs]
    if occluded_target.mass() <= 0 or any(r.mass() <= 0 for r in occ_refs):
        raise NumericalError("occlusion removed every pixel of an image")
    lam = _estimate(method, occluded_target, occ_refs, cfg)
    return Reconstruction(synthesize_image(method, lam, refs, cfg), lam)


# ---------------------------------------------------------------------------
# file formats


def read_idx_images(path):
    """Read an IDX ubyte image file into an ``(n, rows, cols)`` uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise ValueError(f"{path}: truncated IDX header")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(f"{path}: bad IDX image magic 0x{magic:08x}")
    if rows < 1 or cols < 1:
        raise ValueError(f"{path}: invalid image dimensions")
    if len(data) - 16 != n * rows * cols:
        raise ValueError(f"{path}: payload size does not match header dimensions")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def write_idx_images(path, images):
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ValueError("images must be (n, rows, cols)")
    arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *arr.shape))
        fh.write(arr.tobytes())


def write_pgm(path, img):
    """8-bit binary PGM preview scaled so the brightest pixel is 255."""
    p = img.pixels
    top = p.max()
    q = np.zeros_like(p) if top <= 0 else p / top * 255.0
    q = np.clip(np.rint(q), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{q.shape[1]} {q.shape[0]}\n255\n".encode("ascii"))
        fh.write(q.tobytes())


def w2_squared(img_a, img_b):
    """Exact squared W2 between two images viewed as measures."""
    _, w2 = discrete_w2(image_to_measure(img_a), image_to_measure(img_b))
    return w2 * w2
