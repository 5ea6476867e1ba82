"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run ``pytest tests/test_acceptance.py -v`` and read the
``acceptance criteria`` section of the summary.
"""

import time

import numpy as np
from scipy import stats

from lotkit import capacity as cap
from lotkit.eot import EotConfig, entropic_plan, solve_dual
from lotkit.gaussian import (
    MleConfig,
    bures_barycenter,
    gaussian_ot_map,
    lbcm_covariance,
    mle_lambda,
    run_covariance_experiment,
    sqrtm,
)
from lotkit.imaging import (
    GridImage,
    ReconstructConfig,
    blob_family,
    image_to_measure,
    measure_to_image,
    occlude,
    reconstruct,
    w2_squared,
)
from lotkit.lbcm import estimate_lambda
from lotkit.measures import DiscreteMeasure
from lotkit.sampling import (
    random_covariances,
    random_orthogonal,
    sample_simplex_uniform,
    sample_uniform,
)
from lotkit.simplex import min_quadratic_simplex
from tests.oracles import brute_force_simplex_min, random_spd, sparse_image


def test_gaussian_closed_forms(report):
    C = gaussian_ot_map(np.eye(2), np.diag([4.0, 9.0]))
    diag_err = float(np.abs(C - np.diag([2.0, 3.0])).max())
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 21))
        s0, s1 = random_spd(d, rng), random_spd(d, rng)
        C = gaussian_ot_map(s0, s1)
        worst = max(worst, np.linalg.norm(C @ s0 @ C - s1) / np.linalg.norm(s1))
    ok = diag_err <= 1e-12 and worst <= 1e-8
    report(1, ok, f"diag map error {diag_err:.1e} (<=1e-12), worst C S0 C residual {worst:.1e} (<=1e-8)")
    assert ok


def test_lbcm_equals_barycenter_for_commuting_families(report):
    worst = 0.0
    for s in range(20):
        rng = np.random.default_rng(100 + s)
        sigmas = random_covariances(5, 10, rng)
        lam = sample_simplex_uniform(5, rng).values
        bary = bures_barycenter(lam, sigmas)
        lin = lbcm_covariance(lam, np.eye(10), sigmas)
        worst = max(worst, np.linalg.norm(lin - bary) / np.linalg.norm(bary))
    ok = worst <= 1e-6
    report(2, ok, f"worst relative Frobenius gap {worst:.1e} over 20 families (<=1e-6)")
    assert ok


def _lambda_error_1d(n, seed):
    # one stream per (seed, role), shared across n
    base = sample_uniform(0, 1, 2 * n, 1000 * seed)
    refs = [sample_uniform(0, 1, n, 1000 * seed + 1), sample_uniform(2, 3, n, 1000 * seed + 2)]
    target = sample_uniform(1, 2, n, 1000 * seed + 3)
    lam = estimate_lambda(base, refs, target).values
    return float(np.linalg.norm(lam - 0.5))


def test_lambda_error_decreases_with_n(report):
    grid = (500, 1000, 2000, 4000)
    med = [float(np.median([_lambda_error_1d(n, s) for s in range(20)])) for n in grid]
    monotone = all(b <= a for a, b in zip(med, med[1:]))
    ok = med[-1] <= 0.10 and monotone
    report(3, ok, "medians " + ", ".join(f"n={n}: {m:.4f}" for n, m in zip(grid, med))
           + " (last <=0.10, non-increasing)")
    assert ok


def test_covariance_experiment_ordering(report):
    t0 = time.perf_counter()
    rows = run_covariance_experiment(
        10, 10, [100, 1000, 10_000], 10, seed=0, methods=("bcm", "lbcm", "empirical")
    )
    elapsed = time.perf_counter() - t0

    def med(method, n):
        return float(np.median([r["cov_error_fro"] for r in rows
                                if r["method"] == method and r["n"] == n]))

    ns = np.array([100, 1000, 10_000])
    emp = np.array([med("empirical", n) for n in ns])
    lb = np.array([med("lbcm", n) for n in ns])
    bc = np.array([med("bcm", n) for n in ns])
    ratio = lb[-1] / emp[-1]
    slope = float(np.polyfit(np.log(ns), np.log(emp), 1)[0])
    rel = float(np.max(np.abs(lb - bc) / np.maximum(lb, bc)))
    ok = ratio <= 0.6 and -0.65 <= slope <= -0.35 and rel <= 0.2 and elapsed <= 600
    report(4, ok, f"LBCM/empirical {ratio:.3f} (<=0.6), empirical slope {slope:.3f} "
                  f"(in [-0.65,-0.35]), max LBCM-BCM gap {rel:.1%} (<=20%), {elapsed:.1f}s")
    assert ok


def _density_targets():
    mid = (np.arange(1000) + 0.5) / 1000
    w = stats.beta(2, 5).pdf(mid)
    return {
        "delta": DiscreteMeasure([[0.5]]),
        "two_point": DiscreteMeasure([[0.2], [0.9]]),
        "uniform_grid": DiscreteMeasure(mid[:, None]),
        "beta": DiscreteMeasure(mid[:, None], w / w.sum()),
    }


def test_threshold_maps_reach_targets(report):
    parts, ok = [], True
    for name, target in _density_targets().items():
        e50, e200 = cap.density_error(target, 50), cap.density_error(target, 200)
        ok &= e50 <= 2 / 50 and e200 <= 2 / 200 and e200 <= e50
        parts.append(f"{name} {e50:.1e}/{e200:.1e}")
    report(5, ok, "W2 at grid 50/200: " + ", ".join(parts) + " (<=2/grid, non-increasing)")
    assert ok


def test_vertex_map_gap(report):
    rng = np.random.default_rng(2024)
    margins = []
    for _ in range(200):
        gap, se = cap.counterexample_gap(cap.random_combo(rng, 50), 200_000, rng.integers(2**63))
        margins.append(gap - 3 * se)
    found = cap.search_counterexample(n_restarts=100, max_atoms=30, seed=7)
    search = [r["gap"] - 3 * r["stderr"] for r in found]
    ok = min(margins) >= cap.GAP_BOUND and min(search) >= cap.GAP_BOUND
    report(6, ok, f"min gap-3se random {min(margins):.4f}, search {min(search):.4f} "
                  f"(>= 1/192 = {cap.GAP_BOUND:.4f})")
    assert ok


def _sinkhorn_pairs():
    rng = np.random.default_rng(5)
    pairs = []
    for n, k, d, eps in [(30, 40, 1, 0.1), (50, 50, 2, 0.05), (80, 60, 3, 0.5),
                         (100, 100, 2, 0.01), (20, 200, 1, 1.0), (200, 150, 5, 0.2)]:
        a = rng.exponential(size=n)
        b = rng.exponential(size=k)
        x = DiscreteMeasure(rng.standard_normal((n, d)), a / a.sum())
        y = DiscreteMeasure(rng.standard_normal((k, d)) + 0.5, b / b.sum())
        pairs.append((x, y, eps))
    return pairs


def test_sinkhorn_correctness(report):
    worst_viol, worst_drop = 0.0, 0.0
    for x, y, eps in _sinkhorn_pairs():
        pot = solve_dual(x, y, EotConfig(epsilon=eps, tol=1e-6), record_objective=True)
        P = entropic_plan(pot, x, y)
        viol = np.abs(P.sum(1) - x.weights).sum() + np.abs(P.sum(0) - y.weights).sum()
        worst_viol = max(worst_viol, viol)
        obj = pot.objective
        worst_drop = max(worst_drop, float(np.max(obj[:-1] - obj[1:], initial=0.0)))
    rng = np.random.default_rng(6)
    x = DiscreteMeasure(rng.standard_normal((40, 2)))
    y = DiscreteMeasure(rng.standard_normal((30, 2)))
    P = entropic_plan(solve_dual(x, y, EotConfig(epsilon=1e3)), x, y)
    prod_err = float(np.abs(P - np.outer(x.weights, y.weights)).max())
    # evenly spaced sorted grids; spacing^2 is far above epsilon
    pts = np.linspace(0.0, 1.0, 10)
    xs, ys = DiscreteMeasure(pts[:, None]), DiscreteMeasure(pts[:, None] + 0.05)
    diag = float(np.trace(entropic_plan(solve_dual(xs, ys, EotConfig(epsilon=1e-3)), xs, ys)))
    ok = worst_viol <= 1e-6 and worst_drop <= 1e-12 and prod_err <= 1e-3 and diag >= 0.99
    report(7, ok, f"marginal L1 {worst_viol:.1e} (<=1e-6), largest objective drop {worst_drop:.1e}, "
                  f"product-coupling max entry gap {prod_err:.1e} (<=1e-3), monotone mass {diag:.4f} (>=0.99)")
    assert ok


def test_simplex_qp_correctness(report):
    rng = np.random.default_rng(8)
    worst = 0.0
    for t in range(50):
        m = int(rng.integers(2, 5))
        G = rng.standard_normal((m, int(rng.integers(1, m + 1))))
        A = G @ G.T
        res = min_quadratic_simplex(A)
        worst = max(worst, abs(res.objective - brute_force_simplex_min(A, 1000)))
    exact = True
    for i in range(4):
        G = rng.standard_normal((4, 3))
        G[i] = 0.0
        res = min_quadratic_simplex(G @ G.T)
        exact &= bool(np.all(res.values == np.eye(4)[i])) and abs(res.objective) <= 1e-15
    ok = worst <= 1e-4 and exact
    report(8, ok, f"worst objective gap to 1e-3 grid {worst:.1e} (<=1e-4), null-space vertices exact: {exact}")
    assert ok


def test_imaging_pipeline(report):
    rng = np.random.default_rng(9)
    kept = 0
    for _ in range(10):
        img = sparse_image(rng)
        mu = image_to_measure(img)
        out = measure_to_image(mu.support, mu.weights)
        top_in = set(np.flatnonzero(img.pixels == img.pixels.max()))
        top_out = set(np.flatnonzero(out.pixels == out.pixels.max()))
        kept += top_in == top_out
    refs, targets = blob_family(5, 10, seed=3)
    self_lam = {}
    for meth in ("lbcm", "w2bcm", "linear"):
        self_lam[meth] = float(reconstruct(meth, occlude(refs[2]), refs, ReconstructConfig()).lam[2])
    losses = {"lbcm": [], "linear": []}
    for tgt in targets:
        for meth in losses:
            losses[meth].append(w2_squared(reconstruct(meth, occlude(tgt), refs).image, tgt))
    med_l, med_lin = np.median(losses["lbcm"]), np.median(losses["linear"])
    ok = kept == 10 and min(self_lam.values()) >= 0.9 and med_l <= med_lin
    report(9, ok, f"argmax kept {kept}/10, self lambda "
                  + ", ".join(f"{k} {v:.3f}" for k, v in self_lam.items())
                  + f" (>=0.9), median W2^2 LBCM {med_l:.4f} vs linear {med_lin:.4f}")
    assert ok


def test_sqrtm_agreement(report):
    rng = np.random.default_rng(10)
    worst_ns, worst_res = 0.0, 0.0
    for _ in range(100):
        S = random_spd(int(rng.integers(1, 21)), rng)
        X = sqrtm(S)
        worst_ns = max(worst_ns, np.linalg.norm(X - sqrtm(S, method="newton_schulz", iters=10)))
        worst_res = max(worst_res, np.linalg.norm(X @ X - S) / np.linalg.norm(S))
    ok = worst_ns <= 1e-6 and worst_res <= 1e-8
    report(10, ok, f"eig vs Newton-Schulz {worst_ns:.1e} (<=1e-6), residual {worst_res:.1e} (<=1e-8)")
    assert ok


def test_mle_recovers_vertex(report):
    d = 10
    O = random_orthogonal(d, 11)
    lo_hi = np.r_[np.ones(d // 2), 9.0 * np.ones(d - d // 2)]
    sigmas = [O.T @ np.diag(lo_hi) @ O, O.T @ np.diag(lo_hi[::-1]) @ O]
    cfg = MleConfig(eta=3e-4, max_iters=500, fp_iters=10, sq_iters=10)
    mass, monotone = [], True
    for i in range(2):
        lam, trace = mle_lambda(sigmas[i], sigmas, cfg, return_trace=True)
        mass.append(float(lam.values[i]))
        monotone &= bool(np.all(np.diff(trace) <= 0))
    ok = min(mass) >= 0.95 and monotone
    report(11, ok, f"vertex mass {mass[0]:.4f}, {mass[1]:.4f} (>=0.95), loss non-increasing: {monotone}")
    assert ok
