"""Command-line entry point.

Usage::

    lotkit <command> [--config FILE] [--seed N] [--out DIR]

Commands: ``lbcm``, ``cov-experiment``, ``digits``, ``capacity``.  Each
reads a JSON config validated against a strict schema (unknown keys are
rejected) and writes CSV/JSON results into ``--out``.  Exit codes: 0 on
success, 2 for configuration or input errors, 3 for numerical failures;
failures also print a JSON error object on standard error.
"""

import argparse
import json
import os
import sys
import time

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from lotkit import io as _io
from lotkit.errors import LotkitError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
U64_MAX = 2**64 - 1


class ConfigError(LotkitError, ValueError):
    """Invalid configuration or unreadable input."""


# ---------------------------------------------------------------------------
# schemas

_SEED = {"type": "integer", "minimum": 0, "maximum": U64_MAX}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_PATHS = {"type": "array", "items": {"type": "string"}, "minItems": 1}


def _obj(props, required=()):
    return {
        "type": "object",
        "properties": props,
        "required": list(required),
        "additionalProperties": False,
    }


LBCM_SCHEMA = _obj(
    {
        "mode": {"enum": ["analyze", "synthesize"]},
        "base": {"type": "string"},
        "references": _PATHS,
        "target": {"type": "string"},
        "lambda": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "epsilon": {"oneOf": [_POS_NUM, {"type": "null"}]},
        "alpha_bar": {"type": "number", "minimum": 1, "maximum": 3},
        "eps_scale": _POS_NUM,
        "split": {"type": "boolean"},
        "tol": _POS_NUM,
        "eot_tol": _POS_NUM,
        "max_iter": _POS_INT,
        "seed": _SEED,
    },
    required=("mode", "base", "references"),
)

COV_SCHEMA = _obj(
    {
        "m": _POS_INT,
        "d": _POS_INT,
        "n_grid": {"type": "array", "items": _POS_INT, "minItems": 1},
        "trials": _POS_INT,
        "methods": {
            "type": "array",
            "items": {"enum": ["bcm", "lbcm", "mle", "empirical"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "mle": _obj(
            {
                "eta": _POS_NUM,
                "max_iters": _POS_INT,
                "fp_iters": _POS_INT,
                "sq_iters": _POS_INT,
                "fd_step": _POS_NUM,
            }
        ),
        "timing": {"type": "boolean"},
        "seed": _SEED,
    }
)

_IMAGE_SOURCE = {
    "oneOf": [
        _obj({"csv": _PATHS}, required=("csv",)),
        _obj(
            {
                "idx": {"type": "string"},
                "indices": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
            },
            required=("idx", "indices"),
        ),
    ]
}

DIGITS_SCHEMA = _obj(
    {
        "references": _IMAGE_SOURCE,
        "targets": _IMAGE_SOURCE,
        "blobs": _obj(
            {"m": _POS_INT, "n_targets": _POS_INT, "width": _POS_NUM, "spread": _POS_NUM}
        ),
        "methods": {
            "type": "array",
            "items": {"enum": ["lbcm", "w2bcm", "linear"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "base": {"enum": ["uniform", "checkerboard", "circle", "corners"]},
        "block": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 4, "maxItems": 4},
        "epsilon": _POS_NUM,
        "max_atoms": _POS_INT,
        "raster": _obj(
            {"d": _POS_INT, "r": _POS_INT, "b": _POS_NUM, "lower": {"type": "number", "minimum": 0}}
        ),
        "barycenter": _obj(
            {"alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}, "k": _POS_INT}
        ),
        "timing": {"type": "boolean"},
        "seed": _SEED,
    }
)

CAPACITY_SCHEMA = _obj(
    {
        "mode": {"enum": ["1d", "2d"]},
        "targets": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {"enum": ["delta", "two_point", "uniform_grid", "beta"]},
                    _obj(
                        {
                            "name": {"type": "string"},
                            "support": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                            "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
                        },
                        required=("support",),
                    ),
                ]
            },
        },
        "grids": {"type": "array", "items": _POS_INT, "minItems": 1},
        "map_grid": _POS_INT,
        "n_combos": {"type": "integer", "minimum": 0},
        "max_atoms": _POS_INT,
        "combos": {
            "type": "array",
            "items": _obj(
                {
                    "weights": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                    "b": {
                        "type": "array",
                        "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                        "minItems": 1,
                    },
                },
                required=("weights", "b"),
            ),
        },
        "search": _obj({"restarts": _POS_INT, "max_atoms": _POS_INT, "n_fit": _POS_INT}),
        "n_mc": {"type": "integer", "minimum": 1000},
        "seed": _SEED,
    },
    required=("mode",),
)


# ---------------------------------------------------------------------------
# helpers


def _validate(config, schema):
    try:
        jsonschema.validate(config, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None


def _load_measure(path):
    from lotkit.measures import DiscreteMeasure

    if not os.path.isfile(path):
        raise ConfigError(f"file not found: {path}")
    return DiscreteMeasure.from_csv(path)


def _seed(config):
    return int(config.get("seed", 0))


# ---------------------------------------------------------------------------
# commands


def cmd_lbcm(config, out):
    """Analyze a target or synthesize a measure in the LBCM."""
    from lotkit.lbcm import build_gram, build_problem, synthesize
    from lotkit.measures import SimplexWeights
    from lotkit.simplex import min_quadratic_simplex

    _validate(config, LBCM_SCHEMA)
    mode = config["mode"]
    base = _load_measure(config["base"])
    refs = [_load_measure(p) for p in config["references"]]
    opts = {
        "eps": config.get("epsilon"),
        "alpha_bar": config.get("alpha_bar", 3.0),
        "eps_scale": config.get("eps_scale", 1.0),
        "split": config.get("split", True),
        "eot_tol": config.get("eot_tol", 1e-6),
        "max_iter": config.get("max_iter", 10_000),
    }
    if mode == "analyze":
        if "target" not in config:
            raise ConfigError("analyze mode needs a target file")
        target = _load_measure(config["target"])
        problem = build_problem(base, refs, target, **opts)
        A = build_gram(problem)
        res = min_quadratic_simplex(A, tol=config.get("tol", 1e-9))
        _io.write_matrix_csv(os.path.join(out, "gram.csv"), A)
        _io.write_json(
            os.path.join(out, "lambda.json"),
            {
                "lambda": res.values,
                "objective": res.objective,
                "certificate_gap": res.certificate_gap,
                "converged": res.converged,
                "degenerate": res.degenerate,
            },
        )
        return
    if "lambda" not in config:
        raise ConfigError("synthesize mode needs lambda")
    lam = np.asarray(config["lambda"], dtype=float)
    if lam.size != len(refs):
        raise ConfigError("lambda length differs from the number of references")
    lam = SimplexWeights(lam / lam.sum())
    problem = build_problem(base, refs, None, **opts)
    synthesize(lam, problem).to_csv(os.path.join(out, "measure.csv"))


def cmd_cov_experiment(config, out):
    """Covariance estimation experiment over a grid of sample sizes."""
    from lotkit.gaussian import COV_COLUMNS, COV_METHODS, MleConfig, run_covariance_experiment

    _validate(config, COV_SCHEMA)
    rows = run_covariance_experiment(
        m=config.get("m", 10),
        d=config.get("d", 10),
        n_grid=config.get("n_grid", [100, 1000, 10_000]),
        trials=config.get("trials", 10),
        seed=_seed(config),
        methods=tuple(config.get("methods", COV_METHODS)),
        mle_cfg=MleConfig(**config.get("mle", {})),
        timing=config.get("timing", False),
    )
    _io.write_csv(
        os.path.join(out, "cov_results.csv"),
        COV_COLUMNS,
        [[r[c] for c in COV_COLUMNS] for r in rows],
    )


def _load_images(src):
    from lotkit.imaging import GridImage, read_idx_images

    if "csv" in src:
        out = []
        for p in src["csv"]:
            if not os.path.isfile(p):
                raise ConfigError(f"file not found: {p}")
            out.append(GridImage.from_csv(p))
        return out
    if not os.path.isfile(src["idx"]):
        raise ConfigError(f"file not found: {src['idx']}")
    arr = read_idx_images(src["idx"])
    if arr.shape[1] != arr.shape[2]:
        raise ConfigError("IDX images must be square")
    bad = [i for i in src["indices"] if i >= arr.shape[0]]
    if bad:
        raise ConfigError(f"IDX index out of range: {bad[0]}")
    return [GridImage(arr[i].astype(float)) for i in src["indices"]]


def cmd_digits(config, out):
    """Occluded-image reconstruction with the requested methods."""
    from lotkit.imaging import (
        RasterConfig,
        ReconstructConfig,
        blob_family,
        occlude,
        reconstruct,
        w2_squared,
        write_pgm,
    )
    from lotkit.w2bcm import BarycenterConfig

    _validate(config, DIGITS_SCHEMA)
    seed = _seed(config)
    if "blobs" in config:
        if "references" in config or "targets" in config:
            raise ConfigError("use either blobs or explicit references/targets")
        b = config["blobs"]
        refs, targets = blob_family(
            b.get("m", 5), b.get("n_targets", 10), seed,
            width=b.get("width", 0.08), spread=b.get("spread", 0.18),
        )
    else:
        if "references" not in config or "targets" not in config:
            raise ConfigError("digits needs references and targets (or blobs)")
        refs = _load_images(config["references"])
        targets = _load_images(config["targets"])
    d = refs[0].d
    raster = RasterConfig(**{"d": d, **config.get("raster", {})})
    cfg = ReconstructConfig(
        base=config.get("base", "uniform"),
        block=tuple(config["block"]) if "block" in config else None,
        epsilon=config.get("epsilon", 2e-3),
        max_atoms=config.get("max_atoms", 1500),
        raster=raster,
        barycenter=BarycenterConfig(**config.get("barycenter", {})),
        seed=seed,
    )
    methods = config.get("methods", ["lbcm", "w2bcm", "linear"])
    timing = config.get("timing", False)
    m = len(refs)
    header = ["target", "method", "w2_squared", "wall_time_ms"] + [f"lambda_{i + 1}" for i in range(m)]
    rows = []
    img_dir = _io.ensure_dir(os.path.join(out, "images"))
    for t, target in enumerate(targets):
        occ = occlude(target, cfg.block)
        for meth in methods:
            t0 = time.perf_counter()
            rec = reconstruct(meth, occ, refs, cfg)
            ms = (time.perf_counter() - t0) * 1e3
            stem = os.path.join(img_dir, f"target{t}_{meth}")
            rec.image.to_csv(stem + ".csv")
            write_pgm(stem + ".pgm", rec.image)
            rows.append(
                [t, meth, w2_squared(rec.image, target), ms if timing else None]
                + list(rec.lam)
            )
    _io.write_csv(os.path.join(out, "metrics.csv"), header, rows)


def _named_target(name):
    from scipy import stats

    from lotkit.measures import DiscreteMeasure

    mid = (np.arange(1000) + 0.5) / 1000
    if name == "delta":
        return DiscreteMeasure([[0.5]])
    if name == "two_point":
        return DiscreteMeasure([[0.2], [0.9]])
    if name == "uniform_grid":
        return DiscreteMeasure(mid[:, None])
    if name == "beta":
        w = stats.beta(2, 5).pdf(mid)
        return DiscreteMeasure(mid[:, None], w / w.sum())
    raise ConfigError(f"unknown target {name!r}")


def cmd_capacity(config, out):
    """1-D density check or 2-D gap suite."""
    from lotkit import capacity as cap
    from lotkit.measures import DiscreteMeasure
    from lotkit.sampling import make_rng

    _validate(config, CAPACITY_SCHEMA)
    seed = _seed(config)
    if config["mode"] == "1d":
        targets = config.get("targets", ["delta", "two_point", "uniform_grid", "beta"])
        grids = config.get("grids", [50, 200])
        map_grid = config.get("map_grid", cap.DEFAULT_GRID)
        rows = []
        for k, item in enumerate(targets):
            if isinstance(item, str):
                name, meas = item, _named_target(item)
            else:
                w = item.get("weights")
                if w is not None and len(w) != len(item["support"]):
                    raise ConfigError("target support and weights differ in length")
                name = item.get("name", f"target{k}")
                meas = DiscreteMeasure(np.asarray(item["support"], float)[:, None], w)
            for g in grids:
                rows.append([name, g, cap.density_error(meas, g, map_grid), 2.0 / g])
        _io.write_csv(
            os.path.join(out, "capacity_1d.csv"), ["target", "grid", "w2_error", "bound"], rows
        )
        return

    n_mc = config.get("n_mc", 200_000)
    rng = make_rng(seed)
    combos = []
    if "combos" in config:
        if not config["combos"]:
            raise ConfigError("combo list is empty")
        for c in config["combos"]:
            w = np.asarray(c["weights"], dtype=float)
            if w.size != len(c["b"]):
                raise ConfigError("combo weights and offsets differ in length")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ConfigError("combo weights must sum to 1")
            combos.append(("given", [(float(wi), cap.VertexMapParams(bi)) for wi, bi in zip(w, c["b"])]))
    else:
        n = config.get("n_combos", 200)
        combos = [("random", cap.random_combo(rng, config.get("max_atoms", 50))) for _ in range(n)]
    rows = []
    for k, (src, combo) in enumerate(combos):
        gap, se = cap.counterexample_gap(combo, n_mc, rng.integers(2**63))
        rows.append([k, src, len(combo), gap, se, cap.GAP_BOUND])
    if "search" in config:
        s = config["search"]
        found = cap.search_counterexample(
            n_restarts=s.get("restarts", 100),
            max_atoms=s.get("max_atoms", 30),
            n_fit=s.get("n_fit", 1000),
            n_mc=n_mc,
            seed=rng.integers(2**63),
        )
        for r in found:
            rows.append([len(rows), "search", r["atoms"], r["gap"], r["stderr"], cap.GAP_BOUND])
    if not rows:
        raise ConfigError("no combinations to evaluate")
    _io.write_csv(
        os.path.join(out, "capacity_2d.csv"),
        ["combo_id", "source", "atoms", "gap", "stderr", "lower_bound"],
        rows,
    )
    margins = [r[3] - 3 * r[4] for r in rows]
    _io.write_json(
        os.path.join(out, "capacity_2d_summary.json"),
        {
            "lower_bound": cap.GAP_BOUND,
            "min_gap": min(r[3] for r in rows),
            "min_gap_minus_3se": min(margins),
            "all_above_bound": bool(min(margins) >= cap.GAP_BOUND),
        },
    )


COMMANDS = {
    "lbcm": cmd_lbcm,
    "cov-experiment": cmd_cov_experiment,
    "digits": cmd_digits,
    "capacity": cmd_capacity,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="lotkit", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.strip().split("\n")[0])
        p.add_argument("--config", help="JSON config file (defaults to {})")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default=".", help="output directory (default: .)")
    return parser


def _fail(code, kind, message):
    sys.stderr.write(
        json.dumps({"error": {"type": kind, "message": message, "exit_code": code}}) + "\n"
    )
    return code


def _threads():
    raw = os.environ.get("LOTKIT_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError("LOTKIT_THREADS must be a positive integer")
    return n


def main(argv=None):
    """Run a subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        threads = _threads()
        config = {}
        if args.config is not None:
            if not os.path.isfile(args.config):
                raise ConfigError(f"config file not found: {args.config}")
            with open(args.config, encoding="utf-8") as fh:
                try:
                    config = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"config is not valid JSON: {exc}") from None
            if not isinstance(config, dict):
                raise ConfigError("config must be a JSON object")
        if args.seed is not None:
            if not 0 <= args.seed <= U64_MAX:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            config["seed"] = args.seed
        _io.ensure_dir(args.out)
        with threadpool_limits(limits=threads):
            COMMANDS[args.command](config, args.out)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, type(exc).__name__, str(exc))
    except (LotkitError, ValueError, TypeError, KeyError, OSError) as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc))
    except np.linalg.LinAlgError as exc:
        return _fail(EXIT_NUMERICAL, type(exc).__name__, str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
