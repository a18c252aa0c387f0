"""Batch experiment runner: verify | train | klsweep | spectral | bounds.

Configs are JSON documents validated against a published schema (unknown
keys are rejected so a typo cannot silently drop a hyperparameter). Every
output directory is named by the config's SHA-256 so reruns land in the
same place with the same bytes.

Exit codes: 0 success, 1 validation failure, 2 runtime failure,
3 invariant failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, data, optim, pacbayes, spectral, verify
from .composite import BetaWeights, Scheme
from .losses import LossKind
from .netcore import MLPSpec

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_INVARIANT = 3

_SCHEME_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["single", "multi", "nonlinear"]},
        "index": {"type": "integer", "minimum": 0},
        "p": {"type": "number", "minimum": 1.0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "layer_widths": {"type": "array", "items": {"type": "integer", "minimum": 1},
                         "minItems": 2},
        "hidden_activation": {"enum": ["sigmoid", "tanh", "relu"]},
        "output_kind": {"enum": ["linear", "softmax", "sigmoid"]},
    },
    "required": ["layer_widths"],
    "additionalProperties": False,
}

_DATASET_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["two_moons", "blobs", "cifar10_bin"]},
        "n": {"type": "integer", "minimum": 2},
        "noise": {"type": "number", "minimum": 0},
        "classes": {"type": "integer", "minimum": 2},
        "per_class": {"type": "integer", "minimum": 1},
        "dim": {"type": "integer", "minimum": 1},
        "spread": {"type": "number", "minimum": 0},
        "path": {"type": "string"},
        "max_records": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "val_fraction": {"type": "number", "exclusiveMinimum": 0,
                         "exclusiveMaximum": 1},
        "split_seed": {"type": "integer"},
        "randomize_level": {"type": "number", "minimum": 0, "maximum": 1},
        "randomize_seed": {"type": "integer"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_TRAIN_FIELDS = {
    "terms": {"type": "array", "items": {"enum": ["ce", "mse", "jsd"]},
              "minItems": 1},
    "mode": {"enum": ["weighted", "unweighted"]},
    "optimizer": {"enum": ["sgd", "momentum", "adam"]},
    "learning_rate": {"type": "number", "exclusiveMinimum": 0},
    "momentum": {"type": "number", "minimum": 0},
    "epochs": {"type": "integer", "minimum": 1},
    "batch_size": {"type": "integer", "minimum": 1},
    "noise_eps": {"type": "number", "minimum": 0},
    "warmup_epochs": {"type": "integer", "minimum": 0},
    "l2_reg": {"type": "number", "minimum": 0},
    "init_scale": {"type": "number", "minimum": 0},
    "beta_rule": {"enum": ["softmax", "paper-max", "fixed"]},
    "fixed_betas": {"type": "array", "items": {"type": "number"}},
}

_BOUND_SCHEMA = {
    "type": "object",
    "properties": {
        "lambda": {"type": "number"},
        "l_max": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "m": {"type": "integer", "minimum": 2},
        "eps_dp": {"type": "number", "minimum": 0},
    },
    "required": ["lambda", "l_max", "delta"],
    "additionalProperties": False,
}

TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "dataset": _DATASET_SCHEMA,
        "model": _MODEL_SCHEMA,
        "train": {"type": "object", "properties": _TRAIN_FIELDS,
                  "additionalProperties": False},
        "schemes": {"type": "array", "items": _SCHEME_SCHEMA, "minItems": 1},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "bound": _BOUND_SCHEMA,
    },
    "required": ["dataset", "model", "schemes", "seeds"],
    "additionalProperties": False,
}

KLSWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "grid": {
            "type": "object",
            "properties": {
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "points": {"type": "integer", "minimum": 3},
            },
            "required": ["lo", "hi", "points"],
            "additionalProperties": False,
        },
        "p_list": {"type": "array", "items": {"type": "number", "minimum": 1},
                   "minItems": 1},
        "betas": {"type": "array", "items": {"type": "number"}, "minItems": 2,
                  "maxItems": 2},
    },
    "required": [],
    "additionalProperties": False,
}

SPECTRAL_SCHEMA = {
    "type": "object",
    "properties": {
        "frequencies": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "amplitudes": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "n_points": {"type": "integer", "minimum": 8},
        "width": {"type": "integer", "minimum": 1},
        "epochs": {"type": "integer", "minimum": 1},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "init_scale": {"type": "number", "minimum": 0},
        "threshold": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "schemes": {"type": "array", "items": _SCHEME_SCHEMA, "minItems": 1},
        "seed": {"type": "integer"},
    },
    "required": ["schemes"],
    "additionalProperties": False,
}

BOUNDS_SCHEMA = {
    "type": "object",
    "properties": {
        "dataset": _DATASET_SCHEMA,
        "model": _MODEL_SCHEMA,
        "train": {"type": "object", "properties": _TRAIN_FIELDS,
                  "additionalProperties": False},
        "scheme": _SCHEME_SCHEMA,
        "posterior": {
            "type": "object",
            "properties": {
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "params_file": {"type": "string"},
            },
            "required": ["sigma"],
            "additionalProperties": False,
        },
        "prior": {
            "type": "object",
            "properties": {"lambda_p": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["lambda_p"],
            "additionalProperties": False,
        },
        "bound": _BOUND_SCHEMA,
        "n_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
    "required": ["dataset", "model", "posterior", "prior", "bound"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def _load_config(path: str, schema: dict) -> tuple[dict, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {err.message}")
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()
    return config, digest


def _scheme_from(doc: dict) -> Scheme:
    return Scheme(kind=doc["kind"], index=doc.get("index", 0),
                  p=doc.get("p", 1.0))


def _dataset_from(doc: dict) -> tuple[data.Dataset, data.Dataset]:
    kind = doc["kind"]
    seed = doc.get("seed", 0)
    if kind == "two_moons":
        full = data.two_moons(doc.get("n", 400), doc.get("noise", 0.1), seed)
    elif kind == "blobs":
        full = data.gaussian_blobs(doc.get("classes", 3), doc.get("per_class", 100),
                                   doc.get("dim", 2), doc.get("spread", 0.5), seed)
    else:
        full = data.load_cifar10_bin(doc["path"], doc.get("max_records", 3000))
    level = doc.get("randomize_level", 0.0)
    if level > 0:
        full = data.randomize_labels(full, level, doc.get("randomize_seed", seed))
    return data.train_val_split(full, doc.get("val_fraction", 0.75),
                                doc.get("split_seed", seed))


def _model_from(doc: dict) -> MLPSpec:
    return MLPSpec(layer_widths=tuple(doc["layer_widths"]),
                   hidden_activation=doc.get("hidden_activation", "tanh"),
                   output_kind=doc.get("output_kind", "softmax"))


def _train_config_from(doc: dict, scheme: Scheme, seed: int) -> optim.TrainConfig:
    kwargs = dict(doc)
    if "terms" in kwargs:
        kwargs["terms"] = tuple(LossKind(t) for t in kwargs["terms"])
    if "fixed_betas" in kwargs:
        kwargs["fixed_betas"] = tuple(kwargs["fixed_betas"])
    return optim.TrainConfig(scheme=scheme, seed=seed, **kwargs)


def _bound_params_from(doc: dict, m: int) -> pacbayes.BoundParams:
    return pacbayes.BoundParams(lam=doc["lambda"], l_max=doc["l_max"],
                                delta=doc["delta"], m=doc.get("m", m),
                                eps_dp=doc.get("eps_dp", 0.0))


def _out_dir(args, command: str, digest: str) -> Path:
    base = Path(args.out) if args.out else Path("runs")
    return base / f"{command}-{digest[:12]}"


def _slug(scheme: Scheme) -> str:
    if scheme.kind == "single":
        return f"single{scheme.index}"
    if scheme.kind == "multi":
        return "multi"
    return f"nonlinear{scheme.p:g}"


def cmd_verify(args) -> int:
    summary = verify.run_all()
    out = Path(args.out) if args.out else Path("runs")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "verify_summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    for item in summary["invariants"]:
        status = "pass" if item["passed"] else "FAIL"
        print(f"[{status}] {item['name']}: {item['detail']}")
    print(f"summary written to {path}")
    if not summary["all_passed"]:
        failing = [i["name"] for i in summary["invariants"] if not i["passed"]]
        print(f"failing invariants: {', '.join(failing)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_train(args) -> int:
    config, digest = _load_config(args.config, TRAIN_SCHEMA)
    out = _out_dir(args, "train", digest)
    spec = _model_from(config["model"])
    train_set, val_set = _dataset_from(config["dataset"])
    schemes = [_scheme_from(s) for s in config["schemes"]]
    seeds = ([args.seed_override] if args.seed_override is not None
             else list(config["seeds"]))
    bound_doc = config.get("bound")
    if bound_doc is not None:
        _bound_params_from(bound_doc, m=train_set.n)  # validate before any run

    jobs = []
    for scheme in schemes:
        for seed in seeds:
            jobs.append((scheme, seed))

    def run_one(job):
        scheme, seed = job
        cfg = _train_config_from(config.get("train", {}), scheme, seed)
        record = optim.train(spec, train_set, val_set, cfg)
        run_dir = out / f"{_slug(scheme)}-seed{seed}"
        extra = {}
        if bound_doc is not None:
            params = pacbayes.BoundParams(
                lam=bound_doc["lambda"], l_max=bound_doc["l_max"],
                delta=bound_doc["delta"], m=bound_doc.get("m", train_set.n),
                eps_dp=bound_doc.get("eps_dp", 0.0))
            q = pacbayes.GaussianPosterior(mean=record.final_params, sigma=0.05)
            prior = pacbayes.GaussianPrior(lambda_p=1.0)
            cert = pacbayes.risk_certificate(q, prior, spec, val_set, params,
                                             n_samples=50, seed=seed)
            extra["certificate"] = cert.to_json_dict()
        optim.save_run(run_dir, record, cfg, config_hash=digest, extra_meta=extra)
        return run_dir

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            dirs = list(pool.map(run_one, jobs))
    else:
        dirs = [run_one(j) for j in jobs]
    print(f"{len(dirs)} runs written under {out}")
    return EXIT_OK


def cmd_klsweep(args) -> int:
    config, digest = _load_config(args.config, KLSWEEP_SCHEMA)
    out = _out_dir(args, "klsweep", digest)
    grid_doc = config.get("grid", {"lo": -3.0, "hi": 3.0, "points": 601})
    if grid_doc["lo"] >= grid_doc["hi"]:
        raise ConfigError("config field grid: lo must be below hi")
    L1, L2, p_opt = analysis.default_kl_testbed(grid_doc["lo"], grid_doc["hi"],
                                                grid_doc["points"])
    betas_doc = config.get("betas", [0.5, 0.5])
    betas = BetaWeights(tuple(betas_doc))
    p_list = config.get("p_list", [1.0, 2.0, 3.0, 4.0])
    report = analysis.scheme_kl_report(L1, L2, p_opt, betas, p_list)
    out.mkdir(parents=True, exist_ok=True)
    payload = json.loads(report.to_json_text())
    payload["config_sha256"] = digest
    (out / "kl_report.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"report written to {out / 'kl_report.json'}")
    return EXIT_OK


def cmd_spectral(args) -> int:
    config, digest = _load_config(args.config, SPECTRAL_SCHEMA)
    out = _out_dir(args, "spectral", digest)
    freqs = tuple(config.get("frequencies", [1.0, 3.0, 5.0]))
    amps = tuple(config.get("amplitudes", [1.0] * len(freqs)))
    if len(amps) != len(freqs):
        raise ConfigError("config field amplitudes: must match frequencies")
    target = spectral.SpectralTarget(frequencies=freqs, amplitudes=amps,
                                     n_points=config.get("n_points", 256))
    schemes = [_scheme_from(s) for s in config["schemes"]]
    seed = (args.seed_override if args.seed_override is not None
            else config.get("seed", 1))
    base = optim.TrainConfig(
        scheme=Scheme.multi(),
        learning_rate=config.get("learning_rate", 0.02),
        init_scale=config.get("init_scale", 3.0),
        optimizer="adam", epochs=config.get("epochs", 1200),
        batch_size=target.n_points, seed=seed)
    comparison = spectral.spectral_scheme_compare(
        base, schemes, target, epochs=config.get("epochs", 1200), seed=seed,
        width=config.get("width", 200), threshold=config.get("threshold", 0.2))
    out.mkdir(parents=True, exist_ok=True)
    (out / "capture.csv").write_text(comparison.to_csv_text())
    payload = json.loads(comparison.to_json_text())
    payload["config_sha256"] = digest
    (out / "capture.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"capture reports written under {out}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    config, digest = _load_config(args.config, BOUNDS_SCHEMA)
    out = _out_dir(args, "bounds", digest)
    spec = _model_from(config["model"])
    train_set, val_set = _dataset_from(config["dataset"])
    seed = (args.seed_override if args.seed_override is not None
            else config.get("seed", 0))
    post_doc = config["posterior"]
    if "params_file" in post_doc:
        path = Path(post_doc["params_file"])
        if not path.exists():
            raise ConfigError(f"config field posterior/params_file: "
                              f"missing model file {path}")
        mean = np.load(path)["params"]
    else:
        scheme = _scheme_from(config.get("scheme", {"kind": "multi"}))
        cfg = _train_config_from(config.get("train", {}), scheme, seed)
        record = optim.train(spec, train_set, val_set, cfg)
        mean = record.final_params
    q = pacbayes.GaussianPosterior(mean=mean, sigma=post_doc["sigma"])
    prior = pacbayes.GaussianPrior(lambda_p=config["prior"]["lambda_p"])
    params = _bound_params_from(config["bound"], m=train_set.n)
    cert = pacbayes.risk_certificate(q, prior, spec, val_set, params,
                                     n_samples=config.get("n_samples", 100),
                                     seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    payload = cert.to_json_dict()
    payload["config_sha256"] = digest
    (out / "certificate.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True))
    print(f"certificate written to {out / 'certificate.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lossmix",
        description="Experiment runner for the composed-loss training lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in [("verify", False), ("train", True),
                               ("klsweep", True), ("spectral", True),
                               ("bounds", True)]:
        cmd = sub.add_parser(name)
        if needs_config:
            cmd.add_argument("--config", required=True, help="JSON config path")
        cmd.add_argument("--out", default=None, help="output directory root")
        cmd.add_argument("--jobs", type=int, default=1,
                         help="concurrent runs where a config lists several")
        cmd.add_argument("--seed-override", type=int, default=None,
                         help="replace every seed in the config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"verify": cmd_verify, "train": cmd_train, "klsweep": cmd_klsweep,
                "spectral": cmd_spectral, "bounds": cmd_bounds}
    try:
        return handlers[args.command](args)
    except (ConfigError, jsonschema.ValidationError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
