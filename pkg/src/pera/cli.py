"""Command-line entry points.

Every command accepts ``--seed``, ``--out`` and ``--config``. Option values
resolve in the order: command defaults, then the JSON config file (flat keys
or one level of sections such as ``{"adapter": {"r": 4}}``), then flags given
explicitly on the command line. Failures print one JSON object on stderr and
exit non-zero.
"""

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import adapter as adp
from . import verify as verify_mod
from ._backend import backend_name
from .analysis import interaction_strength, rank_report, term_decomposition
from .errors import ConfigError, ParseError, PeraError
from .expansion import VARIANTS
from .experiments import mlp
from .experiments.ablation import ablation_suite
from .experiments.optim import OptimizerConfig
from .experiments.tasks import make_task
from .experiments.train import build_adapters, train

TOY_FORMAT = "pera-toy-mlp"

ADAPTER_OPTS = {"r": 4, "variant": "full", "alpha": None, "scaling_mode": "alpha_over_r", "init_std": None}
OPTIM_OPTS = {
    "lr": 1e-3,
    "steps": 5000,
    "batch_size": 16,
    "warmup_steps": 0,
    "schedule": "constant",
    "weight_decay": 0.0,
}

COMMAND_DEFAULTS = {
    "verify": {},
    "fit-poly": {**ADAPTER_OPTS, **OPTIM_OPTS, "r": 1, "m": 16, "n": 16, "noise": 0.01},
    "fit-matrix": {**ADAPTER_OPTS, **OPTIM_OPTS, "m": 32, "n": 32, "target_rank": 12},
    "train-toy": {
        **ADAPTER_OPTS,
        **OPTIM_OPTS,
        "steps": 1000,
        "dropout": 0.0,
        "d_in": 8,
        "hidden": 16,
        "classes": 3,
        "n_train": 256,
        "n_test": 128,
    },
    "ablate": {
        **ADAPTER_OPTS,
        **OPTIM_OPTS,
        "task": "matrix",
        "seeds": "1,2,3,4,5",
        "variants": ",".join(VARIANTS),
        "m": None,
        "n": None,
        "target_rank": None,
        "noise": None,
    },
    "interactions": {"model": None, "samples": 64, "step": 1e-3},
    "rank-report": {"adapter": None, "r": 4, "m": 16, "n": 16, "variant": "full", "alpha": None, "scaling_mode": "alpha_over_r"},
}

OPTION_TYPES = {
    "r": int,
    "variant": str,
    "alpha": float,
    "scaling_mode": str,
    "init_std": float,
    "dropout": float,
    "lr": float,
    "steps": int,
    "batch_size": int,
    "warmup_steps": int,
    "schedule": str,
    "weight_decay": float,
    "m": int,
    "n": int,
    "noise": float,
    "target_rank": int,
    "d_in": int,
    "hidden": int,
    "classes": int,
    "n_train": int,
    "n_test": int,
    "task": str,
    "seeds": str,
    "variants": str,
    "model": str,
    "samples": int,
    "step": float,
    "adapter": str,
}

OPTION_CHOICES = {
    "variant": VARIANTS,
    "scaling_mode": adp.SCALING_MODES,
    "schedule": ("constant", "linear"),
    "task": ("poly", "matrix", "toy"),
}


class CliError(Exception):
    def __init__(self, kind, message, code=2):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("UsageError", message)


def build_parser():
    parser = _Parser(prog="pera", description="Polynomial-expansion low-rank adapters: experiments and checks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command, defaults in COMMAND_DEFAULTS.items():
        p = sub.add_parser(command)
        p.add_argument("--seed", type=int, default=None, help="run seed (default 1)")
        p.add_argument("--out", default=None, help=f"output directory (default pera-out/{command})")
        p.add_argument("--config", default=None, help="JSON file overriding the command defaults")
        for name, default in defaults.items():
            p.add_argument(
                "--" + name.replace("_", "-"),
                dest=name,
                type=OPTION_TYPES[name],
                default=None,
                choices=OPTION_CHOICES.get(name),
                help=f"default: {default}",
            )
    return parser


def _flatten_config(doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    flat = {}
    for key, val in doc.items():
        if isinstance(val, dict):
            for sub_key, sub_val in val.items():
                flat[sub_key.replace("-", "_")] = sub_val
        else:
            flat[key.replace("-", "_")] = val
    return flat


def resolve_options(args):
    """Merge command defaults, config-file values and explicit flags."""
    defaults = COMMAND_DEFAULTS[args.command]
    opts = {"seed": 1, "out": f"pera-out/{args.command}", **defaults}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config {args.config}: {exc.msg}", len(text[: exc.pos].encode("utf-8"))) from None
        for key, val in _flatten_config(doc, args.config).items():
            if key not in opts:
                raise ConfigError(f"config key {key!r} is not an option of {args.command!r}")
            if val is not None and key in OPTION_TYPES:
                try:
                    val = OPTION_TYPES[key](val)
                except (TypeError, ValueError):
                    raise ConfigError(f"config key {key!r} has invalid value {val!r}") from None
                if key in OPTION_CHOICES and val not in OPTION_CHOICES[key]:
                    raise ConfigError(f"config key {key!r} must be one of {OPTION_CHOICES[key]}")
            opts[key] = val
    for key in opts:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def _adapter_config(opts, seed):
    return adp.AdapterConfig(
        r=opts["r"],
        alpha=opts.get("alpha"),
        variant=opts["variant"],
        scaling_mode=opts["scaling_mode"],
        init_std=opts.get("init_std"),
        dropout=opts.get("dropout", 0.0),
        seed=seed,
    )


def _optimizer(opts):
    return OptimizerConfig(
        learning_rate=opts["lr"],
        steps=opts["steps"],
        batch_size=opts["batch_size"],
        warmup_steps=opts["warmup_steps"],
        schedule=opts["schedule"],
        weight_decay=opts["weight_decay"],
    )


def _outdir(opts):
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _emit(doc):
    print(json.dumps(doc, sort_keys=True))


def _finish_run(command, opts, record, out):
    _write_text(out / "run.csv", record.to_csv())
    summary = record.summary()
    summary["command"] = command
    summary["backend"] = backend_name()
    _write_json(out / "summary.json", summary)
    line = {"command": command, "seed": record.seed, "out": str(out)}
    line.update({k: record.final[k] for k in ("final_loss", "numeric_rank", "trainable_params") if k in record.final})
    return line


def cmd_verify(opts):
    out = _outdir(opts)
    results = verify_mod.run_all(opts["seed"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["check", "passed", "detail"])
    for name, ok, detail, _secs in results:
        writer.writerow([name, int(ok), detail])
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    _write_text(out / "verify.csv", buf.getvalue())
    passed = sum(ok for _, ok, _, _ in results)
    failed = len(results) - passed
    print(f"verify: {passed} passed, {failed} failed")
    if failed:
        raise CliError("VerificationFailed", f"{failed} of {len(results)} checks failed", code=1)


def cmd_fit_poly(opts):
    out = _outdir(opts)
    task = make_task("poly_regression", {"m": opts["m"], "n": opts["n"], "noise": opts["noise"]}, opts["seed"])
    record = train(build_adapters(task, _adapter_config(opts, opts["seed"])), task, _optimizer(opts))
    adp.save(record.adapters[0], out / "adapter.json")
    _emit(_finish_run("fit-poly", opts, record, out))


def cmd_fit_matrix(opts):
    out = _outdir(opts)
    params = {"m": opts["m"], "n": opts["n"], "target_rank": opts["target_rank"]}
    task = make_task("matrix_approx", params, opts["seed"])
    record = train(build_adapters(task, _adapter_config(opts, opts["seed"])), task, _optimizer(opts))
    adp.save(record.adapters[0], out / "adapter.json")
    line = _finish_run("fit-matrix", opts, record, out)
    line["frobenius_error"] = record.final["frobenius_error"]
    line["eckart_young_floor"] = record.final["eckart_young_floor"]
    _emit(line)


def toy_model_document(task, adapters):
    return {
        "format": TOY_FORMAT,
        "format_version": 1,
        "task": task.to_dict(),
        "layers": [adp.to_dict(ad) for ad in adapters],
    }


def load_toy_model(path):
    """Rebuild ``(task, adapters)`` from a model file; base weights are regenerated from the task seed."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read model {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model {path}: {exc.msg}", len(text[: exc.pos].encode("utf-8"))) from None
    if not isinstance(doc, dict) or doc.get("format") != TOY_FORMAT:
        raise ParseError(f"model {path} is not a {TOY_FORMAT} document")
    if doc.get("format_version") != 1:
        raise ParseError(f"model {path} has unsupported format_version {doc.get('format_version')!r}")
    task_doc = doc.get("task", {})
    if not isinstance(task_doc, dict) or task_doc.get("kind") != "toy_mlp_classification":
        raise ParseError(f"model {path} does not describe a toy MLP task")
    layers = doc.get("layers")
    if not isinstance(layers, list) or len(layers) != 2:
        raise ParseError(f"model {path} must contain exactly two layers")
    task = make_task(task_doc["kind"], task_doc.get("params"), task_doc.get("seed", 1))
    adapters = [adp.from_dict(layer, text) for layer in layers]
    p = task.params
    if (adapters[0].m, adapters[0].n) != (p["hidden"], p["d_in"]) or (adapters[1].m, adapters[1].n) != (p["classes"], p["hidden"]):
        raise ParseError(f"model {path}: adapter shapes do not match the task")
    return task, adapters


def cmd_train_toy(opts):
    out = _outdir(opts)
    params = {k: opts[k] for k in ("d_in", "hidden", "classes", "n_train", "n_test")}
    task = make_task("toy_mlp_classification", params, opts["seed"])
    record = train(build_adapters(task, _adapter_config(opts, opts["seed"])), task, _optimizer(opts))
    for k, ad in enumerate(record.adapters, start=1):
        adp.save(ad, out / f"adapter_layer{k}.json")
    _write_json(out / "model.json", toy_model_document(task, record.adapters))
    line = _finish_run("train-toy", opts, record, out)
    line["test_accuracy"] = record.final["test_accuracy"]
    _emit(line)


def _int_list(text, what):
    try:
        vals = [int(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of integers, got {text!r}") from None
    return vals


def cmd_ablate(opts):
    out = _outdir(opts)
    kind = {"poly": "poly_regression", "matrix": "matrix_approx", "toy": "toy_mlp_classification"}[opts["task"]]
    params = {k: opts[k] for k in ("m", "n", "target_rank", "noise") if opts[k] is not None}
    seeds = _int_list(opts["seeds"], "seeds")
    variants = tuple(v.strip() for v in opts["variants"].split(",") if v.strip())
    extra = {k: opts[k] for k in ("alpha", "scaling_mode", "init_std")}
    result = ablation_suite(kind, params, opts["r"], seeds, _optimizer(opts), variants, extra)
    _write_text(out / "ablation.csv", result.summary_csv())
    _write_text(out / "ablation_runs.csv", result.runs_csv())
    summary = {"command": "ablate", "task": kind, "r": opts["r"], "seeds": seeds, "variants": result.summary()}
    if "lora" in variants:
        summary["wins_over_lora"] = {v: result.wins(v) for v in variants if v != "lora"}
    _write_json(out / "summary.json", summary)
    _emit({"command": "ablate", "out": str(out), "median_final_loss": {v: s["median_final_loss"] for v, s in result.summary().items()}})


def cmd_interactions(opts):
    if not opts["model"]:
        raise ConfigError("interactions needs --model <file> written by train-toy")
    out = _outdir(opts)
    task, adapters = load_toy_model(opts["model"])
    x_test = task.data["x_test"]
    count = opts["samples"]
    if not 1 <= count <= x_test.shape[1]:
        raise ConfigError(f"--samples must lie in [1, {x_test.shape[1]}] (held-out set size)")
    samples = [x_test[:, j] for j in range(count)]
    f = mlp.output_fn(adapters, task.data["w1"], task.data["w2"])
    result = interaction_strength(f, samples, opts["step"])
    _write_text(out / "interactions.csv", result.to_csv())
    summary = {"command": "interactions", "model": str(opts["model"]), "variant": adapters[0].config.variant}
    summary.update({k: v for k, v in result.to_dict().items() if k != "s"})
    _write_json(out / "summary.json", summary)
    _emit(summary)


def cmd_rank_report(opts):
    out = _outdir(opts)
    if opts["adapter"]:
        ad = adp.load(opts["adapter"])
    else:
        cfg = adp.AdapterConfig(
            r=opts["r"], variant=opts["variant"], alpha=opts["alpha"], scaling_mode=opts["scaling_mode"], seed=opts["seed"]
        )
        ad = adp.random_adapter(cfg, opts["m"], opts["n"], np.random.default_rng(opts["seed"]))
    report = rank_report(ad).to_dict()
    report["term_norms"] = term_decomposition(ad).norms()
    report["r"] = ad.r
    report["variant"] = ad.config.variant
    _write_json(out / "rank_report.json", report)
    _emit(report)


HANDLERS = {
    "verify": cmd_verify,
    "fit-poly": cmd_fit_poly,
    "fit-matrix": cmd_fit_matrix,
    "train-toy": cmd_train_toy,
    "ablate": cmd_ablate,
    "interactions": cmd_interactions,
    "rank-report": cmd_rank_report,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        opts = resolve_options(args)
        HANDLERS[args.command](opts)
    except CliError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.code
    except (ConfigError, ParseError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except (PeraError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
