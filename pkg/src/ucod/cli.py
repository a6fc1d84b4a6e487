"""Command-line front end.

Exit codes: 0 success, 1 input or configuration error (including bad
arguments), 2 runtime failure. Diagnostics go to stderr, results to files.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, dataio, plotting
from .backbone import extract_features
from .config import TrainConfig, load_config, parse_config_text
from .errors import ConfigError, InputError, UcodError
from .fixed_strategy import SEED_VARIANT, generate_label
from .metrics import METRIC_NAMES, bucket_report, evaluate
from .synthetic import write_corpus

log = logging.getLogger("ucod")

RUN_ROOT_ENV = "UCOD_RUN_ROOT"
INTERPOLATION = "bilinear, aligned corners"


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _config(args) -> TrainConfig:
    values = {}
    if getattr(args, "config", None):
        config = load_config(args.config)
        values = config.to_flat()
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        values.update(parse_config_text(item))
    return TrainConfig.from_flat(values)


def _manifest(out_dir: str, command: str, config: TrainConfig | None, outputs: list[str],
              timings: dict, skipped=(), **extra) -> str:
    for path in outputs:
        if not os.path.exists(path):
            raise UcodError(f"internal error: declared output {path} was not written")
    data = {"command": command, "code_version": f"ucod {__version__}",
            "timings_s": {k: round(v, 6) for k, v in timings.items()},
            "outputs": sorted(os.path.relpath(p, out_dir) for p in outputs),
            "skipped": list(skipped), **extra}
    if config is not None:
        data["config"] = config.to_flat()
        data["seeds"] = {"train": config.seed, "backbone": config.backbone.seed}
        data["backbone"] = config.backbone.provenance()
        data["fixed_strategy_variant"] = SEED_VARIANT if config.fixed_strategy == "background-seed" else None
        data["interpolation"] = INTERPOLATION
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
    return path


def _images(directory: str):
    images = dataio.load_images(directory)
    if not images.images:
        raise InputError(f"no readable images in {directory}")
    return images


def cmd_generate_pseudo(args) -> int:
    from .trainer import prepare_image
    config = _config(args)
    if args.strategy:
        config = config.replace(fixed_strategy=args.strategy)
    t0 = time.perf_counter()
    images = _images(args.data)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for index, image in enumerate(images.images):
        feats = extract_features(prepare_image(image, config), config.backbone)
        seed = config.seed * 1_000_003 + index
        label = generate_label(config.fixed_strategy, feats, seed=seed, null_value=config.null_value,
                               perlin_threshold=config.perlin_threshold,
                               similarity_threshold=config.similarity_threshold)
        png = os.path.join(args.out, f"{image.source_id}.png")
        sidecar = os.path.join(args.out, f"{image.source_id}.json")
        dataio.write_mask(png, label.values)
        meta = {"strategy": config.fixed_strategy, "seed": seed, "resolution": "patch_grid",
                "grid": list(label.shape), "degenerate": bool(label.meta.get("degenerate", False)),
                **{k: v for k, v in label.meta.items() if k not in ("strategy", "degenerate")}}
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        outputs += [png, sidecar]
    _manifest(args.out, "generate-pseudo", config, outputs,
              {"generate": time.perf_counter() - t0}, images.skipped)
    return 0


def _run_dir(args, config) -> str:
    if args.run_dir:
        return args.run_dir
    root = os.environ.get(RUN_ROOT_ENV, "runs")
    return os.path.join(root, f"train-seed{config.seed}-{time.strftime('%Y%m%d-%H%M%S')}")


def cmd_train(args) -> int:
    from .config import dump_config
    from .trainer import fit
    config = _config(args)
    if args.data:
        config = config.replace(data_dir=args.data)
    if not config.data_dir:
        raise ConfigError("no training data: pass --data or set data_dir in the config")
    images = _images(config.data_dir)
    run_dir = _run_dir(args, config)
    os.makedirs(run_dir, exist_ok=True)
    config_path = os.path.join(run_dir, "config.txt")
    with open(config_path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(config))
    state = fit(images.images, config, run_dir=run_dir)
    ckpt_dir = os.path.join(run_dir, "checkpoints")
    outputs = [config_path, os.path.join(run_dir, "metrics.log")]
    outputs += [os.path.join(ckpt_dir, f) for f in sorted(os.listdir(ckpt_dir))]
    _manifest(run_dir, "train", config, outputs, state.timings, images.skipped,
              n_images=len(images.images), final_checkpoint=os.path.join("checkpoints", "final.npz"))
    print(os.path.join(ckpt_dir, "final.npz"))
    return 0


def cmd_infer(args) -> int:
    from .trainer import infer, load_state
    config = _config(args)
    if args.tau is not None:
        config = config.replace(tau=args.tau)
    look_twice = config.look_twice if args.look_twice is None else args.look_twice
    state = load_state(args.checkpoint, config)
    images = _images(args.data)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    outputs = []
    for image in images.images:
        coarse = infer(image, state, config, look_twice=False)
        path = os.path.join(args.out, f"{image.source_id}.png")
        dataio.write_mask(path, coarse.values)
        outputs.append(path)
        if look_twice:
            refined = infer(image, state, config, look_twice=True)
            lt_path = os.path.join(args.out, f"{image.source_id}.lt.png")
            json_path = os.path.join(args.out, f"{image.source_id}.regions.json")
            dataio.write_mask(lt_path, refined.values)
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump({"tau": config.tau, "regions": refined.meta["regions"],
                           "failed": refined.meta["failed"]}, fh, indent=2, sort_keys=True)
            outputs += [lt_path, json_path]
    _manifest(args.out, "infer", config, outputs, {"infer": time.perf_counter() - t0},
              images.skipped, checkpoint=os.path.abspath(args.checkpoint), look_twice=look_twice)
    return 0


def _write_table(path: str, rows: list[dict], columns: list[str]) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return path


def _report_paths(report: str) -> tuple[str, str]:
    """Output directory and file stem for ``--report``; siblings share the stem."""
    out_dir = os.path.dirname(os.path.abspath(report))
    os.makedirs(out_dir, exist_ok=True)
    return out_dir, os.path.splitext(os.path.abspath(report))[0]


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    pairs = dataio.load_eval_pairs(args.pred, args.gt, args.suffix)
    report, per_image = evaluate(pairs)
    out_dir, stem = _report_paths(args.report)
    rows = [{"name": p.name, **r} for p, r in zip(pairs, per_image)]
    json_path = os.path.abspath(args.report)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"metrics": report.as_dict(), "e_measure_variant": "mean", "per_image": rows},
                  fh, indent=2, sort_keys=True)
    csv_path = _write_table(f"{stem}.csv", rows, ["name", *METRIC_NAMES])
    txt_path = f"{stem}.txt"
    with open(txt_path, "w", encoding="utf-8") as fh:
        for key in METRIC_NAMES:
            fh.write(f"{key:<12}{getattr(report, key):.4f}\n")
        fh.write(f"{'n_images':<12}{report.n_images}\n")
    png_path = plotting.plot_report(report, f"{stem}.png")
    _manifest(out_dir, "evaluate", None, [json_path, csv_path, txt_path, png_path],
              {"evaluate": time.perf_counter() - t0}, pred_dir=os.path.abspath(args.pred),
              gt_dir=os.path.abspath(args.gt))
    with open(txt_path, encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_bucket_report(args) -> int:
    t0 = time.perf_counter()
    pairs = dataio.load_eval_pairs(args.pred, args.gt, args.suffix)
    rows = bucket_report(pairs, args.interval)
    out_dir, stem = _report_paths(args.report)
    json_path = os.path.abspath(args.report)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"interval": args.interval, "buckets": [r.as_dict() for r in rows]}, fh, indent=2)
    csv_path = _write_table(f"{stem}.csv", [r.as_dict() for r in rows],
                            ["lo", "hi", "count", *METRIC_NAMES])
    png_path = plotting.plot_buckets(rows, f"{stem}.png")
    _manifest(out_dir, "bucket-report", None, [json_path, csv_path, png_path],
              {"bucket_report": time.perf_counter() - t0}, interval=args.interval)
    return 0


def cmd_make_synthetic(args) -> int:
    t0 = time.perf_counter()
    stems = write_corpus(args.out, args.n, args.size, args.seed)
    outputs = [os.path.join(args.out, f"{s}.png") for s in stems]
    outputs += [os.path.join(args.out, "gt", f"{s}.png") for s in stems]
    _manifest(args.out, "make-synthetic", None, outputs, {"write": time.perf_counter() - t0},
              seeds={"corpus": args.seed}, n=args.n, size=args.size)
    return 0


def _interval(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError("interval must lie in (0, 1]")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ucod", description="Unsupervised camouflaged object detection.")
    parser.add_argument("--version", action="version", version=f"ucod {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def config_args(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("generate-pseudo", help="write fixed-strategy pseudo-labels")
    config_args(p)
    p.add_argument("--data", required=True, help="image directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--strategy", choices=("background-seed", "null", "perlin"),
                   help="overrides fixed_strategy from the config")
    p.set_defaults(func=cmd_generate_pseudo)

    p = sub.add_parser("train", help="train the decoder on an unlabeled image directory")
    config_args(p)
    p.add_argument("--data", help="image directory (overrides data_dir)")
    p.add_argument("--run-dir", help=f"run directory (default: ${RUN_ROOT_ENV}/train-seed<N>-<time>)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict masks with a trained checkpoint")
    config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="image directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--look-twice", dest="look_twice", action="store_true", default=None,
                   help="also write refined <name>.lt.png masks")
    p.add_argument("--no-look-twice", dest="look_twice", action="store_false")
    p.add_argument("--tau", type=float, help="small-region area ratio threshold")
    p.set_defaults(func=cmd_infer)

    for name, func, helptext in (("evaluate", cmd_evaluate, "score predictions against ground truth"),
                                 ("bucket-report", cmd_bucket_report, "metrics per foreground-size bucket")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--pred", required=True, help="directory of predicted masks")
        p.add_argument("--gt", required=True, help="directory of ground-truth masks")
        p.add_argument("--report", required=True,
                       help="JSON report path; .txt, .csv and .png siblings share its stem")
        p.add_argument("--suffix", default="", help="prediction stem suffix, e.g. .lt")
        if name == "bucket-report":
            p.add_argument("--interval", type=_interval, default=0.02, help="bucket width (default 0.02)")
        p.set_defaults(func=func)

    p = sub.add_parser("make-synthetic", help="write the seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("ucod: a command is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
