"""Command-line entry point.

Subcommands mirror the pipeline's checkpoints: train-basis, featurize,
train-eval, and run-all to chain them. gen-synth materializes a small
synthetic dataset (with a ready config file) for trying the pipeline out
without any audio data. Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

import argparse
import json
import logging
import os
import sys

from .config import load_config
from .pipeline import cmd_featurize, cmd_train_and_eval, cmd_train_basis, run_all
from .synthgen import SynthSpec, write_dataset


def _add_common(parser):
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--output-dir", default=None,
                        help="override the config output directory")
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker pool size for parallel stages")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geotag",
        description="Predict the city of origin of audio recordings from "
                    "their urban sound-class composition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, description in (
        ("train-basis", "learn per-sound-class basis matrices"),
        ("featurize", "build clip-level features for the city manifest"),
        ("train-eval", "train per-city SVMs and evaluate retrieval"),
        ("run-all", "run the three stages in sequence"),
    ):
        _add_common(sub.add_parser(name, help=description))
    synth = sub.add_parser("gen-synth",
                           help="generate a synthetic dataset plus config")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--cities", type=int, default=4)
    synth.add_argument("--classes", type=int, default=6)
    synth.add_argument("--per-city", type=int, default=40,
                       help="train and test recordings per city")
    synth.add_argument("--clip-frames", type=int, default=100)
    synth.add_argument("--noise", type=float, default=0.0)
    synth.add_argument("--jitter", type=float, default=1.0,
                       help="per-frame loudness jitter factor (1 = none)")
    return parser


def _run(args):
    if args.command == "gen-synth":
        spec = SynthSpec(
            n_cities=args.cities,
            n_classes=args.classes,
            train_per_city=args.per_city,
            test_per_city=args.per_city,
            clip_frames=args.clip_frames,
            noise_sigma=args.noise,
            loudness_jitter=args.jitter,
            seed=args.seed,
        )
        paths = write_dataset(spec, args.out)
        config_doc = {
            "sound_class_manifest": "classes.csv",
            "city_manifest": "cities.csv",
            "featurizer": "h",
            "fusion": "product",
            "k": spec.k_true,
            "G": 8,
            "input_kind": "features",
            "output_dir": "out",
            "seed": args.seed,
        }
        config_path = os.path.join(args.out, "config.json")
        with open(config_path, "w", encoding="utf-8") as fh:
            json.dump(config_doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(f"wrote {paths['class_manifest']}, {paths['city_manifest']} "
              f"and {config_path}")
        return

    config = load_config(args.config, seed=args.seed,
                         output_dir=args.output_dir, jobs=args.jobs)
    if args.command == "train-basis":
        for class_name, path in sorted(cmd_train_basis(config).items()):
            print(f"{class_name}: {path}")
    elif args.command == "featurize":
        print(cmd_featurize(config))
    elif args.command == "train-eval":
        report = cmd_train_and_eval(config)
        print(report.to_text_table(), end="")
    elif args.command == "run-all":
        report = run_all(config)
        print(report.to_text_table(), end="")


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        _run(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
