"""Command-line front end.

Subcommands operate over a JSON config file whose keys mirror
``ExperimentConfig``; flags override config fields one-for-one. Exit codes:
0 success, 1 runtime failure, 2 usage error, 3 invalid config. Failures
print a single machine-parseable line ``<category>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint, restore_components
from .datasets import Dataset, load_csv, save_csv
from .depmeas import aggregate_profiles, write_summary_csv
from .errors import ConfigError
from .experiment import (ExperimentConfig, ModelBundle, build_dataset,
                         profile_population, run_experiment,
                         sample_population, split_dataset, train_bundle)
from .nets import autoregressive_sample


def _load_config(path, overrides):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    raw.update(overrides)
    return ExperimentConfig.from_dict(raw)


def _config_overrides(args):
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    return out


def _restored_bundle(ckpt_path):
    config, arrays, step, rng_state = load_checkpoint(ckpt_path)
    cfg = ExperimentConfig.from_dict(config)
    bundle = ModelBundle(cfg, np.random.default_rng(cfg.seed))
    restore_components(arrays, bundle.components())
    return cfg, bundle


def cmd_gen_data(args):
    cfg = _load_config(args.config, _config_overrides(args))
    os.makedirs(args.out, exist_ok=True)
    ds = build_dataset(cfg)
    path = os.path.join(args.out, "dataset.csv")
    save_csv(ds, path)
    print(path)
    return 0


def cmd_train(args):
    cfg = _load_config(args.config, _config_overrides(args))
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    dataset = build_dataset(cfg)
    train_ds, _ = split_dataset(dataset, cfg.heldout_frac)
    bundle = ModelBundle(cfg, rng)
    train_bundle(bundle, train_ds, rng)
    from .checkpoint import save_checkpoint
    path = os.path.join(args.out, "checkpoint.npz")
    save_checkpoint(path, cfg.to_dict(), bundle.components(),
                    step=cfg.ae_iters, rng=rng)
    print(path)
    return 0


def cmd_sample(args):
    cfg, bundle = _restored_bundle(args.checkpoint)
    if args.seed is not None:
        cfg.seed = args.seed
    rng = np.random.default_rng(cfg.seed)
    os.makedirs(args.out, exist_ok=True)
    samples = sample_population(bundle, args.n, args.T or cfg.T, rng)
    ds = Dataset("generated", [X for _, X in samples], provenance="sampled")
    path = os.path.join(args.out, "generated.csv")
    save_csv(ds, path)
    print(path)
    return 0


def cmd_diagnose(args):
    cfg, bundle = _restored_bundle(args.checkpoint)
    if args.seed is not None:
        cfg.seed = args.seed
    rng = np.random.default_rng(cfg.seed)
    os.makedirs(args.out, exist_ok=True)
    samples = sample_population(bundle, args.n, cfg.T, rng)
    profiles = profile_population(bundle, samples, cfg.profile_samples,
                                  seed=cfg.seed)
    summary = aggregate_profiles(profiles)
    csv_path = os.path.join(args.out, "profile_summary.csv")
    write_summary_csv(summary, csv_path)
    from .depmeas import profile_to_json_dict
    json_path = os.path.join(args.out, "profiles.json")
    with open(json_path, "w") as fh:
        json.dump([profile_to_json_dict(p) for p in profiles], fh,
                  indent=2, sort_keys=True)
    print(csv_path)
    return 0


def cmd_eval(args):
    from .evalmetrics import wasserstein_eval
    real = load_csv(args.real, normalize=False)
    generated = load_csv(args.generated, normalize=False)
    w1 = wasserstein_eval(real, generated, projections=args.projections,
                          seed=args.seed or 0)
    print(repr(float(w1)))
    return 0


def cmd_run(args):
    cfg = _load_config(args.config, _config_overrides(args))
    report = run_experiment(cfg, args.out)
    print(os.path.join(args.out, "report.json"))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tslatent",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(fn=fn)
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        return sp

    sp = add("gen-data", cmd_gen_data, help="write the configured dataset as CSV")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, help="train a model and write a checkpoint")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)

    sp = add("sample", cmd_sample, help="sample series from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--T", type=int, default=None)
    sp.add_argument("--out", required=True)

    sp = add("diagnose", cmd_diagnose,
             help="dependency profiles from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, help="sliced-W1 between two series CSVs")
    sp.add_argument("--real", required=True)
    sp.add_argument("--generated", required=True)
    sp.add_argument("--projections", type=int, default=128)

    sp = add("run", cmd_run, help="full experiment pipeline")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config-error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - single reporting point
        print(f"runtime-error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
