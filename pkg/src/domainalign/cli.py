"""Command-line front end.

Commands: synth, train, eval, retrieve, gradcheck. Configuration is a flat
key=value text file; any `--key value` pair on the command line overrides
it. Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import gradcheck, retrieval, trainer
from .data import (
    SynthConfig,
    generate_synthetic,
    load_feature_file,
    split_train_test,
    write_feature_file,
)
from .encoder import encode
from .numerics import InvalidInputError

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


class ConfigError(ValueError):
    pass


SYNTH_KEYS = {
    "num_classes": int,
    "samples_per_class": int,
    "input_dim": int,
    "prototype_separation": float,
    "rotation_strength": float,
    "bias_scale": float,
    "noise_sigma": float,
    "split_ratio": float,
}
TRAIN_KEYS = {
    "eta": float,
    "batch_size": int,
    "lam": float,
    "epochs": int,
    "tau": float,
    "lr": float,
    "n_k": int,
    "n_runs": int,
    "embed_dim": int,
    "hidden_dims": str,
    "variant": str,
}
PATH_KEYS = {
    "train_a": str, "train_b": str, "test_a": str, "test_b": str,
    "checkpoint": str, "queries": str, "gallery": str,
}
MISC_KEYS = {"top_k": int, "binary": int}

ALL_KEYS = {**SYNTH_KEYS, **TRAIN_KEYS, **PATH_KEYS, **MISC_KEYS}

DEFAULTS = {
    "num_classes": 10, "samples_per_class": 50, "input_dim": 32,
    "prototype_separation": 2.0, "rotation_strength": 0.5,
    "bias_scale": 0.5, "noise_sigma": 0.1, "split_ratio": 0.8,
    "eta": 0.95, "batch_size": 16, "lam": 0.01, "epochs": 20,
    "tau": 0.01, "lr": 0.003, "n_k": 10, "n_runs": 4,
    "embed_dim": 64, "hidden_dims": "128", "variant": "full",
    "top_k": 10, "binary": 0,
}


def load_config(path):
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def resolve_config(args, extra):
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or i + 1 >= len(extra):
            raise ConfigError(f"cannot parse override {tok!r}")
        cfg[tok[2:]] = extra[i + 1]
        i += 2
    out = {}
    for key, value in cfg.items():
        if key not in ALL_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = ALL_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {value!r}") from None
    return out


def hyperparams_from(cfg, seed):
    hidden = tuple(int(h) for h in str(cfg["hidden_dims"]).split(",") if h)
    hp = trainer.Hyperparams(
        eta=cfg["eta"], batch_size=cfg["batch_size"], lam=cfg["lam"],
        epochs=cfg["epochs"], tau=cfg["tau"], lr=cfg["lr"], n_k=cfg["n_k"],
        n_runs=cfg["n_runs"], hidden_dims=hidden, embed_dim=cfg["embed_dim"],
        seed=seed, variant=cfg["variant"])
    hp.validate()
    return hp


def _require_paths(cfg, keys):
    for key in keys:
        if key not in cfg or not cfg[key]:
            raise ConfigError(f"missing required path {key!r}")
        if not Path(cfg[key]).exists():
            raise ConfigError(f"{key}: no such file {cfg[key]!r}")


def cmd_synth(cfg, seed, out_dir):
    synth = SynthConfig(
        num_classes=cfg["num_classes"],
        samples_per_class_per_domain=cfg["samples_per_class"],
        input_dim=cfg["input_dim"],
        prototype_separation=cfg["prototype_separation"],
        domain_rotation_strength=cfg["rotation_strength"],
        domain_bias_scale=cfg["bias_scale"],
        noise_sigma=cfg["noise_sigma"],
        seed=seed,
    )
    synth.validate()
    ds_a, ds_b = generate_synthetic(synth)
    binary = bool(cfg["binary"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for ds, tag in ((ds_a, "a"), (ds_b, "b")):
        train, test = split_train_test(ds, cfg["split_ratio"], seed)
        write_feature_file(out_dir / f"{tag}-train.feat", train, binary=binary)
        write_feature_file(out_dir / f"{tag}-test.feat", test, binary=binary)
    print(f"wrote {out_dir}/a-train.feat a-test.feat b-train.feat b-test.feat")


def cmd_train(cfg, seed, out_dir):
    _require_paths(cfg, ("train_a", "train_b", "test_a", "test_b"))
    hp = hyperparams_from(cfg, seed)
    train_a = load_feature_file(cfg["train_a"])
    train_b = load_feature_file(cfg["train_b"])
    test_a = load_feature_file(cfg["test_a"])
    test_b = load_feature_file(cfg["test_b"])
    state, summary = trainer.train(train_a, train_b, test_a, test_b, hp)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer.save_checkpoint(out_dir / "checkpoint.bin", state)
    trainer.write_metrics_csv(out_dir / "metrics.csv", state.history, summary)
    for direction in ("A->B", "B->A"):
        s = summary[direction]
        print(f"{direction}  best mAP@All {s['best']:.4f}  last {s['last']:.4f}")


def cmd_eval(cfg, seed, out_dir):
    _require_paths(cfg, ("checkpoint", "test_a", "test_b"))
    state = trainer.load_checkpoint(cfg["checkpoint"])
    test_a = load_feature_file(cfg["test_a"])
    test_b = load_feature_file(cfg["test_b"])
    if test_a.dim != state.params.input_dim:
        raise ConfigError(
            f"feature dim {test_a.dim} != checkpoint input dim "
            f"{state.params.input_dim}")
    rep_ab, rep_ba = trainer.evaluate_cross_domain(state.params, test_a, test_b)
    out_dir.mkdir(parents=True, exist_ok=True)
    retrieval.write_report_csv(out_dir / "eval.csv", [rep_ab, rep_ba])
    table = retrieval.format_report_table([rep_ab, rep_ba])
    (out_dir / "eval.txt").write_text(table + "\n")
    print(table)


def cmd_retrieve(cfg, seed, out_dir):
    _require_paths(cfg, ("checkpoint", "queries", "gallery"))
    state = trainer.load_checkpoint(cfg["checkpoint"])
    queries = load_feature_file(cfg["queries"])
    gallery = load_feature_file(cfg["gallery"])
    top_k = cfg["top_k"]
    if top_k > len(gallery):
        print(f"warning: top_k {top_k} > gallery size {len(gallery)}, clamping",
              file=sys.stderr)
        top_k = len(gallery)
    q_feats = encode(state.params, queries.features)
    g_feats = encode(state.params, gallery.features)
    g_ids = gallery.ids
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "retrieval.csv"
    with open(out_path, "w") as f:
        f.write("query_id,rank,gallery_id,similarity\n")
        for qid, q in zip(queries.ids, q_feats):
            ids, sims = retrieval.rank(q, g_feats, g_ids)
            for pos in range(top_k):
                f.write(f"{qid},{pos + 1},{ids[pos]},{float(sims[pos])!r}\n")
    print(f"wrote {out_path}")


def cmd_gradcheck(cfg, seed, out_dir):
    rows = gradcheck.run_suite(seed=seed)
    ok = True
    for row in rows:
        status = "pass" if row.passed else "FAIL"
        print(f"{row.name:<16} rel_err {row.rel_err:.3e}  {status}")
        ok = ok and row.passed
    if not ok:
        raise RuntimeError("gradient check failed")


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "retrieve": cmd_retrieve,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="domainalign",
        description="Two-domain feature alignment and cross-domain retrieval")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out", default="out")
    args, extra = parser.parse_known_args(argv)

    try:
        cfg = resolve_config(args, extra)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    def run():
        try:
            COMMANDS[args.command](cfg, args.seed, Path(args.out))
        except (ConfigError, InvalidInputError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except Exception as exc:
            print(f"runtime error: {exc}", file=sys.stderr)
            return 2
        return 0

    if args.threads is not None and threadpool_limits is not None:
        with threadpool_limits(limits=args.threads):
            return run()
    return run()


if __name__ == "__main__":
    sys.exit(main())
