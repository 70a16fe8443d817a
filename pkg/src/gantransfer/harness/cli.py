"""``gantransfer`` command-line interface."""

from __future__ import annotations

import argparse
import json
import sys

from ..data import DATA_ROOT_ENV
from ..exceptions import GanTransferError
from .config import ExperimentSpec, load_config

EXPERIMENTS = {
    "train-source": "train_source",
    "transfer": "transfer_grid",
    "size-sweep": "size_sweep",
    "matrix": "source_target_matrix",
    "acgan": "acgan",
    "select": "select_source",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config file (key = value with [section] headers)")
    p.add_argument("--seed", type=int, action="append", help="seed(s) overriding the config; repeatable")
    p.add_argument("--out", help="output directory overriding the config")
    p.add_argument("--jobs", type=int, default=1, help="independent runs/cells executed concurrently")
    p.add_argument("--force", action="store_true", help="overwrite completed runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gantransfer",
        description=f"GAN transfer-learning experiments. Set {DATA_ROOT_ENV} to relocate relative data paths.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in EXPERIMENTS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        _common(p)

    p = sub.add_parser("eval-fid", help="FID between a generator (or dataset) and a dataset")
    _common(p)
    p.add_argument("--generator", help="generator checkpoint")
    p.add_argument("--data", required=True, help="reference dataset ref")
    p.add_argument("--other", help="second dataset ref (real-vs-real FID)")
    p.add_argument("--embedder", help="embedding checkpoint (default: train from config)")
    p.add_argument("--n-samples", type=int, default=10_000)

    p = sub.add_parser("eval-iw", help="Independent Wasserstein critic score of a generator")
    _common(p)
    p.add_argument("--generator", required=True)
    p.add_argument("--data", required=True, help="validation dataset ref never used for training")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--n-samples", type=int, default=2000)

    p = sub.add_parser("eval-classifier", help="reference-classifier accuracy on conditional samples")
    _common(p)
    p.add_argument("--generator", help="conditional generator checkpoint (overrides [data] generator)")

    p = sub.add_parser("plot", help="plot metric curves from metric CSVs")
    p.add_argument("logs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--metric", default="fid")
    p.add_argument("--key", default="")
    p.add_argument("--window", type=int, default=20)

    p = sub.add_parser("sample", help="save a grid of generated images")
    p.add_argument("checkpoint")
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", action=argparse.BooleanOptionalAction, default=None)
    return parser


def _spec(args, kind: str) -> ExperimentSpec:
    if args.config:
        spec = load_config(args.config)
        if spec.kind != kind:
            raise GanTransferError(f"{args.config} describes a {spec.kind} experiment, not {kind}")
    else:
        spec = ExperimentSpec(kind=kind)
    changes = {}
    if args.seed:
        changes["seeds"] = tuple(args.seed)
    if args.out:
        changes["output_dir"] = args.out
    return spec.replace(**changes) if changes else spec


def _run(spec: ExperimentSpec, args) -> int:
    from .runner import Runner

    outcomes = Runner(spec, force=args.force, jobs=args.jobs, echo=lambda m: print(m, file=sys.stderr)).run()
    status = 0
    for o in outcomes:
        print(f"{o.run_id} seed={o.seed} {o.status} -> {o.run_dir}")
        for e in o.errors:
            print(f"  error: {e}", file=sys.stderr)
        if not o.ok:
            status = 1
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (GanTransferError, ValueError, OSError) as exc:
        print(f"gantransfer: error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    cmd = args.command
    if cmd in EXPERIMENTS:
        return _run(_spec(args, EXPERIMENTS[cmd]), args)
    if cmd == "eval-classifier":
        spec = _spec(args, "classifier_eval")
        if args.generator:
            spec = spec.replace(data={**spec.data, "generator": args.generator})
        return _run(spec, args)
    if cmd == "plot":
        from .plotting import plot_metrics

        print(plot_metrics(args.logs, args.out, metric=args.metric, window=args.window, key=args.key))
        return 0
    if cmd == "sample":
        from .plotting import sample_grid

        print(sample_grid(args.checkpoint, args.rows, args.cols, args.seed, args.out, per_class=args.per_class))
        return 0
    if cmd in ("eval-fid", "eval-iw"):
        return _evaluate(args)
    raise AssertionError(cmd)


def _evaluate(args) -> int:
    from ..metrics import EmbeddingNet, fid, gaussian_stats, independent_wasserstein
    from ..model_zoo import load_checkpoint
    from ..training import TrainConfig, generate
    from .datasets import resolve_dataset
    from .runner import Runner

    spec = _spec(args, "train_source") if args.config is None else load_config(args.config)
    if args.out:
        spec = spec.replace(output_dir=args.out)
    seed = (args.seed or [0])[0]
    g = load_checkpoint(args.generator).param_store if getattr(args, "generator", None) else None
    image_size = g.spec.image_size if g is not None else spec.arch_spec().image_size
    data = resolve_dataset(args.data, image_size)
    if args.command == "eval-iw":
        x_gen = generate(g, args.n_samples, seed)
        cfg = TrainConfig(iterations=args.iterations, seed=seed)
        res = independent_wasserstein(data.images, x_gen, cfg, g.spec.replace(role="discriminator"))
        print(json.dumps({"iw": res["iw"], "n_train": res["n_train"], "n_eval": res["n_eval"]}))
        return 0
    if args.embedder:
        embedder = EmbeddingNet(load_checkpoint(args.embedder).param_store)
    else:
        refs = [r for r in (args.data, args.other) if r]
        spec = spec.replace(data={**spec.data, "target": " + ".join(refs)}) if not spec.embedder.get("data") else spec
        embedder = Runner(spec).embedder()
    ref_stats = gaussian_stats(embedder.embed(data.images))
    if args.other:
        other = resolve_dataset(args.other, image_size)
        value = fid(gaussian_stats(embedder.embed(other.images)), ref_stats)
    elif g is not None:
        value = fid(gaussian_stats(embedder.embed(generate(g, args.n_samples, seed))), ref_stats)
    else:
        raise GanTransferError("eval-fid needs --generator or --other")
    print(json.dumps({"fid": value, "embedding_checksum": embedder.checksum}))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
