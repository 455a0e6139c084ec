"""Command line entry point: ``relubits <subcommand> ...``.

Every subcommand reads and writes files (models ``.rbp``, datasets ``.rbd``,
bit matrices ``.rbm``, detectors ``.rbc``, plus CSV/JSON reports).  Failures
print one ``error: <kind>: <message>`` line on stderr and exit with
2 usage, 3 I/O, 4 format, 5 empty discriminator.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import attacks, data, detector, geometry, network, stats
from .bitvec import LayerLayout, bit_matrix
from .errors import DomainError, RelubitsError

EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_EMPTY = 2, 3, 4, 5


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise DomainError(f"expected comma-separated numbers, got {text!r}") from None


# -- subcommands -------------------------------------------------------------

def cmd_prepare(args):
    if args.source == "idx":
        if not (args.images and args.labels):
            raise DomainError("--source idx needs --images and --labels")
        full = data.load_idx(args.images, args.labels)
        parts = data.split(full, data.SplitSpec(*args.split, seed=args.seed))
    elif args.source == "blobs":
        centers = [_floats(c) for c in args.centers]
        full = data.synth_blobs(args.n_per_class, centers, args.spread, args.seed)
        parts = data.split(full, data.SplitSpec(*args.split, seed=args.seed))
    else:
        parts = [data.LabeledDataset(imgs.reshape(len(imgs), -1) / 255.0, labs, source="mnist-bundled")
                 for imgs, labs in data.desk_mnist(tuple(args.sizes), args.seed)]
    parts = [data.LabeledDataset(p.features, p.labels, source=p.source, seed=args.seed) for p in parts]
    if args.norm != "none":
        train = data.normalize(parts[0], args.norm)
        stats_ = (train.norm_mean, train.norm_std)
        parts = [train] + [data.normalize(p, args.norm, stats_) for p in parts[1:]]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "val", "test"), parts):
        data.save_dataset(out / f"{name}.rbd", part)
    _write_json(out / "prepare.json", {
        "source": args.source, "norm": args.norm, "seed": args.seed,
        "sizes": [len(p) for p in parts], "n_features": parts[0].n_features,
    })


def cmd_train(args):
    ds = data.load_dataset(args.data)
    n_classes = args.classes or int(ds.labels.max()) + 1
    dims = [ds.n_features, *args.hidden, n_classes]
    cfg = network.TrainConfig(args.lr, args.epochs, args.batch_size, args.seed, args.init_scale)
    net = network.init_network(dims, args.seed, args.init_scale)
    net = network.train(net, ds.features, ds.labels, cfg)
    network.write_model_file(args.out, net)
    metrics = {
        "layer_dims": dims,
        "epochs": args.epochs,
        "train_accuracy": network.accuracy(net, ds.features, ds.labels),
        "history": [{"loss": l, "accuracy": a} for l, a in cfg.history],
    }
    if args.eval_data:
        ev = data.load_dataset(args.eval_data)
        metrics["eval_accuracy"] = network.accuracy(net, ev.features, ev.labels)
    _write_json(args.metrics, metrics)


def _pixel_clamp(ds):
    """Bounds of the [0, 1] pixel range expressed in the dataset's normalized units."""
    if ds.norm_mode == "none":
        return (0.0, 1.0)
    return ((0.0 - ds.norm_mean) / ds.norm_std, (1.0 - ds.norm_mean) / ds.norm_std)


def cmd_attack(args):
    net = network.read_model_file(args.model)
    ds = data.load_dataset(args.data)
    clamp = tuple(args.clamp) if args.clamp else _pixel_clamp(ds) if args.clamp_pixels else None
    cfg = attacks.AttackConfig(args.eps, args.steps, args.step_size, clamp, args.seed)
    adv = attacks.attack(args.kind, net, ds.features, ds.labels, cfg)
    data.save_dataset(args.out, ds.with_features(adv, tag=stats.ADVERSARIAL))
    if args.report:
        _write_json(args.report, {
            "kind": args.kind, "eps": args.eps,
            "clean_accuracy": network.accuracy(net, ds.features, ds.labels),
            "attacked_accuracy": network.accuracy(net, adv, ds.labels),
        })


def cmd_bits(args):
    net = network.read_model_file(args.model)
    ds = data.load_dataset(args.data)
    tag = ds.tag if args.tag is None else args.tag
    ads = stats.ActivationDataset(bit_matrix(net, ds.features), tag, ds.labels, LayerLayout.of(net))
    ads.save(args.out)


def cmd_stats(args):
    orig = stats.ActivationDataset.load(args.orig)
    adv = stats.ActivationDataset.load(args.adv)
    p_o, p_a = stats.activation_frequency(orig), stats.activation_frequency(adv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "nodes.csv", "w", newline="") as f:
        stats.write_node_csv(f, p_o, p_a)
    with open(out / "layers.csv", "w", newline="") as f:
        stats.write_layer_csv(f, orig, adv)
    with open(out / "histogram.csv", "w", newline="") as f:
        stats.write_histogram_csv(f, p_o, p_a, args.bins)


def _thresholds(args):
    if args.lambdas:
        return detector.Thresholds(*args.lambdas)
    if args.lam is None:
        raise DomainError("give --lam or --lambdas")
    return detector.Thresholds.uniform(args.lam)


def cmd_fit(args):
    orig = stats.ActivationDataset.load(args.orig)
    adv = stats.ActivationDataset.load(args.adv)
    model = detector.build_detector(orig, adv, _thresholds(args), args.vote_threshold)
    model.save(args.out)


def cmd_sweep(args):
    sets = [stats.ActivationDataset.load(p) for p in (args.train_orig, args.train_adv, args.val_orig, args.val_adv)]
    grid = detector.lambda_grid(args.lambda_min, args.lambda_max, args.lambda_steps)
    result = detector.sweep(*sets, grid, args.vote_threshold)
    with open(args.out_csv, "w", newline="") as f:
        result.write_csv(f)
    result.model.save(args.model_out)


def cmd_eval(args):
    model = detector.DetectorModel.load(args.model)
    orig = stats.ActivationDataset.load(args.orig)
    adv = stats.ActivationDataset.load(args.adv)
    _write_json(args.out, detector.evaluate(model, orig, adv).to_dict())


def cmd_walk(args):
    net = network.read_model_file(args.model)
    if args.data:
        ds = data.load_dataset(args.data)
        a, b = ds.features[args.rows[0]], ds.features[args.rows[1]]
    elif args.a and args.b:
        a, b = _floats(args.a), _floats(args.b)
    else:
        raise DomainError("give --a and --b, or --data with --rows")
    walk = geometry.segment_walk(net, a, b, args.delta)
    with open(args.out, "w", newline="") as f:
        walk.write_csv(f)


def cmd_census(args):
    net = network.read_model_file(args.model)
    census = geometry.grid_census(net, tuple(args.box), args.depth)
    with open(args.out, "w", newline="") as f:
        geometry.write_census_csv(f, census)


# -- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"error: usage: {self.prog}: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relubits", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", help="build normalized train/val/test dataset files")
    s.add_argument("--source", choices=["idx", "blobs", "mnist-bundled"], required=True)
    s.add_argument("--images")
    s.add_argument("--labels")
    s.add_argument("--centers", nargs="+", default=["-2,0", "2,0"])
    s.add_argument("--spread", type=float, default=0.5)
    s.add_argument("--n-per-class", type=int, default=500)
    s.add_argument("--sizes", type=int, nargs=3, default=[8000, 1000, 1000])
    s.add_argument("--split", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    s.add_argument("--norm", choices=["global", "per-feature", "none"], default="global")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="train a fully-connected ReLU network")
    s.add_argument("--data", required=True)
    s.add_argument("--hidden", type=int, nargs="+", default=[64, 32])
    s.add_argument("--classes", type=int)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--init-scale", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--eval-data")
    s.add_argument("--out", required=True)
    s.add_argument("--metrics", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("attack", help="perturb a dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--kind", choices=sorted(attacks.ATTACKS), default="fgsm")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--steps", type=int, default=1)
    s.add_argument("--step-size", type=float)
    clamp = s.add_mutually_exclusive_group()
    clamp.add_argument("--clamp", type=float, nargs=2, metavar=("LO", "HI"))
    clamp.add_argument("--clamp-pixels", action="store_true",
                       help="clip to the [0, 1] pixel range mapped through the stored normalization")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("bits", help="extract activation bit vectors")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--tag", type=int, choices=[0, 1])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bits)

    s = sub.add_parser("stats", help="per-node frequency, common-bit and histogram CSVs")
    s.add_argument("--orig", required=True)
    s.add_argument("--adv", required=True)
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_stats)

    def thresholds(s):
        g = s.add_mutually_exclusive_group()
        g.add_argument("--lam", type=float)
        g.add_argument("--lambdas", type=float, nargs=4)

    s = sub.add_parser("fit", help="fit a detector at fixed thresholds")
    s.add_argument("--orig", required=True)
    s.add_argument("--adv", required=True)
    thresholds(s)
    s.add_argument("--vote-threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("sweep", help="fit over a threshold grid and select on validation")
    for name in ("--train-orig", "--train-adv", "--val-orig", "--val-adv"):
        s.add_argument(name, required=True)
    s.add_argument("--lambda-min", type=float, default=0.45)
    s.add_argument("--lambda-max", type=float, default=0.77)
    s.add_argument("--lambda-steps", type=int, default=12)
    s.add_argument("--vote-threshold", type=float, default=0.5)
    s.add_argument("--out-csv", required=True)
    s.add_argument("--model-out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("eval", help="evaluate a detector")
    s.add_argument("--model", required=True)
    s.add_argument("--orig", required=True)
    s.add_argument("--adv", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("walk", help="regions crossed along a segment")
    s.add_argument("--model", required=True)
    s.add_argument("--a")
    s.add_argument("--b")
    s.add_argument("--data")
    s.add_argument("--rows", type=int, nargs=2, default=[0, 1])
    s.add_argument("--delta", type=float, default=1e-6)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_walk)

    s = sub.add_parser("census", help="distinct bit vectors on a 2-D dyadic grid")
    s.add_argument("--model", required=True)
    s.add_argument("--box", type=float, nargs=2, default=[-1.0, 1.0], metavar=("LO", "HI"))
    s.add_argument("--depth", type=int, default=8)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_census)
    return p


def _fail(kind: str, exc, code: int) -> int:
    msg = str(exc).replace("\n", " ")
    print(f"error: {kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    threads = os.environ.get("RBP_THREADS")
    if threads and not (threads.isdigit() and int(threads) > 0):
        return _fail("usage", f"RBP_THREADS must be a positive integer, got {threads!r}", EXIT_USAGE)
    try:
        if threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=int(threads)):
                args.func(args)
        else:
            args.func(args)
    except RelubitsError as e:
        return _fail(type(e).__name__, e, e.exit_code)
    except OSError as e:
        return _fail("io", e, EXIT_IO)
    except IndexError as e:
        return _fail("usage", e, EXIT_USAGE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
