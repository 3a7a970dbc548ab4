"""Command-line entry point: ``cne {synth,train-seg,infer,report,pipeline}``.

Option values resolve as: command-line flag, else the matching key in the
JSON file given by ``--config``, else the built-in default. Exit status is 0
on success, 2 on a usage error and 1 on a runtime failure.
"""

import argparse
import json
import logging
import sys

from . import pipeline
from .explainer import DegenerateLabelsError
from .segmenter import TrainConfig
from .synth import SynthConfig

log = logging.getLogger("cne")

DEFAULTS = {
    # synth
    "scenes": 200, "size": 64, "classes": 5, "natural_classes": "0,1", "threshold": 0.5,
    "noise_scale": 8.0, "class_names": None,
    # train-seg
    "epochs": 12, "lr": 0.05, "batch": 8, "split": 0.8, "pdrop": 0.1, "width": 16,
    # infer / report
    "J": 25, "l2": 1e-3, "epsilon": 1e-9, "min_coeff": 0.01, "bins": 15, "scenes_sel": "test",
    "seed": 0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_at_least(lo):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v
    return conv


def _float_in(lo, hi, lo_open=True, hi_open=True):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        ok_lo = v > lo if lo_open else v >= lo
        ok_hi = v < hi if hi_open else v <= hi
        if not (ok_lo and ok_hi):
            raise argparse.ArgumentTypeError(f"{v} outside the allowed range")
        return v
    return conv


def _seed(text):
    v = _int_at_least(0)(text)
    if v >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


# flag -> (dest, converter, help)
_OPTS = {
    "--scenes": ("scenes", _int_at_least(0), "number of scenes to generate"),
    "--size": ("size", _int_at_least(1), "scene height and width in pixels"),
    "--classes": ("classes", _int_at_least(1), "number of land-cover classes"),
    "--natural-classes": ("natural_classes", str, "comma-separated class ids planted as natural"),
    "--threshold": ("threshold", _float_in(0, 1), "natural pixel share above which a scene is natural"),
    "--noise-scale": ("noise_scale", _float_in(0, float("inf")), "blob size of the value noise, pixels"),
    "--class-names": ("class_names", str, "comma-separated class names for index.json"),
    "--epochs": ("epochs", _int_at_least(1), "training epochs"),
    "--lr": ("lr", _float_in(0, float("inf")), "learning rate"),
    "--batch": ("batch", _int_at_least(1), "mini-batch size"),
    "--split": ("split", _float_in(0, 1), "training fraction of the scenes"),
    "--pdrop": ("pdrop", _float_in(0, 1, lo_open=False), "dropout probability before the classifier"),
    "--width": ("width", _int_at_least(1), "channels per conv layer"),
    "--J": ("J", _int_at_least(1), "MC-Dropout runs per scene"),
    "--l2": ("l2", _float_in(0, float("inf"), lo_open=False), "L2 penalty on the coefficients"),
    "--epsilon": ("epsilon", _float_in(0, float("inf")), "floor on the uncertainty denominator"),
    "--min-coeff": ("min_coeff", _float_in(0, float("inf"), lo_open=False),
                    "drop patterns whose coefficient is below this (0 keeps all)"),
    "--bins": ("bins", _int_at_least(1), "ECE bin count"),
    "--scenes-sel": ("scenes_sel", str, "scenes to infer: 'test', 'all' or comma-separated indices"),
    "--seed": ("seed", _seed, "64-bit seed for every random stream"),
}

_COMMANDS = {
    "synth": ("generate a synthetic dataset",
              ["--scenes", "--size", "--classes", "--natural-classes", "--threshold", "--noise-scale",
               "--class-names", "--seed"], ["out"]),
    "train-seg": ("train the segmenter",
                  ["--epochs", "--lr", "--batch", "--split", "--pdrop", "--width", "--seed"], ["data", "out"]),
    "infer": ("MC-Dropout inference: predicted masks, uncertainty maps, mean/std tensors",
              ["--J", "--seed", "--scenes-sel"], ["model", "data", "out"]),
    "report": ("fit the pattern regression and write the ranked report",
               ["--J", "--seed", "--l2", "--epsilon", "--min-coeff", "--bins"], ["model", "data", "out"]),
    "pipeline": ("synth, train-seg, infer and report in one go",
                 ["--scenes", "--size", "--classes", "--natural-classes", "--threshold", "--noise-scale",
                  "--class-names", "--epochs", "--lr", "--batch", "--split", "--pdrop", "--width",
                  "--J", "--l2", "--epsilon", "--min-coeff", "--bins", "--seed"], ["out"]),
}

_PATH_HELP = {"out": "output directory", "data": "dataset directory",
              "model": "trained model file"}


def build_parser():
    parser = _Parser(prog="cne", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (help_text, opts, paths) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                       help="log progress to stderr")
        p.add_argument("--config", help="JSON file of option values (keys as in --help, dashes as underscores)")
        for path in paths:
            p.add_argument(f"--{path}", required=True, help=_PATH_HELP[path])
        for flag in opts:
            dest, conv, h = _OPTS[flag]
            p.add_argument(flag, dest=dest, type=conv, default=argparse.SUPPRESS, help=h)
    return parser


def _resolve(args, command):
    """Merge defaults <- config file <- explicit flags, validating config values like flags."""
    opts = _COMMANDS[command][1]
    values = {}
    for flag in opts:
        dest = _OPTS[flag][0]
        values[dest] = DEFAULTS[dest]
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        known = {_OPTS[f][0]: _OPTS[f] for f in opts}
        for key, val in cfg.items():
            key = key.replace("-", "_")
            if key not in known:
                raise UsageError(f"config key {key!r} is not an option of '{command}'")
            conv = known[key][1]
            try:
                values[key] = conv(str(val)) if not isinstance(val, list) else ",".join(map(str, val))
            except argparse.ArgumentTypeError as exc:
                raise UsageError(f"config {key}: {exc}") from None
    for flag in opts:
        dest = _OPTS[flag][0]
        if dest in vars(args):
            values[dest] = getattr(args, dest)
    return values


def _int_list(text, what):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None


def _synth_config(v):
    try:
        return SynthConfig(scenes=v["scenes"], height=v["size"], width=v["size"], num_classes=v["classes"],
                           natural_classes=_int_list(v["natural_classes"], "--natural-classes"),
                           natural_threshold=v["threshold"], noise_scale=v["noise_scale"], seed=v["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _class_names(v):
    names = v.get("class_names")
    return None if names is None else [n.strip() for n in names.split(",")]


def _train_config(v):
    try:
        return TrainConfig(epochs=v["epochs"], learning_rate=v["lr"], batch_size=v["batch"],
                           seed=v["seed"], split=v["split"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _dispatch(args, v):
    cmd = args.command
    if cmd == "synth":
        cfg = _synth_config(v)
        pipeline.run_synth(cfg, args.out, _class_names(v))
        log.info("wrote %d scenes to %s", cfg.scenes, args.out)
    elif cmd == "train-seg":
        result, metrics = pipeline.run_train_seg(args.data, args.out, _train_config(v), v["pdrop"], v["width"])
        log.info("train mIoU %.3f, test mIoU %.3f", metrics["train_mean_iou"], metrics["test_mean_iou"])
    elif cmd == "infer":
        done = pipeline.run_infer(args.model, args.data, args.out, v["J"], v["seed"], v["scenes_sel"])
        log.info("inferred %d scenes", len(done))
    elif cmd == "report":
        pipeline.run_report(args.model, args.data, args.out, v["J"], v["seed"], v["l2"], v["epsilon"],
                            v["min_coeff"], v["bins"])
    elif cmd == "pipeline":
        cfg = _synth_config(v)
        pipeline.run_pipeline(args.out, cfg, _train_config(v), v["pdrop"], v["width"], v["J"], v["seed"],
                              v["l2"], v["epsilon"], v["min_coeff"], v["bins"], _class_names(v))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        values = _resolve(args, args.command)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        _dispatch(args, values)
    except UsageError as exc:
        print(f"cne: usage error: {exc}", file=sys.stderr)
        return 2
    except DegenerateLabelsError as exc:
        print(f"cne: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"cne: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
