"""Time every kernel on the compiled and the numpy backend at training-sized shapes.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""

import argparse
import json
import platform
import timeit

import numpy as np

from cne import kernels
from cne.kernels import available_backends
from cne.rng import generator
from cne.segmenter import TrainConfig, init_model, loss_and_grads
from cne.synth import SynthConfig, synth_generate


def cases(rng):
    x = rng.standard_normal((8, 16, 64, 64)).astype(np.float32)
    w = rng.standard_normal((16, 16, 3, 3)).astype(np.float32) * 0.1
    b = np.zeros(16, np.float32)
    stack = rng.random((5, 25, 64 * 64)).astype(np.float32)
    probs = rng.random((5, 64, 64)).astype(np.float32)
    ids = rng.integers(0, 44, size=(64, 64)).astype(np.uint8)
    onehot = kernels.one_hot(ids, 44)
    return {
        "conv3x3_forward 8x16x64x64": lambda k: k.conv3x3_forward(x, w, b),
        "conv3x3_backward 8x16x64x64": lambda k: k.conv3x3_backward(x, w, x),
        "mean_std J=25 C=5 64x64": lambda k: k.mean_std_3d(stack, True),
        "argmax C=5 64x64": lambda k: k.argmax_channel(probs),
        "one_hot C=44 64x64": lambda k: k.one_hot(ids, 44),
        "channel_sums C=44 64x64": lambda k: k.channel_sums(onehot),
    }


def training_step(backend):
    """One mini-batch of 8 scenes through loss_and_grads with the backend swapped in."""
    samples = synth_generate(SynthConfig(scenes=8, seed=1))
    images = np.stack([s.image for s in samples])
    masks = np.stack([s.mask for s in samples])
    model = init_model(5, seed=1)
    saved = {n: getattr(kernels, n) for n in ("conv3x3_forward", "conv3x3_backward")}

    def run():
        for n in saved:
            setattr(kernels, n, getattr(backend, n))
        try:
            loss_and_grads(model, images, masks, generator(TrainConfig().seed))
        finally:
            for n, f in saved.items():
                setattr(kernels, n, f)
    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the numpy timings are shown")
    rng = np.random.default_rng(0)
    table = {}
    jobs = dict(cases(rng))
    for name, fn in jobs.items():
        table[name] = {b: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
                       for b, k in backends.items()}
    table["training step (batch 8, 64x64)"] = {
        b: min(timeit.repeat(training_step(k), number=1, repeat=max(3, args.repeat // 4)))
        for b, k in backends.items()
    }

    cols = sorted(backends)
    print(f"{'kernel':<34}" + "".join(f"{c + ' ms':>14}" for c in cols) + ("   speedup" if len(cols) == 2 else ""))
    for name, row in table.items():
        line = f"{name:<34}" + "".join(f"{1e3 * row[c]:>14.3f}" for c in cols)
        if len(cols) == 2:
            line += f"{row['python'] / row['cython']:>9.2f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"machine": platform.machine(), "seconds": table}, fh, indent=2)


if __name__ == "__main__":
    main()
