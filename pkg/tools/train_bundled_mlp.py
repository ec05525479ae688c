"""Regenerate src/rdcompress/data/mlp_gmm.json.

Plain Adam on the mean cross-entropy, minibatches drawn from a fixed seed.
Only needed if the bundled model has to be rebuilt; results are deterministic.
"""

import argparse
from pathlib import Path

import numpy as np

from rdcompress import io, metrics
from rdcompress import net as netmod
from rdcompress import presets

OUT = Path(__file__).resolve().parents[1] / "src" / "rdcompress" / "data" / presets.BUNDLED_MODEL


def init_net(sizes, rng):
    layers = []
    for l, (a, b) in enumerate(zip(sizes, sizes[1:])):
        W = rng.standard_normal((b, a)) * np.sqrt(2.0 / a)
        act = "identity" if l == len(sizes) - 2 else "relu"
        layers.append(netmod.DenseLayer(W, np.zeros(b), act))
    return netmod.Network(layers, head="classification")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=1500)
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=str(OUT))
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    train = presets.gmm_dataset(8000, seed=1000 + args.seed)
    test = presets.gmm_dataset(4000, seed=2000 + args.seed)
    net = init_net([presets.GMM_DIM, 64, 64, 2], rng)
    w = net.get_flat()
    m1, m2 = np.zeros_like(w), np.zeros_like(w)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, args.steps + 1):
        idx = rng.integers(0, train.n, size=args.batch)
        batch = netmod.Dataset(train.inputs[idx], train.labels[idx])
        g = netmod.mean_grad_loss(net, batch)
        m1 = b1 * m1 + (1 - b1) * g
        m2 = b2 * m2 + (1 - b2) * g * g
        w = w - args.lr * (m1 / (1 - b1**t)) / (np.sqrt(m2 / (1 - b2**t)) + eps)
        net = net.with_flat(w)
        if t % 500 == 0:
            print(f"step {t}: train ce {metrics.cross_entropy(net, train):.4f} "
                  f"test acc {metrics.accuracy(net, test):.4f} ce {metrics.cross_entropy(net, test):.4f}")
    io.save_model(net, args.out)
    print(f"wrote {args.out} ({net.n_params} parameters)")


if __name__ == "__main__":
    main()
