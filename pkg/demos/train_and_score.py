"""Train a small model on the synthetic corpus and report held-out metrics.

Usage: python3 demos/train_and_score.py --epochs 5
"""

import argparse
import time

import numpy as np

from zskws.metrics import auc, eer, far
from zskws.model import score
from zskws.train import TrainConfig, params_from_checkpoint, synthetic_split, train


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    kws, train_ex, held = synthetic_split(seed=args.seed)
    print(f"{len(kws)} keywords, {len(train_ex)} training and {len(held)} held-out trials")

    def progress(epoch, report):
        print(f"epoch {epoch:3d}  loss {report.l_total:.4f}")

    t0 = time.perf_counter()
    ckpt, _ = train(TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed), train_ex, on_epoch=progress)
    print(f"trained in {time.perf_counter() - t0:.0f} s")

    s = score(params_from_checkpoint(ckpt), held)
    y = np.array([e.match for e in held])
    rate, thr = eer(s, y)
    print(f"AUC {auc(s, y):.4f}  EER {rate:.3f} (threshold {thr:.3f})  FAR@0.5 {far(s, y, 0.5):.3f}")


if __name__ == "__main__":
    main()
