"""Tabulate the false-alarm penalty against batch precision."""

import argparse

from zskws.losses import FaConfig, fa_from_precision, fa_loss


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--alpha", type=float, default=0.9)
    parser.add_argument("--lam", type=float, default=10.0)
    args = parser.parse_args()
    cfg = FaConfig(alpha=args.alpha, lam=args.lam)

    print("precision  penalty")
    for p in (1.0, 0.95, 0.9, 0.8, 0.6, 0.4, 0.2):
        print(f"{p:9.2f}  {fa_from_precision(p, cfg):.4f}")

    # the smoothed counts never reach zero for negatives scored at 0
    scores, truth = [0.95, 0.9, 0.1, 0.05, 0.0], [1, 1, 0, 0, 0]
    print(f"\nscores {scores} truth {truth}: penalty {fa_loss(scores, truth, cfg):.4f}")


if __name__ == "__main__":
    main()
