"""Forced alignment of a phoneme string against random frame posteriors.

Shows the CTC negative log-likelihood, the Viterbi path and the
alignment confidence used by the phoneme consistency loss.
"""

import argparse

import numpy as np

from zskws.alignment import ctc_loss, viterbi_align
from zskws.data import PHONEMES, to_phonemes

BLANK = len(PHONEMES)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--keyword", default="cat")
    parser.add_argument("--frames", type=int, default=12)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    ids = list(to_phonemes(args.keyword))
    z = np.random.default_rng(args.seed).normal(size=(args.frames, BLANK + 1))
    # nudge the logits toward a left-to-right reading so the path is legible
    for t in range(args.frames):
        z[t, ids[min(t * len(ids) // args.frames, len(ids) - 1)]] += 3.0

    nll, _ = ctc_loss(z, ids, BLANK)
    r = viterbi_align(z, ids, BLANK)
    names = [PHONEMES[i] if i < BLANK else "-" for i in r.labels[r.path]]
    print("target:", " ".join(PHONEMES[i] for i in ids))
    print("path:  ", " ".join(names))
    print(f"ctc nll {nll:.4f}  best path log-prob {r.logprob_path:.4f}  confidence {r.confidence:.4f}")


if __name__ == "__main__":
    main()
