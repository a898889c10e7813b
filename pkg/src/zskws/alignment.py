"""CTC loss, Viterbi best-path alignment and path confidences.

All recursions run in log space over the blank-interleaved label sequence
``[b, y1, b, y2, ..., b]``. The blank is the last logit column unless told
otherwise.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import _softmax, log_softmax
from .errors import InfeasibleTarget

NEG_INF = -np.inf


@dataclass
class AlignmentResult:
    path: np.ndarray  # index into the extended label sequence, one per frame
    logprob_path: float
    confidence: float
    labels: np.ndarray  # extended label sequence the path indexes


def extend_labels(y, blank):
    ext = np.full(2 * len(y) + 1, blank, dtype=np.int64)
    ext[1::2] = y
    return ext


def min_frames(y):
    """Shortest input that can emit ``y``: one frame per label plus one blank per adjacent repeat."""
    y = np.asarray(y)
    return len(y) + int(np.sum(y[1:] == y[:-1]))


def _check(z, y, blank):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValueError("logits must be a non-empty [T, V+1] matrix")
    blank = z.shape[1] - 1 if blank is None else blank
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 1 or len(y) < 1:
        raise ValueError("target must contain at least one label")
    if np.any(y == blank) or np.any(y < 0) or np.any(y >= z.shape[1]):
        raise ValueError("target contains the blank or an out-of-range id")
    need = min_frames(y)
    if z.shape[0] < need:
        raise InfeasibleTarget(f"{z.shape[0]} frames cannot emit {len(y)} labels (need {need})")
    return z, y, blank


def _transitions(ext, blank):
    # skip[s]: may enter state s directly from s - 2
    skip = np.zeros(len(ext), dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return skip


def _forward(lp, ext, skip):
    t_len, s_len = lp.shape[0], len(ext)
    emit = lp[:, ext]
    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev[:-1]))
        jump = np.where(skip, np.concatenate(([NEG_INF, NEG_INF], prev[:-2])), NEG_INF)
        alpha[t] = np.logaddexp(np.logaddexp(stay, step), jump) + emit[t]
    return alpha, emit


def _backward(emit, skip):
    t_len, s_len = emit.shape
    beta = np.full((t_len, s_len), NEG_INF)
    beta[-1, -1] = 0.0
    if s_len > 1:
        beta[-1, -2] = 0.0
    skip_from = np.concatenate((skip[2:], [False, False]))  # s -> s + 2 allowed
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        stay = nxt
        step = np.concatenate((nxt[1:], [NEG_INF]))
        jump = np.where(skip_from, np.concatenate((nxt[2:], [NEG_INF, NEG_INF])), NEG_INF)
        beta[t] = np.logaddexp(np.logaddexp(stay, step), jump)
    return beta


def ctc_loss(z, y, blank=None):
    """Negative log-likelihood of ``y`` under CTC logits ``z`` [T, V+1].

    Returns ``(loss, grad)`` with ``grad`` = d loss / d z.
    """
    z, y, blank = _check(z, y, blank)
    lp = log_softmax(z)
    ext = extend_labels(y, blank)
    skip = _transitions(ext, blank)
    alpha, emit = _forward(lp, ext, skip)
    log_p = np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    beta = _backward(emit, skip)
    occupancy = np.exp(alpha + beta - log_p)  # [T, S], rows sum to 1
    grad = _softmax(z)
    for s, label in enumerate(ext):
        grad[:, label] -= occupancy[:, s]
    return float(-log_p), grad


def viterbi_align(z, y, blank=None):
    """Best single path through the CTC lattice.

    The confidence is the per-frame geometric mean of the best path's
    probability, ``exp(logprob_path / T)``.
    """
    z, y, blank = _check(z, y, blank)
    lp = log_softmax(z)
    ext = extend_labels(y, blank)
    skip = _transitions(ext, blank)
    t_len, s_len = lp.shape[0], len(ext)
    emit = lp[:, ext]
    delta = np.full((t_len, s_len), NEG_INF)
    back = np.zeros((t_len, s_len), dtype=np.int64)
    delta[0, 0] = emit[0, 0]
    delta[0, 1] = emit[0, 1]
    idx = np.arange(s_len)
    for t in range(1, t_len):
        prev = delta[t - 1]
        cands = np.stack(
            [
                prev,
                np.concatenate(([NEG_INF], prev[:-1])),
                np.where(skip, np.concatenate(([NEG_INF, NEG_INF], prev[:-2])), NEG_INF),
            ]
        )
        best = np.argmax(cands, axis=0)  # ties prefer staying
        delta[t] = cands[best, idx] + emit[t]
        back[t] = idx - best
    end = s_len - 1 if delta[-1, -1] >= delta[-1, -2] else s_len - 2
    path = np.empty(t_len, dtype=np.int64)
    path[-1] = end
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    logprob = float(delta[-1, end])
    return AlignmentResult(path, logprob, float(np.exp(logprob / t_len)), ext)


def confidence_grad(z, result):
    """d confidence / d z for a Viterbi result (the path held fixed)."""
    z = np.asarray(z, dtype=np.float64)
    t_len = z.shape[0]
    grad = -_softmax(z)
    grad[np.arange(t_len), result.labels[result.path]] += 1.0
    return grad * (result.confidence / t_len)


def batch_confidences(pairs, blank=None, with_grads=False):
    """Viterbi confidences for ``(z, y, m)`` triples.

    Negative pairs (m == 0) too short for their target score 0 instead of
    raising; matched pairs propagate ``InfeasibleTarget``.
    """
    s, grads = [], []
    for z, y, m in pairs:
        try:
            res = viterbi_align(z, y, blank)
        except InfeasibleTarget:
            if m:
                raise
            s.append(0.0)
            grads.append(np.zeros_like(np.asarray(z, dtype=np.float64)))
            continue
        s.append(res.confidence)
        if with_grads:
            grads.append(confidence_grad(z, res))
    s = np.asarray(s, dtype=np.float64)
    return (s, grads) if with_grads else s

