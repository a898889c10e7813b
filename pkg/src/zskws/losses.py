"""Training objectives with analytic gradients.

Each loss returns a float, or ``(value, grad)`` when called with
``grad=True``; ``grad`` is taken with respect to the loss's direct inputs.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import _sigmoid
from .errors import EmptyBatch, LengthMismatch, NonFiniteTerm, NotSquare

PROB_CLAMP = 1e-7
LOGIT_CLAMP = 30.0
TERMS = ("l_utt", "l_phon", "l_ctc", "l_pcl", "l_ucl", "l_fa")


@dataclass(frozen=True)
class FaConfig:
    gamma: float = 7.0
    delta: float = 0.035
    alpha: float = 0.9
    lam: float = 10.0
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def scale(self):
        return 1.0 + self.gamma * self.delta


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"{a.size} predictions vs {b.size} labels")
    return a, b


def bce(pred, label, grad=False):
    """Mean binary cross-entropy on probabilities clamped to [1e-7, 1 - 1e-7]."""
    p, y = _pair(pred, label)
    if p.size == 0:
        raise EmptyBatch("bce of an empty batch")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    value = float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))))
    if not grad:
        return value
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    g = np.where(inside, (pc - y) / (pc * (1.0 - pc)), 0.0) / p.size
    return value, g


def pcl_loss(s, m, grad=False):
    """Pull matched confidences toward 1 and unmatched toward 0 (squared error)."""
    s, m = _pair(s, m)
    if s.size == 0:
        raise EmptyBatch("pcl over an empty batch")
    value = float(np.mean(m * (1.0 - s) ** 2 + (1.0 - m) * s**2))
    if not grad:
        return value
    return value, 2.0 * (s - m) / s.size


def _bce_logits(s, m):
    s = np.clip(s, -LOGIT_CLAMP, LOGIT_CLAMP)
    # -log sigma(s) = softplus(-s); -log(1 - sigma(s)) = softplus(s)
    return m * np.logaddexp(0.0, -s) + (1.0 - m) * np.logaddexp(0.0, s)


def ucl_loss(s_audio, mask=None, s_text=None, grad=False):
    """Bidirectional sigmoid contrastive loss over an M x M similarity matrix.

    ``s_audio[v, r]`` scores audio v against text r. ``s_text[r, v]`` scores
    text r against audio v and defaults to ``s_audio.T``. The result is the
    mean of the two directional terms, each summed over all cells and
    divided by M. With ``grad=True`` returns ``(value, (g_audio, g_text))``.
    """
    if hasattr(s_audio, "s_utt"):
        s_audio, mask = s_audio.s_utt, s_audio.match_mask if mask is None else mask
    s_a = np.asarray(s_audio, dtype=np.float64)
    if s_a.ndim != 2 or s_a.shape[0] != s_a.shape[1]:
        raise NotSquare(f"similarity matrix has shape {s_a.shape}")
    m_a = np.eye(len(s_a)) if mask is None else np.asarray(mask, dtype=np.float64)
    if m_a.shape != s_a.shape:
        raise NotSquare("mask shape differs from similarity shape")
    s_t = s_a.T if s_text is None else np.asarray(s_text, dtype=np.float64)
    if s_t.shape != s_a.shape:
        raise NotSquare("text-side matrix shape differs")
    m_t = m_a.T
    size = len(s_a)
    l_audio = float(_bce_logits(s_a, m_a).sum() / size)
    l_text = float(_bce_logits(s_t, m_t).sum() / size)
    value = 0.5 * (l_audio + l_text)
    if not grad:
        return value

    def g(s, m):
        inside = np.abs(s) < LOGIT_CLAMP
        return np.where(inside, _sigmoid(s) - m, 0.0) / size * 0.5

    return value, (g(s_a, m_a), g(s_t, m_t))


def smooth_counts(x, x_true, cfg=FaConfig(), grad=False):
    """Sigmoid-smoothed true/false positive counts.

    With ``grad=True`` returns ``(tp, fp, dtp_dx, dfp_dx)``.
    """
    x, t = _pair(x, x_true)
    s_tp = _sigmoid(cfg.gamma * x - cfg.delta)
    s_fp = _sigmoid(cfg.gamma * x + cfg.delta)
    tp = float(np.sum(cfg.scale * s_tp * t))
    fp = float(np.sum(cfg.scale * s_fp * (1.0 - t)))
    if not grad:
        return tp, fp
    d_tp = cfg.scale * cfg.gamma * s_tp * (1.0 - s_tp) * t
    d_fp = cfg.scale * cfg.gamma * s_fp * (1.0 - s_fp) * (1.0 - t)
    return tp, fp, d_tp, d_fp


def fa_from_precision(precision, cfg=FaConfig()):
    """-log(P) + lambda * max(0, alpha - P); P is floored at epsilon inside the log."""
    return -math.log(max(precision, cfg.epsilon)) + cfg.lam * max(0.0, cfg.alpha - precision)


def fa_from_counts(tp, fp, cfg=FaConfig()):
    return fa_from_precision(tp / (tp + fp + cfg.epsilon), cfg)


def fa_loss(x, x_true, cfg=FaConfig(), grad=False):
    """Precision-constrained false-alarm penalty on detection scores ``x``."""
    tp, fp, d_tp, d_fp = smooth_counts(x, x_true, cfg, grad=True)
    denom = tp + fp + cfg.epsilon
    precision = tp / denom
    value = fa_from_precision(precision, cfg)
    if not grad:
        return value
    d_p = (-1.0 / precision if precision > cfg.epsilon else 0.0) - (cfg.lam if precision < cfg.alpha else 0.0)
    dp_dtp = (fp + cfg.epsilon) / denom**2
    dp_dfp = -tp / denom**2
    return value, d_p * (dp_dtp * d_tp + dp_dfp * d_fp)


@dataclass
class LossReport:
    l_utt: float = 0.0
    l_phon: float = 0.0
    l_ctc: float = 0.0
    l_pcl: float = 0.0
    l_ucl: float = 0.0
    l_fa: float = 0.0
    l_total: float = 0.0
    gradients: dict = field(default_factory=dict, repr=False)
    dropped: tuple = ()

    def terms(self):
        return {k: getattr(self, k) for k in TERMS}

    def to_json(self, **extra):
        row = dict(extra)
        row.update({k: v for k, v in self.terms().items() if k not in self.dropped})
        row["l_total"] = self.l_total
        return json.dumps(row, sort_keys=False)


def total_loss(parts, gradients=(), dropped=()):
    """Unweighted sum of the six loss terms.

    ``parts`` maps term names (``l_utt`` ... ``l_fa``) or is a 6-sequence in
    that order. ``gradients`` is an iterable of name -> array maps that are
    summed per name. Terms listed in ``dropped`` are reported but excluded
    from the total.
    """
    if not isinstance(parts, dict):
        parts = dict(zip(TERMS, parts))
    values = {}
    for name in TERMS:
        v = float(parts.get(name, 0.0))
        if not math.isfinite(v):
            raise NonFiniteTerm(f"{name} = {v}")
        values[name] = v
    acc = {}
    for gmap in gradients:
        for name, g in gmap.items():
            acc[name] = g if name not in acc else acc[name] + g
    total = math.fsum(v for k, v in values.items() if k not in dropped)
    return LossReport(**values, l_total=total, gradients=acc, dropped=tuple(dropped))

