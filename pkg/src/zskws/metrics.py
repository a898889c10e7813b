"""Detection metrics: AUC, EER, FAR and closed-set accuracy."""

import csv
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import BadFormat, DegenerateLabels, InconsistentCandidates, NoNegatives

SCORE_HEADER = ("audio_id", "keyword_id", "score", "label")


@dataclass(frozen=True)
class TrialScore:
    audio_id: str
    keyword_id: str
    score: float
    label: int


def _split(scores, labels=None):
    if labels is None:
        rows = list(scores)
        s = np.array([r.score for r in rows], dtype=np.float64)
        y = np.array([r.label for r in rows], dtype=np.int64)
    else:
        s = np.asarray(scores, dtype=np.float64).ravel()
        y = np.asarray(labels, dtype=np.int64).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, y


def _require_both(y):
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DegenerateLabels("need at least one positive and one negative trial")


def auc(scores, labels=None):
    """Probability a random positive outscores a random negative; ties count one half."""
    s, y = _split(scores, labels)
    _require_both(y)
    ranks = rankdata(s)  # average ranks handle ties
    n_pos, n_neg = int(np.sum(y == 1)), int(np.sum(y == 0))
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def far(scores, labels=None, threshold=0.5):
    """Fraction of negative trials with score >= threshold."""
    s, y = _split(scores, labels)
    neg = s[y == 0]
    if neg.size == 0:
        raise NoNegatives("false alarm rate needs negative trials")
    return float(np.mean(neg >= threshold))


def frr(scores, labels=None, threshold=0.5):
    s, y = _split(scores, labels)
    pos = s[y == 1]
    if pos.size == 0:
        raise DegenerateLabels("false rejection rate needs positive trials")
    return float(np.mean(pos < threshold))


def error_curve(scores, labels=None):
    """(thresholds, FAR, FRR) at score midpoints plus one point beyond each end."""
    s, y = _split(scores, labels)
    _require_both(y)
    u = np.unique(s)
    thresholds = np.concatenate(([u[0] - 1e-3], (u[:-1] + u[1:]) / 2, [u[-1] + 1e-3]))
    pos, neg = np.sort(s[y == 1]), np.sort(s[y == 0])
    fa = 1.0 - np.searchsorted(neg, thresholds, side="left") / neg.size
    fr = np.searchsorted(pos, thresholds, side="left") / pos.size
    return thresholds, fa, fr


def eer(scores, labels=None):
    """Equal error rate and its threshold.

    FAR falls and FRR rises as the threshold sweeps upward; the crossing is
    located between consecutive midpoint thresholds and linearly
    interpolated. Returns ``(rate, threshold)``.
    """
    t, fa, fr = error_curve(scores, labels)
    d = fa - fr
    exact = np.flatnonzero(d == 0)
    if exact.size:
        i = exact[0]
        return float(fa[i]), float(t[i])
    i = np.flatnonzero((d[:-1] > 0) & (d[1:] < 0))[0]
    frac = d[i] / (d[i] - d[i + 1])
    return float(fa[i] + frac * (fa[i + 1] - fa[i])), float(t[i] + frac * (t[i + 1] - t[i]))


def acc_n(grouped, truth):
    """Fraction of audios whose true keyword gets the strictly highest score.

    ``grouped`` is one score list per audio over the same N candidates;
    ``truth`` gives the index of the true keyword per audio. Ties are errors.
    """
    rows = [np.asarray(g, dtype=np.float64) for g in grouped]
    if not rows:
        raise InconsistentCandidates("no audios to score")
    if len({r.shape for r in rows}) != 1 or rows[0].ndim != 1:
        raise InconsistentCandidates("every audio must be scored against the same N keywords")
    m = np.stack(rows)
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != (len(m),) or np.any(truth < 0) or np.any(truth >= m.shape[1]):
        raise InconsistentCandidates("truth indices do not match candidates")
    true_score = m[np.arange(len(m)), truth]
    others = m.copy()
    others[np.arange(len(m)), truth] = -np.inf
    return float(np.mean(true_score > others.max(axis=1)))


@dataclass
class MetricReport:
    auc: float
    eer: float
    eer_threshold: float
    far_at_threshold: object  # float, or "n/a" without negatives
    frr_at_threshold: object
    threshold: float
    acc_n: object = None
    n_candidates: int = 0
    n_trials: int = 0
    n_positive: int = 0
    n_negative: int = 0

    def to_dict(self):
        return asdict(self)


def evaluate(scores, labels=None, threshold=0.5, grouped=None, truth=None):
    """Every metric the reports carry. Missing label classes give "n/a" entries."""
    s, y = _split(scores, labels)
    n_pos, n_neg = int(np.sum(y == 1)), int(np.sum(y == 0))
    both = n_pos > 0 and n_neg > 0
    rate, thr = eer(s, y) if both else ("n/a", "n/a")
    report = MetricReport(
        auc=auc(s, y) if both else "n/a",
        eer=rate,
        eer_threshold=thr,
        far_at_threshold=far(s, y, threshold) if n_neg else "n/a",
        frr_at_threshold=frr(s, y, threshold) if n_pos else "n/a",
        threshold=threshold,
        n_trials=len(s),
        n_positive=n_pos,
        n_negative=n_neg,
    )
    if grouped is not None:
        report.acc_n = acc_n(grouped, truth)
        report.n_candidates = len(grouped[0])
    return report


def far_frr_sweep(scores, labels=None, thresholds=None):
    """FAR and FRR over a threshold grid (default 0.00, 0.01, ..., 1.00)."""
    s, y = _split(scores, labels)
    thresholds = np.linspace(0, 1, 101) if thresholds is None else np.asarray(thresholds)
    return [(float(t), far(s, y, t), frr(s, y, t)) for t in thresholds]


def write_scores_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        for r in rows:
            w.writerow([r.audio_id, r.keyword_id, repr(float(r.score)), int(r.label)])


def read_scores_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != SCORE_HEADER:
            raise BadFormat(f"{path}: header must be {','.join(SCORE_HEADER)}")
        return [TrialScore(r["audio_id"], r["keyword_id"], float(r["score"]), int(r["label"])) for r in reader]
