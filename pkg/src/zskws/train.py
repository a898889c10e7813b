"""Adam, the training loop and corpus preparation."""

import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .checkpoint import Checkpoint
from .data import DEFAULT_KEYWORDS, SynthSpec, build_trials, make_keywords, render_trial
from .dsp import compute_logmel
from .encoders import ModelConfig
from .errors import DataExhausted, NonFiniteLoss, ShapeMismatch
from .losses import TERMS, FaConfig, LossReport
from .model import Batch, Example, init_params, loss_and_grads
from .rng import rng_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 64
    ucl_minibatch: int = 5
    seed: int = 0
    fa: FaConfig = field(default_factory=FaConfig)
    drop: tuple = ()

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.ucl_minibatch > self.batch_size:
            raise ValueError("ucl_minibatch must not exceed batch_size")

    def to_dict(self):
        d = asdict(self)
        d["drop"] = list(self.drop)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "fa" in d and isinstance(d["fa"], dict):
            fa_known = {f.name for f in fields(FaConfig)}
            bad = set(d["fa"]) - fa_known
            if bad:
                raise ValueError(f"unknown fa keys: {sorted(bad)}")
            d["fa"] = FaConfig(**d["fa"])
        if "drop" in d:
            d["drop"] = tuple(d["drop"])
        return cls(**d)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns (new_params, new_state)."""
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{k}: grad {g.shape} vs param {p.shape}")
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def _epoch_report(reports, weights, dropped):
    w = np.asarray(weights, dtype=np.float64) / np.sum(weights)
    vals = {k: float(sum(wi * getattr(r, k) for wi, r in zip(w, reports))) for k in TERMS}
    total = float(sum(wi * r.l_total for wi, r in zip(w, reports)))
    return LossReport(**vals, l_total=total, dropped=dropped)


def train(config, examples, model_cfg=ModelConfig(), params=None, on_epoch=None):
    """Train on prepared examples.

    Returns ``(Checkpoint, [LossReport per epoch])``. ``on_epoch(epoch,
    report)`` is called after every epoch.
    """
    if config.epochs > 0 and not examples:
        raise DataExhausted("no training examples")
    params = init_params(model_cfg, config.seed) if params is None else dict(params)
    state = AdamState.zeros_like(params)
    shuffle = rng_for(config.seed, "shuffle")
    history = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(len(examples))
        reports, sizes = [], []
        for start in range(0, len(order), config.batch_size):
            batch = Batch.from_examples([examples[i] for i in order[start : start + config.batch_size]])
            report, grads = loss_and_grads(params, batch, model_cfg, config.fa, config.ucl_minibatch, config.drop)
            if not math.isfinite(report.l_total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(f"epoch {epoch}, batch at {start}: {report.terms()}")
            params, state = adam_step(params, grads, state, config.learning_rate)
            report.gradients = {}
            reports.append(report)
            sizes.append(len(batch))
        summary = _epoch_report(reports, sizes, reports[0].dropped)
        history.append(summary)
        log.info("epoch %d %s", epoch, summary.to_json())
        if on_epoch is not None:
            on_epoch(epoch, summary)
    ckpt = Checkpoint(dict(params), {"train": config.to_dict(), "model": asdict(model_cfg)}, config.epochs)
    return ckpt, history


def params_from_checkpoint(c):
    return {k: np.asarray(v, dtype=np.float64) for k, v in c.tensors.items()}


def model_config_from_checkpoint(c):
    cfg = dict((c.config or {}).get("model", {}))
    if "conv_channels" in cfg:
        cfg["conv_channels"] = tuple(cfg["conv_channels"])
    return ModelConfig(**cfg)


def prepare_examples(trials, spec=None, n_mels=40, waveforms=None):
    """Log-mel features for trials; audio is synthesised unless ``waveforms`` is given."""
    spec = SynthSpec() if spec is None else spec
    out = []
    for i, t in enumerate(trials):
        w = render_trial(t, spec) if waveforms is None else waveforms[i]
        mel = compute_logmel(w, n_mels).frames
        out.append(Example(mel, tuple(t.phoneme_ids), int(t.match), t.keyword.text, t.audio_id))
    return out


def synthetic_split(keywords=None, n_per_kw=10, neg_ratio=1.0, hard_neg_fraction=0.5, seed=0, spec=None, lex=None):
    """Train trials and a disjoint held-out set (fresh audio) for the same keywords."""
    kws = make_keywords(list(keywords or DEFAULT_KEYWORDS), lex)
    train_trials = build_trials(kws, n_per_kw, neg_ratio, hard_neg_fraction, seed)
    held = build_trials(kws, n_per_kw, neg_ratio, hard_neg_fraction, int(rng_for(seed, "holdout").integers(2**63)))
    return kws, prepare_examples(train_trials, spec), prepare_examples(held, spec)

