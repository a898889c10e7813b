"""Cross-attention pattern extractor, GRU discriminator and utterance similarity."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoders import _as_params, _uniform
from .errors import EmptyBatch, ShapeMismatch


@dataclass
class JointRepresentation:
    e_joint: np.ndarray  # [T_t, 128]
    attn: np.ndarray  # [T_t, T_a]


@dataclass
class MatchOutput:
    q_utt: float
    q_phon: np.ndarray


@dataclass
class SimilarityMatrix:
    s_utt: np.ndarray  # [M, M], rows audio, columns text
    match_mask: np.ndarray


def init_matcher_params(cfg, rng):
    d, h = cfg.dim, cfg.gru_hidden
    return {
        "attn.wq": _uniform(rng, (d, d), d) / np.sqrt(3.0),
        "attn.wk": _uniform(rng, (d, d), d) / np.sqrt(3.0),
        "attn.wv": _uniform(rng, (d, d), d) / np.sqrt(3.0),
        # gate order: reset, update, candidate
        "gru.w_in": _uniform(rng, (d, 3 * h), d) / np.sqrt(3.0),
        "gru.w_hid": _uniform(rng, (h, 3 * h), h) / np.sqrt(3.0),
        "gru.b_in": np.zeros(3 * h),
        "gru.b_hid": np.zeros(3 * h),
        "head.utt.w": _uniform(rng, (h, 1), h) / np.sqrt(3.0),
        "head.utt.b": np.zeros(1),
        "head.phon.w": _uniform(rng, (h, 1), h) / np.sqrt(3.0),
        "head.phon.b": np.zeros(1),
    }


def attention_graph(params, e_t, e_a):
    """Single-head scaled dot-product attention, text queries over audio frames.

    e_t: [..., T_t, d], e_a: [..., T_a, d]. Returns (e_joint, attn).
    """
    if e_t.shape[-1] != e_a.shape[-1]:
        raise ShapeMismatch(f"query dim {e_t.shape[-1]} != key dim {e_a.shape[-1]}")
    d = e_t.shape[-1]
    q = ad.matmul(e_t, params["attn.wq"])
    k = ad.matmul(e_a, params["attn.wk"])
    v = ad.matmul(e_a, params["attn.wv"])
    scores = ad.matmul(q, ad.transpose(k)) * (1.0 / np.sqrt(d))
    attn = ad.softmax(scores, axis=-1)
    return ad.matmul(attn, v), attn


def gru_graph(params, x):
    """Run a GRU from a zero state over x [B, T, d]; returns hidden states [B, T, h]."""
    h_dim = params["gru.w_hid"].shape[0]
    b, t = x.shape[0], x.shape[1]
    gi = ad.matmul(x, params["gru.w_in"]) + params["gru.b_in"]
    h = ad.Tensor(np.zeros((b, h_dim)))
    states = []
    for step in range(t):
        g_in = gi[:, step, :]
        g_hid = ad.matmul(h, params["gru.w_hid"]) + params["gru.b_hid"]
        r = ad.sigmoid(g_in[:, :h_dim] + g_hid[:, :h_dim])
        u = ad.sigmoid(g_in[:, h_dim : 2 * h_dim] + g_hid[:, h_dim : 2 * h_dim])
        n = ad.tanh(g_in[:, 2 * h_dim :] + r * g_hid[:, 2 * h_dim :])
        h = n + u * (h - n)
        states.append(h)
    return ad.stack(states, axis=1)


def discriminate_graph(params, e_joint, lengths):
    """GRU over e_joint [B, T, d] with per-row true lengths.

    Returns (q_utt [B], q_phon [B, T]); q_phon entries past a row's length
    are padding and must be ignored by the caller.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    states = gru_graph(params, e_joint)
    last = states[np.arange(len(lengths)), lengths - 1]
    q_utt = ad.sigmoid(ad.matmul(last, params["head.utt.w"]) + params["head.utt.b"])
    q_phon = ad.sigmoid(ad.matmul(states, params["head.phon.w"]) + params["head.phon.b"])
    return q_utt[:, 0], q_phon[:, :, 0]


def pooled_graph(e_a, e_t, lengths):
    """Mean-pooled utterance vectors: audio over all frames, text over real phonemes."""
    pa = ad.mean(e_a, axis=-2)
    t = e_t.shape[-2]
    weights = (np.arange(t)[None, :] < np.asarray(lengths)[:, None]) / np.asarray(lengths, dtype=np.float64)[:, None]
    pt = ad.matmul(ad.Tensor(weights[:, None, :]), e_t)[:, 0, :]
    return pa, pt


def similarity_graph(pa, pt):
    return ad.matmul(pa, ad.transpose(pt)) * (1.0 / np.sqrt(pa.shape[-1]))


def cross_attend(e_t, e_a, p):
    """Attend from phoneme queries to audio frames for one pair."""
    q = np.asarray(getattr(e_t, "e_t", e_t), dtype=np.float64)
    k = np.asarray(getattr(e_a, "e_a", e_a), dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2:
        raise ShapeMismatch("expected [T, d] matrices")
    joint, attn = attention_graph(_as_params(p), ad.Tensor(q), ad.Tensor(k))
    return JointRepresentation(joint.data, attn.data)


def discriminate(j, p):
    e = np.asarray(getattr(j, "e_joint", j), dtype=np.float64)
    if e.ndim != 2 or e.shape[1] != np.asarray(getattr(p["gru.w_in"], "data", p["gru.w_in"])).shape[0]:
        raise ShapeMismatch("joint representation has the wrong shape")
    q_utt, q_phon = discriminate_graph(_as_params(p), ad.Tensor(e[None]), [len(e)])
    return MatchOutput(float(q_utt.data[0]), q_phon.data[0])


def pooled_similarity(audio_batch, text_batch, match_mask=None):
    """Scaled dot products of mean-pooled audio and text embeddings.

    Rows index audio, columns index text. ``match_mask`` defaults to the
    identity (audio v matches text v).
    """
    if len(audio_batch) == 0 or len(text_batch) == 0:
        raise EmptyBatch("similarity needs at least one pair")
    if len(audio_batch) != len(text_batch):
        raise ShapeMismatch("audio and text batches differ in size")
    pa = np.stack([np.asarray(getattr(a, "e_a", a)).mean(axis=0) for a in audio_batch])
    pt = np.stack([np.asarray(getattr(t, "e_t", t)).mean(axis=0) for t in text_batch])
    s = pa @ pt.T / np.sqrt(pa.shape[1])
    m = np.eye(len(pa)) if match_mask is None else np.asarray(match_mask, dtype=np.float64)
    return SimilarityMatrix(s, m)


def cosine_matrix(audio_vectors, text_vectors):
    """Cosine similarity between pooled audio (rows) and text (columns) vectors."""
    a = np.asarray(audio_vectors, dtype=np.float64)
    t = np.asarray(text_vectors, dtype=np.float64)
    a = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-12)
    t = t / np.maximum(np.linalg.norm(t, axis=1, keepdims=True), 1e-12)
    return a @ t.T

