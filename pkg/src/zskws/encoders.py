"""Audio and text encoders producing 128-d frame and phoneme embeddings.

The audio side runs two streams over log-mel frames and concatenates them:

* a strided conv stack (kernels 8/8/8, strides 2/4/1) whose receptive field
  is 78 mel frames (~775 ms) and whose output hop is 8 mel frames (80 ms),
  emitting 96 channels;
* a single k=3 conv projection to 32 channels, average-pooled onto the same
  80 ms grid (the 8 projected frames at the centre of each window).

A per-frame affine head maps the 128-d embedding to CTC logits over the
phoneme inventory plus a trailing blank.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import OddDim, ShapeMismatch, UnknownPhonemeId

EMBED_DIM = 128
WINDOW_FRAMES = 78
HOP_FRAMES = 8


@dataclass(frozen=True)
class ModelConfig:
    n_mels: int = 40
    n_phones: int = 39
    dim: int = EMBED_DIM
    stream_dim: int = 96
    mel_dim: int = 32
    conv_channels: tuple = (128, 192)
    phone_dim: int = 64
    gru_hidden: int = 128
    posenc: bool = True

    @property
    def blank_id(self):
        return self.n_phones


@dataclass
class AudioEmbedding:
    e_a: np.ndarray  # [T_a, 128]
    frame_hop_ms: int = 80


@dataclass
class CtcLogits:
    z: np.ndarray  # [T_a, n_phones + 1]
    blank_id: int = 39


@dataclass
class PhonemeQuery:
    phoneme_ids: np.ndarray
    e_t: np.ndarray  # [T_t, 128]
    length: int = field(default=0)

    def __post_init__(self):
        if not self.length:
            self.length = len(self.phoneme_ids)


def embedding_frame_count(n_mel_frames):
    """Number of 80 ms embedding frames for a given count of 10 ms mel frames."""
    if n_mel_frames < WINDOW_FRAMES:
        raise ShapeMismatch(f"{n_mel_frames} mel frames < receptive field of {WINDOW_FRAMES}")
    return (n_mel_frames * 10 - 775) // 80 + 1


def positional_encoding(length, dim):
    if dim % 2:
        raise OddDim(f"positional encoding needs an even dim, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    rates = 10000.0 ** (np.arange(0, dim, 2, dtype=np.float64) / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(pos / rates)
    pe[:, 1::2] = np.cos(pos / rates)
    return pe


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_encoder_params(cfg, rng):
    c1, c2 = cfg.conv_channels
    d = cfg.dim
    p = {
        "audio.conv1.w": _uniform(rng, (8, cfg.n_mels, c1), 8 * cfg.n_mels),
        "audio.conv1.b": np.zeros(c1),
        "audio.conv2.w": _uniform(rng, (8, c1, c2), 8 * c1),
        "audio.conv2.b": np.zeros(c2),
        "audio.conv3.w": _uniform(rng, (8, c2, cfg.stream_dim), 8 * c2) / np.sqrt(2.0),
        "audio.conv3.b": np.zeros(cfg.stream_dim),
        "audio.melproj.w": _uniform(rng, (3, cfg.n_mels, cfg.mel_dim), 3 * cfg.n_mels) / np.sqrt(2.0),
        "audio.melproj.b": np.zeros(cfg.mel_dim),
        "ctc.w": _uniform(rng, (d, cfg.n_phones + 1), d) / np.sqrt(2.0),
        "ctc.b": np.zeros(cfg.n_phones + 1),
        "text.table": rng.normal(0.0, 1.0, size=(cfg.n_phones, cfg.phone_dim)),
        "text.fc.w": _uniform(rng, (cfg.phone_dim, d), cfg.phone_dim),
        "text.fc.b": np.zeros(d),
    }
    return p


def _mel_pool_matrix(n_proj, t_a):
    # projected frame j spans mel frames j..j+2; embedding frame t spans
    # mel frames [8t, 8t + 78); average the 8 projected frames at its centre
    pool = np.zeros((t_a, n_proj))
    for t in range(t_a):
        start = HOP_FRAMES * t + (WINDOW_FRAMES - HOP_FRAMES) // 2 - 1
        pool[t, start : start + HOP_FRAMES] = 1.0 / HOP_FRAMES
    return pool


def audio_graph(params, mel, cfg):
    """Tensor-level audio forward. ``mel`` is [B, T_f, n_mels].

    Returns (e_a, z) as Tensors of shape [B, T_a, 128] and [B, T_a, V+1].
    """
    mel = ad.as_tensor(mel)
    if mel.shape[-1] != cfg.n_mels:
        raise ShapeMismatch(f"expected {cfg.n_mels} mel bins, got {mel.shape[-1]}")
    t_a = embedding_frame_count(mel.shape[-2])
    h = ad.relu(ad.conv1d(mel, params["audio.conv1.w"], params["audio.conv1.b"], stride=2))
    h = ad.relu(ad.conv1d(h, params["audio.conv2.w"], params["audio.conv2.b"], stride=4))
    stream = ad.conv1d(h, params["audio.conv3.w"], params["audio.conv3.b"], stride=1)
    proj = ad.conv1d(mel, params["audio.melproj.w"], params["audio.melproj.b"], stride=1)
    pooled = ad.matmul(_mel_pool_matrix(proj.shape[-2], t_a), proj)
    if stream.shape[-2] != t_a:
        raise ShapeMismatch("conv stack frame count disagrees with framing geometry")
    e_a = ad.concat([stream, pooled], axis=-1)
    if cfg.posenc:
        e_a = e_a + positional_encoding(t_a, cfg.dim)
    z = ad.matmul(e_a, params["ctc.w"]) + params["ctc.b"]
    return e_a, z


def text_graph(params, ids, cfg):
    """Tensor-level text forward. ``ids`` is an int array [B, T_t] (or [T_t])."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.n_phones):
        bad = ids[(ids < 0) | (ids >= cfg.n_phones)][0]
        raise UnknownPhonemeId(f"phoneme id {bad} outside inventory of {cfg.n_phones}")
    rows = ad.take_rows(params["text.table"], ids)
    e_t = ad.relu(ad.matmul(rows, params["text.fc.w"]) + params["text.fc.b"])
    if cfg.posenc:
        e_t = e_t + positional_encoding(ids.shape[-1], cfg.dim)
    return e_t


def _as_params(p):
    return {k: v if isinstance(v, ad.Tensor) else ad.Tensor(v) for k, v in p.items()}


def encode_audio(frames, p, cfg=ModelConfig()):
    """Encode one utterance's log-mel frames into (AudioEmbedding, CtcLogits)."""
    mel = getattr(frames, "frames", frames)
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2:
        raise ShapeMismatch("expected a [T_f, n_mels] matrix")
    e_a, z = audio_graph(_as_params(p), mel[None], cfg)
    return AudioEmbedding(e_a.data[0]), CtcLogits(z.data[0], blank_id=cfg.blank_id)


def encode_text(phoneme_ids, p, cfg=ModelConfig()):
    ids = np.asarray(phoneme_ids, dtype=np.int64)
    if ids.ndim != 1 or not 1 <= len(ids) <= 64:
        raise ShapeMismatch("phoneme sequence must have 1..64 entries")
    e_t = text_graph(_as_params(p), ids, cfg)
    return PhonemeQuery(ids, e_t.data)


def param_count(p):
    return int(sum(np.asarray(getattr(v, "data", v)).size for v in p.values()))
