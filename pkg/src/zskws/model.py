"""Full model: parameter init, batched forward pass and the six-term objective."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .alignment import batch_confidences, ctc_loss
from .encoders import ModelConfig, audio_graph, init_encoder_params, text_graph
from .losses import FaConfig, bce, fa_loss, pcl_loss, total_loss, ucl_loss
from .matcher import attention_graph, discriminate_graph, init_matcher_params, pooled_graph, similarity_graph
from .rng import rng_for

DROPPABLE = {"pcl": "l_pcl", "ucl": "l_ucl", "fa": "l_fa", "ctc": "l_ctc", "phon": "l_phon", "utt": "l_utt"}


def init_params(cfg=ModelConfig(), seed=0):
    rng = rng_for(seed, "init")
    params = init_encoder_params(cfg, rng)
    params.update(init_matcher_params(cfg, rng))
    return params


@dataclass
class Batch:
    mel: np.ndarray  # [B, T_f, n_mels]
    text_ids: np.ndarray  # [B, T_max], right-padded with 0
    lengths: np.ndarray  # [B]
    match: np.ndarray  # [B]

    def __len__(self):
        return len(self.lengths)

    @classmethod
    def from_examples(cls, examples):
        lengths = np.array([len(e.phoneme_ids) for e in examples])
        ids = np.zeros((len(examples), lengths.max()), dtype=np.int64)
        for i, e in enumerate(examples):
            ids[i, : lengths[i]] = e.phoneme_ids
        mels = {e.mel.shape for e in examples}
        if len(mels) != 1:
            raise ValueError(f"batch mixes mel shapes {sorted(mels)}")
        return cls(
            np.stack([e.mel for e in examples]),
            ids,
            lengths,
            np.array([e.match for e in examples], dtype=np.float64),
        )


@dataclass
class Example:
    mel: np.ndarray
    phoneme_ids: tuple
    match: int
    keyword: str = ""
    audio_id: str = ""


def forward(params, batch, cfg=ModelConfig()):
    """Run every module on a batch; returns a dict of Tensors."""
    e_a, z = audio_graph(params, batch.mel, cfg)
    e_t = text_graph(params, batch.text_ids, cfg)
    joint, attn = attention_graph(params, e_t, e_a)
    q_utt, q_phon = discriminate_graph(params, joint, batch.lengths)
    return {"e_a": e_a, "z": z, "e_t": e_t, "joint": joint, "attn": attn, "q_utt": q_utt, "q_phon": q_phon}


def ucl_groups(batch, size):
    """Disjoint groups of ``size`` matched pair indices, in batch order; remainder dropped."""
    matched = np.flatnonzero(batch.match == 1)
    n = len(matched) // size
    return [matched[i * size : (i + 1) * size] for i in range(n)]


def objective(params, batch, cfg=ModelConfig(), fa=FaConfig(), ucl_size=5, drop=()):
    """Assemble the six-term loss as a graph.

    Returns (total Tensor, LossReport). Dropped terms are skipped entirely and
    reported as 0.
    """
    dropped = tuple(DROPPABLE.get(d, d) for d in drop)
    out = forward(params, batch, cfg)
    m = batch.match
    parts, nodes = {}, []
    valid = np.nonzero(np.arange(batch.text_ids.shape[1])[None, :] < batch.lengths[:, None])

    if "l_utt" not in dropped:
        v, g = bce(out["q_utt"].data, m, grad=True)
        parts["l_utt"] = v
        nodes.append(ad.custom(v, [out["q_utt"]], [g]))

    if "l_phon" not in dropped:
        q_phon = out["q_phon"][valid]
        v, g = bce(q_phon.data, m[valid[0]], grad=True)
        parts["l_phon"] = v
        nodes.append(ad.custom(v, [q_phon], [g]))

    z = out["z"]
    ids = [batch.text_ids[i, : batch.lengths[i]] for i in range(len(batch))]
    if "l_ctc" not in dropped:
        matched = np.flatnonzero(m == 1)
        if len(matched):
            gz = np.zeros_like(z.data)
            total = 0.0
            for i in matched:
                v, g = ctc_loss(z.data[i], ids[i], blank=cfg.blank_id)
                total += v
                gz[i] = g
            v = total / len(matched)
            parts["l_ctc"] = v
            nodes.append(ad.custom(v, [z], [gz / len(matched)]))

    if "l_pcl" not in dropped:
        s, gs = batch_confidences(zip(z.data, ids, m), blank=cfg.blank_id, with_grads=True)
        v, dv = pcl_loss(s, m, grad=True)
        parts["l_pcl"] = v
        nodes.append(ad.custom(v, [z], [np.stack([d * gi for d, gi in zip(dv, gs)])]))

    if "l_ucl" not in dropped:
        groups = ucl_groups(batch, ucl_size)
        if groups:
            pa, pt = pooled_graph(out["e_a"], out["e_t"], batch.lengths)
            total = 0.0
            for idx in groups:
                sim = similarity_graph(pa[idx], pt[idx])
                kw = [tuple(ids[i]) for i in idx]
                mask = np.array([[float(a == b) for b in kw] for a in kw])
                v, (g_a, g_t) = ucl_loss(sim.data, mask, grad=True)
                total += v
                nodes.append(ad.custom(v / len(groups), [sim], [(g_a + g_t.T) / len(groups)]))
            parts["l_ucl"] = total / len(groups)

    if "l_fa" not in dropped:
        v, g = fa_loss(out["q_utt"].data, m, fa, grad=True)
        parts["l_fa"] = v
        nodes.append(ad.custom(v, [out["q_utt"]], [g]))

    report = total_loss(parts, dropped=dropped)
    total = nodes[0]
    for n in nodes[1:]:
        total = total + n
    return total, report, out


def as_leaves(params):
    return {k: ad.Tensor(v, requires_grad=True, name=k) for k, v in params.items()}


def loss_and_grads(params, batch, cfg=ModelConfig(), fa=FaConfig(), ucl_size=5, drop=()):
    """Value of the objective and its gradient w.r.t. every parameter."""
    leaves = as_leaves(params)
    total, report, _ = objective(leaves, batch, cfg, fa, ucl_size, drop)
    total.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in leaves.items()}
    report.gradients = grads
    return report, grads


def infer(params, batch, cfg=ModelConfig()):
    """Forward pass without gradient tracking; returns numpy arrays."""
    leaves = {k: ad.Tensor(v) for k, v in params.items()}
    return {k: v.data for k, v in forward(leaves, batch, cfg).items()}


def score(params, examples, cfg=ModelConfig(), batch_size=64):
    """Utterance-level match probability for every example."""
    out = []
    for start in range(0, len(examples), batch_size):
        batch = Batch.from_examples(examples[start : start + batch_size])
        out.append(infer(params, batch, cfg)["q_utt"])
    return np.concatenate(out) if out else np.zeros(0)
