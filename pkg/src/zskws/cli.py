"""Command-line workflow: synth, train, eval, ablate, align."""

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import data
from .checkpoint import load_checkpoint, save_checkpoint, total_param_count
from .data import Lexicon, SynthSpec, build_trials, fit_length, load_wav, make_keywords, read_trials_csv
from .dsp import compute_logmel
from .encoders import ModelConfig
from .errors import BadCheckpoint, ZskwsError
from .figures import emit_alignment_heatmap, emit_similarity_matrix
from .losses import FaConfig
from .matcher import cosine_matrix
from .metrics import TrialScore, evaluate, far_frr_sweep, write_scores_csv
from .model import Batch, Example, infer, init_params, loss_and_grads, score
from .train import TrainConfig, model_config_from_checkpoint, params_from_checkpoint, train

log = logging.getLogger("zskws")

SYNTH_KEYS = {f.name for f in fields(SynthSpec)} - {"templates"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


class IoError(ZskwsError):
    pass


def load_config(path):
    """Read a JSON config; keys must be TrainConfig, FaConfig or SynthSpec fields."""
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    fa_keys = {f.name for f in fields(FaConfig)}
    unknown = set(cfg) - TRAIN_KEYS - SYNTH_KEYS - fa_keys
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def train_config(cfg, args):
    base = {k: v for k, v in cfg.items() if k in TRAIN_KEYS}
    fa = dict(base.pop("fa", {}) or {})
    fa.update({k: v for k, v in cfg.items() if k in {f.name for f in fields(FaConfig)}})
    for key in ("epochs", "learning_rate", "batch_size", "ucl_minibatch", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    base["fa"] = fa
    return TrainConfig.from_dict(base)


def synth_spec(cfg):
    spec = {k: v for k, v in cfg.items() if k in SYNTH_KEYS}
    if "lead_ms" in spec:
        spec["lead_ms"] = tuple(spec["lead_ms"])
    return SynthSpec(**spec)


def _mkdir(path):
    try:
        Path(path).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {path}: {exc}") from exc


def _write(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_keywords(path):
    if not path:
        return list(data.DEFAULT_KEYWORDS)
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def cmd_synth(args):
    cfg = load_config(args.config)
    spec = synth_spec(cfg)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    lex = Lexicon.load(args.lexicon)
    kws = make_keywords(read_keywords(args.keywords), lex)
    trials = build_trials(kws, args.n_per_kw, args.neg_ratio, args.hard_neg_frac, seed)
    out = Path(args.out)
    _mkdir(out / "wav")
    try:
        for t in trials:
            t.audio_path = f"wav/{t.audio_id}.wav"
            data.save_wav(out / t.audio_path, data.render_trial(t, spec))
        data.write_trials_csv(out / "trials.csv", trials)
        lex.save(out / "lexicon.txt")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    print(f"wrote {len(trials)} trials to {out / 'trials.csv'}")
    return 0


def load_examples(trials_path, n_samples=None, n_mels=40):
    """Read a trial list and its audio, fitted to one common length."""
    trials_path = Path(trials_path)
    try:
        rows = read_trials_csv(trials_path)
        waves = [load_wav(trials_path.parent / p) for p, _, _ in rows]
    except OSError as exc:
        raise IoError(str(exc)) from exc
    n = n_samples or max(len(w.samples) for w in waves)
    examples = []
    for (path, kw, match), w in zip(rows, waves):
        mel = compute_logmel(fit_length(w, n), n_mels).frames
        examples.append(Example(mel, kw.phoneme_ids, match, kw.text, path))
    return examples, n


def _run_training(cfg, examples, log_path):
    lines = []

    def on_epoch(epoch, report):
        lines.append(report.to_json(epoch=epoch))

    ckpt, history = train(cfg, examples, on_epoch=on_epoch)
    _write(log_path, "".join(line + "\n" for line in lines))
    return ckpt, history


def cmd_train(args):
    cfg = train_config(load_config(args.config), args)
    examples, n = load_examples(Path(args.corpus) / "trials.csv")
    ckpt, _ = _run_training(cfg, examples, args.log or f"{args.out}.log.jsonl")
    ckpt.config["n_samples"] = n
    _save(ckpt, args.out)
    print(f"parameters: {total_param_count(ckpt)}")
    return 0


def _save(ckpt, path):
    try:
        save_checkpoint(ckpt, path)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _load(path):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except ZskwsError as exc:
        raise BadCheckpoint(f"{path}: {type(exc).__name__}: {exc}") from exc


def evaluate_examples(params, examples, threshold, out_dir, model_cfg=ModelConfig()):
    """Score, compute metrics and emit figures for a list of examples."""
    out_dir = Path(out_dir)
    _mkdir(out_dir)
    s = score(params, examples, model_cfg)
    labels = np.array([e.match for e in examples])
    rows = [TrialScore(e.audio_id, e.keyword, float(v), int(e.match)) for e, v in zip(examples, s)]
    write_scores_csv(out_dir / "scores.csv", rows)

    keywords = {}
    for e in examples:
        keywords.setdefault(e.keyword, e.phoneme_ids)
    names = sorted(keywords)
    positives = [e for e in examples if e.match == 1 and e.keyword in keywords]
    grouped, truth = None, None
    if positives and len(names) >= 2:
        cands = [Example(e.mel, keywords[k], 0, k, e.audio_id) for e in positives for k in names]
        grouped = score(params, cands, model_cfg).reshape(len(positives), len(names))
        truth = [names.index(e.keyword) for e in positives]
    report = evaluate(s, labels, threshold, grouped, truth)
    result = report.to_dict()
    if report.n_positive and report.n_negative:
        result["sweep"] = far_frr_sweep(s, labels)
    _write(out_dir / "metrics.json", json.dumps(result, indent=2, sort_keys=True) + "\n")

    # one positive audio per keyword, first five keywords
    firsts = []
    for k in names:
        e = next((p for p in positives if p.keyword == k), None)
        if e is not None:
            firsts.append(e)
    firsts = firsts[:5]
    if len(firsts) >= 2:
        out = infer(params, Batch.from_examples(firsts), model_cfg)
        lengths = np.array([len(e.phoneme_ids) for e in firsts])
        pa = out["e_a"].mean(axis=1)
        pt = np.stack([out["e_t"][i, : lengths[i]].mean(axis=0) for i in range(len(firsts))])
        labels_ = [e.keyword for e in firsts]
        emit_similarity_matrix(cosine_matrix(pa, pt), labels_, labels_, out_dir / "similarity")
    if positives:
        e = positives[0]
        out = infer(params, Batch.from_examples([e]), model_cfg)
        emit_alignment_heatmap(out["attn"][0, : len(e.phoneme_ids)], data.ids_to_phonemes(e.phoneme_ids).split(), out_dir / "alignment")
    return result


def cmd_eval(args):
    ckpt = _load(args.ckpt)
    params = params_from_checkpoint(ckpt)
    n = (ckpt.config or {}).get("n_samples")
    examples, _ = load_examples(args.trials, n)
    result = evaluate_examples(params, examples, args.threshold, args.out, model_config_from_checkpoint(ckpt))
    print(json.dumps({k: result[k] for k in ("auc", "eer", "far_at_threshold", "acc_n")}))
    return 0


def initial_terms(cfg, examples):
    """Loss terms at initialisation on the first batch (before any update)."""
    params = init_params(ModelConfig(), cfg.seed)
    batch = Batch.from_examples(examples[: cfg.batch_size])
    report, _ = loss_and_grads(params, batch, ModelConfig(), cfg.fa, cfg.ucl_minibatch, cfg.drop)
    return {k: v for k, v in report.terms().items() if k not in report.dropped}


def cmd_ablate(args):
    cfg = train_config(load_config(args.config), args)
    examples, n = load_examples(Path(args.corpus) / "trials.csv")
    held = load_examples(args.heldout, n)[0] if args.heldout else examples
    out = Path(args.out)
    _mkdir(out)
    results = {}
    for name, variant in (("full", cfg), (f"without_{args.drop}", replace(cfg, drop=(args.drop,)))):
        ckpt, _ = _run_training(variant, examples, out / f"{name}.log.jsonl")
        ckpt.config["n_samples"] = n
        _save(ckpt, out / f"{name}.ckpt")
        params = params_from_checkpoint(ckpt)
        results[name] = evaluate_examples(params, held, args.threshold, out / name)
        results[name]["initial_terms"] = initial_terms(variant, examples)
    _write(out / "ablation.json", json.dumps(results, indent=2, sort_keys=True) + "\n")
    print(json.dumps({k: {m: v[m] for m in ("auc", "eer", "far_at_threshold")} for k, v in results.items()}))
    return 0


def cmd_align(args):
    ckpt = _load(args.ckpt)
    params = params_from_checkpoint(ckpt)
    ids = data.to_phonemes(args.keyword, Lexicon.load(args.lexicon))
    w = load_wav(args.wav)
    n = (ckpt.config or {}).get("n_samples")
    if n:
        w = fit_length(w, n)
    ex = Example(compute_logmel(w).frames, ids, 1, args.keyword, str(args.wav))
    out = infer(params, Batch.from_examples([ex]), model_config_from_checkpoint(ckpt))
    emit_alignment_heatmap(out["attn"][0], data.ids_to_phonemes(ids).split(), args.out)
    print(json.dumps({"q_utt": float(out["q_utt"][0])}))
    return 0


def _train_flags(p):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--ucl-minibatch", dest="ucl_minibatch", type=int)
    p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="zskws", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--keywords", help="file with one keyword per line")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-kw", dest="n_per_kw", type=int, default=10)
    p.add_argument("--neg-ratio", dest="neg_ratio", type=float, default=1.0)
    p.add_argument("--hard-neg-frac", dest="hard_neg_frac", type=float, default=0.5)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trial list with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train full and one-term-dropped variants")
    p.add_argument("--corpus", required=True)
    p.add_argument("--heldout", help="trials.csv to evaluate on (default: the training corpus)")
    p.add_argument("--out", required=True)
    p.add_argument("--drop", required=True, choices=("pcl", "ucl", "fa"))
    p.add_argument("--threshold", type=float, default=0.5)
    _train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("align", help="emit one phoneme-to-frame heatmap")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--keyword", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_align)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ZskwsError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
