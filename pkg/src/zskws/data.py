"""Corpus handling: lexicon, WAV I/O, synthetic keyword audio and trial lists."""

import csv
import itertools
import wave
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, Waveform, hz_to_mel, mel_to_hz
from .errors import (
    BadFormat,
    BadSampleRate,
    InsufficientKeywords,
    NotMono,
    OutOfVocabulary,
    UnknownPhonemeId,
)
from .rng import rng_for

PHONEMES = (
    "AA AE AH AO AW AY B CH D DH EH ER EY F G HH IH IY JH K L M N NG "
    "OW OY P R S SH T TH UH UW V W Y Z ZH"
).split()
PHONE_ID = {p: i for i, p in enumerate(PHONEMES)}

DEFAULT_KEYWORDS = ("bed", "bird", "cat", "hat", "light", "night", "three", "tree", "marvin", "sheila")
TRIAL_HEADER = ("audio_path", "keyword", "phonemes", "match")


class Lexicon:
    """Word -> phoneme-ID lookup, case-insensitive."""

    def __init__(self, entries=None):
        self.inventory = PHONEMES
        self.entries = {}
        for word, phones in (entries or {}).items():
            self.add(word, phones)

    def add(self, word, phones):
        if isinstance(phones, str):
            phones = phones.split()
        ids = []
        for p in phones:
            if isinstance(p, str):
                if p.upper() not in PHONE_ID:
                    raise UnknownPhonemeId(f"{p!r} in entry for {word!r}")
                ids.append(PHONE_ID[p.upper()])
            else:
                if not 0 <= int(p) < len(PHONEMES):
                    raise UnknownPhonemeId(f"id {p} in entry for {word!r}")
                ids.append(int(p))
        self.entries[word.lower()] = tuple(ids)

    def __contains__(self, word):
        return word.lower() in self.entries

    def __getitem__(self, word):
        return self.entries[word.lower()]

    def __len__(self):
        return len(self.entries)

    @classmethod
    def load(cls, path=None):
        """Read a lexicon file: one ``WORD P1 P2 ...`` entry per line.

        With no path the packaged ~200-word lexicon is used.
        """
        if path is None:
            text = resources.files("zskws").joinpath("data/lexicon.txt").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        lex = cls()
        for line in text.splitlines():
            parts = line.split()
            if parts and not parts[0].startswith("#"):
                lex.add(parts[0], parts[1:])
        return lex

    def save(self, path):
        lines = [f"{w.upper()} {' '.join(PHONEMES[i] for i in ids)}" for w, ids in sorted(self.entries.items())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def phonemes_to_ids(symbols):
    ids = []
    for sym in symbols:
        if sym.upper() not in PHONE_ID:
            raise OutOfVocabulary(sym)
        ids.append(PHONE_ID[sym.upper()])
    return tuple(ids)


def ids_to_phonemes(ids):
    return " ".join(PHONEMES[i] for i in ids)


def to_phonemes(text, lex=None):
    """Phoneme IDs for a word or phrase, or for direct ``/P1 P2 .../`` notation."""
    text = text.strip()
    if len(text) >= 2 and text.startswith("/") and text.endswith("/"):
        return phonemes_to_ids(text[1:-1].split())
    lex = Lexicon.load() if lex is None else lex
    ids = []
    for token in text.split():
        if token not in lex:
            raise OutOfVocabulary(token)
        ids.extend(lex[token])
    if not ids:
        raise OutOfVocabulary(text)
    return tuple(ids)


# --- WAV ---------------------------------------------------------------------


def load_wav(path):
    """Read a 16 kHz mono PCM16 RIFF/WAVE file."""
    try:
        with wave.open(str(path), "rb") as f:
            channels, width, rate = f.getnchannels(), f.getsampwidth(), f.getframerate()
            comp = f.getcomptype()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as exc:
        raise BadFormat(f"{path}: {exc}") from exc
    if comp != "NONE" or width != 2:
        raise BadFormat(f"{path}: expected 16-bit PCM, got {width * 8}-bit {comp}")
    if channels != 1:
        raise NotMono(f"{path}: {channels} channels")
    if rate != SAMPLE_RATE:
        raise BadSampleRate(f"{path}: {rate} Hz")
    return Waveform(np.frombuffer(raw, dtype="<i2").astype(np.int16), rate)


def save_wav(path, w, channels=1):
    samples = np.asarray(getattr(w, "samples", w), dtype=np.int16)
    rate = getattr(w, "sample_rate", SAMPLE_RATE)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(channels)
        f.setsampwidth(2)
        f.setframerate(rate)
        f.writeframes(np.repeat(samples, channels).astype("<i2").tobytes())


# --- synthesis -----------------------------------------------------------------


def default_templates(seed=0, grid_size=12):
    """Per-phoneme band centres (Hz).

    Each phoneme gets a distinct pair of positions on a mel-spaced grid of
    ``grid_size`` centres between 250 and 7000 Hz, so any two templates
    differ in at least one band.
    """
    rng = np.random.default_rng(seed)
    grid = mel_to_hz(np.linspace(hz_to_mel(250.0), hz_to_mel(7000.0), grid_size))
    pairs = list(itertools.combinations(range(grid_size), 2))
    picks = rng.choice(len(pairs), size=len(PHONEMES), replace=False)
    return tuple(tuple(float(grid[i]) for i in pairs[k]) for k in picks)


@dataclass(frozen=True)
class SynthSpec:
    templates: tuple = field(default_factory=default_templates)
    min_ms: float = 80.0
    max_ms: float = 120.0
    snr_db: float = 20.0
    amplitude: float = 0.3
    clip_seconds: float = 1.5
    lead_ms: tuple = (350.0, 450.0)

    def __post_init__(self):
        if len({tuple(t) for t in self.templates}) != len(self.templates):
            raise ValueError("phoneme templates must be pairwise distinct")


def _tone(bands, n, rng):
    t = np.arange(n) / SAMPLE_RATE
    phases = rng.uniform(0, 2 * np.pi, size=len(bands))
    x = sum(np.sin(2 * np.pi * f * t + ph) for f, ph in zip(bands, phases))
    ramp = min(n // 2, int(0.01 * SAMPLE_RATE))
    env = np.ones(n)
    env[:ramp] = np.hanning(2 * ramp)[:ramp]
    env[n - ramp :] = np.hanning(2 * ramp)[ramp:]
    return x * env / np.sqrt(len(bands) / 2)


def synth_utterance(phoneme_ids, spec=None, seed=0, clip=False):
    """Render a phoneme sequence as concatenated tone complexes plus white noise.

    Each phoneme lasts a jittered 80-120 ms. With ``clip=True`` the keyword is
    placed after a jittered lead-in inside a fixed ``spec.clip_seconds`` clip
    and noise covers the whole clip.
    """
    spec = SynthSpec() if spec is None else spec
    ids = [int(i) for i in phoneme_ids]
    if not ids:
        raise ValueError("need at least one phoneme")
    for i in ids:
        if not 0 <= i < len(spec.templates):
            raise UnknownPhonemeId(f"phoneme id {i}")
    rng = rng_for(seed, "synth")
    pieces = []
    for i in ids:
        n = int(round(rng.uniform(spec.min_ms, spec.max_ms) * SAMPLE_RATE / 1000))
        pieces.append(_tone(spec.templates[i], n, rng))
    speech = np.concatenate(pieces) * spec.amplitude
    if clip:
        total = int(round(spec.clip_seconds * SAMPLE_RATE))
        lead = int(round(rng.uniform(*spec.lead_ms) * SAMPLE_RATE / 1000))
        lead = min(lead, max(0, total - len(speech)))
        signal = np.zeros(total)
        signal[lead : lead + len(speech)] = speech[: total - lead]
    else:
        signal = speech
    noise_rms = np.sqrt(np.mean(speech**2)) / (10 ** (spec.snr_db / 20))
    signal = signal + rng.normal(0.0, noise_rms, size=len(signal))
    return Waveform(np.clip(np.round(signal * 32768), -32768, 32767).astype(np.int16))


# --- trials --------------------------------------------------------------------


def edit_distance(a, b):
    """Levenshtein distance between two phoneme sequences."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class Keyword:
    text: str
    phoneme_ids: tuple


@dataclass
class TrialPair:
    audio_id: str
    audio_keyword: Keyword
    keyword: Keyword
    match: int
    hard_negative: bool = False
    audio_seed: int = 0
    audio_path: str = ""

    @property
    def phoneme_ids(self):
        return self.keyword.phoneme_ids


def make_keywords(texts, lex=None):
    lex = Lexicon.load() if lex is None and any(not t.strip().startswith("/") for t in texts) else lex
    return [Keyword(t, to_phonemes(t, lex)) for t in texts]


def build_trials(keywords, n_per_kw, neg_ratio=1.0, hard_neg_fraction=0.5, seed=0, lex=None):
    """Positive and negative audio/keyword pairs.

    Every trial gets its own audio of ``audio_keyword``. Positives pair it with
    the same keyword; negatives pair it with either the keyword at minimal
    non-zero phoneme edit distance (hard) or a uniformly drawn other keyword.
    """
    kws = [k if isinstance(k, Keyword) else make_keywords([k], lex)[0] for k in keywords]
    if len(kws) < 2:
        raise InsufficientKeywords(f"need at least 2 keywords, got {len(kws)}")
    rng = rng_for(seed, "trials")
    n_neg = int(round(n_per_kw * neg_ratio))
    trials = []
    counter = 0
    for ki, kw in enumerate(kws):
        others = [o for j, o in enumerate(kws) if j != ki and o.phoneme_ids != kw.phoneme_ids]
        if not others:
            raise InsufficientKeywords("all keywords share one pronunciation")
        dists = [edit_distance(kw.phoneme_ids, o.phoneme_ids) for o in others]
        nearest = [o for o, d in zip(others, dists) if d == min(dists)]
        for _ in range(n_per_kw):
            trials.append(TrialPair(f"a{counter:06d}", kw, kw, 1, False, int(rng.integers(2**63))))
            counter += 1
        for _ in range(n_neg):
            hard = bool(rng.random() < hard_neg_fraction)
            pool = nearest if hard else others
            other = pool[int(rng.integers(len(pool)))]
            trials.append(TrialPair(f"a{counter:06d}", kw, other, 0, hard, int(rng.integers(2**63))))
            counter += 1
    return trials


def render_trial(trial, spec=None):
    return synth_utterance(trial.audio_keyword.phoneme_ids, spec, seed=trial.audio_seed, clip=True)


def write_trials_csv(path, trials):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRIAL_HEADER)
        for t in trials:
            w.writerow([t.audio_path or f"{t.audio_id}.wav", t.keyword.text, ids_to_phonemes(t.phoneme_ids), t.match])


def read_trials_csv(path):
    """Rows of (audio_path, Keyword, match) from a trial list."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != TRIAL_HEADER:
            raise BadFormat(f"{path}: header must be {','.join(TRIAL_HEADER)}")
        for r in reader:
            kw = Keyword(r["keyword"], phonemes_to_ids(r["phonemes"].split()))
            rows.append((r["audio_path"], kw, int(r["match"])))
    return rows


def fit_length(w, n_samples):
    """Zero-pad or truncate a waveform to exactly ``n_samples``."""
    s = np.asarray(w.samples)
    out = np.zeros(n_samples, dtype=np.int16)
    out[: min(len(s), n_samples)] = s[:n_samples]
    return Waveform(out, w.sample_rate)
