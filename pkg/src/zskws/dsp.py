"""Log-mel front end: 16 kHz PCM16 in, natural-log mel energies out."""

from dataclasses import dataclass

import numpy as np

from .errors import AudioTooShort, BadSampleRate

SAMPLE_RATE = 16000
FRAME_LEN = 400  # 25 ms
HOP = 160  # 10 ms
N_FFT = 512
FLOOR = 1e-10
MAX_SECONDS = 10.0


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ValueError("waveform must be one-dimensional")
        if samples.dtype != np.int16:
            samples = np.clip(np.round(samples), -32768, 32767).astype(np.int16)
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    def validate(self):
        if self.sample_rate != SAMPLE_RATE:
            raise BadSampleRate(f"expected {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if len(self.samples) == 0:
            raise AudioTooShort("empty waveform")
        if self.duration > MAX_SECONDS:
            raise ValueError(f"waveform longer than {MAX_SECONDS} s")


@dataclass(frozen=True)
class LogMelFrames:
    frames: np.ndarray  # [T_f, n_mels]
    frame_len_ms: int = 25
    hop_ms: int = 10

    @property
    def n_mels(self):
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


def frame_count(n_samples):
    if n_samples < FRAME_LEN:
        raise AudioTooShort(f"{n_samples} samples < {FRAME_LEN}")
    return 1 + (n_samples - FRAME_LEN) // HOP


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(n_mels, fmin=0.0, fmax=SAMPLE_RATE / 2):
    """Peak frequency (Hz) of each triangular filter."""
    points = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    return points[1:-1]


def mel_filterbank(n_mels, n_fft=N_FFT, sr=SAMPLE_RATE, fmin=0.0, fmax=None):
    """Triangular filters with unit peak, shape [n_mels, n_fft // 2 + 1]."""
    fmax = sr / 2 if fmax is None else fmax
    points = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    lower, center, upper = points[:-2, None], points[1:-1, None], points[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


_WINDOW = np.hanning(FRAME_LEN)
_FILTERS = {}


def _filters(n_mels):
    if n_mels not in _FILTERS:
        _FILTERS[n_mels] = mel_filterbank(n_mels)
    return _FILTERS[n_mels]


def compute_logmel(w, n_mels=40):
    """Log-mel spectrogram with 25 ms Hann frames every 10 ms.

    The trailing partial frame is dropped. Samples are scaled to [-1, 1)
    before the 512-point magnitude FFT; mel energies are floored at 1e-10
    before the natural log.
    """
    if n_mels < 8:
        raise ValueError("n_mels must be >= 8")
    w.validate()
    n = frame_count(len(w.samples))
    x = w.samples.astype(np.float64) / 32768.0
    frames = np.lib.stride_tricks.sliding_window_view(x, FRAME_LEN)[::HOP][:n]
    spec = np.abs(np.fft.rfft(frames * _WINDOW, n=N_FFT, axis=-1))
    mel = spec @ _filters(n_mels).T
    return LogMelFrames(np.log(np.maximum(mel, FLOOR)))
