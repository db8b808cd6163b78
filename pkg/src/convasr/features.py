"""Waveform-to-feature pipeline: framing, power spectrum, MFCC, normalization.

Reference configuration: 16 kHz input, 25 ms Hamming window, 10 ms
stride, 512-point FFT (257 spectrum bins), 40 mel filters, log floor
1e-10, orthonormal DCT-II, 13 cepstra plus first and second order
derivatives over a +/-2 frame regression window.  Pre-emphasis is off
by default.  Features are normalized to mean 0 / std 1 per dimension
over the whole sequence; zero-variance dimensions map to 0.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np


class FeatureError(ValueError):
    """Raised for inputs the pipeline cannot process (e.g. too short)."""


@dataclass
class Waveform:
    samples: np.ndarray  # mono, float64, nominally in [-1, 1]
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise FeatureError("waveform must be mono (1-D)")
        if not np.all(np.isfinite(self.samples)):
            raise FeatureError("waveform contains non-finite samples")


@dataclass
class FeatureSequence:
    frames: np.ndarray  # (T, d)
    frame_stride_ms: float
    window_ms: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise FeatureError("feature frames must be a (T, d) matrix")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def load_wav(path) -> Waveform:
    """Read a 16-bit mono WAV file, scaling samples to [-1, 1)."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise FeatureError(f"expected mono WAV, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise FeatureError(f"expected 16-bit WAV, got {8 * w.getsampwidth()}-bit")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def save_wav(path, w: Waveform) -> None:
    """Write a 16-bit mono WAV file (samples clipped to [-1, 1))."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as out:
        out.setnchannels(1)
        out.setsampwidth(2)
        out.setframerate(w.sample_rate)
        out.writeframes(pcm.tobytes())


def load_pcm(path, sample_rate: int) -> Waveform:
    """Read raw little-endian 16-bit PCM with a declared sample rate."""
    samples = np.fromfile(str(path), dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, sample_rate)


def frame_count(num_samples: int, window: int, hop: int) -> int:
    """Complete windows only: T = floor((S - W) / H) + 1."""
    if num_samples < window:
        return 0
    return (num_samples - window) // hop + 1


def _frame_signal(samples: np.ndarray, window: int, hop: int) -> np.ndarray:
    n = frame_count(len(samples), window, hop)
    if n == 0:
        raise FeatureError(
            f"input of {len(samples)} samples is shorter than one "
            f"{window}-sample analysis window"
        )
    view = np.lib.stride_tricks.sliding_window_view(samples, window)[::hop]
    return view[:n]


def _window_hop(sample_rate: int, window_ms: float, stride_ms: float) -> tuple[int, int]:
    return int(round(sample_rate * window_ms / 1000.0)), int(
        round(sample_rate * stride_ms / 1000.0)
    )


def power_spectrum(
    w: Waveform,
    window_ms: float = 25.0,
    stride_ms: float = 10.0,
    n_fft: int = 512,
    pre_emphasis: float = 0.0,
) -> FeatureSequence:
    """Per-frame squared-magnitude real FFT (Hamming window).

    With the defaults each frame has n_fft // 2 + 1 = 257 components.
    Output scales with the square of the input amplitude.
    """
    samples = w.samples
    if pre_emphasis > 0.0:
        samples = np.append(samples[0], samples[1:] - pre_emphasis * samples[:-1])
    window, hop = _window_hop(w.sample_rate, window_ms, stride_ms)
    frames = _frame_signal(samples, window, hop) * np.hamming(window)
    spec = np.abs(np.fft.rfft(frames, n_fft, axis=1)) ** 2
    return FeatureSequence(spec, stride_ms, window_ms)


def mel_filterbank(
    n_filters: int, n_fft: int, sample_rate: int, f_min: float = 0.0, f_max: float | None = None
) -> np.ndarray:
    """Triangular mel filters evaluated on FFT bin centers, (n_filters, n_fft//2+1)."""
    if f_max is None:
        f_max = sample_rate / 2.0

    def to_mel(hz):
        return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)

    def to_hz(mel):
        return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)

    edges = to_hz(np.linspace(to_mel(f_min), to_mel(f_max), n_filters + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    fb = np.zeros((n_filters, n_fft // 2 + 1))
    for m in range(n_filters):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II basis, (n_out, n_in)."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    mat = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in)) * np.sqrt(2.0 / n_in)
    mat[0] /= np.sqrt(2.0)
    return mat


def delta(features: np.ndarray, window: int = 2) -> np.ndarray:
    """Regression-based derivatives over +/-window frames, edges replicated."""
    t = features.shape[0]
    padded = np.pad(features, ((window, window), (0, 0)), mode="edge")
    denom = 2.0 * sum(n * n for n in range(1, window + 1))
    out = np.zeros_like(features)
    for n in range(1, window + 1):
        out += n * (padded[window + n : window + n + t] - padded[window - n : window - n + t])
    return out / denom


def mfcc(
    w: Waveform,
    window_ms: float = 25.0,
    stride_ms: float = 10.0,
    n_fft: int = 512,
    n_filters: int = 40,
    n_ceps: int = 13,
    log_floor: float = 1e-10,
    delta_window: int = 2,
    pre_emphasis: float = 0.0,
) -> FeatureSequence:
    """13 cepstra with first and second order derivatives (d = 39)."""
    spec = power_spectrum(w, window_ms, stride_ms, n_fft, pre_emphasis)
    fb = mel_filterbank(n_filters, n_fft, w.sample_rate)
    logmel = np.log(np.maximum(spec.frames @ fb.T, log_floor))
    ceps = logmel @ dct_matrix(n_ceps, n_filters).T
    d1 = delta(ceps, delta_window)
    d2 = delta(d1, delta_window)
    return FeatureSequence(np.hstack([ceps, d1, d2]), stride_ms, window_ms)


def normalize(f: FeatureSequence) -> FeatureSequence:
    """Mean 0 / std 1 per dimension over the sequence.

    Dimensions with zero variance (e.g. silence input) map to 0 instead
    of dividing by zero.
    """
    if f.num_frames < 1:
        raise FeatureError("cannot normalize an empty feature sequence")
    mean = f.frames.mean(axis=0)
    std = f.frames.std(axis=0)
    centered = f.frames - mean
    out = np.where(std > 0.0, centered / np.where(std > 0.0, std, 1.0), 0.0)
    return FeatureSequence(out, f.frame_stride_ms, f.window_ms)
