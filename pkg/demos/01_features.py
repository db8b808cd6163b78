"""Feature extraction walkthrough: waveform -> power spectrum / MFCC.

Synthesizes one second of a 1031.25 Hz tone (exactly FFT bin 33 at
16 kHz with a 512-point transform), extracts both feature types, and
normalizes them per sequence.
"""

import numpy as np

from convasr.features import Waveform, mfcc, normalize, power_spectrum

rate = 16000
t = np.arange(rate) / rate
wave = Waveform(0.4 * np.sin(2 * np.pi * 1031.25 * t), rate)

spec = power_spectrum(wave)
print(f"power spectrum: {spec.num_frames} frames x {spec.dim} bins "
      f"({spec.window_ms:.0f} ms window, {spec.frame_stride_ms:.0f} ms stride)")
peak = np.argmax(spec.frames, axis=1)
print(f"energy peaks at bin {peak[0]} on every frame: {np.all(peak == peak[0])}")
print(f"bin {peak[0]} center frequency: {peak[0] * rate / 512:.2f} Hz")

feats = mfcc(wave)
print(f"\nmfcc: {feats.num_frames} frames x {feats.dim} dims (13 cepstra + deltas + delta-deltas)")

norm = normalize(feats)
print(f"after normalization: per-dim |mean| max = {np.abs(norm.frames.mean(axis=0)).max():.2e}, "
      f"std range = [{norm.frames.std(axis=0).min():.4f}, {norm.frames.std(axis=0).max():.4f}]")
print("(constant dimensions map to 0 instead of dividing by zero)")
