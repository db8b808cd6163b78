"""Binary interchange formats shared across the pipeline.

Matrix container (features, emissions, transitions): a fixed header
followed by row-major float32 data, all little-endian:

    bytes 0..3    magic b"FSQ1"
    bytes 4..7    uint32 rows
    bytes 8..11   uint32 cols
    bytes 12..15  float32 frame stride in ms (0 when not applicable)
    bytes 16..19  float32 window size in ms (0 when not applicable)
    bytes 20..    rows*cols float32 values

A transition table is stored as an (L+1) x L matrix: row 0 holds the
per-label start scores, rows 1..L the transition matrix.

Model checkpoints use magic b"CKP1": uint32 layer count, then per layer
five uint32 fields (d_in, d_out, kw, dw, nonlinearity code) followed by
the float32 weight and bias blobs, then an (L+1) x L float32 transition
block.
"""

from __future__ import annotations

import struct

import numpy as np

MATRIX_MAGIC = b"FSQ1"
CHECKPOINT_MAGIC = b"CKP1"

_HEADER = struct.Struct("<4sIIff")


class FormatError(ValueError):
    """Raised when a binary file does not match its declared format."""


def write_matrix(path, array, stride_ms: float = 0.0, window_ms: float = 0.0) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim != 2:
        raise FormatError("matrix files store 2-D arrays")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MATRIX_MAGIC, array.shape[0], array.shape[1], stride_ms, window_ms))
        f.write(array.tobytes())


def read_matrix(path) -> tuple[np.ndarray, float, float]:
    """Returns (float32 array, stride_ms, window_ms)."""
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, rows, cols, stride_ms, window_ms = _HEADER.unpack(header)
        if magic != MATRIX_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        data = f.read(4 * rows * cols)
        if len(data) != 4 * rows * cols:
            raise FormatError(f"{path}: expected {rows}x{cols} float32 payload")
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    array = np.frombuffer(data, dtype="<f4").reshape(rows, cols)
    return array.copy(), stride_ms, window_ms


def write_features(path, feats) -> None:
    write_matrix(path, feats.frames, feats.frame_stride_ms, feats.window_ms)


def read_features(path):
    from .features import FeatureSequence

    frames, stride_ms, window_ms = read_matrix(path)
    return FeatureSequence(frames.astype(np.float64), stride_ms, window_ms)


def write_transitions(path, table) -> None:
    block = np.vstack([table.start[None, :], table.trans])
    write_matrix(path, block)


def read_transitions(path):
    from .criterion import TransitionTable

    block, _, _ = read_matrix(path)
    if block.shape[0] != block.shape[1] + 1:
        raise FormatError(f"{path}: transition block must be (L+1) x L")
    return TransitionTable(
        trans=block[1:].astype(np.float64), start=block[0].astype(np.float64)
    )


_NONLIN_CODES = {"hardtanh": 0, "tanh": 1, "relu": 2, "none": 3}
_NONLIN_NAMES = {v: k for k, v in _NONLIN_CODES.items()}


def save_checkpoint(path, spec, params, transitions) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(spec.layers)))
        for layer, lp in zip(spec.layers, params.layers):
            f.write(
                struct.pack(
                    "<5I",
                    layer.d_in,
                    layer.d_out,
                    layer.kw,
                    layer.dw,
                    _NONLIN_CODES[layer.nonlinearity],
                )
            )
            f.write(np.ascontiguousarray(lp.w, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(lp.b, dtype="<f4").tobytes())
        block = np.vstack([transitions.start[None, :], transitions.trans])
        f.write(struct.pack("<I", block.shape[1]))
        f.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def load_checkpoint(path):
    from .acoustic import ConvLayerSpec, LayerParams, ModelParams, NetworkSpec
    from .criterion import TransitionTable

    def read_exact(f, n, what):
        data = f.read(n)
        if len(data) != n:
            raise FormatError(f"{path}: truncated {what}")
        return data

    with open(path, "rb") as f:
        if read_exact(f, 4, "magic") != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic")
        (n_layers,) = struct.unpack("<I", read_exact(f, 4, "layer count"))
        layers, lparams = [], []
        for _ in range(n_layers):
            d_in, d_out, kw, dw, code = struct.unpack("<5I", read_exact(f, 20, "layer header"))
            if code not in _NONLIN_NAMES:
                raise FormatError(f"{path}: unknown nonlinearity code {code}")
            w = np.frombuffer(
                read_exact(f, 4 * d_out * d_in * kw, "weights"), dtype="<f4"
            ).reshape(d_out, d_in, kw)
            b = np.frombuffer(read_exact(f, 4 * d_out, "bias"), dtype="<f4")
            layers.append(ConvLayerSpec(d_in, d_out, kw, dw, _NONLIN_NAMES[code]))
            lparams.append(LayerParams(w.astype(np.float64), b.astype(np.float64)))
        (n_labels,) = struct.unpack("<I", read_exact(f, 4, "transition header"))
        block = np.frombuffer(
            read_exact(f, 4 * (n_labels + 1) * n_labels, "transitions"), dtype="<f4"
        ).reshape(n_labels + 1, n_labels)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    transitions = TransitionTable(
        trans=block[1:].astype(np.float64), start=block[0].astype(np.float64)
    )
    return NetworkSpec(layers), ModelParams(lparams), transitions
