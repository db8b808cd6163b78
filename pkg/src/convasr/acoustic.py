"""Strided 1D convolutional acoustic model.

A network is a chain of convolution layers, each computing

    y[t, i] = b[i] + sum_j sum_k w[i, j, k] * x[dw*(t-1) + k, j]

(1-indexed t and k), followed by a pointwise nonlinearity.  Striding
replaces pooling; the composition of all layers acts like one big
convolution whose kernel width and stride are given by
``receptive_field``.  The last layer emits one score per label.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .criterion import EmissionTable

NONLINEARITIES = ("hardtanh", "tanh", "relu", "none")


class AcousticError(ValueError):
    """Raised for invalid layer specs or too-short inputs."""


@dataclass(frozen=True)
class ConvLayerSpec:
    d_in: int
    d_out: int
    kw: int  # kernel width in frames
    dw: int  # stride in frames
    nonlinearity: str = "hardtanh"

    def __post_init__(self):
        if min(self.d_in, self.d_out, self.kw, self.dw) < 1:
            raise AcousticError("layer dimensions, kernel width and stride must be >= 1")
        if self.nonlinearity not in NONLINEARITIES:
            raise AcousticError(f"unknown nonlinearity {self.nonlinearity!r}")

    def out_frames(self, in_frames: int) -> int:
        if in_frames < self.kw:
            raise AcousticError(
                f"layer needs at least kw={self.kw} input frames, got {in_frames}"
            )
        return (in_frames - self.kw) // self.dw + 1


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple

    def __init__(self, layers):
        object.__setattr__(self, "layers", tuple(layers))
        if not self.layers:
            raise AcousticError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.d_out != b.d_in:
                raise AcousticError(
                    f"channel mismatch: layer outputs {a.d_out}, next expects {b.d_in}"
                )

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def d_out(self) -> int:
        return self.layers[-1].d_out

    def out_frames(self, in_frames: int) -> int:
        t = in_frames
        for layer in self.layers:
            t = layer.out_frames(t)
        return t


@dataclass
class LayerParams:
    w: np.ndarray  # (d_out, d_in, kw)
    b: np.ndarray  # (d_out,)


@dataclass
class ModelParams:
    layers: list


def receptive_field(spec: NetworkSpec) -> tuple[int, int]:
    """Composed (kernel width, stride) of the whole network in input frames."""
    total_kw, total_dw = 1, 1
    for layer in spec.layers:
        total_kw += (layer.kw - 1) * total_dw
        total_dw *= layer.dw
    return total_kw, total_dw


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> ModelParams:
    """Uniform fan-in initialization in +/- 1/sqrt(d_in * kw)."""
    layers = []
    for layer in spec.layers:
        bound = 1.0 / np.sqrt(layer.d_in * layer.kw)
        w = rng.uniform(-bound, bound, size=(layer.d_out, layer.d_in, layer.kw))
        b = rng.uniform(-bound, bound, size=layer.d_out)
        layers.append(LayerParams(w, b))
    return ModelParams(layers)


def conv1d_forward(x: np.ndarray, layer: ConvLayerSpec, params: LayerParams) -> np.ndarray:
    """Strided convolution of an (T_x, d_in) input; returns (T_y, d_out)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.d_in:
        raise AcousticError(f"expected (T, {layer.d_in}) input, got {x.shape}")
    t_out = layer.out_frames(x.shape[0])
    windows = np.lib.stride_tricks.sliding_window_view(x, layer.kw, axis=0)[:: layer.dw]
    windows = windows[:t_out]  # (T_y, d_in, kw)
    return np.tensordot(windows, params.w, axes=([1, 2], [1, 2])) + params.b


def conv1d_backward(
    x: np.ndarray, layer: ConvLayerSpec, params: LayerParams, d_y: np.ndarray
):
    """Exact gradients of the convolution: returns (d_x, d_w, d_b)."""
    x = np.asarray(x, dtype=np.float64)
    d_y = np.asarray(d_y, dtype=np.float64)
    t_out = layer.out_frames(x.shape[0])
    if d_y.shape != (t_out, layer.d_out):
        raise AcousticError(f"expected ({t_out}, {layer.d_out}) upstream gradient, got {d_y.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(x, layer.kw, axis=0)[:: layer.dw]
    windows = windows[:t_out]
    d_w = np.tensordot(d_y, windows, axes=([0], [0]))  # (d_out, d_in, kw)
    d_b = d_y.sum(axis=0)
    d_x = np.zeros_like(x)
    contrib = np.tensordot(d_y, params.w, axes=([1], [0]))  # (T_y, d_in, kw)
    idx = (layer.dw * np.arange(t_out)[:, None] + np.arange(layer.kw)[None, :]).ravel()
    np.add.at(d_x, idx, contrib.transpose(0, 2, 1).reshape(-1, layer.d_in))
    return d_x, d_w, d_b


def _nonlin_forward(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "hardtanh":
        return np.clip(z, -1.0, 1.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _nonlin_grad(z: np.ndarray, kind: str) -> np.ndarray:
    # hardtanh subgradient is 0 at the kinks (|z| = 1)
    if kind == "hardtanh":
        return ((z > -1.0) & (z < 1.0)).astype(np.float64)
    if kind == "tanh":
        return 1.0 - np.tanh(z) ** 2
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def min_input_frames(spec: NetworkSpec) -> int:
    return receptive_field(spec)[0]


def network_forward(
    features, spec: NetworkSpec, params: ModelParams, normalize: bool = False
) -> EmissionTable:
    """Run the network over a feature sequence; returns emission scores.

    With ``normalize`` the output rows are log-softmaxed (per-frame
    normalized scores); otherwise raw scores pass through, as the
    globally normalized criterion expects.
    """
    x = features.frames if hasattr(features, "frames") else np.asarray(features, np.float64)
    need = min_input_frames(spec)
    if x.shape[0] < need:
        raise AcousticError(
            f"network needs at least {need} input frames, got {x.shape[0]}"
        )
    for layer, lp in zip(spec.layers, params.layers):
        x = _nonlin_forward(conv1d_forward(x, layer, lp), layer.nonlinearity)
    return EmissionTable.from_logits(x, normalize=normalize)


def network_forward_cached(x: np.ndarray, spec: NetworkSpec, params: ModelParams):
    """Forward pass keeping per-layer inputs and pre-activations for backprop."""
    x = np.asarray(x, dtype=np.float64)
    inputs, preacts = [], []
    for layer, lp in zip(spec.layers, params.layers):
        inputs.append(x)
        z = conv1d_forward(x, layer, lp)
        preacts.append(z)
        x = _nonlin_forward(z, layer.nonlinearity)
    return x, (inputs, preacts)


def network_backward(spec: NetworkSpec, params: ModelParams, cache, d_out: np.ndarray):
    """Backprop through the cached forward pass; returns per-layer grads."""
    inputs, preacts = cache
    grads = [None] * len(spec.layers)
    d = np.asarray(d_out, dtype=np.float64)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, lp = spec.layers[i], params.layers[i]
        d = d * _nonlin_grad(preacts[i], layer.nonlinearity)
        d, d_w, d_b = conv1d_backward(inputs[i], layer, lp, d)
        grads[i] = LayerParams(d_w, d_b)
    return grads, d


def parse_network_spec(text: str) -> NetworkSpec:
    """One layer per line: ``d_in d_out kw dw nonlinearity``.

    Blank lines and lines starting with ``#`` are ignored.
    """
    layers = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise AcousticError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            d_in, d_out, kw, dw = (int(p) for p in parts[:4])
        except ValueError:
            raise AcousticError(f"line {lineno}: non-integer layer field") from None
        layers.append(ConvLayerSpec(d_in, d_out, kw, dw, parts[4]))
    return NetworkSpec(layers)


def format_network_spec(spec: NetworkSpec) -> str:
    return "\n".join(
        f"{l.d_in} {l.d_out} {l.kw} {l.dw} {l.nonlinearity}" for l in spec.layers
    ) + "\n"


def raw_wave_reference_spec(num_labels: int = 30) -> NetworkSpec:
    """Reference raw-waveform architecture.

    Two strided front layers eat the 16 kHz sample stream, a stack of
    narrow layers widens the context, and the last two kw=1 layers act
    as fully connected classifiers.  The composition has kernel width
    31280 and stride 320: a 1955 ms window stepping every 20 ms.
    """
    layers = [ConvLayerSpec(1, 250, 240, 160), ConvLayerSpec(250, 250, 49, 2)]
    layers += [ConvLayerSpec(250, 250, 8, 1) for _ in range(7)]
    layers += [
        ConvLayerSpec(250, 2000, 25, 1),
        ConvLayerSpec(2000, 2000, 1, 1),
        ConvLayerSpec(2000, num_labels, 1, 1, "none"),
    ]
    return NetworkSpec(layers)


def load_reference_config(name: str = "raw_wave.cfg") -> NetworkSpec:
    text = resources.files("convasr.configs").joinpath(name).read_text()
    return parse_network_spec(text)
