"""Feed-forward spiking network assembly.

A :class:`Network` is an ordered stack of fully connected spiking layers,
each holding a weight matrix, static neuron parameters, and the model's
trainable extras (the per-neuron cache gain ``beta`` for ``cached-aia``
layers, the raw leak parameter for ``plif`` layers). Class scores are read
out as the output layer's firing rate over the simulation window.

Checkpoints are JSON documents in which every 64-bit parameter array is
stored as a hex-encoded little-endian bit pattern, so a save/load round
trip is value-exact.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .neurons import MODELS, NeuronParams

CHECKPOINT_FORMAT = "spikekit-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    """One fully connected spiking layer.

    ``w`` has shape (out_neurons, in_neurons). ``beta`` is present only for
    ``cached-aia`` layers (one gain per postsynaptic neuron); ``plif_raw``
    only for ``plif`` layers (a 0-d array so the trainer can update it in
    place).
    """

    w: np.ndarray
    neuron: NeuronParams
    beta: np.ndarray | None = None
    plif_raw: np.ndarray | None = None

    @property
    def out_width(self) -> int:
        return self.w.shape[0]

    @property
    def in_width(self) -> int:
        return self.w.shape[1]

    def params(self) -> NeuronParams:
        """Neuron parameters with the current trainable leak snapshot."""
        if self.neuron.model == "plif":
            return dataclasses.replace(self.neuron, plif_raw=float(self.plif_raw))
        return self.neuron

    def copy(self) -> "Layer":
        return Layer(
            w=self.w.copy(),
            neuron=self.neuron,
            beta=None if self.beta is None else self.beta.copy(),
            plif_raw=None if self.plif_raw is None else self.plif_raw.copy(),
        )


@dataclass
class Network:
    """Ordered feed-forward stack; the last layer's width is the class count."""

    input_width: int
    timesteps: int
    class_count: int
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        if self.timesteps < 1:
            raise ConfigError(f"timesteps must be >= 1, got {self.timesteps}")
        prev = self.input_width
        for i, layer in enumerate(self.layers):
            if layer.in_width != prev:
                raise DimensionError(
                    f"layer {i} expects input width {layer.in_width}, previous width is {prev}"
                )
            prev = layer.out_width
        if prev != self.class_count:
            raise DimensionError(
                f"output layer width {prev} does not match class count {self.class_count}"
            )

    def layer_widths(self) -> list[int]:
        return [self.input_width] + [layer.out_width for layer in self.layers]

    def copy(self) -> "Network":
        return Network(
            input_width=self.input_width,
            timesteps=self.timesteps,
            class_count=self.class_count,
            layers=[layer.copy() for layer in self.layers],
        )

    def parameter_items(self):
        """All trainable arrays as (name, array) pairs in a fixed order."""
        for i, layer in enumerate(self.layers):
            yield f"layer{i}.w", layer.w
            if layer.beta is not None:
                yield f"layer{i}.beta", layer.beta
            if layer.plif_raw is not None:
                yield f"layer{i}.plif_raw", layer.plif_raw

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.parameter_items())

    def inference_parameter_count(self) -> int:
        """Parameters carrying information at inference time.

        Cache gains equal to the multiplicative identity are mergeable into
        the weights and therefore not counted; this is what makes a merged
        ``cached-aia`` network structurally equivalent to a plain ``lif``
        one.
        """
        count = 0
        for layer in self.layers:
            count += layer.w.size
            if layer.plif_raw is not None:
                count += layer.plif_raw.size
            if layer.beta is not None and not np.all(layer.beta == 1.0):
                count += layer.beta.size
        return count


def init_network(
    layer_widths,
    model,
    timesteps: int,
    seed: int,
    v_th: float = 1.0,
    leak: float = 0.5,
    surrogate_width: float = 1.0,
) -> Network:
    """Build a network with scaled-normal ("kaiming") weight initialization.

    ``layer_widths`` runs from the input width to the class count, e.g.
    ``[64, 32, 4]``. Weights are drawn from a zero-mean normal with standard
    deviation sqrt(2 / fan_in); cache gains start at exactly 1 and the raw
    leak parameter at 0 (an effective leak of 0.5). The result is fully
    determined by ``seed``.

    ``model`` is a single tag applied to every layer, or one tag per layer.
    """
    widths = list(layer_widths)
    if len(widths) < 2:
        raise ConfigError("layer_widths needs an input width and at least one layer")
    if any(w < 1 for w in widths):
        raise ConfigError(f"layer widths must be >= 1, got {widths}")
    n_layers = len(widths) - 1
    if isinstance(model, str):
        tags = [model] * n_layers
    else:
        tags = list(model)
        if len(tags) != n_layers:
            raise ConfigError(f"got {len(tags)} model tags for {n_layers} layers")
    for tag in tags:
        if tag not in MODELS:
            raise ConfigError(f"unknown neuron model {tag!r}; expected one of {MODELS}")

    rng = np.random.default_rng(seed)
    layers = []
    for tag, fan_in, fan_out in zip(tags, widths[:-1], widths[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        neuron = NeuronParams(
            model=tag,
            v_th=v_th,
            leak=1.0 if tag == "if" else leak,
            surrogate_width=surrogate_width,
        )
        layers.append(
            Layer(
                w=w,
                neuron=neuron,
                beta=np.ones(fan_out) if tag == "cached-aia" else None,
                plif_raw=np.zeros(()) if tag == "plif" else None,
            )
        )
    return Network(
        input_width=widths[0],
        timesteps=timesteps,
        class_count=widths[-1],
        layers=layers,
    )


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def readout_and_loss(tape, labels):
    """Cross-entropy on the output firing rate.

    Takes the recorded tape's readout (per-sample firing rate per class) and
    integer labels; returns ``(loss, dL/d-readout, predictions)`` where the
    loss is averaged over the batch and predictions break rate ties toward
    the lower class index.
    """
    readout = tape.readout
    labels = np.asarray(labels, dtype=np.int64)
    batch, class_count = readout.shape
    if labels.shape != (batch,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch size {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise DataError(f"labels must lie in [0, {class_count}), got range "
                        f"[{labels.min()}, {labels.max()}]")
    probs = softmax(readout)
    loss = float(-np.mean(np.log(probs[np.arange(batch), labels])))
    grad = probs.copy()
    grad[np.arange(batch), labels] -= 1.0
    grad /= batch
    predictions = np.argmax(readout, axis=1)
    return loss, grad, predictions


def merge_beta(net: Network) -> Network:
    """Fold cache gains into the weights: a pure transformation.

    Every ``cached-aia`` layer of the result has its weight rows scaled by
    the layer's gains and the gains reset to exactly 1, so the layer behaves
    as a plain leaky layer at inference while the readout changes only by
    floating-point association. Other layers are copied unchanged.
    """
    merged = net.copy()
    for layer in merged.layers:
        if layer.beta is not None:
            layer.w *= layer.beta[:, None]
            layer.beta[:] = 1.0
    return merged


def _encode_array(arr: np.ndarray) -> str:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes().hex()


def _decode_array(text: str, shape) -> np.ndarray:
    flat = np.frombuffer(bytes.fromhex(text), dtype="<f8")
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise DataError(f"checkpoint array has {flat.size} values, expected {expected}")
    return flat.reshape(shape).copy()


def save_checkpoint(net: Network, path, seed: int | None = None) -> None:
    """Write the network to ``path`` as JSON with bit-exact parameter arrays."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": seed,
        "input_width": net.input_width,
        "timesteps": net.timesteps,
        "class_count": net.class_count,
        "layers": [
            {
                "model": layer.neuron.model,
                "v_th": layer.neuron.v_th,
                "leak": layer.neuron.leak,
                "surrogate_width": layer.neuron.surrogate_width,
                "shape": list(layer.w.shape),
                "w": _encode_array(layer.w),
                "beta": None if layer.beta is None else _encode_array(layer.beta),
                "plif_raw": None if layer.plif_raw is None else _encode_array(layer.plif_raw),
            }
            for layer in net.layers
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Read a checkpoint; returns ``(network, seed)``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a spikekit checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('version')!r}")
    layers = []
    for entry in doc["layers"]:
        shape = tuple(entry["shape"])
        neuron = NeuronParams(
            model=entry["model"],
            v_th=entry["v_th"],
            leak=entry["leak"],
            surrogate_width=entry["surrogate_width"],
        )
        layers.append(
            Layer(
                w=_decode_array(entry["w"], shape),
                neuron=neuron,
                beta=None if entry["beta"] is None else _decode_array(entry["beta"], (shape[0],)),
                plif_raw=None if entry["plif_raw"] is None else _decode_array(entry["plif_raw"], ()),
            )
        )
    net = Network(
        input_width=doc["input_width"],
        timesteps=doc["timesteps"],
        class_count=doc["class_count"],
        layers=layers,
    )
    return net, doc.get("seed")
