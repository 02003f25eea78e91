"""Single-timestep neuron dynamics for the five supported models.

All models share the same discrete hard-reset membrane update

    u' = leak * u * (1 - o) + drive
    o' = 1 if u' >= v_th else 0

and differ only in the leak coefficient and in what ``drive`` is:

* ``lif``        - drive is the weighted input x, leak is a fixed constant.
* ``if``         - same with leak pinned to 1 (no decay).
* ``plif``       - leak is trainable: the logistic squashing of a raw
                   parameter, so it stays in (0, 1) during training.
* ``aia``        - forward-identical to ``lif``; the model differs only in
                   how weight gradients are computed (see :mod:`spikekit.bptt`).
* ``cached-aia`` - drive is ``beta * x`` for a per-neuron cache gain
                   ``beta``, initialized to 1 so the untrained model matches
                   ``lif`` exactly. ``beta`` can be folded into the weights
                   at inference time (see :func:`spikekit.network.merge_beta`).

The `(1 - o)` factor implements the hard reset: a neuron that fired on the
previous step carries no potential forward. Spike values are exactly 0.0 or
1.0.

Functions are pure and vectorized: state arrays may be ``(neurons,)`` or
``(batch, neurons)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import ConfigError, DimensionError

MODELS = ("lif", "if", "plif", "aia", "cached-aia")


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def sigmoid_prime(z):
    s = sigmoid(z)
    return s * (1.0 - s)


@dataclass(frozen=True)
class NeuronParams:
    """Static per-layer neuron configuration.

    ``leak`` is the decay coefficient in [0, 1]; ``v_th`` the firing
    threshold; ``surrogate_width`` the width of the rectangular surrogate
    window used in the backward pass. ``plif_raw`` is the unconstrained
    trainable leak parameter, only meaningful for the ``plif`` model.
    """

    model: str = "lif"
    v_th: float = 1.0
    leak: float = 0.5
    plif_raw: float = 0.0
    surrogate_width: float = 1.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown neuron model {self.model!r}; expected one of {MODELS}")
        if not 0.0 <= self.leak <= 1.0:
            raise ConfigError(f"leak must be in [0, 1], got {self.leak}")
        if self.v_th <= 0.0:
            raise ConfigError(f"v_th must be positive, got {self.v_th}")
        if self.surrogate_width <= 0.0:
            raise ConfigError(f"surrogate_width must be positive, got {self.surrogate_width}")

    def effective_leak(self) -> float:
        """Leak actually used by the dynamics: 1 for ``if``, logistic(plif_raw) for ``plif``."""
        if self.model == "if":
            return 1.0
        if self.model == "plif":
            return float(sigmoid(self.plif_raw))
        return self.leak


@dataclass(frozen=True)
class NeuronState:
    """Immutable snapshot of membrane potential and last output spike."""

    u: np.ndarray
    o: np.ndarray

    @staticmethod
    def zeros(shape) -> "NeuronState":
        return NeuronState(u=np.zeros(shape, dtype=np.float64), o=np.zeros(shape, dtype=np.float64))


def _step(state: NeuronState, x: np.ndarray, leak: float, v_th: float) -> NeuronState:
    u_new = leak * state.u * (1.0 - state.o) + x
    o_new = numerics.heaviside_ge(u_new, v_th)
    return NeuronState(u=u_new, o=o_new)


def _checked_input(x) -> np.ndarray:
    x = numerics.as_dense(x)
    numerics.require_finite(x, "weighted input")
    return x


def lif_step(state: NeuronState, x, p: NeuronParams) -> NeuronState:
    """Leaky integrate-and-fire update with hard reset."""
    return _step(state, _checked_input(x), p.leak, p.v_th)


def if_step(state: NeuronState, x, p: NeuronParams) -> NeuronState:
    """Integrate-and-fire update: the leaky update with leak pinned to 1."""
    return _step(state, _checked_input(x), 1.0, p.v_th)


def plif_step(state: NeuronState, x, p: NeuronParams) -> NeuronState:
    """Parametric-leak update; the leak is logistic(plif_raw)."""
    return _step(state, _checked_input(x), float(sigmoid(p.plif_raw)), p.v_th)


def aia_step(state: NeuronState, x, p: NeuronParams) -> NeuronState:
    """Drive-association model: forward dynamics are bit-identical to lif_step.

    The model is a backward-pass modification only; its weight updates are
    scaled by the neuron's total weighted drive (see :mod:`spikekit.bptt`).
    """
    return _step(state, _checked_input(x), p.leak, p.v_th)


def cached_aia_step(state: NeuronState, x, p: NeuronParams, beta) -> NeuronState:
    """Cached variant: the drive is ``beta * x`` with ``beta`` one gain per neuron."""
    x = _checked_input(x)
    beta = numerics.as_dense(beta)
    if beta.shape != x.shape[-1:]:
        raise DimensionError(
            f"beta shape {beta.shape} does not match neuron count of input shape {x.shape}"
        )
    return _step(state, beta * x, p.leak, p.v_th)


def step(state: NeuronState, x, p: NeuronParams, beta=None) -> NeuronState:
    """Dispatch to the model named by ``p.model``."""
    if p.model == "lif":
        return lif_step(state, x, p)
    if p.model == "if":
        return if_step(state, x, p)
    if p.model == "plif":
        return plif_step(state, x, p)
    if p.model == "aia":
        return aia_step(state, x, p)
    if beta is None:
        raise ConfigError("cached-aia step requires a beta vector")
    return cached_aia_step(state, x, p, beta)


def surrogate_spike_derivative(u, p: NeuronParams) -> np.ndarray:
    """Rectangular surrogate for the spike derivative.

    A window of width ``a = surrogate_width`` centered at the threshold with
    height 1/a, so the window integrates to one for any width.
    """
    u = numerics.as_dense(u)
    a = p.surrogate_width
    return (np.abs(u - p.v_th) <= a / 2.0).astype(np.float64) / a
