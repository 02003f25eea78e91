"""Backpropagation through time for spiking layers.

The forward pass unrolls the network over the simulation window and records
a tape of per-layer, per-timestep values: the weighted input ``x``, the
post-update membrane potential ``u``, and the emitted spikes ``o``. The
backward pass walks the tape in reverse, propagating the loss gradient
through space (layer to layer, within one timestep) and through time (the
leaky membrane recurrence of each layer), and accumulates gradients for
every trainable array.

Two modes share this machinery:

* **hard mode** (training): spikes are exact 0/1 threshold crossings. The
  non-differentiable threshold is handled with a rectangular surrogate
  derivative, and no gradient flows through the reset gate (the ``1 - o``
  factor is treated as a constant), the usual stabilization for hard-reset
  training. Per-model weight-update rules:

  - ``lif`` / ``if``:  dW[i, j] += dL/du[i] * o_pre[j]
  - ``plif``:          as ``lif``, plus the gradient of the trainable leak
  - ``aia``:           each term additionally multiplied by the recorded
                       drive x[i], so only co-active synapses move and
                       stronger drive means a stronger update
  - ``cached-aia``:    each term multiplied by the neuron's cache gain
                       beta[i] instead; beta itself accumulates the drive-
                       weighted gradient it stands in for

* **smoothed mode** (gradient checking): the threshold becomes a logistic
  ramp, the reset gate is differentiated exactly, and each model's backward
  is the exact reverse-mode gradient of its smoothed forward. So that the
  drive-modulated rule of ``aia`` is itself checkable against finite
  differences, the smoothed ``aia`` forward integrates ``x**2 / 2`` (whose
  derivative is the drive ``x``), and the modulation is applied
  consistently on the spatial path as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import ConfigError, DimensionError, StateError
from .network import Network, readout_and_loss
from .neurons import NeuronParams, NeuronState, sigmoid, sigmoid_prime, step, surrogate_spike_derivative


@dataclass
class BpttTape:
    """Per-layer, per-timestep forward record consumed by the backward pass."""

    inputs: np.ndarray
    x: list[list[np.ndarray]]
    u: list[list[np.ndarray]]
    o: list[list[np.ndarray]]
    readout: np.ndarray
    smoothed: bool = False

    @property
    def timesteps(self) -> int:
        return self.inputs.shape[2]

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]

    def validate(self, net: Network) -> None:
        n_layers = len(net.layers)
        if len(self.x) != n_layers or len(self.u) != n_layers or len(self.o) != n_layers:
            raise StateError(f"tape holds {len(self.x)} layers, network has {n_layers}")
        for n, layer in enumerate(net.layers):
            for series in (self.x[n], self.u[n], self.o[n]):
                if len(series) != self.timesteps:
                    raise StateError(
                        f"tape layer {n} holds {len(series)} timesteps, expected {self.timesteps}"
                    )
            if self.x[n][0].shape != (self.batch_size, layer.out_width):
                raise StateError(
                    f"tape layer {n} entries have shape {self.x[n][0].shape}, "
                    f"expected {(self.batch_size, layer.out_width)}"
                )


@dataclass
class GradientSet:
    """Gradients mirroring the network's trainable arrays, in the same order."""

    d_w: list[np.ndarray]
    d_beta: list[np.ndarray | None]
    d_plif_raw: list[np.ndarray | None]

    def items(self):
        for i, dw in enumerate(self.d_w):
            yield f"layer{i}.w", dw
            if self.d_beta[i] is not None:
                yield f"layer{i}.beta", self.d_beta[i]
            if self.d_plif_raw[i] is not None:
                yield f"layer{i}.plif_raw", self.d_plif_raw[i]


def _smoothed_drive(x: np.ndarray, model: str, beta) -> np.ndarray:
    if model == "aia":
        return 0.5 * x * x
    if model == "cached-aia":
        return beta * x
    return x


def forward_record(net: Network, inputs, smoothed: bool = False):
    """Unroll the network over the window; returns ``(tape, readout)``.

    ``inputs`` is a spike tensor of shape (batch, input_width, timesteps).
    All membrane potentials start at 0 with no prior spike. The readout is
    the output layer's per-class firing rate, averaged over the window.
    """
    inputs = numerics.as_dense(inputs)
    if inputs.ndim != 3:
        raise DimensionError(f"inputs must be (batch, neurons, timesteps), got shape {inputs.shape}")
    batch, width, timesteps = inputs.shape
    if width != net.input_width:
        raise DimensionError(
            f"input width {width} does not match network input width {net.input_width}"
        )
    if timesteps != net.timesteps:
        raise DimensionError(
            f"input window {timesteps} does not match network timesteps {net.timesteps}"
        )
    numerics.require_finite(inputs, "inputs")

    params = [layer.params() for layer in net.layers]
    states = [NeuronState.zeros((batch, layer.out_width)) for layer in net.layers]
    tape = BpttTape(
        inputs=inputs,
        x=[[] for _ in net.layers],
        u=[[] for _ in net.layers],
        o=[[] for _ in net.layers],
        readout=np.zeros((batch, net.class_count)),
        smoothed=smoothed,
    )

    for t in range(timesteps):
        o_prev = inputs[:, :, t]
        for n, layer in enumerate(net.layers):
            x = numerics.matmul(o_prev, layer.w.T)
            if smoothed:
                p = params[n]
                leak = p.effective_leak()
                drive = _smoothed_drive(x, p.model, layer.beta)
                u = leak * states[n].u * (1.0 - states[n].o) + drive
                o = sigmoid((u - p.v_th) / p.surrogate_width)
                states[n] = NeuronState(u=u, o=o)
            else:
                states[n] = step(states[n], x, params[n], layer.beta)
            tape.x[n].append(x)
            tape.u[n].append(states[n].u)
            tape.o[n].append(states[n].o)
            o_prev = states[n].o

    tape.readout = sum(tape.o[-1]) / float(timesteps)
    return tape, tape.readout


def _spike_derivative(tape: BpttTape, p: NeuronParams, n: int, t: int) -> np.ndarray:
    if tape.smoothed:
        # o = logistic((u - v_th) / a), so do/du = o (1 - o) / a.
        o = tape.o[n][t]
        return o * (1.0 - o) / p.surrogate_width
    return surrogate_spike_derivative(tape.u[n][t], p)


def _backward(tape: BpttTape, upstream, net: Network, smoothed: bool = False) -> GradientSet:
    tape.validate(net)
    if smoothed != tape.smoothed:
        raise StateError("tape mode does not match requested backward mode")
    upstream = numerics.as_dense(upstream)
    if upstream.shape != tape.readout.shape:
        raise DimensionError(
            f"upstream gradient shape {upstream.shape} does not match readout "
            f"shape {tape.readout.shape}"
        )

    n_layers = len(net.layers)
    timesteps = tape.timesteps
    params = [layer.params() for layer in net.layers]
    d_w = [np.zeros_like(layer.w) for layer in net.layers]
    d_beta = [None if layer.beta is None else np.zeros_like(layer.beta) for layer in net.layers]
    leak_acc = [0.0 if layer.plif_raw is not None else None for layer in net.layers]

    # dL/du of each layer at the timestep after the one being processed.
    du_future = [None] * n_layers

    for t in reversed(range(timesteps)):
        spatial = [None] * n_layers  # dL/do arriving from the layer above, same timestep
        for n in reversed(range(n_layers)):
            layer = net.layers[n]
            p = params[n]
            leak = p.effective_leak()
            u = tape.u[n][t]
            o = tape.o[n][t]
            x = tape.x[n][t]

            do = np.zeros_like(o)
            if n == n_layers - 1:
                do += upstream / float(timesteps)
            if spatial[n] is not None:
                do += spatial[n]
            if smoothed and du_future[n] is not None:
                # Exact reset-gate term; in hard mode the gate is a constant.
                do += du_future[n] * (-leak * u)

            du = do * _spike_derivative(tape, p, n, t)
            if du_future[n] is not None:
                du += du_future[n] * leak * (1.0 - o)

            if leak_acc[n] is not None and t > 0:
                carried = tape.u[n][t - 1] * (1.0 - tape.o[n][t - 1])
                leak_acc[n] += float(np.sum(du * carried))

            site = du
            if p.model == "aia":
                site = du * x
            elif p.model == "cached-aia":
                site = du * layer.beta
            o_pre = tape.inputs[:, :, t] if n == 0 else tape.o[n - 1][t]
            d_w[n] += numerics.matmul(site.T, o_pre)

            if d_beta[n] is not None:
                d_beta[n] += np.sum(du * x, axis=0)

            if n > 0:
                through = du
                if p.model == "cached-aia":
                    through = du * layer.beta
                elif p.model == "aia" and smoothed:
                    through = du * x
                spatial[n - 1] = numerics.matmul(through, layer.w)

            du_future[n] = du

    d_plif_raw = []
    for n, layer in enumerate(net.layers):
        if leak_acc[n] is None:
            d_plif_raw.append(None)
        else:
            raw = float(layer.plif_raw)
            d_plif_raw.append(np.asarray(leak_acc[n] * sigmoid_prime(raw)))
    return GradientSet(d_w=d_w, d_beta=d_beta, d_plif_raw=d_plif_raw)


def backward(tape: BpttTape, upstream, net: Network) -> GradientSet:
    """Hard-mode backward pass, dispatching per layer on the model tag."""
    return _backward(tape, upstream, net, smoothed=False)


def _tag_checked(net: Network, allowed: tuple, op: str) -> None:
    for i, layer in enumerate(net.layers):
        if layer.neuron.model not in allowed:
            raise ConfigError(
                f"{op} expects layers with model in {allowed}, layer {i} is "
                f"{layer.neuron.model!r}"
            )


def backward_lif(tape: BpttTape, upstream, net: Network) -> GradientSet:
    _tag_checked(net, ("lif", "if"), "backward_lif")
    return _backward(tape, upstream, net)


def backward_aia(tape: BpttTape, upstream, net: Network) -> GradientSet:
    _tag_checked(net, ("aia",), "backward_aia")
    return _backward(tape, upstream, net)


def backward_cached_aia(tape: BpttTape, upstream, net: Network) -> GradientSet:
    _tag_checked(net, ("cached-aia",), "backward_cached_aia")
    return _backward(tape, upstream, net)


def backward_plif(tape: BpttTape, upstream, net: Network) -> GradientSet:
    _tag_checked(net, ("plif",), "backward_plif")
    return _backward(tape, upstream, net)


def aia_update_from_drive(w, o_pre, dldu) -> np.ndarray:
    """Drive-form association update for one timestep of one sample.

    Each entry is the neuron's total weighted drive times the potential
    gradient, gated by the presynaptic spike:
    ``(sum_k w[i, k] o_pre[k]) * dldu[i] * o_pre[j]``.
    """
    w = numerics.as_dense(w)
    o_pre = numerics.as_dense(o_pre)
    dldu = numerics.as_dense(dldu)
    drive = w @ o_pre
    return np.outer(drive * dldu, o_pre)


def aia_update_gated_sum(w, o_pre, dldu) -> np.ndarray:
    """Gated-sum association update, written as explicit per-synapse loops.

    Independently accumulates, for each neuron, the presynaptically gated
    sum of weighted leaky-rule terms ``o_pre[k] * w[i, k] * (dldu[i] *
    o_pre[k])`` and distributes it to every active synapse. Kept loop-based
    on purpose as a cross-check for :func:`aia_update_from_drive`.
    """
    w = numerics.as_dense(w)
    o_pre = numerics.as_dense(o_pre)
    dldu = numerics.as_dense(dldu)
    out_n, in_n = w.shape
    update = np.zeros((out_n, in_n))
    for i in range(out_n):
        gathered = 0.0
        for k in range(in_n):
            leaky_term = dldu[i] * o_pre[k]
            gathered += o_pre[k] * w[i, k] * leaky_term
        for j in range(in_n):
            update[i, j] = o_pre[j] * gathered
    return update


@dataclass
class GradcheckEntry:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradcheckReport:
    entries: list[GradcheckEntry]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def worst(self) -> GradcheckEntry:
        return max(self.entries, key=lambda e: e.max_rel_err)

    def render(self) -> str:
        lines = [f"{e.name:<18} max_rel_err={e.max_rel_err:.3e}  "
                 f"{'pass' if e.passed else 'FAIL'}" for e in self.entries]
        verdict = "pass" if self.passed else "FAIL"
        lines.append(f"overall: {verdict} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def gradcheck(net: Network, inputs, labels, step_size: float = 1e-4,
              tolerance: float = 1e-3) -> GradcheckReport:
    """Compare analytic gradients against central finite differences.

    Runs in smoothed mode, where the network is genuinely differentiable,
    so the analytic backward must match the numeric derivative of the loss
    for every trainable array. Relative error per entry uses
    ``max(|analytic|, |numeric|, 1e-6)`` in the denominator.
    """
    work = net.copy()
    inputs = numerics.as_dense(inputs)

    def loss_at() -> float:
        tape, _ = forward_record(work, inputs, smoothed=True)
        loss, _, _ = readout_and_loss(tape, labels)
        return loss

    tape, _ = forward_record(work, inputs, smoothed=True)
    _, upstream, _ = readout_and_loss(tape, labels)
    grads = _backward(tape, upstream, work, smoothed=True)
    analytic_by_name = dict(grads.items())

    entries = []
    for name, param in work.parameter_items():
        analytic = np.asarray(analytic_by_name[name], dtype=np.float64)
        numeric = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            saved = param[idx]
            param[idx] = saved + step_size
            loss_plus = loss_at()
            param[idx] = saved - step_size
            loss_minus = loss_at()
            param[idx] = saved
            numeric[idx] = (loss_plus - loss_minus) / (2.0 * step_size)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
        err = float(np.max(np.abs(analytic - numeric) / denom))
        entries.append(GradcheckEntry(name=name, max_rel_err=err, passed=err <= tolerance))
    return GradcheckReport(entries=entries, tolerance=tolerance)
