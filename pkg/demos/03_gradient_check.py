"""Finite-difference verification of the hand-written backward pass.

For every neuron model, builds a tiny two-layer network, switches it to
the smoothed twin (logistic spike in place of the step, so the loss is
differentiable), and compares the analytic gradients of every parameter
tensor against central finite differences. Relative errors around 1e-7
are the expected floor for step size 1e-4.

Run from the repository root:

    python3 demos/03_gradient_check.py
"""

import numpy as np

from spikekit.bptt import gradcheck
from spikekit.network import init_network
from spikekit.neurons import MODELS

WIDTHS = [5, 6, 3]
TIMESTEPS = 3
BATCH = 2


def main():
    rng = np.random.default_rng(12)
    inputs = (rng.random((BATCH, WIDTHS[0], TIMESTEPS)) < 0.5).astype(np.float64)
    labels = rng.integers(0, WIDTHS[-1], size=BATCH)
    print(f"network {WIDTHS}, {TIMESTEPS} timesteps, batch {BATCH}\n")

    for model in MODELS:
        net = init_network(WIDTHS, model=model, timesteps=TIMESTEPS, seed=4)
        report = gradcheck(net, inputs, labels)
        print(f"model {model}")
        print(report.render())
        print()


if __name__ == "__main__":
    main()
