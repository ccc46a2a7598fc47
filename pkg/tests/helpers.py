"""Shared fixtures: the worked 2-2-2-1 example pair and random-network factories."""

import struct

import numpy as np

from diffverify import InputBox, Network, pair, truncate_weights


def demo_networks():
    """The hand-sized demo: f with fractional weights, f' the whole-number
    rounding of f.  Two inputs, two hidden layers of two, one output."""
    f = Network(
        [np.array([[1.9, 1.1], [-1.9, 1.0]]),
         np.array([[2.1, 0.9], [-1.0, 1.1]]),
         np.array([[1.0], [-1.0]])],
        [np.zeros(2), np.zeros(2), np.zeros(1)])
    fp = Network(
        [np.array([[2.0, 1.0], [-2.0, 1.0]]),
         np.array([[2.0, 1.0], [-1.0, 1.0]]),
         np.array([[1.0], [-1.0]])],
        [np.zeros(2), np.zeros(2), np.zeros(1)])
    return f, fp


def demo_box():
    return InputBox([-2.0, -2.0], [2.0, 2.0])


def binary16_round(x: float) -> float:
    """Independent IEEE-754 binary16 round-trip via the struct codec."""
    return struct.unpack("<e", struct.pack("<e", x))[0]


def random_network(rng, n_inputs, hidden, n_outputs, w_scale=1.0, bias_scale=0.2):
    """Random net with fan-in-scaled weights so activations stay O(1)."""
    sizes = [n_inputs] + list(hidden) + [n_outputs]
    weights = []
    biases = []
    for k in range(len(sizes) - 1):
        std = w_scale / np.sqrt(sizes[k])
        weights.append(rng.normal(0.0, std, size=(sizes[k], sizes[k + 1])))
        biases.append(rng.normal(0.0, bias_scale, size=sizes[k + 1]))
    return Network(weights, biases)


def random_truncation_pair(rng, n_inputs=None, hidden=None, n_outputs=None):
    """A random network paired with its 16-bit-truncated copy."""
    if n_inputs is None:
        n_inputs = int(rng.integers(2, 6))
    if hidden is None:
        hidden = [int(rng.integers(2, 9)) for _ in range(int(rng.integers(2, 5)))]
    if n_outputs is None:
        n_outputs = int(rng.integers(1, 4))
    f = random_network(rng, n_inputs, hidden, n_outputs)
    return pair(f, truncate_weights(f))


def random_box(rng, n, max_width=2.0):
    center = rng.uniform(-1.0, 1.0, size=n)
    half = rng.uniform(0.05, max_width / 2, size=n)
    return InputBox(center - half, center + half)
