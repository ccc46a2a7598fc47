"""Single-network forward pass: symbolic pre/post-ReLU bounds per neuron.

The ReLU relaxation is the standard one for a single network: when the input
range straddles zero, the upper equation is mapped through the secant from
(l, 0) to (u, u) and the lower equation is scaled by u / (u - l) (the line
through the origin).  Both directions are relaxed independently, each with
its own concrete range.
"""

from dataclasses import dataclass

import numpy as np

from .model import InputBox, Network
from .symexpr import TOL, BoundsBlock, SymInterval, block_corners

ACTIVE = "active"
INACTIVE = "inactive"
UNSTABLE = "unstable"


@dataclass
class LayerAbs:
    """Bounds for one layer of one network (block form)."""

    pre: BoundsBlock
    post: BoundsBlock
    # Concrete corners of the pre-activation equations.
    ub_lo: np.ndarray  # lower corner of the upper equation
    ub_hi: np.ndarray  # upper corner of the upper equation
    lb_lo: np.ndarray
    lb_hi: np.ndarray
    states: np.ndarray  # array of ACTIVE / INACTIVE / UNSTABLE (output layer: "")

    def neuron(self, j: int) -> "NeuronAbs":
        return NeuronAbs(
            pre=self.pre.row(j),
            post=self.post.row(j),
            pre_corners=(self.ub_lo[j], self.ub_hi[j], self.lb_lo[j], self.lb_hi[j]),
            state=str(self.states[j]),
        )


@dataclass
class NeuronAbs:
    """Scalar view of one neuron's bounds and activation state."""

    pre: SymInterval
    post: SymInterval
    pre_corners: tuple  # (UB_L, UB_U, LB_L, LB_U)
    state: str


def classify_states(lb_lo: np.ndarray, ub_hi: np.ndarray) -> np.ndarray:
    """active iff the pre-activation is provably >= 0, inactive iff <= 0,
    else unstable; ties within TOL resolve to the stable states."""
    states = np.full(lb_lo.shape, UNSTABLE, dtype=object)
    states[lb_lo >= -TOL] = ACTIVE
    states[(lb_lo < -TOL) & (ub_hi <= TOL)] = INACTIVE
    return states


def relu_single(pre: SymInterval, corners, box=None, table=None):
    """Relax one neuron's ReLU.  corners = (UB_L, UB_U, LB_L, LB_U) of pre.

    Returns (post, state).  Scalar mirror of the block path below.
    """
    ub_lo, ub_hi, lb_lo, lb_hi = corners
    state = classify_states(np.array([lb_lo]), np.array([ub_hi]))[0]

    ub = pre.ub
    if ub_lo >= 0:
        pass
    elif ub_hi <= 0 or ub_hi - ub_lo < TOL:
        ub = ub.scale(0.0)
    else:
        k = ub_hi / (ub_hi - ub_lo)
        ub = ub.scale(k).shift(-ub_lo * k)

    lb = pre.lb
    if lb_lo >= 0:
        pass
    elif lb_hi <= 0 or lb_hi - lb_lo < TOL:
        lb = lb.scale(0.0)
    else:
        lb = lb.scale(lb_hi / (lb_hi - lb_lo))

    return SymInterval(lb, ub), state


def _relu_block(pre: BoundsBlock, ub_lo, ub_hi, lb_lo, lb_hi) -> BoundsBlock:
    """Vectorized relu_single over a whole layer."""
    post = pre.copy()

    span = ub_hi - ub_lo
    keep = ub_lo >= 0
    dead = ~keep & ((ub_hi <= 0) | (span < TOL))
    mix = ~keep & ~dead
    scale = np.ones_like(ub_hi)
    shift = np.zeros_like(ub_hi)
    scale[dead] = 0.0
    k = ub_hi[mix] / span[mix]
    scale[mix] = k
    shift[mix] = -ub_lo[mix] * k
    post.ub *= scale[:, None]
    post.ub[:, -1] += shift

    span = lb_hi - lb_lo
    keep = lb_lo >= 0
    dead = ~keep & ((lb_hi <= 0) | (span < TOL))
    mix = ~keep & ~dead
    scale = np.ones_like(lb_hi)
    scale[dead] = 0.0
    scale[mix] = lb_hi[mix] / span[mix]
    post.lb *= scale[:, None]
    return post


def forward_abs(net: Network, box: InputBox, table=None) -> list:
    """Per-layer bounds for one network over the box.

    table, when given, supplies intermediate-variable definitions for
    concretization (absolute bounds themselves never reference them).
    Layer 0 is the identity over the inputs; the output layer is affine.
    """
    if box.lo.shape != (net.input_count,):
        raise ValueError(f"box has {box.lo.shape[0]} dims, network expects {net.input_count}")
    n = net.input_count
    if table is not None and len(table):
        defs_lb, defs_ub = table.def_matrices()
    else:
        defs_lb = defs_ub = np.zeros((0, n + 1))

    post = BoundsBlock.identity_inputs(n)
    layers = []
    for k in range(net.n_layers):
        pre = post.affine(net.weights[k], net.biases[k])
        ub_lo = block_corners(pre.ub, n, box, defs_lb, defs_ub, "lower")
        ub_hi = block_corners(pre.ub, n, box, defs_lb, defs_ub, "upper")
        lb_lo = block_corners(pre.lb, n, box, defs_lb, defs_ub, "lower")
        lb_hi = block_corners(pre.lb, n, box, defs_lb, defs_ub, "upper")
        if k == net.n_layers - 1:
            states = np.full(pre.n_rows, "", dtype=object)
            layers.append(LayerAbs(pre, pre, ub_lo, ub_hi, lb_lo, lb_hi, states))
            break
        states = classify_states(lb_lo, ub_hi)
        post = _relu_block(pre, ub_lo, ub_hi, lb_lo, lb_hi)
        layers.append(LayerAbs(pre, post, ub_lo, ub_hi, lb_lo, lb_hi, states))
    return layers
