"""Differential forward pass: symbolic bounds on ReLU(n') - ReLU(n) per layer.

The pre-activation difference of a layer is propagated exactly:

    delta_in_k = delta_out_{k-1} * W'_k + out_{k-1}(f) * Wdelta_k + bdelta_k

Applying ReLU to a difference is where precision is won or lost.  Writing
z = ReLU(n + d) - ReLU(n), z is piecewise linear over (n, d) and is bounded by
affine planes chosen per neuron from the rule chains below.  Every rule maps
the incoming bound equation e to alpha * e + beta, so a whole layer is two
fused multiply-adds over the equation blocks.

Upper rules (first match wins; (l, u) are the concrete corners of the upper
delta equation):
  U0  n' provably inactive         ub = 0          (z = -ReLU(n) <= 0)
  U1  n' provably active           ub unchanged    (z = min(n', d) <= d)
  U2  n active, l <= -LB_L(n) <= 0 <= u
                                   ub = (e - l)(u - l')/(u - l) + l',
                                   l' = -LB_L(n)   (z = max(-n, d))
  U3  l >= 0: unchanged; u <= 0: 0; else (e - l) u/(u - l)
      concretizing modes replace the third option with the constant u.

Lower rules are the mirror image with (l, u) from the lower delta equation:
  L0  n inactive -> lb = 0; L1 n active -> unchanged;
  L2  n' active, l <= 0 <= u' <= u, u' = LB_L(n'):
      lb = (e - u)(u' - l)/(u - l) + u'
  L3  u <= 0: unchanged; l >= 0: 0; else (e - u)(-l)/(u - l)
      (constant l in concretizing modes).
"""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .absbounds import ACTIVE, INACTIVE, UNSTABLE, LayerAbs, NeuronAbs, forward_abs
from .model import InputBox, NetworkPair
from .symexpr import (TOL, BoundsBlock, ConcreteInterval, SymInterval,
                      block_corners)
from .symvars import Budget, SymVarTable, compute_budget, introduce

MODES = ("naive", "concretize", "convex_only", "symvars_only", "full")

# Modes whose ReLU step uses the tilted general planes / tighter specials.
_CONVEX_MODES = ("convex_only", "full")
# Cases that replace an equation with a strictly looser plane; only these make
# a neuron pair a candidate for an intermediate variable.
APPROX_CASES = frozenset({"U2", "U3.plane", "U3.flat", "L2", "L3.plane", "L3.flat"})


def validate_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return mode


@dataclass(frozen=True)
class DeltaCase:
    """One fired bound rule: out_equation = alpha * in_equation + beta."""

    case: str
    alpha: float
    beta: float

    @property
    def approximating(self) -> bool:
        return self.case in APPROX_CASES


def select_upper_case(l: float, u: float, n_state: str, np_state: str,
                      n_pre_lb_lo: float, mode: str) -> DeltaCase:
    """Pick the upper-bound rule for one neuron pair.

    l, u: concrete corners of the upper delta equation; n_pre_lb_lo is
    LB_L of n's pre-activation (used by U2's l' = -LB_L(n)).
    """
    if np_state == INACTIVE:
        return DeltaCase("U0", 0.0, 0.0)
    if np_state == ACTIVE:
        return DeltaCase("U1", 1.0, 0.0)
    if mode in _CONVEX_MODES and n_state == ACTIVE and u - l >= TOL:
        lp = -n_pre_lb_lo
        if l <= lp <= 0.0 <= u and lp <= u:
            s = (u - lp) / (u - l)
            return DeltaCase("U2", s, -l * s + lp)
    if l >= 0.0:
        return DeltaCase("U3.keep", 1.0, 0.0)
    if u <= 0.0 or u - l < TOL:
        return DeltaCase("U3.zero", 0.0, 0.0)
    if mode in _CONVEX_MODES:
        s = u / (u - l)
        return DeltaCase("U3.plane", s, -l * s)
    return DeltaCase("U3.flat", 0.0, u)


def select_lower_case(l: float, u: float, n_state: str, np_state: str,
                      np_pre_lb_lo: float, mode: str) -> DeltaCase:
    """Mirror of select_upper_case for the lower equation; u' = LB_L(n')."""
    if n_state == INACTIVE:
        return DeltaCase("L0", 0.0, 0.0)
    if n_state == ACTIVE:
        return DeltaCase("L1", 1.0, 0.0)
    if mode in _CONVEX_MODES and np_state == ACTIVE and u - l >= TOL:
        up = np_pre_lb_lo
        if l <= 0.0 <= up <= u:
            s = (up - l) / (u - l)
            return DeltaCase("L2", s, -u * s + up)
    if u <= 0.0:
        return DeltaCase("L3.keep", 1.0, 0.0)
    if l >= 0.0 or u - l < TOL:
        return DeltaCase("L3.zero", 0.0, 0.0)
    if mode in _CONVEX_MODES:
        s = -l / (u - l)
        return DeltaCase("L3.plane", s, -u * s)
    return DeltaCase("L3.flat", 0.0, l)


@dataclass
class DeltaBounds:
    """Scalar view of one neuron pair's delta interval."""

    pre: SymInterval
    pre_corners: tuple  # (UB_L, UB_U, LB_L, LB_U)
    post: SymInterval | None = None
    case_used: tuple | None = None  # (upper case id, lower case id)


def relu_delta(d: DeltaBounds, abs_n: NeuronAbs, abs_np: NeuronAbs,
               mode: str = "full") -> DeltaBounds:
    """Apply the difference-ReLU rules to one neuron pair (scalar form)."""
    validate_mode(mode)
    if mode == "naive":
        raise ValueError("naive mode does not propagate difference intervals")
    ub_lo, ub_hi, lb_lo, lb_hi = d.pre_corners
    cu = select_upper_case(ub_lo, ub_hi, abs_n.state, abs_np.state,
                           abs_n.pre_corners[2], mode)
    cl = select_lower_case(lb_lo, lb_hi, abs_n.state, abs_np.state,
                           abs_np.pre_corners[2], mode)
    post = SymInterval(d.pre.lb.scale(cl.alpha).shift(cl.beta),
                       d.pre.ub.scale(cu.alpha).shift(cu.beta))
    return DeltaBounds(d.pre, d.pre_corners, post, (cu.case, cl.case))


def delta_affine(k: int, prev_delta: BoundsBlock, prev_abs_f_post: BoundsBlock,
                 net_pair: NetworkPair) -> BoundsBlock:
    """Pre-activation delta equations of layer k (k >= 1 in weight indexing)."""
    through_fp = prev_delta.affine(net_pair.fp.weights[k], net_pair.bdelta[k])
    through_wd = prev_abs_f_post.widen_syms(prev_delta.n_syms).affine(
        net_pair.wdelta[k])
    return through_fp.add(through_wd)


@dataclass
class DeltaLayer:
    """Delta bounds for one layer (block form)."""

    pre: BoundsBlock
    post: BoundsBlock
    ub_lo: np.ndarray
    ub_hi: np.ndarray
    lb_lo: np.ndarray
    lb_hi: np.ndarray
    upper_cases: list = field(default_factory=list)
    lower_cases: list = field(default_factory=list)
    introduced: list = field(default_factory=list)  # (neuron index, variable id)

    def neuron(self, j: int) -> DeltaBounds:
        cases = None
        if self.upper_cases:
            cases = (self.upper_cases[j], self.lower_cases[j])
        return DeltaBounds(self.pre.row(j),
                           (self.ub_lo[j], self.ub_hi[j], self.lb_lo[j], self.lb_hi[j]),
                           self.post.row(j), cases)


@dataclass
class SymVarOptions:
    """Knobs for intermediate-variable introduction."""

    budget_limit: int | None = None  # override the computed cap


@dataclass
class DiffStats:
    mode: str
    case_histogram: Counter
    unstable_pairs_per_layer: list
    symvars_introduced: int
    budget_limit: int


@dataclass
class DiffResult:
    """Everything one differential forward pass produced."""

    outputs: list  # per output: (SymInterval, ConcreteInterval)
    stats: DiffStats
    abs_f: list    # LayerAbs per layer of f
    abs_fp: list
    delta_layers: list  # DeltaLayer per layer (empty in naive mode)
    table: SymVarTable
    box: InputBox
    mode: str
    sym_sources: list  # (layer index, neuron index, variable id)

    @property
    def concrete_outputs(self):
        return [c for _, c in self.outputs]


def _unstable_pairs(abs_f, abs_fp) -> list:
    counts = []
    for la, lb in zip(abs_f[:-1], abs_fp[:-1]):
        counts.append(int(np.sum((la.states == UNSTABLE) | (lb.states == UNSTABLE))))
    return counts


def forward_diff(net_pair: NetworkPair, box: InputBox, mode: str = "full",
                 symvar_opts: SymVarOptions | None = None) -> DiffResult:
    """Run the differential analysis once over the box."""
    validate_mode(mode)
    opts = symvar_opts or SymVarOptions()
    n = net_pair.input_count
    table = SymVarTable(n)

    abs_f = forward_abs(net_pair.f, box)
    abs_fp = forward_abs(net_pair.fp, box)
    unstable = _unstable_pairs(abs_f, abs_fp)

    hist: Counter = Counter()
    sym_sources: list = []

    if mode == "naive":
        # Independent bounds subtracted at the output only.
        out_f, out_fp = abs_f[-1], abs_fp[-1]
        lb = out_fp.post.lb - out_f.post.ub
        ub = out_fp.post.ub - out_f.post.lb
        block = BoundsBlock(lb, ub, n)
        empty = np.zeros((0, n + 1))
        lo = block_corners(block.lb, n, box, empty, empty, "lower")
        hi = block_corners(block.ub, n, box, empty, empty, "upper")
        outputs = [(block.row(j), ConcreteInterval(lo[j], hi[j]))
                   for j in range(block.n_rows)]
        stats = DiffStats(mode, hist, unstable, 0, 0)
        return DiffResult(outputs, stats, abs_f, abs_fp, [], table, box, mode, [])

    if mode in ("symvars_only", "full"):
        limit = opts.budget_limit if opts.budget_limit is not None \
            else compute_budget(unstable)
    else:
        limit = 0
    budget = Budget(limit=limit, per_layer_unstable=unstable)

    layers = net_pair.f.n_layers
    delta_post = BoundsBlock.zeros(n, n, 0)
    abs_post_prev = BoundsBlock.identity_inputs(n)
    delta_layers: list = []

    for k in range(layers):
        pre = delta_affine(k, delta_post, abs_post_prev, net_pair)
        defs_lb, defs_ub = table.def_matrices()
        ub_lo = block_corners(pre.ub, n, box, defs_lb, defs_ub, "lower")
        ub_hi = block_corners(pre.ub, n, box, defs_lb, defs_ub, "upper")
        lb_lo = block_corners(pre.lb, n, box, defs_lb, defs_ub, "lower")
        lb_hi = block_corners(pre.lb, n, box, defs_lb, defs_ub, "upper")

        if k == layers - 1:
            delta_layers.append(DeltaLayer(pre, pre, ub_lo, ub_hi, lb_lo, lb_hi))
            break

        sf, sfp = abs_f[k], abs_fp[k]
        m = pre.n_rows
        alphas_u = np.empty(m)
        betas_u = np.empty(m)
        alphas_l = np.empty(m)
        betas_l = np.empty(m)
        upper_cases = []
        lower_cases = []
        for j in range(m):
            cu = select_upper_case(ub_lo[j], ub_hi[j], sf.states[j], sfp.states[j],
                                   sf.lb_lo[j], mode)
            cl = select_lower_case(lb_lo[j], lb_hi[j], sf.states[j], sfp.states[j],
                                   sfp.lb_lo[j], mode)
            alphas_u[j], betas_u[j] = cu.alpha, cu.beta
            alphas_l[j], betas_l[j] = cl.alpha, cl.beta
            upper_cases.append(cu.case)
            lower_cases.append(cl.case)
        hist.update(upper_cases)
        hist.update(lower_cases)

        post = pre.copy()
        post.ub *= alphas_u[:, None]
        post.ub[:, -1] += betas_u
        post.lb *= alphas_l[:, None]
        post.lb[:, -1] += betas_l

        # Intermediate variables: earliest layers first (this loop), neuron
        # order within the layer, only where an approximating plane fired on
        # an unstable pair, and only while the budget lasts.
        introduced = []
        if mode in ("symvars_only", "full") and not budget.exhausted:
            chosen = []
            for j in range(m):
                if budget.used + len(chosen) >= budget.limit:
                    break
                pair_unstable = sf.states[j] == UNSTABLE or sfp.states[j] == UNSTABLE
                fired = upper_cases[j] in APPROX_CASES or lower_cases[j] in APPROX_CASES
                if pair_unstable and fired:
                    chosen.append(j)
            if chosen:
                grown = post.widen_syms(post.n_syms + len(chosen))
                for j in chosen:
                    replaced = introduce(post.row(j), table, budget)
                    vid = next(iter(replaced.ub.sym_coeffs))
                    grown.set_sym_row(j, vid)
                    introduced.append((j, vid))
                    sym_sources.append((k, j, vid))
                post = grown

        delta_layers.append(DeltaLayer(pre, post, ub_lo, ub_hi, lb_lo, lb_hi,
                                       upper_cases, lower_cases, introduced))
        delta_post = post
        abs_post_prev = abs_f[k].post

    out = delta_layers[-1]
    outputs = [(out.pre.row(j), ConcreteInterval(out.lb_lo[j], out.ub_hi[j]))
               for j in range(out.pre.n_rows)]
    stats = DiffStats(mode, hist, unstable, len(table), budget.limit)
    return DiffResult(outputs, stats, abs_f, abs_fp, delta_layers, table, box,
                      mode, sym_sources)
