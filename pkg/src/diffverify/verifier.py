"""Equivalence checking with input bisection and a parallel work queue.

A task is verified when every leaf of the bisection tree has all output
difference bounds strictly inside (-epsilon, epsilon).  Leaves that hit the
depth limit or the deadline leave the task undetermined.  The search tree is
a deterministic function of the task: items are processed breadth-first and
children are enqueued in bisection order, so status and leaf count do not
depend on the worker count.

Workers are OS processes (forked), not Python threads: the per-box analysis
is pure CPU-bound numpy and would serialize on the interpreter lock.
"""

import multiprocessing
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .absbounds import ACTIVE, INACTIVE
from .deltabounds import SymVarOptions, forward_diff, validate_mode
from .model import InputBox, NetworkPair
from .symexpr import ConcreteInterval

SPLIT_STRATEGIES = ("smear", "widest")


@dataclass
class VerificationTask:
    net_pair: NetworkPair
    box: InputBox
    epsilon: float
    mode: str = "full"
    max_depth: int = 25
    timeout_s: float = 1800.0
    thread_count: int = 12
    split_strategy: str = "smear"
    symvar_opts: SymVarOptions | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        validate_mode(self.mode)
        if self.split_strategy not in SPLIT_STRATEGIES:
            raise ValueError(f"split strategy must be one of {SPLIT_STRATEGIES}")


@dataclass
class VerificationOutcome:
    status: str  # "verified" | "undetermined"
    output_bounds: list | None  # hull over explored leaves, per output
    subregions_explored: int
    leaf_count: int
    max_depth_reached: int
    wall_time_s: float
    symvars_introduced: int
    case_histogram: Counter = field(default_factory=Counter)
    timed_out: bool = False

    @property
    def verified(self) -> bool:
        return self.status == "verified"


def check_epsilon(output_deltas, epsilon: float) -> bool:
    """True iff every output's delta interval lies strictly inside (-eps, eps)."""
    return all(-epsilon < c.lo and c.hi < epsilon for c in output_deltas)


# ---------------------------------------------------------------------------
# Interval gradients (smear scores for picking the bisection dimension)
# ---------------------------------------------------------------------------

@dataclass
class GradientBounds:
    """Interval enclosures of input-output Jacobians over the current box."""

    f_lo: np.ndarray    # (n_inputs, n_outputs)
    f_hi: np.ndarray
    fp_lo: np.ndarray
    fp_hi: np.ndarray
    delta_lo: np.ndarray  # fp - f, elementwise interval subtraction
    delta_hi: np.ndarray
    per_input: list     # ConcreteInterval per input: sum over outputs of |delta|


def _mask_rows(states) -> tuple:
    """ReLU derivative interval per neuron: active [1,1], inactive [0,0],
    unstable [0,1]."""
    lo = np.where(states == ACTIVE, 1.0, 0.0)
    hi = np.where(states == INACTIVE, 0.0, 1.0)
    return lo, hi


def _jacobian_interval(net, layer_abs) -> tuple:
    """Backward interval product W_1 diag(r_1) ... W_{L-1} diag(r_{L-1}) W_L."""
    g_lo = net.weights[-1].copy()
    g_hi = net.weights[-1].copy()
    for k in range(net.n_layers - 2, -1, -1):
        r_lo, r_hi = _mask_rows(layer_abs[k].states)
        # scale rows of G by the derivative interval [r_lo, r_hi]
        cands = (r_lo[:, None] * g_lo, r_lo[:, None] * g_hi,
                 r_hi[:, None] * g_lo, r_hi[:, None] * g_hi)
        lo = np.minimum.reduce(cands)
        hi = np.maximum.reduce(cands)
        w = net.weights[k]
        wp = np.maximum(w, 0.0)
        wn = np.minimum(w, 0.0)
        g_lo = wp @ lo + wn @ hi
        g_hi = wp @ hi + wn @ lo
    return g_lo, g_hi


def interval_gradient(net_pair: NetworkPair, abs_f, abs_fp) -> GradientBounds:
    """Sound enclosure of d(f'_j - f_j)/dx_i over the box the abs passes used."""
    f_lo, f_hi = _jacobian_interval(net_pair.f, abs_f)
    fp_lo, fp_hi = _jacobian_interval(net_pair.fp, abs_fp)
    d_lo = fp_lo - f_hi
    d_hi = fp_hi - f_lo
    # |interval| summed over outputs gives one magnitude interval per input
    abs_lo = np.where(d_lo > 0, d_lo, np.where(d_hi < 0, -d_hi, 0.0))
    abs_hi = np.maximum(np.abs(d_lo), np.abs(d_hi))
    per_input = [ConcreteInterval(float(a), float(b))
                 for a, b in zip(abs_lo.sum(axis=1), abs_hi.sum(axis=1))]
    return GradientBounds(f_lo, f_hi, fp_lo, fp_hi, d_lo, d_hi, per_input)


def _pick_split_dim(box: InputBox, strategy: str, gradients) -> int:
    widths = box.widths
    if np.all(widths <= 0):
        raise ValueError("degenerate box: all widths zero")
    if strategy == "smear":
        if gradients is None:
            raise ValueError("smear strategy needs gradient intervals")
        mags = np.array([max(abs(g.lo), abs(g.hi)) for g in gradients])
        scores = widths * mags
        if np.any(scores > 0):
            return int(np.argmax(scores))
        return int(np.argmax(widths))
    if strategy == "widest":
        return int(np.argmax(widths))
    raise ValueError(f"unknown split strategy {strategy!r}")


def split(box: InputBox, strategy: str = "smear", gradients=None):
    """Bisect the box at the midpoint of the chosen dimension.

    smear picks the dimension maximizing width * max(|g.lo|, |g.hi|) (ties to
    the lowest index); widest picks the widest dimension.  The children cover
    the parent exactly and share only the cut plane.
    """
    return box.bisect(_pick_split_dim(box, strategy, gradients))


# ---------------------------------------------------------------------------
# Work-queue search
# ---------------------------------------------------------------------------

@dataclass
class _ItemResult:
    bounds: list          # ConcreteInterval per output
    verified: bool
    split_dim: int | None
    symvars: int
    histogram: Counter


def _analyze_box(args) -> _ItemResult:
    box, depth, task = args
    res = forward_diff(task.net_pair, box, task.mode, task.symvar_opts)
    bounds = res.concrete_outputs
    ok = check_epsilon(bounds, task.epsilon)
    split_dim = None
    if not ok and depth < task.max_depth:
        grad = None
        if task.split_strategy == "smear":
            grad = interval_gradient(task.net_pair, res.abs_f, res.abs_fp).per_input
        split_dim = _pick_split_dim(box, task.split_strategy, grad)
    return _ItemResult(bounds, ok, split_dim,
                       res.stats.symvars_introduced, res.stats.case_histogram)


def verify(task: VerificationTask) -> VerificationOutcome:
    """Breadth-first bisection search over the task box."""
    start = time.monotonic()
    deadline = start + task.timeout_s
    workers = max(1, int(task.thread_count))

    frontier = [(task.box, 0)]
    explored = 0
    leaf_bounds: list = []   # bounds of every item that did not split
    unresolved = 0           # leaves that failed the check or never ran
    leaf_count = 0
    max_depth_seen = 0
    symvars_total = 0
    histogram: Counter = Counter()
    timed_out = False

    pool = None
    if workers > 1:
        try:
            pool = multiprocessing.get_context("fork").Pool(processes=workers)
        except (ValueError, OSError):
            pool = None  # no fork on this platform: run sequentially

    try:
        while frontier and not timed_out:
            # One breadth-first level per round, processed in chunks; the
            # deadline is checked between chunks so in-flight analyses always
            # run to completion.
            level = frontier
            frontier = []
            results = []
            chunk = max(1, 4 * workers)
            for off in range(0, len(level), chunk):
                if time.monotonic() > deadline:
                    timed_out = True
                    break
                part = [(box, depth, task) for box, depth in level[off:off + chunk]]
                mapper = pool.map if pool is not None else lambda f, xs: list(map(f, xs))
                results.extend(mapper(_analyze_box, part))

            for (box, depth), item in zip(level, results):
                explored += 1
                max_depth_seen = max(max_depth_seen, depth)
                symvars_total += item.symvars
                histogram.update(item.histogram)
                if item.split_dim is not None:
                    left, right = box.bisect(item.split_dim)
                    frontier.append((left, depth + 1))
                    frontier.append((right, depth + 1))
                else:
                    leaf_count += 1
                    leaf_bounds.append(item.bounds)
                    if not item.verified:
                        unresolved += 1

            # Anything not analyzed before the deadline is an unresolved leaf.
            leftovers = len(level) - len(results)
            if timed_out and leftovers > 0:
                leaf_count += leftovers
                unresolved += leftovers
        if timed_out and frontier:
            leaf_count += len(frontier)
            unresolved += len(frontier)
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    hull = None
    if leaf_bounds:
        n_out = len(leaf_bounds[0])
        hull = [ConcreteInterval(min(b[j].lo for b in leaf_bounds),
                                 max(b[j].hi for b in leaf_bounds))
                for j in range(n_out)]

    status = "verified" if unresolved == 0 else "undetermined"
    return VerificationOutcome(
        status=status,
        output_bounds=hull,
        subregions_explored=explored,
        leaf_count=leaf_count,
        max_depth_reached=max_depth_seen,
        wall_time_s=time.monotonic() - start,
        symvars_introduced=symvars_total,
        case_histogram=histogram,
        timed_out=timed_out,
    )
