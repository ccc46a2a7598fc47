"""Intermediate symbolic variables for unstable neuron-pair delta outputs.

A fresh variable v stands for ReLU(n') - ReLU(n) at one hidden neuron pair.
Its definition is the pair of bound equations the convex step produced there,
rewritten over the inputs only (back-references to earlier variables are
substituted away), so that concretization never needs to recurse.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .symexpr import LinExpr, SymInterval


class SymVarTable:
    """Ordered id -> (lb_def, ub_def) map; definitions are input-only."""

    def __init__(self, input_count: int):
        self.input_count = input_count
        self.defs: dict[int, tuple[LinExpr, LinExpr]] = {}
        self.next_id = input_count

    def __len__(self) -> int:
        return len(self.defs)

    def ids(self):
        return self.defs.keys()

    def lookup(self, vid: int) -> tuple[LinExpr, LinExpr]:
        try:
            return self.defs[vid]
        except KeyError:
            raise KeyError(f"unknown intermediate variable {vid}") from None

    def define(self, lb_def: LinExpr, ub_def: LinExpr) -> int:
        if not lb_def.is_input_only or not ub_def.is_input_only:
            raise ValueError("intermediate definitions must not reference intermediates")
        vid = self.next_id
        self.next_id += 1
        self.defs[vid] = (lb_def, ub_def)
        return vid

    def def_matrices(self):
        """Definitions stacked as (n_syms, input_count + 1) arrays, id order."""
        n = self.input_count
        s = len(self.defs)
        lb = np.zeros((s, n + 1))
        ub = np.zeros((s, n + 1))
        for row, vid in enumerate(sorted(self.defs)):
            ldef, udef = self.defs[vid]
            lb[row, :n] = ldef.input_coeffs
            lb[row, -1] = ldef.constant
            ub[row, :n] = udef.input_coeffs
            ub[row, -1] = udef.constant
        return lb, ub


@dataclass
class Budget:
    """Cap on how many intermediate variables a verification subtask may add."""

    limit: int
    used: int = 0
    per_layer_unstable: list = field(default_factory=list)

    @property
    def exhausted(self) -> bool:
        return self.used >= self.limit

    def spend(self) -> None:
        if self.exhausted:
            raise RuntimeError("budget exhausted")
        self.used += 1


def compute_budget(per_layer_unstable) -> int:
    """N = ceil(sum_k N_k / k) over hidden layers k = 1..L (1-based).

    N_k counts neuron pairs in hidden layer k where either side is unstable.
    The 1/k discount makes early layers dominate; the ceiling keeps N >= 1
    whenever the first hidden layer has any unstable pair.
    """
    total = sum(nk / k for k, nk in enumerate(per_layer_unstable, start=1))
    return math.ceil(total - 1e-12)


def eliminate_back_refs(e: LinExpr, direction: str, table: SymVarTable) -> LinExpr:
    """Rewrite e over inputs only, keeping it a sound bound in `direction`.

    A coefficient c on variable v is replaced by c times v's lower definition
    when that preserves the direction (c > 0 for a lower bound, c < 0 for an
    upper bound) and by c times the upper definition otherwise.
    """
    if direction not in ("lower", "upper"):
        raise ValueError(f"direction must be 'lower' or 'upper', got {direction!r}")
    if e.is_input_only:
        return e
    out = LinExpr(e.input_coeffs, None, e.constant)
    for v, c in e.sym_coeffs.items():
        if c == 0.0:
            continue
        lb_def, ub_def = table.lookup(v)
        take_lower = (direction == "lower") == (c > 0)
        out = out + (lb_def if take_lower else ub_def).scale(c)
    return out


def introduce(delta_post: SymInterval, table: SymVarTable, budget: Budget) -> SymInterval:
    """Register a fresh variable for one delta output and return [v, v].

    When the budget is exhausted the interval is returned unchanged; callers
    treat that as a plain pass-through, not an error.
    """
    if budget.exhausted:
        return delta_post
    lb_def = eliminate_back_refs(delta_post.lb, "lower", table)
    ub_def = eliminate_back_refs(delta_post.ub, "upper", table)
    vid = table.define(lb_def, ub_def)
    budget.spend()
    n = delta_post.lb.n_inputs
    return SymInterval.exactly(LinExpr.sym_var(n, vid))
