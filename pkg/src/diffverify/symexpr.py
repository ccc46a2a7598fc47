"""Linear symbolic expressions and symbolic intervals.

Every bound anywhere in the analysis is a linear expression over the network's
input variables plus (optionally) intermediate variables that stand for the
output difference of selected hidden-neuron pairs.  Concrete bounds are
obtained by concretizing such an expression over an input box: intermediate
variables are first replaced, one level deep, by the direction-appropriate
side of their definition, then the corner of the resulting input-only
expression is taken.
"""

from dataclasses import dataclass, field

import numpy as np

# Absolute tolerance for internal bound comparisons (case selection, state
# classification).  Keeps decisions stable near zero without directed
# rounding.
TOL = 1e-9


@dataclass(frozen=True)
class ConcreteInterval:
    """A closed numeric interval [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi + TOL:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, tol: float = TOL) -> bool:
        return self.lo - tol <= x <= self.hi + tol


class LinExpr:
    """c0 + sum_i a_i * x_i + sum_v b_v * s_v.

    Input coefficients are a dense vector, intermediate-variable coefficients
    a sparse id -> coefficient map (bounds touch most inputs after the first
    layer but only a handful of intermediates).
    """

    __slots__ = ("input_coeffs", "sym_coeffs", "constant")

    def __init__(self, input_coeffs, sym_coeffs=None, constant=0.0):
        self.input_coeffs = np.asarray(input_coeffs, dtype=np.float64)
        self.sym_coeffs = dict(sym_coeffs) if sym_coeffs else {}
        self.constant = float(constant)
        if not np.all(np.isfinite(self.input_coeffs)) or not np.isfinite(self.constant):
            raise ValueError("non-finite coefficient in linear expression")
        for v, c in self.sym_coeffs.items():
            if not np.isfinite(c):
                raise ValueError(f"non-finite coefficient on intermediate {v}")

    @classmethod
    def constant_expr(cls, n_inputs: int, value: float) -> "LinExpr":
        return cls(np.zeros(n_inputs), None, value)

    @classmethod
    def input_var(cls, n_inputs: int, i: int) -> "LinExpr":
        coeffs = np.zeros(n_inputs)
        coeffs[i] = 1.0
        return cls(coeffs, None, 0.0)

    @classmethod
    def sym_var(cls, n_inputs: int, vid: int) -> "LinExpr":
        return cls(np.zeros(n_inputs), {vid: 1.0}, 0.0)

    @property
    def n_inputs(self) -> int:
        return self.input_coeffs.shape[0]

    @property
    def is_input_only(self) -> bool:
        return not self.sym_coeffs

    def __add__(self, other: "LinExpr") -> "LinExpr":
        syms = dict(self.sym_coeffs)
        for v, c in other.sym_coeffs.items():
            syms[v] = syms.get(v, 0.0) + c
        return LinExpr(self.input_coeffs + other.input_coeffs, syms,
                       self.constant + other.constant)

    def __sub__(self, other: "LinExpr") -> "LinExpr":
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "LinExpr":
        return LinExpr(self.input_coeffs * c,
                       {v: cv * c for v, cv in self.sym_coeffs.items()},
                       self.constant * c)

    def shift(self, c: float) -> "LinExpr":
        return LinExpr(self.input_coeffs, self.sym_coeffs, self.constant + c)

    def eval(self, x, sym_values=None) -> float:
        """Exact affine evaluation at input x with given intermediate values."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_coeffs.shape:
            raise ValueError(f"expected {self.n_inputs} input values, got {x.shape}")
        total = self.constant + float(self.input_coeffs @ x)
        for v, c in self.sym_coeffs.items():
            if sym_values is None or v not in sym_values:
                raise KeyError(f"no value supplied for intermediate variable {v}")
            total += c * sym_values[v]
        return total

    def __repr__(self):
        terms = [f"{c:+g}*x{i}" for i, c in enumerate(self.input_coeffs) if c != 0.0]
        terms += [f"{c:+g}*s{v}" for v, c in sorted(self.sym_coeffs.items())]
        terms.append(f"{self.constant:+g}")
        return "LinExpr(" + " ".join(terms) + ")"


@dataclass
class SymInterval:
    """A pair of symbolic lower/upper bound equations for one quantity."""

    lb: LinExpr
    ub: LinExpr

    @classmethod
    def exactly(cls, e: LinExpr) -> "SymInterval":
        return cls(e, e)

    @classmethod
    def zero(cls, n_inputs: int) -> "SymInterval":
        z = LinExpr.constant_expr(n_inputs, 0.0)
        return cls(z, z)

    def __add__(self, other: "SymInterval") -> "SymInterval":
        return SymInterval(self.lb + other.lb, self.ub + other.ub)

    def scale(self, c: float) -> "SymInterval":
        if c >= 0:
            return SymInterval(self.lb.scale(c), self.ub.scale(c))
        return SymInterval(self.ub.scale(c), self.lb.scale(c))


def add(a: SymInterval, b: SymInterval) -> SymInterval:
    return a + b


def scale(a: SymInterval, c: float) -> SymInterval:
    return a.scale(c)


def _flatten(e: LinExpr, table, direction: str) -> tuple[np.ndarray, float]:
    """Replace intermediates by the direction-appropriate side of their
    definition (one level; definitions are input-only) and return the dense
    input coefficients plus constant."""
    coeffs = e.input_coeffs.copy()
    const = e.constant
    for v, c in e.sym_coeffs.items():
        if c == 0.0:
            continue
        if table is None:
            raise KeyError(f"expression references intermediate {v} but no table given")
        lb_def, ub_def = table.lookup(v)
        if direction == "upper":
            d = ub_def if c > 0 else lb_def
        else:
            d = lb_def if c > 0 else ub_def
        coeffs += c * d.input_coeffs
        const += c * d.constant
    return coeffs, const


def _corner(coeffs: np.ndarray, const: float, lo: np.ndarray, hi: np.ndarray,
            direction: str) -> float:
    if direction == "upper":
        return const + float(np.sum(np.maximum(coeffs * lo, coeffs * hi)))
    return const + float(np.sum(np.minimum(coeffs * lo, coeffs * hi)))


def concretize(e: LinExpr, box, table=None, direction: str = "upper") -> float:
    """Sound numeric bound on e over the box and all admissible valuations of
    intermediate variables.

    direction="upper" maximizes, "lower" minimizes.  Intermediates are
    eliminated by one-level substitution of their definitions before the
    corner is taken, so correlations between a definition and the rest of the
    expression are kept.
    """
    if direction not in ("upper", "lower"):
        raise ValueError(f"direction must be 'upper' or 'lower', got {direction!r}")
    coeffs, const = _flatten(e, table, direction)
    return _corner(coeffs, const, box.lo, box.hi, direction)


def concretize_interval(si: SymInterval, box, table=None) -> ConcreteInterval:
    """Outer concrete hull [LB_L, UB_U] of a symbolic interval."""
    return ConcreteInterval(concretize(si.lb, box, table, "lower"),
                            concretize(si.ub, box, table, "upper"))


# ---------------------------------------------------------------------------
# Block form.  A layer's bound equations are stored as dense matrices of
# shape (neurons, n_inputs + n_syms + 1), one row per equation, constant in
# the last column.  Affine transforms are then plain matrix products, which
# is the O(l_{k-1} * l_k * (n + #syms)) contract the forward passes rely on.
# ---------------------------------------------------------------------------

@dataclass
class BoundsBlock:
    """Per-layer stack of lower/upper bound equations."""

    lb: np.ndarray  # (m, n_inputs + n_syms + 1)
    ub: np.ndarray
    n_inputs: int

    @property
    def n_rows(self) -> int:
        return self.lb.shape[0]

    @property
    def n_syms(self) -> int:
        return self.lb.shape[1] - self.n_inputs - 1

    @classmethod
    def identity_inputs(cls, n_inputs: int) -> "BoundsBlock":
        m = np.hstack([np.eye(n_inputs), np.zeros((n_inputs, 1))])
        return cls(m.copy(), m.copy(), n_inputs)

    @classmethod
    def zeros(cls, n_rows: int, n_inputs: int, n_syms: int = 0) -> "BoundsBlock":
        w = n_inputs + n_syms + 1
        return cls(np.zeros((n_rows, w)), np.zeros((n_rows, w)), n_inputs)

    def copy(self) -> "BoundsBlock":
        return BoundsBlock(self.lb.copy(), self.ub.copy(), self.n_inputs)

    def widen_syms(self, n_syms: int) -> "BoundsBlock":
        """Return a view of the same equations over a larger sym space."""
        extra = n_syms - self.n_syms
        if extra == 0:
            return self
        if extra < 0:
            raise ValueError("cannot drop intermediate columns")
        pad = np.zeros((self.n_rows, extra))
        ins = self.n_inputs + self.n_syms
        lb = np.concatenate([self.lb[:, :ins], pad, self.lb[:, ins:]], axis=1)
        ub = np.concatenate([self.ub[:, :ins], pad, self.ub[:, ins:]], axis=1)
        return BoundsBlock(lb, ub, self.n_inputs)

    def affine(self, weights: np.ndarray, bias=None) -> "BoundsBlock":
        """Transform through y_j = sum_i W[i, j] * x_i (+ bias_j).

        Negative weights swap the roles of the lower and upper equations.
        """
        wp = np.maximum(weights, 0.0).T
        wn = np.minimum(weights, 0.0).T
        lb = wp @ self.lb + wn @ self.ub
        ub = wp @ self.ub + wn @ self.lb
        if bias is not None:
            lb[:, -1] += bias
            ub[:, -1] += bias
        return BoundsBlock(lb, ub, self.n_inputs)

    def add(self, other: "BoundsBlock") -> "BoundsBlock":
        return BoundsBlock(self.lb + other.lb, self.ub + other.ub, self.n_inputs)

    def row(self, j: int) -> SymInterval:
        return SymInterval(self._row_expr(self.lb[j]), self._row_expr(self.ub[j]))

    def _row_expr(self, row: np.ndarray) -> LinExpr:
        n = self.n_inputs
        syms = {n + v: c for v, c in enumerate(row[n:-1]) if c != 0.0}
        return LinExpr(row[:n], syms, row[-1])

    def set_sym_row(self, j: int, vid: int) -> None:
        """Replace row j's equations with the single intermediate vid."""
        col = vid  # ids are assigned densely after the inputs
        if not (self.n_inputs <= col < self.n_inputs + self.n_syms):
            raise IndexError(f"intermediate {vid} has no column in this block")
        self.lb[j] = 0.0
        self.ub[j] = 0.0
        self.lb[j, col] = 1.0
        self.ub[j, col] = 1.0

    def eval(self, points: np.ndarray, sym_values: np.ndarray | None = None):
        """Evaluate all equations at a batch of points (k, n_inputs).

        Returns (lb_vals, ub_vals), each (k, m).  sym_values, when the block
        references intermediates, is (k, n_syms).
        """
        k = points.shape[0]
        cols = [points]
        if self.n_syms:
            if sym_values is None:
                raise ValueError("block references intermediates; sym_values required")
            cols.append(sym_values)
        cols.append(np.ones((k, 1)))
        z = np.hstack(cols)
        return z @ self.lb.T, z @ self.ub.T


def block_flatten(mat: np.ndarray, n_inputs: int, defs_lb: np.ndarray,
                  defs_ub: np.ndarray, direction: str) -> np.ndarray:
    """One-level substitution for a whole equation matrix.

    defs_lb/defs_ub are (n_syms, n_inputs + 1) input-only definition rows.
    Returns the flattened (m, n_inputs + 1) matrix.
    """
    n = n_inputs
    s = mat.shape[1] - n - 1
    flat = np.concatenate([mat[:, :n], mat[:, -1:]], axis=1)
    if s == 0:
        return flat
    syms = mat[:, n:-1]
    sp = np.maximum(syms, 0.0)
    sn = np.minimum(syms, 0.0)
    if direction == "upper":
        flat = flat + sp @ defs_ub + sn @ defs_lb
    else:
        flat = flat + sp @ defs_lb + sn @ defs_ub
    return flat


def block_corners(mat: np.ndarray, n_inputs: int, box, defs_lb, defs_ub,
                  direction: str) -> np.ndarray:
    """Per-row concrete corner of an equation matrix over the box."""
    flat = block_flatten(mat, n_inputs, defs_lb, defs_ub, direction)
    coeffs = flat[:, :-1]
    if direction == "upper":
        return flat[:, -1] + np.sum(np.maximum(coeffs * box.lo, coeffs * box.hi), axis=1)
    return flat[:, -1] + np.sum(np.minimum(coeffs * box.lo, coeffs * box.hi), axis=1)
