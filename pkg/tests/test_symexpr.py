import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffverify import ConcreteInterval, InputBox, LinExpr, SymInterval, concretize
from diffverify.symexpr import BoundsBlock, add, block_corners, scale
from diffverify.symvars import SymVarTable


def x_expr(n=1, i=0):
    return LinExpr.input_var(n, i)


def test_add_combines_like_terms():
    a = SymInterval.exactly(x_expr())
    s = add(a, a)
    assert s.lb.input_coeffs[0] == 2.0
    assert s.ub.input_coeffs[0] == 2.0
    assert s.lb.constant == 0.0


def test_add_identity():
    n = 3
    zero = SymInterval.zero(n)
    b = SymInterval(LinExpr([1.0, -2.0, 0.5], None, 0.25),
                    LinExpr([1.5, -1.0, 0.5], None, 1.25))
    s = add(zero, b)
    assert np.array_equal(s.lb.input_coeffs, b.lb.input_coeffs)
    assert np.array_equal(s.ub.input_coeffs, b.ub.input_coeffs)
    assert s.lb.constant == b.lb.constant


def test_add_concrete_intervals():
    # [-1,1] + [-1,1] = [-2,2] once concretized over any box
    box = InputBox([0.0], [0.0])
    c = SymInterval(LinExpr.constant_expr(1, -1.0), LinExpr.constant_expr(1, 1.0))
    s = add(c, c)
    assert concretize(s.lb, box, None, "lower") == -2.0
    assert concretize(s.ub, box, None, "upper") == 2.0


def test_scale_then_subtract_keeps_dependence():
    # 3*[x,x] - [x,x] = [2x,2x]; over x in [-1,1] that is [-2,2], not [-4,4]
    box = InputBox([-1.0], [1.0])
    xi = SymInterval.exactly(x_expr())
    s = scale(xi, 3.0) + scale(xi, -1.0)
    assert s.lb.input_coeffs[0] == pytest.approx(2.0)
    assert s.ub.input_coeffs[0] == pytest.approx(2.0)
    assert concretize(s.lb, box, None, "lower") == pytest.approx(-2.0)
    assert concretize(s.ub, box, None, "upper") == pytest.approx(2.0)


def test_scale_by_zero():
    s = scale(SymInterval.exactly(x_expr()), 0.0)
    assert not s.lb.input_coeffs.any() and s.lb.constant == 0.0
    assert not s.ub.input_coeffs.any() and s.ub.constant == 0.0


def test_scale_negative_swaps_bounds():
    si = SymInterval(LinExpr([1.0], None, -1.0), LinExpr([2.0], None, 3.0))
    s = scale(si, -1.0)
    assert s.lb.input_coeffs[0] == -2.0 and s.lb.constant == -3.0
    assert s.ub.input_coeffs[0] == -1.0 and s.ub.constant == 1.0


def test_concretize_simple():
    box = InputBox([-1.0], [1.0])
    e = LinExpr([2.0], None, 0.0)
    assert concretize(e, box, None, "upper") == 2.0
    assert concretize(e, box, None, "lower") == -2.0


def test_concretize_constant():
    box = InputBox([-1.0, 0.0], [1.0, 5.0])
    e = LinExpr.constant_expr(2, 5.0)
    assert concretize(e, box, None, "upper") == 5.0
    assert concretize(e, box, None, "lower") == 5.0


def test_concretize_two_inputs():
    box = InputBox([-2.0, -2.0], [2.0, 2.0])
    e = LinExpr([1.9, -1.9], None, 0.0)
    assert concretize(e, box, None, "lower") == pytest.approx(-7.6)
    assert concretize(e, box, None, "upper") == pytest.approx(7.6)


def test_concretize_unknown_intermediate():
    box = InputBox([-1.0], [1.0])
    e = LinExpr([0.0], {1: 2.0}, 0.0)
    with pytest.raises(KeyError):
        concretize(e, box, None, "upper")
    table = SymVarTable(1)
    with pytest.raises(KeyError):
        concretize(e, box, table, "upper")


def test_eval_golden():
    e = LinExpr([0.1, -0.1], None, 0.0)
    assert e.eval(np.array([2.0, 1.0])) == pytest.approx(0.1)


def test_eval_constant_only():
    e = LinExpr.constant_expr(2, 4.25)
    assert e.eval(np.array([9.0, -9.0])) == 4.25


def test_eval_missing_sym_value():
    e = LinExpr([1.0], {1: 1.0}, 0.0)
    with pytest.raises(KeyError):
        e.eval(np.array([1.0]))
    assert e.eval(np.array([1.0]), {1: 2.0}) == 3.0


def test_eval_matches_loop_oracle():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        coeffs = rng.normal(size=n)
        const = float(rng.normal())
        e = LinExpr(coeffs, None, const)
        x = rng.normal(size=n)
        want = const
        for i in range(n):  # naive dot product
            want += coeffs[i] * x[i]
        assert e.eval(x) == pytest.approx(want, abs=1e-12)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=150, deadline=None)
@given(st.lists(finite, min_size=2, max_size=4), finite, finite, finite)
def test_add_scale_distribute_over_eval(coeffs, c1, c2, scalar):
    n = len(coeffs)
    a = SymInterval(LinExpr(coeffs, None, c1), LinExpr(coeffs, None, c1 + abs(c2)))
    b = SymInterval(LinExpr(coeffs[::-1], None, c2), LinExpr(coeffs[::-1], None, c2 + 1))
    x = np.linspace(-1, 1, n)
    s = add(a, b)
    assert s.lb.eval(x) == pytest.approx(a.lb.eval(x) + b.lb.eval(x), abs=1e-12)
    assert s.ub.eval(x) == pytest.approx(a.ub.eval(x) + b.ub.eval(x), abs=1e-12)
    sc = scale(a, scalar)
    lo, hi = sorted((scalar * a.lb.eval(x), scalar * a.ub.eval(x)))
    assert sc.lb.eval(x) == pytest.approx(lo, abs=1e-12)
    assert sc.ub.eval(x) == pytest.approx(hi, abs=1e-12)


def _random_table_and_expr(rng, n):
    """Random intermediate definitions (lb <= ub by construction) and an
    expression over inputs plus those intermediates."""
    table = SymVarTable(n)
    n_vars = int(rng.integers(0, 3))
    for _ in range(n_vars):
        base = LinExpr(rng.normal(size=n), None, float(rng.normal()))
        gap = abs(float(rng.normal()))
        table.define(base, base.shift(gap))
    syms = {vid: float(rng.normal()) for vid in table.ids()}
    e = LinExpr(rng.normal(size=n), syms, float(rng.normal()))
    return table, e


def test_concretize_soundness_sampled():
    # lower <= eval <= upper for random exprs, boxes, tables and admissible
    # intermediate valuations
    rng = np.random.default_rng(20240811)
    checks = 0
    while checks < 1000:
        n = int(rng.integers(1, 5))
        lo = rng.uniform(-2, 1, size=n)
        hi = lo + rng.uniform(0, 2, size=n)
        box = InputBox(lo, hi)
        table, e = _random_table_and_expr(rng, n)
        up = concretize(e, box, table, "upper")
        dn = concretize(e, box, table, "lower")
        for _ in range(5):
            x = lo + rng.random(n) * (hi - lo)
            sym_values = {}
            for vid in table.ids():
                ldef, udef = table.lookup(vid)
                a, b = ldef.eval(x), udef.eval(x)
                sym_values[vid] = a + rng.random() * (b - a)
            v = e.eval(x, sym_values)
            tol = 1e-9 * max(1.0, abs(v))
            assert dn - tol <= v <= up + tol
            checks += 1


def test_concretize_no_intermediates_is_corner_formula():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        lo = rng.uniform(-3, 0, size=n)
        hi = lo + rng.uniform(0, 3, size=n)
        coeffs = rng.normal(size=n)
        const = float(rng.normal())
        e = LinExpr(coeffs, None, const)
        box = InputBox(lo, hi)
        want_hi = const + sum(max(c * a, c * b) for c, a, b in zip(coeffs, lo, hi))
        want_lo = const + sum(min(c * a, c * b) for c, a, b in zip(coeffs, lo, hi))
        assert concretize(e, box, None, "upper") == pytest.approx(want_hi, abs=1e-12)
        assert concretize(e, box, None, "lower") == pytest.approx(want_lo, abs=1e-12)


def test_block_affine_matches_scalar_ops():
    # the fused block transform must agree with per-neuron add/scale
    rng = np.random.default_rng(11)
    n = 3
    block = BoundsBlock.identity_inputs(n)
    w = rng.normal(size=(3, 4))
    b = rng.normal(size=4)
    out = block.affine(w, b)
    for j in range(4):
        acc = SymInterval.zero(n)
        for i in range(n):
            acc = acc + block.row(i).scale(w[i, j])
        acc = SymInterval(acc.lb.shift(b[j]), acc.ub.shift(b[j]))
        got = out.row(j)
        assert np.allclose(got.lb.input_coeffs, acc.lb.input_coeffs, atol=1e-12)
        assert np.allclose(got.ub.input_coeffs, acc.ub.input_coeffs, atol=1e-12)
        assert got.lb.constant == pytest.approx(acc.lb.constant, abs=1e-12)
        assert got.ub.constant == pytest.approx(acc.ub.constant, abs=1e-12)


def test_block_corners_match_scalar_concretize():
    rng = np.random.default_rng(13)
    n = 3
    table = SymVarTable(n)
    base = LinExpr(rng.normal(size=n), None, 0.1)
    table.define(base, base.shift(0.7))
    box = InputBox(np.full(n, -1.0), np.full(n, 1.0))
    mat = rng.normal(size=(4, n + 2))  # one sym column
    defs_lb, defs_ub = table.def_matrices()
    for direction in ("lower", "upper"):
        got = block_corners(mat, n, box, defs_lb, defs_ub, direction)
        for j in range(4):
            e = LinExpr(mat[j, :n], {n: mat[j, n]}, mat[j, -1])
            assert got[j] == pytest.approx(concretize(e, box, table, direction), abs=1e-12)


def test_concrete_interval_validation():
    with pytest.raises(ValueError):
        ConcreteInterval(1.0, 0.0)
    with pytest.raises(ValueError):
        ConcreteInterval(float("nan"), 0.0)
    c = ConcreteInterval(-1.0, 2.0)
    assert c.width == 3.0 and c.contains(0.0) and not c.contains(2.5)
