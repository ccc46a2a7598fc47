"""Independent ground truth for tests and the fuzz command.

Nothing here reuses the analysis code paths: network evaluation is redone
locally, plane checks enumerate the vertices of the piecewise-linear
subdivision (exact for affine-vs-PL comparisons), and gradients come from
central finite differences away from ReLU kinks.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import InputBox, Network, NetworkPair


def eval_loop(net: Network, x) -> list:
    """Naive per-neuron evaluation with Python loops (reference oracle)."""
    values = [float(v) for v in x]
    for k in range(net.n_layers):
        w, b = net.weights[k], net.biases[k]
        nxt = []
        for j in range(w.shape[1]):
            acc = float(b[j])
            for i in range(w.shape[0]):
                acc += values[i] * float(w[i, j])
            if k < net.n_layers - 1 and acc < 0.0:
                acc = 0.0
            nxt.append(acc)
        values = nxt
    return values


def activations(net: Network, xs: np.ndarray) -> tuple:
    """Per-layer (pre, post) activation matrices for a batch of points."""
    pres = []
    posts = []
    v = np.asarray(xs, dtype=np.float64)
    for k in range(net.n_layers):
        pre = v @ net.weights[k] + net.biases[k]
        post = np.maximum(pre, 0.0) if k < net.n_layers - 1 else pre
        pres.append(pre)
        posts.append(post)
        v = post
    return pres, posts


def corner_points(box: InputBox, limit: int = 4096, seed: int = 0) -> np.ndarray:
    """All box corners when there are at most `limit`, else `limit`
    deterministic pseudo-random corners."""
    n = box.lo.shape[0]
    if 2 ** n <= limit:
        rows = [[box.lo[i] if bit == 0 else box.hi[i] for i, bit in enumerate(bits)]
                for bits in itertools.product((0, 1), repeat=n)]
        return np.array(rows, dtype=np.float64)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, 2, size=(limit, n))
    return np.where(picks == 0, box.lo, box.hi).astype(np.float64)


def sample_points(box: InputBox, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.random((n, box.lo.shape[0]))
    return box.lo + u * (box.hi - box.lo)


@dataclass
class Violation:
    point: np.ndarray
    where: str     # e.g. "f layer 2 neuron 3 post", "delta output 0 concrete"
    bound: str     # "lower" | "upper"
    amount: float


@dataclass
class SoundnessReport:
    samples_tested: int
    violations: list = field(default_factory=list)
    max_observed_diff: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return not self.violations


def _tolerance(values, tol: float) -> np.ndarray:
    return tol * np.maximum(1.0, np.abs(values))


class _Recorder:
    def __init__(self, points, tol, max_reports=50):
        self.points = points
        self.tol = tol
        self.max_reports = max_reports
        self.violations = []

    def check(self, true_vals, lb_vals, ub_vals, where):
        """true/lb/ub are (points, units); record out-of-bound entries."""
        low_bad = lb_vals - true_vals
        up_bad = true_vals - ub_vals
        for kind, bad in (("lower", low_bad), ("upper", up_bad)):
            mask = bad > _tolerance(true_vals, self.tol)
            if not np.any(mask):
                continue
            for p, j in np.argwhere(mask)[: self.max_reports]:
                self.violations.append(Violation(
                    self.points[p].copy(), f"{where} unit {j}", kind,
                    float(bad[p, j])))


def sample_check(net_pair: NetworkPair, box: InputBox, snapshot, n: int = 1000,
                 seed: int = 0, tol: float = 1e-9) -> SoundnessReport:
    """Evaluate both networks at sampled points plus box corners and test every
    bound of one forward_diff result (`snapshot`) at the symbolic-evaluation
    and concrete levels."""
    pts = np.vstack([sample_points(box, n, seed), corner_points(box, seed=seed)])
    pre_f, post_f = activations(net_pair.f, pts)
    pre_fp, post_fp = activations(net_pair.fp, pts)
    rec = _Recorder(pts, tol)

    # Values of the intermediate variables at each point: the true delta
    # output of the neuron each one was introduced for.
    n_syms = len(snapshot.table)
    sym_vals = np.zeros((pts.shape[0], n_syms))
    for col, (layer, neuron, _vid) in enumerate(snapshot.sym_sources):
        sym_vals[:, col] = post_fp[layer][:, neuron] - post_f[layer][:, neuron]

    for name, layer_list, pres, posts in (("f", snapshot.abs_f, pre_f, post_f),
                                          ("f'", snapshot.abs_fp, pre_fp, post_fp)):
        for k, la in enumerate(layer_list):
            lbv, ubv = la.pre.eval(pts)
            rec.check(pres[k], lbv, ubv, f"{name} layer {k} pre")
            lbv, ubv = la.post.eval(pts)
            rec.check(posts[k], lbv, ubv, f"{name} layer {k} post")

    ones = np.ones((pts.shape[0], 1))
    for k, dl in enumerate(snapshot.delta_layers):
        true_pre = pre_fp[k] - pre_f[k]
        true_post = post_fp[k] - post_f[k]
        s = dl.pre.n_syms
        lbv, ubv = dl.pre.eval(pts, sym_vals[:, :s])
        rec.check(true_pre, lbv, ubv, f"delta layer {k} pre")
        rec.check(true_pre, dl.lb_lo[None, :] * ones, dl.ub_hi[None, :] * ones,
                  f"delta layer {k} pre concrete")
        if k < len(snapshot.delta_layers) - 1:
            s = dl.post.n_syms
            lbv, ubv = dl.post.eval(pts, sym_vals[:, :s])
            rec.check(true_post, lbv, ubv, f"delta layer {k} post")

    # Output-level checks against the reported intervals.
    diff = post_fp[-1] - post_f[-1]
    if not snapshot.delta_layers:
        # naive mode: the subtracted output equations are input-only
        z = np.hstack([pts, ones])
        lbm = np.array([np.append(si.lb.input_coeffs, si.lb.constant)
                        for si, _ in snapshot.outputs])
        ubm = np.array([np.append(si.ub.input_coeffs, si.ub.constant)
                        for si, _ in snapshot.outputs])
        rec.check(diff, z @ lbm.T, z @ ubm.T, "delta output symbolic")
    conc_lo = np.array([c.lo for c in snapshot.concrete_outputs])
    conc_hi = np.array([c.hi for c in snapshot.concrete_outputs])
    rec.check(diff, conc_lo[None, :] * ones, conc_hi[None, :] * ones, "delta output concrete")

    return SoundnessReport(samples_tested=pts.shape[0],
                           violations=rec.violations,
                           max_observed_diff=np.abs(diff).max(axis=0))


def max_difference_sample(net_pair: NetworkPair, box: InputBox, n: int = 10000,
                          seed: int = 0) -> np.ndarray:
    """Largest observed |f'(x) - f(x)| per output over samples plus corners."""
    pts = np.vstack([sample_points(box, n, seed), corner_points(box, seed=seed)])
    _, post_f = activations(net_pair.f, pts)
    _, post_fp = activations(net_pair.fp, pts)
    return np.abs(post_fp[-1] - post_f[-1]).max(axis=0)


# ---------------------------------------------------------------------------
# Exact plane checks on z = ReLU(n + d) - ReLU(n)
# ---------------------------------------------------------------------------

def _z(nv: float, dv: float) -> float:
    return max(nv + dv, 0.0) - max(nv, 0.0)


def subdivision_vertices(l: float, u: float, n_lo: float, n_hi: float,
                         constraints=()) -> list:
    """Vertices of the box [n_lo, n_hi] x [l, u] subdivided by the kink lines
    n = 0 and n + d = 0, intersected with optional half-plane constraints
    (a, b, c) meaning a*n + b*d + c >= 0."""
    if n_hi < n_lo or u < l:
        raise ValueError("empty (n, delta) box")
    # Lines as a*n + b*d = c
    lines = [(1.0, 0.0, n_lo), (1.0, 0.0, n_hi), (0.0, 1.0, l), (0.0, 1.0, u),
             (1.0, 0.0, 0.0), (1.0, 1.0, 0.0)]
    lines += [(a, b, -c) for a, b, c in constraints]
    eps = 1e-12 * max(1.0, abs(n_lo), abs(n_hi), abs(l), abs(u))
    pts = []
    for (a1, b1, c1), (a2, b2, c2) in itertools.combinations(lines, 2):
        det = a1 * b2 - a2 * b1
        if abs(det) < 1e-15:
            continue
        nv = (c1 * b2 - c2 * b1) / det
        dv = (a1 * c2 - a2 * c1) / det
        if not (n_lo - eps <= nv <= n_hi + eps and l - eps <= dv <= u + eps):
            continue
        if any(a * nv + b * dv + c < -eps for a, b, c in constraints):
            continue
        pts.append((min(max(nv, n_lo), n_hi), min(max(dv, l), u)))
    # Deduplicate
    out = []
    for p in pts:
        if not any(abs(p[0] - q[0]) < 1e-12 and abs(p[1] - q[1]) < 1e-12 for q in out):
            out.append(p)
    return out


def plane_vertex_check(l: float, u: float, n_lo: float, n_hi: float, planes,
                       constraints=(), tol: float = 1e-9) -> bool:
    """True iff lower(d) <= z <= upper(d) at every subdivision vertex.

    planes = ((upper_alpha, upper_beta), (lower_alpha, lower_beta)), each
    plane evaluated as alpha * d + beta.  Since z is linear on each cell of
    the subdivision and the planes are affine, vertex domination implies
    domination on the whole region.
    """
    (ua, ub_), (la, lb_) = planes
    for nv, dv in subdivision_vertices(l, u, n_lo, n_hi, constraints):
        z = _z(nv, dv)
        if z - (ua * dv + ub_) > tol:
            return False
        if (la * dv + lb_) - z > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# Finite-difference gradients
# ---------------------------------------------------------------------------

def fd_jacobian(net: Network, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference Jacobian (n_inputs, n_outputs) at x."""
    from .model import evaluate
    n = x.shape[0]
    out = np.zeros((n, net.output_count))
    for i in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (evaluate(net, xp) - evaluate(net, xm)) / (2 * h)
    return out


def kink_distance(net: Network, x: np.ndarray) -> float:
    """Smallest |pre-activation| over all hidden neurons at x."""
    pres, _ = activations(net, x[None, :])
    dists = [np.abs(p[0]).min() for p in pres[:-1]]
    return float(min(dists)) if dists else np.inf


def kink_safe_point(net_pair: NetworkPair, box: InputBox, rng, h: float = 1e-4,
                    margin_factor: float = 50.0, tries: int = 200):
    """Interior point where both networks stay on one linear piece across all
    central-difference evaluations, or None if none is found."""
    margin = margin_factor * h
    inner_lo = box.lo + 2 * h
    inner_hi = box.hi - 2 * h
    if np.any(inner_lo >= inner_hi):
        return None
    for _ in range(tries):
        x = inner_lo + rng.random(box.lo.shape[0]) * (inner_hi - inner_lo)
        ok = True
        for net in (net_pair.f, net_pair.fp):
            if kink_distance(net, x) < margin:
                ok = False
                break
            for i in range(x.shape[0]):
                for sgn in (-1.0, 1.0):
                    xp = x.copy()
                    xp[i] += sgn * h
                    if kink_distance(net, xp) < margin * 0.5:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            return x
    return None
