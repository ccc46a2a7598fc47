"""Network representation, file formats, compression, and concrete evaluation.

Weight convention: ``weights[k][i, j]`` is the edge from neuron ``i`` of layer
``k`` to neuron ``j`` of layer ``k+1`` (inputs are layer 0), so a forward step
is ``v @ W + b``.  Hidden layers apply ReLU; the output layer is affine.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Largest finite IEEE-754 binary16 magnitude.
_FLOAT16_MAX = 65504.0


class ParseError(ValueError):
    """Malformed network or property file; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class NormalizationInfo:
    """Per-input min/max/mean/range plus output mean/range (NNet header data)."""

    mins: np.ndarray
    maxes: np.ndarray
    means: np.ndarray   # one entry per input, plus one for the outputs
    ranges: np.ndarray  # same layout as means


@dataclass
class Network:
    weights: list  # list of (l_{k-1}, l_k) float64 matrices
    biases: list   # list of (l_k,) float64 vectors
    normalization: NormalizationInfo | None = None

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        validate_topology(self.weights, self.biases)

    @property
    def input_count(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_count(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> list:
        return [self.input_count] + [w.shape[1] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)


def validate_topology(weights, biases, line: int | None = None) -> None:
    if len(weights) == 0:
        raise ParseError("network has no layers", line)
    if len(weights) != len(biases):
        raise ParseError(f"{len(weights)} weight matrices but {len(biases)} bias vectors", line)
    prev = None
    for k, (w, b) in enumerate(zip(weights, biases)):
        if w.ndim != 2 or 0 in w.shape:
            raise ParseError(f"shape-chain violation: layer {k} weight shape {w.shape}", line)
        if b.shape != (w.shape[1],):
            raise ParseError(
                f"layer {k} bias length {b.shape[0]} does not match {w.shape[1]} neurons", line)
        if prev is not None and w.shape[0] != prev:
            raise ParseError(
                f"shape-chain violation: layer {k} expects {w.shape[0]} inputs, "
                f"previous layer has {prev}", line)
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(b)):
            raise ParseError(f"non-finite weight or bias in layer {k}", line)
        prev = w.shape[1]


@dataclass
class NetworkPair:
    """Two same-topology networks with precomputed weight/bias differences."""

    f: Network
    fp: Network           # the second network f'
    wdelta: list = field(init=False)
    bdelta: list = field(init=False)

    def __post_init__(self):
        if self.f.layer_sizes != self.fp.layer_sizes:
            raise ValueError(
                f"topology mismatch: {self.f.layer_sizes} vs {self.fp.layer_sizes}")
        self.wdelta = [wp - w for w, wp in zip(self.f.weights, self.fp.weights)]
        self.bdelta = [bp - b for b, bp in zip(self.f.biases, self.fp.biases)]

    @property
    def input_count(self) -> int:
        return self.f.input_count

    @property
    def output_count(self) -> int:
        return self.f.output_count


def pair(f: Network, fp: Network) -> NetworkPair:
    return NetworkPair(f, fp)


@dataclass
class InputBox:
    """Axis-aligned box of network inputs."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("box bounds must be equal-length vectors")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("box bounds must be finite")
        if np.any(self.lo > self.hi):
            i = int(np.argmax(self.lo > self.hi))
            raise ValueError(f"box dimension {i} has lo {self.lo[i]} > hi {self.hi[i]}")

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def bisect(self, dim: int) -> tuple["InputBox", "InputBox"]:
        mid = 0.5 * (self.lo[dim] + self.hi[dim])
        left_hi = self.hi.copy()
        left_hi[dim] = mid
        right_lo = self.lo.copy()
        right_lo[dim] = mid
        return InputBox(self.lo, left_hi), InputBox(right_lo, self.hi)


def evaluate(net: Network, x) -> np.ndarray:
    """Concrete forward execution: ReLU after every hidden layer, affine output."""
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (net.input_count,):
        raise ValueError(f"expected {net.input_count} inputs, got shape {v.shape}")
    for k in range(net.n_layers):
        v = v @ net.weights[k] + net.biases[k]
        if k < net.n_layers - 1:
            v = np.maximum(v, 0.0)
    return v


def evaluate_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """Vectorized evaluate over rows of xs (k, n_inputs) -> (k, n_outputs)."""
    v = np.asarray(xs, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != net.input_count:
        raise ValueError(f"expected (k, {net.input_count}) inputs, got shape {v.shape}")
    for k in range(net.n_layers):
        v = v @ net.weights[k] + net.biases[k]
        if k < net.n_layers - 1:
            v = np.maximum(v, 0.0)
    return v


def truncate_weights(net: Network, bits: int = 16) -> Network:
    """Round every weight and bias to IEEE-754 binary16 (nearest-even), then
    widen back to float64.  Topology and normalization metadata unchanged."""
    if bits != 16:
        raise ValueError(f"only 16-bit truncation is supported, got {bits}")

    def conv(a: np.ndarray, what: str, layer: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            out = np.float16(a).astype(np.float64)
        bad = ~np.isfinite(out)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValueError(
                f"layer {layer} {what}{idx} = {a[bad][0]} overflows binary16 "
                f"(max {_FLOAT16_MAX})")
        return out

    return Network(
        [conv(w, "weight", k) for k, w in enumerate(net.weights)],
        [conv(b, "bias", k) for k, b in enumerate(net.biases)],
        normalization=net.normalization,
    )


# ---------------------------------------------------------------------------
# NNet text format
# ---------------------------------------------------------------------------

def _split_floats(line: str, lineno: int) -> list:
    out = []
    for tok in line.strip().split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(float(tok))
        except ValueError:
            raise ParseError(f"non-numeric token {tok!r}", lineno) from None
    return out


def _parse_nnet(source: str) -> Network:
    lines = source.splitlines()
    pos = 0

    def next_line() -> tuple[str, int]:
        nonlocal pos
        while pos < len(lines):
            ln = lines[pos]
            pos += 1
            if ln.startswith("//") or not ln.strip():
                continue
            return ln, pos
        raise ParseError("unexpected end of file", len(lines))

    ln, no = next_line()
    header = _split_floats(ln, no)
    if len(header) < 4:
        raise ParseError("header needs numLayers, inputSize, outputSize, maxLayerSize", no)
    n_layers, input_size, output_size = (int(header[0]), int(header[1]), int(header[2]))
    if n_layers < 1 or input_size < 1 or output_size < 1:
        raise ParseError("shape-chain violation: non-positive size in header", no)

    ln, no = next_line()
    sizes = [int(v) for v in _split_floats(ln, no)]
    if len(sizes) != n_layers + 1:
        raise ParseError(f"expected {n_layers + 1} layer sizes, got {len(sizes)}", no)
    if sizes[0] != input_size or sizes[-1] != output_size:
        raise ParseError("layer-sizes line disagrees with header", no)
    if any(s < 1 for s in sizes):
        raise ParseError("shape-chain violation: layer of zero neurons", no)

    next_line()  # unused flag line

    ln, no = next_line()
    mins = _split_floats(ln, no)
    ln, no = next_line()
    maxes = _split_floats(ln, no)
    ln, no = next_line()
    means = _split_floats(ln, no)
    ln, no = next_line()
    ranges = _split_floats(ln, no)
    norm = None
    if len(mins) == input_size and len(maxes) == input_size \
            and len(means) == input_size + 1 and len(ranges) == input_size + 1:
        norm = NormalizationInfo(np.array(mins), np.array(maxes),
                                 np.array(means), np.array(ranges))

    weights = []
    biases = []
    for k in range(n_layers):
        rows = []
        for _ in range(sizes[k + 1]):
            ln, no = next_line()
            row = _split_floats(ln, no)
            if len(row) != sizes[k]:
                raise ParseError(
                    f"layer {k} weight row has {len(row)} entries, expected {sizes[k]}", no)
            rows.append(row)
        # rows are target-major; transpose to source x target
        weights.append(np.array(rows, dtype=np.float64).T)
        bias = []
        for _ in range(sizes[k + 1]):
            ln, no = next_line()
            vals = _split_floats(ln, no)
            if not vals:
                raise ParseError(f"layer {k} bias line is empty", no)
            bias.append(vals[0])
        biases.append(np.array(bias, dtype=np.float64))

    return Network(weights, biases, normalization=norm)


def write_nnet(net: Network) -> str:
    sizes = net.layer_sizes
    out = ["// network written by diffverify"]
    out.append(f"{net.n_layers},{net.input_count},{net.output_count},{max(sizes)},")
    out.append(",".join(str(s) for s in sizes) + ",")
    out.append("0,")
    if net.normalization is not None:
        nm = net.normalization
        out.append(",".join(repr(float(v)) for v in nm.mins) + ",")
        out.append(",".join(repr(float(v)) for v in nm.maxes) + ",")
        out.append(",".join(repr(float(v)) for v in nm.means) + ",")
        out.append(",".join(repr(float(v)) for v in nm.ranges) + ",")
    else:
        n = net.input_count
        out.append(",".join(["0.0"] * n) + ",")
        out.append(",".join(["0.0"] * n) + ",")
        out.append(",".join(["0.0"] * (n + 1)) + ",")
        out.append(",".join(["1.0"] * (n + 1)) + ",")
    for k in range(net.n_layers):
        w = net.weights[k].T  # target-major rows
        for row in w:
            out.append(",".join(repr(float(v)) for v in row) + ",")
        for v in net.biases[k]:
            out.append(f"{float(v)!r},")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# JSON format: {"inputs": n, "layers": [{"weights": [[...]], "bias": [...]}]}
# weights[i][j] = edge from source neuron i to target neuron j.
# ---------------------------------------------------------------------------

def _parse_json(source: str) -> Network:
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno) from None
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ParseError("expected an object with a 'layers' list")
    weights = []
    biases = []
    for k, layer in enumerate(doc["layers"]):
        try:
            w = np.array(layer["weights"], dtype=np.float64)
            b = np.array(layer["bias"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"layer {k}: {e}") from None
        if w.ndim != 2:
            raise ParseError(f"shape-chain violation: layer {k} weights are not a matrix")
        weights.append(w)
        biases.append(b)
    validate_topology(weights, biases)
    if "inputs" in doc and int(doc["inputs"]) != weights[0].shape[0]:
        raise ParseError(
            f"'inputs' field says {doc['inputs']} but layer 0 has {weights[0].shape[0]} rows")
    norm = None
    if "normalization" in doc and doc["normalization"] is not None:
        nm = doc["normalization"]
        norm = NormalizationInfo(np.array(nm["mins"], dtype=np.float64),
                                 np.array(nm["maxes"], dtype=np.float64),
                                 np.array(nm["means"], dtype=np.float64),
                                 np.array(nm["ranges"], dtype=np.float64))
    return Network(weights, biases, normalization=norm)


def serialize_json(net: Network) -> str:
    doc = {
        "inputs": net.input_count,
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }
    if net.normalization is not None:
        nm = net.normalization
        doc["normalization"] = {
            "mins": nm.mins.tolist(), "maxes": nm.maxes.tolist(),
            "means": nm.means.tolist(), "ranges": nm.ranges.tolist(),
        }
    return json.dumps(doc, indent=1)


def parse_network(source: str, format: str = "auto") -> Network:
    """Parse NNet or JSON text into a Network (weights read as 64-bit reals)."""
    if format == "auto":
        stripped = source.lstrip()
        format = "json" if stripped.startswith("{") else "nnet"
    if format == "json":
        return _parse_json(source)
    if format == "nnet":
        return _parse_nnet(source)
    raise ValueError(f"unknown network format {format!r}")


def load_network(path: str, format: str = "auto") -> Network:
    if format == "auto" and str(path).endswith(".json"):
        format = "json"
    elif format == "auto" and str(path).endswith(".nnet"):
        format = "nnet"
    with open(path) as fh:
        return parse_network(fh.read(), format)


def normalize_box(net: Network, box: InputBox) -> InputBox:
    """Map a raw input box through the NNet normalization: clip to the
    recorded input range, subtract the mean, divide by the range."""
    nm = net.normalization
    if nm is None:
        raise ValueError("network carries no normalization metadata")
    lo = (np.clip(box.lo, nm.mins, nm.maxes) - nm.means[:-1]) / nm.ranges[:-1]
    hi = (np.clip(box.hi, nm.mins, nm.maxes) - nm.means[:-1]) / nm.ranges[:-1]
    return InputBox(lo, hi)
