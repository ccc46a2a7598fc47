import json

import numpy as np
import pytest

from helpers import binary16_round, demo_networks, random_network

from diffverify import (InputBox, Network, ParseError, evaluate, pair,
                        parse_network, serialize_json, truncate_weights)
from diffverify.model import evaluate_batch, load_network, normalize_box, write_nnet
from diffverify.oracle import eval_loop

DEMO_JSON = json.dumps({
    "inputs": 2,
    "layers": [
        {"weights": [[1.9, 1.1], [-1.9, 1.0]], "bias": [0.0, 0.0]},
        {"weights": [[2.1, 0.9], [-1.0, 1.1]], "bias": [0.0, 0.0]},
        {"weights": [[1.0], [-1.0]], "bias": [0.0]},
    ],
})


def test_parse_json_demo():
    net = parse_network(DEMO_JSON, "json")
    # weights[k][i, j]: edge from source neuron i to target neuron j
    assert net.weights[0][0, 0] == 1.9
    assert net.weights[0][0, 1] == 1.1
    assert net.weights[0][1, 0] == -1.9
    assert net.layer_sizes == [2, 2, 2, 1]


def test_parse_json_zero_neuron_layer():
    bad = json.dumps({"inputs": 1, "layers": [{"weights": [[]], "bias": []}]})
    with pytest.raises(ParseError, match="shape-chain"):
        parse_network(bad, "json")


def test_parse_json_chain_mismatch():
    bad = json.dumps({"layers": [
        {"weights": [[1.0, 2.0]], "bias": [0.0, 0.0]},
        {"weights": [[1.0], [1.0], [1.0]], "bias": [0.0]},
    ]})
    with pytest.raises(ParseError, match="shape-chain"):
        parse_network(bad, "json")


HAND_NNET = """\
// hand-written 2-2-1 network
2,2,1,2,
2,2,1,
0,
-1.0,-1.0,
1.0,1.0,
0.0,0.0,0.5,
1.0,1.0,2.0,
0.5,-0.25,
1.5,2.5,
0.125,
-0.125,
3.0,-4.0,
0.75,
"""


def test_parse_nnet_hand_written():
    net = parse_network(HAND_NNET, "nnet")
    # rows in the file are target-major; our matrices are source x target
    assert np.array_equal(net.weights[0], np.array([[0.5, 1.5], [-0.25, 2.5]]))
    assert np.array_equal(net.biases[0], np.array([0.125, -0.125]))
    assert np.array_equal(net.weights[1], np.array([[3.0], [-4.0]]))
    assert np.array_equal(net.biases[1], np.array([0.75]))
    assert net.normalization is not None
    assert np.array_equal(net.normalization.means, np.array([0.0, 0.0, 0.5]))


def test_parse_nnet_bad_token_reports_line():
    broken = HAND_NNET.replace("0.5,-0.25,", "0.5,oops,")
    with pytest.raises(ParseError, match="line 9.*oops"):
        parse_network(broken, "nnet")


def test_parse_nnet_row_length_mismatch():
    broken = HAND_NNET.replace("0.5,-0.25,", "0.5,")
    with pytest.raises(ParseError, match="expected 2"):
        parse_network(broken, "nnet")


def test_parse_nnet_zero_layer():
    broken = HAND_NNET.replace("2,2,1,\n", "2,0,1,\n").replace("2,2,1,2,", "2,0,1,2,")
    with pytest.raises(ParseError, match="shape-chain|non-positive"):
        parse_network(broken, "nnet")


def test_json_round_trip_bit_exact():
    rng = np.random.default_rng(5)
    net = random_network(rng, 3, [4, 5], 2)
    back = parse_network(serialize_json(net), "json")
    for a, b in zip(net.weights, back.weights):
        assert np.array_equal(a, b)
    for a, b in zip(net.biases, back.biases):
        assert np.array_equal(a, b)


def test_nnet_round_trip_bit_exact():
    rng = np.random.default_rng(6)
    net = random_network(rng, 2, [3], 2)
    back = parse_network(write_nnet(net), "nnet")
    for a, b in zip(net.weights, back.weights):
        assert np.array_equal(a, b)
    for a, b in zip(net.biases, back.biases):
        assert np.array_equal(a, b)


def test_truncate_golden_values():
    f, _ = demo_networks()
    t = truncate_weights(f)
    assert t.weights[0][0, 0] == binary16_round(1.9) == 1.900390625
    assert t.weights[0][0, 1] == binary16_round(1.1)
    assert t.weights[1][0, 0] == binary16_round(2.1)
    assert t.weights[1][0, 1] == binary16_round(0.9)
    # exactly representable values survive unchanged
    assert t.weights[2][0, 0] == 1.0
    assert t.biases[0][0] == 0.0


def test_truncate_idempotent():
    rng = np.random.default_rng(8)
    net = random_network(rng, 3, [4], 2)
    once = truncate_weights(net)
    twice = truncate_weights(once)
    for a, b in zip(once.weights, twice.weights):
        assert np.array_equal(a, b)


def test_truncate_matches_struct_oracle():
    rng = np.random.default_rng(9)
    vals = rng.uniform(-100, 100, size=(4, 3))
    net = Network([vals], [np.zeros(3)])
    t = truncate_weights(net)
    for i in range(4):
        for j in range(3):
            assert t.weights[0][i, j] == binary16_round(vals[i, j])


def test_truncate_relative_error_bound():
    # binary16 relative error <= 2^-11 for normal-range magnitudes
    rng = np.random.default_rng(10)
    vals = rng.uniform(0.01, 1000.0, size=(50,)) * rng.choice([-1, 1], size=50)
    net = Network([vals.reshape(1, 50)], [np.zeros(50)])
    t = truncate_weights(net)
    rel = np.abs(t.weights[0][0] - vals) / np.abs(vals)
    assert np.all(rel <= 2.0 ** -11 + 1e-15)


def test_truncate_overflow_error():
    net = Network([np.array([[1.0, 1e30]])], [np.zeros(2)])
    with pytest.raises(ValueError, match=r"layer 0 weight\(0, 1\)|overflows"):
        truncate_weights(net)


def test_pair_golden_delta():
    f, fp = demo_networks()
    p = pair(f, fp)
    assert p.wdelta[0][0, 0] == pytest.approx(0.1)
    assert p.wdelta[0][1, 0] == pytest.approx(-0.1)


def test_pair_identical_zero_delta():
    f, _ = demo_networks()
    p = pair(f, f)
    assert all(not d.any() for d in p.wdelta)
    assert all(not d.any() for d in p.bdelta)


def test_pair_topology_mismatch():
    rng = np.random.default_rng(11)
    a = random_network(rng, 2, [3], 1)
    b = random_network(rng, 2, [4], 1)
    with pytest.raises(ValueError, match="topology"):
        pair(a, b)


def test_evaluate_neuron_level_delta():
    f, fp = demo_networks()
    x = np.array([2.0, 1.0])
    # first-layer pre-activations differ by 0.1 at neuron 1
    pre_f = x @ f.weights[0]
    pre_fp = x @ fp.weights[0]
    assert pre_fp[0] - pre_f[0] == pytest.approx(0.1)


def test_evaluate_zero_weights_gives_bias():
    net = Network([np.zeros((2, 3)), np.zeros((3, 2))],
                  [np.array([1.0, -2.0, 3.0]), np.array([0.5, -0.5])])
    out = evaluate(net, np.array([7.0, -7.0]))
    assert np.array_equal(out, np.array([0.5, -0.5]))


def test_evaluate_matches_loop_oracle():
    rng = np.random.default_rng(12)
    net = random_network(rng, 4, [5, 6, 3], 2)
    for _ in range(10):
        x = rng.uniform(-2, 2, size=4)
        got = evaluate(net, x)
        want = eval_loop(net, x)
        assert np.allclose(got, want, atol=1e-12)
    xs = rng.uniform(-2, 2, size=(10, 4))
    assert np.allclose(evaluate_batch(net, xs),
                       np.array([evaluate(net, x) for x in xs]), atol=1e-12)


def test_evaluate_dimension_mismatch():
    f, _ = demo_networks()
    with pytest.raises(ValueError, match="expected 2"):
        evaluate(f, np.array([1.0, 2.0, 3.0]))


def test_self_pair_evaluates_identically():
    rng = np.random.default_rng(13)
    net = random_network(rng, 3, [4], 2)
    p = pair(net, net)
    for _ in range(5):
        x = rng.uniform(-1, 1, size=3)
        assert np.array_equal(evaluate(p.fp, x), evaluate(net, x))


def test_input_box_validation():
    with pytest.raises(ValueError, match="dimension 1"):
        InputBox([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ValueError, match="finite"):
        InputBox([0.0], [np.inf])
    b = InputBox([0.0, -1.0], [1.0, 3.0])
    assert np.array_equal(b.widths, [1.0, 4.0])
    left, right = b.bisect(1)
    assert left.hi[1] == 1.0 and right.lo[1] == 1.0
    assert left.lo[0] == right.lo[0] == 0.0


def test_normalize_box_and_load(tmp_path):
    net = parse_network(HAND_NNET, "nnet")
    box = InputBox([-2.0, 0.0], [2.0, 0.5])
    norm = normalize_box(net, box)
    # clipped to [-1, 1] then (v - mean) / range with mean 0, range 1
    assert np.array_equal(norm.lo, [-1.0, 0.0])
    assert np.array_equal(norm.hi, [1.0, 0.5])
    p = tmp_path / "net.nnet"
    p.write_text(HAND_NNET)
    assert load_network(str(p)).layer_sizes == [2, 2, 1]
