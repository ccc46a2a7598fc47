"""diffverify: sound bounds on the output difference of paired ReLU networks.

Given two feed-forward ReLU networks with identical topology (typically an
original network and a weight-compressed copy), the analysis bounds
f'(x) - f(x) for every x in an input box and proves epsilon-equivalence,
refining undecided boxes by gradient-guided bisection.
"""

__version__ = "0.1.0"

from .absbounds import NeuronAbs, forward_abs, relu_single
from .deltabounds import (DeltaBounds, DiffResult, MODES, SymVarOptions,
                          delta_affine, forward_diff, relu_delta)
from .model import (InputBox, Network, NetworkPair, ParseError, evaluate,
                    load_network, normalize_box, pair, parse_network,
                    serialize_json, truncate_weights, write_nnet)
from .symexpr import ConcreteInterval, LinExpr, SymInterval, concretize
from .symvars import Budget, SymVarTable, compute_budget, eliminate_back_refs, introduce
from .verifier import (VerificationOutcome, VerificationTask, check_epsilon,
                       interval_gradient, split, verify)

__all__ = [
    "Budget", "ConcreteInterval", "DeltaBounds", "DiffResult", "InputBox",
    "LinExpr", "MODES", "Network", "NetworkPair", "NeuronAbs", "ParseError",
    "SymInterval", "SymVarOptions", "SymVarTable", "VerificationOutcome",
    "VerificationTask", "check_epsilon", "compute_budget", "concretize",
    "delta_affine", "eliminate_back_refs", "evaluate", "forward_abs",
    "forward_diff", "interval_gradient", "introduce", "load_network",
    "normalize_box", "pair", "parse_network", "relu_delta", "relu_single",
    "serialize_json", "split", "truncate_weights", "verify", "write_nnet",
]
