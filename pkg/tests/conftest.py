import os
import sys

# Single-threaded BLAS keeps forked verifier workers safe and timings stable.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from helpers import demo_box, demo_networks

from diffverify import pair


@pytest.fixture(scope="session")
def demo_pair():
    f, fp = demo_networks()
    return pair(f, fp)


@pytest.fixture(scope="session")
def box2():
    return demo_box()
