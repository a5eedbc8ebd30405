import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlch import _backend
from nlch.config import parse_config

settings.register_profile(
    "nlch", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "nlch"))

BACKENDS = [pytest.param(_backend.python_kernels, id="python")]
if _backend.compiled_kernels is not None:
    BACKENDS.append(pytest.param(_backend.compiled_kernels, id="cython"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_RUN = """
[domain]
dim = {dim}
n = {n}

[kernel]
family = {family}
epsilon = {epsilon}

[potential]
type = {potential}

[solver]
mode = {mode}
tau = 0.05
lambda_reg = {lam}
lambda_yosida = {lam}
dt = 1e-3
t_final = {t_final}

[init]
kind = cosine
mean = 0.1
modes = 1,2,3
amplitudes = 0.4,0.2,0.1
"""


def small_config(**kw):
    opts = dict(dim=1, n=64, family="bump", epsilon=0.1, potential="polynomial",
                mode="nonlocal", lam=1e-4, t_final=0.01)
    opts.update(kw)
    return parse_config(SMALL_RUN.format(**opts))


@pytest.fixture
def small_cfg():
    return small_config


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
