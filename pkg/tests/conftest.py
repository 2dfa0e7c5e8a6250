import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from protodistill import kernels

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    """Each available kernel implementation (compiled and numpy fallback)."""
    return kernels.backends()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(kernels.backends()))
def each_backend(request, monkeypatch):
    """Route every package-level kernel call through one backend."""
    impl = kernels.backends()[request.param]
    for name in ("idw_interpolate", "accumulate_bins", "confusion", "resampled_confusions"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
