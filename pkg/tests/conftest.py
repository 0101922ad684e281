"""Shared fixtures, the hypothesis profile and the acceptance summary."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ctzigzag import (
    GaussianSpec,
    GeometricPath,
    LogKappa,
    Skeleton,
    TemperingConfig,
    first_event_poly,
    gaussian_model,
    run_tempered_zigzag,
    run_zigzag,
)
from ctzigzag.event_times import RateBound
from ctzigzag.sticky import SpikeSlabSpec, run_sticky_tempered

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

_CRITERIA: dict[int, tuple[str, str, dict]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number, title = marker.args
        _CRITERIA[number] = (title, report.outcome, getattr(item, "criterion_detail", {}))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        facts = ", ".join(f"{k}={v}" for k, v in detail.items())
        terminalreporter.write_line(f"criterion {number} {status}: {title}" + (f" [{facts}]" if facts else ""))


@pytest.fixture
def detail(request):
    """Dictionary of measured values echoed next to the criterion's pass/fail line."""
    info: dict = {}
    request.node.criterion_detail = info
    return info


@pytest.fixture(scope="session")
def compiled():
    """Exercise every compiled loop once so timed sections exclude JIT compilation."""
    normal = gaussian_model(GaussianSpec([0.0], [[1.0]]))
    wide = gaussian_model(GaussianSpec([0.0], [[4.0]]))
    run_zigzag(normal, [0.0], n_events=10, rng_seed=0)
    path = GeometricPath(wide, normal)
    run_tempered_zigzag(TemperingConfig(0.5, LogKappa(np.zeros(3)), path), [0.0], n_events=10, rng_seed=0)
    run_sticky_tempered(SpikeSlabSpec(), 0.5, n_events=10, rng_seed=0)
    first_event_poly(RateBound([1.0, 2.0, 3.0]), 0.5)
    return True


@pytest.fixture
def std_normal():
    return gaussian_model(GaussianSpec([0.0], [[1.0]]))


@pytest.fixture
def wide_normal():
    return gaussian_model(GaussianSpec([0.0], [[4.0]]))


def make_skeleton(t, x, v, kind=None, index=None, beta=None, v_beta=None, mode=None, stuck=None):
    """Skeleton from explicit rows; defaults describe an untempered path."""
    t = np.asarray(t, dtype=float)
    n = t.size
    x = np.asarray(x, dtype=float).reshape(n, -1)
    d = x.shape[1]
    if kind is None:
        kind = [0] + [2] * (n - 2) + [1]
    return Skeleton(
        t=t,
        kind=np.asarray(kind, dtype=np.int8),
        index=np.asarray(index if index is not None else [-1] * n, dtype=np.int64),
        x=x,
        v=np.asarray(v, dtype=np.int8).reshape(n, d),
        beta=np.asarray(beta if beta is not None else [np.nan] * n, dtype=float),
        v_beta=np.asarray(v_beta if v_beta is not None else [0] * n, dtype=np.int8),
        mode=np.asarray(mode if mode is not None else [2] * n, dtype=np.int8),
        stuck=np.asarray(stuck if stuck is not None else np.zeros((n, d)), dtype=bool).reshape(n, d),
    )
