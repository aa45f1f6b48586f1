"""Shared fixtures: small cameras, textured test images and cached suite sequences."""

from __future__ import annotations

import numpy as np
import pytest

from mvsfuse.geometry import CameraIntrinsics
from mvsfuse.scene_synth import generate, suite_spec


@pytest.fixture
def k_small() -> CameraIntrinsics:
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def smooth_texture(shape, seed=0, sigma=1.5) -> np.ndarray:
    """Band-limited random texture in [0, 1]."""
    from scipy.ndimage import gaussian_filter

    r = np.random.default_rng(seed)
    img = gaussian_filter(r.random(shape), sigma, mode="wrap")
    img -= img.min()
    return img / img.max()


@pytest.fixture(scope="session")
def suite_cache():
    cache = {}

    def get(name: str, seed: int = 0):
        if (name, seed) not in cache:
            cache[(name, seed)] = generate(suite_spec(name, seed))
        return cache[(name, seed)]

    return get


@pytest.fixture(scope="session")
def textured(suite_cache):
    return suite_cache("textured_translate")


@pytest.fixture(scope="session")
def dynamic_car(suite_cache):
    return suite_cache("dynamic_car")


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the terminal summary prints every line."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {title}: {detail}"
        request.config.stash[_VERDICTS].append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
