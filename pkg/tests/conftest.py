"""Shared fixtures: small crystals and their cached intensities."""

import numpy as np
import pytest

from braggcdi import forward, model


@pytest.fixture(scope="session")
def tiny_spec():
    """4-cell ideal crystal in a 16^3 array."""
    return model.CrystalSpec(n_cells=(4, 4, 4), gamma=0.0, oversampling=4)


@pytest.fixture(scope="session")
def small_spec():
    """8-cell paper-style crystal (deformation + inclusions) in a 32^3 array."""
    return model.default_spec(8)


@pytest.fixture(scope="session")
def small_truth(small_spec):
    return model.build_object(small_spec)


@pytest.fixture(scope="session")
def small_intensity(small_spec, small_truth):
    return forward.simulate_intensity_fft(small_truth)


@pytest.fixture(scope="session")
def ideal_spec():
    """8-cell ideal crystal (pure shape function) in a 32^3 array."""
    return model.CrystalSpec(n_cells=(8, 8, 8), gamma=0.0, oversampling=4)


@pytest.fixture(scope="session")
def ideal_truth(ideal_spec):
    return model.build_object(ideal_spec)


@pytest.fixture(scope="session")
def ideal_intensity(ideal_truth):
    return forward.simulate_intensity_fft(ideal_truth)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


#: one "ACCEPTANCE n PASS/FAIL: ..." line per criterion, echoed after the run
acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
