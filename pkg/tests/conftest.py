"""Shared fixtures. The full-length beam-propagation runs are computed once per session."""

import time

import numpy as np
import pytest

from continuum_trap.bpm import extract_theta, make_input, propagate
from continuum_trap.geometry import build_potential, default_config
from continuum_trap.modes import solve_modes

FULL = ("channel1", "channel2", "slab")


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def modes(config):
    return solve_modes(config)


@pytest.fixture(scope="session")
def full_potential(config):
    return build_potential(config.geometry, config.grid, FULL)


class _Runs:
    """Lazy cache of BPM runs keyed by (input kind, z_end)."""

    def __init__(self, config, modes, potential):
        self.config, self.modes, self.potential = config, modes, potential
        self._cache = {}
        self.elapsed = {}

    def key(self, kind, z_end=None):
        z_end = self.config.geometry.device_length if z_end is None else z_end
        return (kind, round(z_end, 12))

    def get(self, kind, z_end=None):
        z_end = self.config.geometry.device_length if z_end is None else z_end
        key = (kind, round(z_end, 12))
        if key not in self._cache:
            residuals = []
            pair = (self.modes.u1, self.modes.u2)

            def observer(step, fld):
                if step % 500 == 0:
                    residuals.append((fld.z, extract_theta(fld, pair).residual_power))

            t0 = time.perf_counter()
            trace = propagate(make_input(kind, *pair), self.potential, z_end, pair,
                              absorber_strength=self.config.solver.absorber_strength,
                              observe_every=self.config.solver.observer_every,
                              observer=observer)
            self.elapsed[key] = time.perf_counter() - t0
            self._cache[key] = (trace, np.array(residuals))
        return self._cache[key]


@pytest.fixture(scope="session")
def bpm_runs(config, modes, full_potential):
    return _Runs(config, modes, full_potential)
