import pytest

from echomap import (PulseModel, ScanGeometry, assemble_model, make_grid,
                     suggest_record_length)


def build_model(n_td=6, td_pitch=0.03, nr=14, nc=18, pitch=0.01, carrier=52e3,
                fs=200e3, speed=2620.0, n_samples=None, alpha0=30.0, apodize=True,
                slack=8):
    """One scan position's geometry, pulse, grid, impulse table, and matrices."""
    grid = make_grid(nr, nc, pitch)
    geom = ScanGeometry.line_array(n_td, td_pitch, center_x=nc * pitch / 2)
    if n_samples is None:
        probe = PulseModel(carrier_freq=carrier, sampling_freq=fs, speed=speed,
                           n_samples=8, alpha0=alpha0)
        n_samples = suggest_record_length(geom, grid, probe, slack=slack)
    pulse = PulseModel(carrier_freq=carrier, sampling_freq=fs, speed=speed,
                       n_samples=n_samples, alpha0=alpha0)
    table, sm = assemble_model(geom, grid, pulse, apodize=apodize)
    return geom, grid, pulse, table, sm


@pytest.fixture(scope="session")
def small_problem():
    """Cached medium-resolution problem shared by solver-level tests."""
    return build_model()
