import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mhdlab.spectral import SpectralField, TorusGrid

settings.register_profile(
    "mhdlab", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("mhdlab")

PHI = (1 + 5**0.5) / 2


def random_field(grid: TorusGrid, components: int, band: int, seed: int, mean_zero=True) -> SpectralField:
    """Real band-limited field with gaussian coefficients on ``|k|_inf <= band``."""
    rng = np.random.default_rng(seed)
    shape = (components,) + grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    keep = grid.kmax <= band
    if mean_zero:
        keep = keep & (grid.ksq > 0)
    return SpectralField(grid, np.where(keep, c, 0.0)).symmetrized()


@pytest.fixture
def grid16():
    return TorusGrid(2, 16)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Remember a criterion outcome for the end-of-session summary."""
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
