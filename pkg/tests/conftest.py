import numpy as np
import pytest

from jcaskf.channel import OfdmConfig
from jcaskf.geometry import Scatterer, SceneConfig, UpaGeometry

FC = 28e9


def make_scene(rows=8, cols=None, reflection_variance=10.0):
    cols = rows if cols is None else cols
    return SceneConfig(
        bs_position=np.array([50.0, 4.75, 7.0]),
        ue_position=np.array([140.0, 0.0, 2.0]),
        ue_velocity=np.array([-40 / 3.6, 0.0, 0.0]),
        scatterers=(Scatterer(np.array([60.0, 3.0, 3.0]), reflection_variance=reflection_variance),),
        bs_array=UpaGeometry.half_wavelength(rows, cols, FC),
        ue_array=UpaGeometry.half_wavelength(1, 1, FC),
    )


def make_ofdm(**kw):
    base = dict(subcarriers=256, subcarrier_spacing=480e3, packets=64, symbols_per_packet=7)
    base.update(kw)
    return OfdmConfig(**base)


@pytest.fixture
def scene():
    return make_scene()


@pytest.fixture
def ofdm():
    return make_ofdm()


@pytest.fixture
def small_ofdm():
    return make_ofdm(subcarriers=16, packets=8)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
