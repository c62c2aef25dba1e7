from pathlib import Path

import pytest

from sobolev_lab.geometry import Domain
from sobolev_lab.operator import MatrixField
from sobolev_lab.testfn import quadratic_radial
from sobolev_lab.weights import power_weight

CONFIG_DIR = Path(__file__).resolve().parent.parent / "sobolev_lab" / "config"


@pytest.fixture
def unit_disk():
    return Domain.unit_ball(2)


@pytest.fixture
def green(unit_disk):
    """u = 2 - |x|^2 on the unit disk with h = 1 and A = Id."""
    return quadratic_radial(2.0, 1.0), power_weight(0.0), MatrixField.identity(2), unit_disk


@pytest.fixture
def config_dir():
    return CONFIG_DIR
