import os

# keep test runs from writing rotating log files
os.environ.setdefault("LOG_TO_FILE", "false")

import pytest

from sfc_engine.grid_core import Grid, sample_brownian


@pytest.fixture
def grid():
    return Grid(1.0, 256)


@pytest.fixture
def path(grid):
    return sample_brownian(grid, 7)
