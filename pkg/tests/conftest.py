import pathlib

import pytest

from netcontagion.panel import load_panel

DATA = pathlib.Path(__file__).parent / "data"


@pytest.fixture
def toy_paths():
    d = DATA / "toy"
    return (d / "nodes.csv", d / "ties.csv", d / "traits.csv", d / "geo.csv")


@pytest.fixture
def toy_panel(toy_paths):
    return load_panel(*toy_paths)
