import dataclasses

import pytest

from cavforge.layout import default_layout, validate_layout
from cavforge.pipeline import run_construction


@pytest.fixture(scope="session")
def layout():
    return validate_layout(default_layout())


@pytest.fixture(scope="session")
def built(layout):
    return run_construction(layout, 42)


@pytest.fixture
def state(built):
    # Recovery routines rebind state.ws and append log entries; every test
    # gets its own shell so the session-scoped build stays pristine.
    return dataclasses.replace(built,
                               reference_frames=dict(built.reference_frames),
                               log=list(built.log))
