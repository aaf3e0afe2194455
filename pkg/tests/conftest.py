"""Shared solves.  Eigenproblems dominate the test wall time, so every
domain the suite touches is solved once per session and reused."""

import pytest

from platebuckle.acceptance import Workspace


@pytest.fixture(scope="session")
def ws():
    return Workspace()


@pytest.fixture(scope="session")
def disc1(ws):
    return ws.disc(1)


@pytest.fixture(scope="session")
def disc2(ws):
    return ws.disc(2)


@pytest.fixture(scope="session")
def ellipse1(ws):
    return ws.ellipse(1)
