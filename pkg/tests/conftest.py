import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from tsdm.refiner import Arch, RefinerModel, TrainConfig, train  # noqa: E402
from tsdm.synthlab import make_refiner_dataset  # noqa: E402

TRAIN_N, TRAIN_SEED = 2000, 1
HELD_N, HELD_SEED = 400, 2

# criterion lines collected by test_acceptance, echoed in the terminal summary
CRITERIA = []


class RefinerRun:
    def __init__(self, model, trace, seconds):
        self.model, self.trace, self.seconds = model, trace, seconds


@pytest.fixture(scope="session")
def refiner_run():
    """Refiner trained once per session on the standard synthetic crop set (timed end to end)."""
    t0 = time.perf_counter()
    data = make_refiner_dataset(TRAIN_N, seed=TRAIN_SEED)
    model, trace = train(RefinerModel.init(Arch(), seed=0), data, TrainConfig(seed=0))
    return RefinerRun(model, trace, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def trained_refiner(refiner_run):
    return refiner_run.model


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(CRITERIA):
        terminalreporter.write_line(line)
