import collections
import time

import numpy as np
import pytest

from cne.pipeline import run_pipeline
from cne.segmenter import TrainConfig
from cne.synth import SynthConfig

_criteria = collections.OrderedDict()


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "seen": False})
    if report.when == "call" or report.outcome != "passed":
        entry["seen"] = True
        if report.outcome != "passed":
            entry["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep._criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['title']}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240229)


PLANTED_SYNTH = SynthConfig(scenes=200, height=64, width=64, num_classes=5, natural_classes=(0, 1),
                            natural_threshold=0.5, seed=42)
PLANTED_TRAIN = TrainConfig(seed=42)


@pytest.fixture(scope="session")
def planted_runs(tmp_path_factory):
    """The planted-ordering pipeline, run twice from scratch with identical seeds."""
    runs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        start = time.perf_counter()
        report, metrics, paths = run_pipeline(str(out), PLANTED_SYNTH, PLANTED_TRAIN, p_drop=0.1,
                                              runs=25, seed=42, min_coeff=0.01, bins=15)
        runs.append({"dir": out, "report": report, "metrics": metrics, "paths": paths,
                     "seconds": time.perf_counter() - start})
    return runs
