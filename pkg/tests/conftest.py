import pytest

from trxcat.corpus import generate_synthetic, load_synth_config
from trxcat.labeling import label_dataset, load_rules
from trxcat.preprocess import Preprocessor

_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    marker = report.__dict__.get("acceptance_name")
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _acceptance.get(marker)
        if prev != "FAIL":
            _acceptance[marker] = "PASS" if report.outcome == "passed" else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None and m.args:
        rep.acceptance_name = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _acceptance.items():
        terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture(scope="session")
def preprocessor():
    return Preprocessor.default()


@pytest.fixture(scope="session")
def rules():
    return load_rules()


@pytest.fixture(scope="session")
def small_corpus():
    """2,000 synthetic records from the shipped config."""
    return generate_synthetic(load_synth_config(n_records=2000))


@pytest.fixture(scope="session")
def small_labeled(small_corpus, rules):
    ds, _ = label_dataset(small_corpus, rules, force=True)
    return ds
