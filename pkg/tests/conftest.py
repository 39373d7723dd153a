import numpy as np
import pytest

from semid import Identity, build_semantic_base

_acceptance_results = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and "test_acceptance.py" in str(item.fspath):
        doc = item.function.__doc__ or item.name
        _acceptance_results.append((doc.strip().splitlines()[0], rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed in _acceptance_results:
        terminalreporter.write_line(("PASS  " if passed else "FAIL  ") + label)
    _acceptance_results.clear()


def base_from_refs(refs, q=64):
    """Base whose references are exactly the given vectors.

    Each vector becomes the single member of its own element; labels sort
    in the order given, so element k carries refs[k].
    """
    identities = [
        Identity(np.asarray(ref, dtype=float), label=f"e{k:03d}")
        for k, ref in enumerate(refs)
    ]
    return build_semantic_base(identities, q=q)


@pytest.fixture
def two_ref_base():
    """Two 1-feature-apart references at 0 and 1 in every coordinate."""
    return base_from_refs([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
