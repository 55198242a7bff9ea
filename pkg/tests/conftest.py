import os

import pytest
import torch
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))
torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """24 clips at 64 px with strong view bias; shared read-only by several test modules."""
    from trawlvision.dataio import ClipStore
    from trawlvision.scenegen import BiasConfig, generate_dataset
    root = tmp_path_factory.mktemp("tiny")
    manifest = generate_dataset(root, (8, 8, 8), BiasConfig(view_class_correlation=0.9), seed=5, write_masks=True)
    return manifest, ClipStore(manifest)


class _Verdict:
    def __init__(self, number, name, budget_s):
        self.number, self.name, self.budget_s = number, name, budget_s
        self.detail = ""
        self.passed = False
        self.elapsed = 0.0

    @property
    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} criterion {self.number:2d} {self.name} ({self.elapsed:.1f} s / {self.budget_s:.0f} s) {self.detail}"


@pytest.fixture
def verdict(request):
    """Context-manager factory recording one acceptance criterion (outcome, runtime vs. budget)."""
    import contextlib
    import time
    store = request.config.stash.setdefault(_VERDICTS, [])

    @contextlib.contextmanager
    def run(number, name, budget_s):
        v = _Verdict(number, name, budget_s)
        store.append(v)
        start = time.perf_counter()
        try:
            yield v
        finally:
            v.elapsed = time.perf_counter() - start
        assert v.elapsed <= budget_s, f"criterion {number} took {v.elapsed:.1f} s > {budget_s} s"
        v.passed = True

    return run


_VERDICTS = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash.get(_VERDICTS, [])
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for v in sorted(verdicts, key=lambda v: v.number):
            terminalreporter.write_line(v.line)
