import numpy as np
import pytest

from samson.cube import CANONICAL_NM, ImageCube


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_cube(rng, h=16, w=12, meta=None) -> ImageCube:
    planes = rng.random((len(CANONICAL_NM), h, w), dtype=np.float32)
    return ImageCube.from_planes(list(planes), meta)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def emit(name: str, ok: bool, detail: str, seconds: float):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail} [{seconds:.1f} s]"
        lines.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
