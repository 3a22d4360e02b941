import numpy as np
import pytest

from surfdom.teichmuller.fenchel_nielsen import FNCoords, fn_to_holonomy

REF = FNCoords((2.0, 2.2, 1.8), (0.1, -0.2, 0.3))


@pytest.fixture(scope="session")
def ref_coords():
    return REF


@pytest.fixture(scope="session")
def ref_rep():
    return fn_to_holonomy(REF)


@pytest.fixture(scope="session")
def ref_mesh(ref_rep):
    from surfdom.teichmuller.mesh import build_mesh

    return build_mesh(ref_rep, 0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one ``criterion N: PASS|FAIL`` line per acceptance test."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def log(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((n, line))
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
