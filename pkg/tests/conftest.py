import numpy as np
import pytest

from hierzsl.evalbench import SyntheticSpec, gen_synthetic
from hierzsl.hierarchy import build_hierarchy
from hierzsl.projection import LayerParams, train_model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_bench():
    """Tiny trained pipeline shared by inference and CLI-free tests."""
    data = gen_synthetic(SyntheticSpec(p=20, q=5, d_f=12, d_z=6, n_per_class=10, noise_sigma=0.02, seed=3))
    h = build_hierarchy(data.sem, t=3, seed=0)
    model = train_model(data.train_F, data.train_y, h, data.sem, LayerParams(), neighbours=5)
    return data, h, model


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
