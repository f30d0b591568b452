import numpy as np
import pytest

from levyfront.cli import ExperimentConfig, Pipeline, _closure
from levyfront.discretize import LineGrid, TorusGrid, assemble_line_operator, assemble_torus_operator
from levyfront.model import InitialData, KernelSpec, ProblemSpec, ReactionSpec

# criterion -> (passed, detail); filled by test_acceptance and echoed in the summary
ACCEPTANCE = {}


def build_spec(alpha=1.0, amplitude=0.0, mu_mean=1.0, mu_amp=0.0, c=1.0):
    return ProblemSpec(KernelSpec(alpha=alpha, amplitude=amplitude),
                       ReactionSpec.logistic(mu_mean, mu_amp),
                       InitialData.algebraic(c, 1, alpha))


@pytest.fixture(scope="session")
def make_spec():
    return build_spec


@pytest.fixture(scope="session")
def small_line():
    """A ~630-node line grid: fast to assemble, still log-spaced outside the core."""
    return LineGrid.build(core_halfwidth=4.0, core_spacing=1.0 / 16, R_max=1e10, n_outer=250)


@pytest.fixture(scope="session")
def small_line_op(small_line):
    return assemble_line_operator(KernelSpec(alpha=1.0), small_line)


@pytest.fixture(scope="session")
def torus_1024():
    grid = TorusGrid(1024)
    return grid, assemble_torus_operator(KernelSpec(alpha=1.0), grid)


@pytest.fixture(scope="session")
def benchmark_a1(tmp_path_factory):
    """Full pipeline on the shipped alpha = 1 benchmark (about three minutes)."""
    cfg = ExperimentConfig.load("constant-logistic-a1")
    pipe = Pipeline(cfg, tmp_path_factory.mktemp("constant-logistic-a1"), seed=0)
    pipe.run()
    return pipe


@pytest.fixture(scope="session")
def front_runs(tmp_path_factory):
    """Front-only pipelines for alpha = 0.5 and 1.5."""
    runs = {}
    for alpha, name in ((0.5, "constant-logistic-a05"), (1.5, "constant-logistic-a15")):
        cfg = ExperimentConfig.load(name)
        pipe = Pipeline(cfg, tmp_path_factory.mktemp(name), seed=0)
        pipe.run(_closure("fronts"))
        runs[alpha] = pipe
    return runs


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
