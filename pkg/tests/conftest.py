import numpy as np
import pytest

from egadapt import DomainShape, EGSpace, build_initial

#: one "<criterion>: PASS/FAIL <detail>" line per acceptance criterion,
#: echoed after the run so they survive pytest's output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_adaptive_mesh(shape=DomainShape.L_SHAPE, h0=0.25, rounds=2, seed=0,
                         partition=None):
    """Mesh with a few rounds of random refinement (hanging nodes included)."""
    rng = np.random.default_rng(seed)
    mesh = build_initial(shape, h0, partition)
    for _ in range(rounds):
        ids = list(mesh.active_ids)
        take = max(1, len(ids) // 4)
        mesh = mesh.refine(rng.choice(ids, size=take, replace=False))
    return mesh


@pytest.fixture
def lshape_hanging_space():
    """Small L-shape mesh with one refined cell: two hanging nodes at k=1."""
    mesh = build_initial(DomainShape.L_SHAPE, 1.0)
    mesh = mesh.refine([mesh.active_ids[0]])
    return EGSpace(mesh, 1)
