import pytest

from svrpll.bnc import SolveParams, solve
from svrpll.cli import run_batch
from svrpll.instance import generate_instance

# the 15-target instance standing in for the first simulation case
CASE1_SEED = 2


@pytest.fixture(scope="session")
def case1():
    inst = generate_instance(15, CASE1_SEED)
    res = solve(inst)
    assert res.solution is not None
    return inst, res.solution


@pytest.fixture(scope="session")
def batch80():
    """The 80-instance protocol: 20 seeded instances each for 15, 20, 25 and 30 targets, solved in turn."""
    return run_batch([15, 20, 25, 30], 20, 0, SolveParams())
