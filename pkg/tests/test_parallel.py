import pytest

from cocycle_lab.estimators import estimate_speed
from cocycle_lab.parallel import Budget, BudgetExceeded, Pool
from cocycle_lab.walk import LengthCocycle


def _square(i):
    return i * i


@pytest.mark.parametrize("workers", [1, 2, 5])
def test_map_preserves_index_order(workers):
    assert Pool(workers).map(_square, 37) == [i * i for i in range(37)]


def test_results_do_not_depend_on_worker_count(srw):
    a = estimate_speed(LengthCocycle(), srw, 50, 300, 7, Pool(1))
    b = estimate_speed(LengthCocycle(), srw, 50, 300, 7, Pool(3))
    assert (a.estimate, a.stderr) == (b.estimate, b.stderr)


def test_budget_is_charged_up_front(srw):
    budget = Budget(1000)
    budget.charge(600)
    with pytest.raises(BudgetExceeded):
        estimate_speed(LengthCocycle(), srw, 50, 100, 7, budget=budget)
    assert budget.spent == 600


def test_pool_rejects_zero_workers():
    with pytest.raises(ValueError):
        Pool(0)
