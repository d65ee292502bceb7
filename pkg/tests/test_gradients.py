import pytest

from gradcases import CASES, INSTANCES


@pytest.mark.parametrize("seed", range(INSTANCES))
@pytest.mark.parametrize("kernel", sorted(CASES))
def test_finite_differences(kernel, seed):
    assert CASES[kernel](seed) < 1e-4
