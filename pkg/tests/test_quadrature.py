from math import factorial

import numpy as np
import pytest

from cutocp.quadrature import segment_rule, triangle_rule


def exact_monomial(a, b, c):
    # integral of l1^a l2^b l3^c over the reference triangle divided by its area
    return 2.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 6, 8, 10])
def test_triangle_rule_exactness(order):
    lam, w = triangle_rule(order)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(lam.sum(axis=1), 1.0)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            c = 0
            approx = (w * lam[:, 0] ** a * lam[:, 1] ** b * lam[:, 2] ** c).sum()
            assert approx == pytest.approx(exact_monomial(a, b, c), abs=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3, 5, 7])
def test_segment_rule_exactness(order):
    t, w = segment_rule(order)
    for k in range(order + 1):
        assert (w * t**k).sum() == pytest.approx(1.0 / (k + 1), abs=1e-13)
