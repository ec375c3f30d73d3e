import dataclasses

import numpy as np
import pytest

from mixedplate.drivers.cases import (bracket, fd_hessian, fd_laplacian, get_case,
                                      manufactured_case, reference_case, validate_source)

PI = np.pi


@pytest.mark.parametrize("example", [1, 3, 4])
def test_sources_match_finite_differences(example):
    assert validate_source(manufactured_case(example)) <= 1e-6


@pytest.mark.parametrize("example", [1, 3, 4])
def test_wrong_source_is_caught(example):
    case = manufactured_case(example)
    bad = dataclasses.replace(case, f=lambda x, y, f=case.f: f(x, y) * (1 + 1e-4))
    with pytest.raises(ValueError):
        validate_source(bad)


def test_fd_operators_on_polynomials():
    x, y = np.array([0.3, 0.7]), np.array([0.2, 0.9])
    q = lambda a, b: a ** 3 * b - 2 * a * b ** 2
    np.testing.assert_allclose(fd_laplacian(q, x, y, 1e-2), 6 * x * y - 4 * x, rtol=1e-10)
    (hxx, hxy), (_, hyy) = fd_hessian(q, x, y, 1e-2)
    np.testing.assert_allclose(hxy, 3 * x ** 2 - 4 * y, rtol=1e-9)
    np.testing.assert_allclose(hyy, -4 * x, rtol=1e-10)


def test_bracket_examples():
    # [x^2/2, y^2/2] = 1, [xy, xy] = -2
    one, zero = np.ones(1), np.zeros(1)
    assert bracket(((one, zero), (zero, zero)), ((zero, zero), (zero, one)))[0] == 1
    assert bracket(((zero, one), (one, zero)), ((zero, one), (one, zero)))[0] == -2


def boundary_samples(n=50):
    t = np.linspace(0, 1, n)
    z, o = np.zeros(n), np.ones(n)
    return [(z, t, (-1, 0)), (o, t, (1, 0)), (t, z, (0, -1)), (t, o, (0, 1))]


def test_example1_clamped_boundary():
    u = manufactured_case(1).u
    for x, y, (nx, ny) in boundary_samples():
        assert np.abs(u.value(x, y)).max() == 0
        gx, gy = u.grad(x, y)
        assert np.abs(gx * nx + gy * ny).max() == 0


def test_example3_nonhomogeneous_normal_derivative():
    case = manufactured_case(3)
    for x, y, _ in boundary_samples():
        assert np.abs(case.u.value(x, y)).max() <= 1e-15
    gx, _ = case.u.grad(np.array(0.0), np.array(0.25))
    assert gx == pytest.approx(2 * PI, rel=1e-15)
    assert case.coefficient.kappa(np.array(1.0), np.array(2.0)) == 6.0


def test_example4_fields():
    case = manufactured_case(4)
    assert case.kind == "von_karman" and case.p == 0.0
    for x, y, _ in boundary_samples():
        assert np.abs(case.psi.value(x, y)).max() <= 1e-30
        gx, gy = case.psi.grad(x, y)
        assert max(np.abs(gx).max(), np.abs(gy).max()) <= 1e-14


@pytest.mark.parametrize("example", [2, 5, 6])
def test_reference_examples_have_no_exact_solution(example):
    with pytest.raises(ValueError, match="reference"):
        manufactured_case(example)
    case = get_case(example)
    assert not case.has_exact and case.tau == 200.0
    with pytest.raises(ValueError):
        validate_source(case)


def test_reference_case_data():
    x = np.array([1.5])
    c2 = reference_case(2, "omega2")
    assert c2.domain == "omega2" and c2.f(x, x)[0] == 1.0
    c5 = reference_case(5)
    assert (c5.p, c5.f(x, x)[0], c5.g(x, x)[0]) == (0.0, 10.0, 10.0)
    assert reference_case(5, p=20).p == 20.0
    c6 = reference_case(6)
    assert (c6.p, c6.f(x, x)[0], c6.g(x, x)[0], c6.domain) == (20.0, 100.0, 1.0, "omega6")
    with pytest.raises(ValueError):
        reference_case(2, "omega5")
    with pytest.raises(ValueError):
        get_case(7)
