import numpy as np
import pytest
from hypothesis import given, strategies as st

from regenjump.errors import DimensionMismatch
from regenjump.spaces import grid_space, project_zero_mean, scalar_space

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


def test_scalar_norms_coincide():
    space = scalar_space()
    v = space.state([-2.5])
    assert v.norm_v() == v.norm_v1() == v.norm_v2() == 2.5


def test_grid_norms():
    space = grid_space(4, length=2.0, q=2.0)  # h = 0.5
    v = space.state([1.0, -1.0, 2.0, 0.0])
    assert v.norm_v() == pytest.approx(0.5 * 4.0)
    assert v.norm_v1() == pytest.approx(np.sqrt(0.5 * 6.0))
    assert v.norm_v2() == pytest.approx(np.sqrt(0.5 * 6.0))


def test_norm_v2_uses_q():
    space = grid_space(2, length=1.0, q=4.0)
    v = space.state([1.0, -2.0])
    expected = (0.5 * (1.0 + 16.0)) ** 0.25
    assert v.norm_v2() == pytest.approx(expected)


def test_zero_iff_norm_zero():
    space = grid_space(8)
    assert space.zero().norm_v() == 0.0
    v = space.state(np.zeros(8))
    v.values[3] = 1e-300
    assert space.state(v.values).norm_v() > 0.0


def test_nonfinite_rejected():
    space = scalar_space()
    with pytest.raises(ValueError):
        space.state([np.nan])
    with pytest.raises(ValueError):
        space.state([np.inf])


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        grid_space(4).state([1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        scalar_space().state([1.0, 2.0])


@pytest.mark.parametrize("bad", [dict(n_cells=1), dict(length=0.0), dict(q=0.5)])
def test_space_validation(bad):
    kwargs = dict(n_cells=4, length=1.0, q=2.0)
    kwargs.update(bad)
    with pytest.raises(ValueError):
        grid_space(**kwargs)


def test_project_zero_mean_examples():
    space = grid_space(2)
    assert np.allclose(project_zero_mean(space.state([1.0, 3.0])).values, [-1.0, 1.0])
    const = space.state([4.0, 4.0])
    assert np.all(project_zero_mean(const).values == 0.0)


@given(st.lists(finite_floats, min_size=2, max_size=16))
def test_project_zero_mean_properties(vals):
    space = grid_space(len(vals))
    u = space.state(vals)
    p = project_zero_mean(u)
    scale = max(1.0, float(np.max(np.abs(u.values))))
    assert abs(p.mean()) <= 1e-14 * scale
    # idempotent up to rounding
    p2 = project_zero_mean(p)
    assert np.max(np.abs(p2.values - p.values)) <= 1e-14 * scale


@given(finite_floats, finite_floats)
def test_scalar_add_sub(a, b):
    space = scalar_space()
    x, y = space.state([a]), space.state([b])
    assert (x + y).scalar == a + b
    assert (x - y).scalar == a - b
