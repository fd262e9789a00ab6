from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tilkit.errors import ContractError
from tilkit.router import Route, histogram, max_dim, route


@pytest.mark.parametrize(
    "w,h,expected", [(300, 200, 300), (256, 256, 256), (80, 100, 100)]
)
def test_max_dim(w, h, expected):
    assert max_dim(w, h) == expected


@pytest.mark.parametrize(
    "w,h,expected",
    [
        (512, 512, Route.TILE),
        (120, 90, Route.STRETCH),
        (256, 256, Route.PASS_THROUGH),
        (300, 200, Route.TILE),  # mixed shape: tiler pads the short axis
        (256, 255, Route.TILE),
        (255, 255, Route.STRETCH),
    ],
)
def test_route_rule(w, h, expected):
    assert route(w, h, 256).route is expected


def test_route_records_max_dim():
    assert route(600, 256).max_dim == 600


@given(st.integers(min_value=1, max_value=2000), st.integers(min_value=1, max_value=2000))
def test_route_exhaustive_and_exclusive(w, h):
    decision = route(w, h, 256)
    assert decision.route in (Route.PASS_THROUGH, Route.TILE, Route.STRETCH)
    if decision.route is Route.STRETCH:
        assert max_dim(w, h) < 256
    elif decision.route is Route.PASS_THROUGH:
        assert (w, h) == (256, 256)
    else:
        assert max_dim(w, h) >= 256


def test_route_bad_target():
    with pytest.raises(ContractError):
        route(10, 10, 0)


class TestHistogram:
    def test_three_sizes(self):
        hist = histogram([60, 70, 300], 32)
        assert hist.counts[1] == 1 and hist.counts[2] == 1 and hist.counts[9] == 1
        assert sum(hist.counts) == 3
        assert (hist.min_size, hist.max_size) == (60, 300)

    def test_empty(self):
        hist = histogram([], 32)
        assert hist.counts == [] and hist.min_size is None

    def test_boundary_goes_to_upper_bin(self):
        hist = histogram([32], 32)
        assert hist.counts == [0, 1]

    @given(st.lists(st.integers(min_value=0, max_value=4096)), st.integers(min_value=1, max_value=128))
    def test_counts_sum_to_patches(self, sizes, bin_width):
        assert sum(histogram(sizes, bin_width).counts) == len(sizes)

    def test_csv_format(self):
        csv = histogram([0, 40], 32).to_csv()
        assert csv == "bin_start,count\n0,1\n32,1\n"
