import itertools
import json
from decimal import Decimal

import pytest

from coordtune.grid import (
    AXIS_ORDER,
    INITIAL_VALUES,
    GridError,
    HyperparamGrid,
    ParamAxis,
    campaign_grid,
    default_grid,
    initial_point,
    parse_key,
    point_key,
    point_with,
)


def test_default_axis_values():
    g = default_grid()
    assert g.ids == AXIS_ORDER
    assert g.axis("learning_rate").values[0] == Decimal("0.00005")
    assert len(g.axis("loss_function").values) == 4
    assert g.axis("batch_size").values[8] == 16384
    assert g.axis("batch_size").values == (64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384)
    assert [len(a) for a in g.axes] == [9] * 8 + [4]


def test_default_grid_size_is_nine_to_the_eighth_times_four():
    assert default_grid().size == 9**8 * 4 == 172_186_884


def test_initial_point_values():
    p = initial_point()
    assert p.learning_rate == Decimal("0.001")
    assert p.activation == "Selu"
    assert p.iterations == 250
    assert p.num_neurons == 32
    assert p.batch_size == 128


def test_initial_values_membership():
    # every initial value except iterations and width lies on the table axes
    g = default_grid()
    off = [k for k, v in INITIAL_VALUES.items() if v not in g.axis(k)]
    assert sorted(off) == ["iterations", "num_neurons"]
    c = campaign_grid()
    assert all(v in c.axis(k) for k, v in INITIAL_VALUES.items())
    assert c.axis("iterations").values == (100, 200, 250, 300, 400, 500, 600, 700, 800, 900)
    assert c.axis("num_neurons").values[:4] == (10, 20, 30, 32)


def test_point_with_substitution_and_identity():
    p = initial_point()
    q = point_with(p, "learning_rate", 0.01)
    assert q.learning_rate == Decimal("0.01")
    assert p.learning_rate == Decimal("0.001")  # input untouched
    assert point_with(p, "activation", p["activation"]) is p
    with pytest.raises(GridError, match="0.002 is not an admissible value"):
        point_with(p, "learning_rate", 0.002)


def test_point_key_deterministic_and_round_trips():
    p = initial_point()
    assert point_key(p) == point_key(p)
    k = point_key(p)
    assert k.startswith("learning_rate=0.001;iterations=250;")
    assert point_key(parse_key(p.grid, k)) == k
    assert parse_key(p.grid, k) == p


def test_keys_pairwise_distinct_on_toy_grid():
    g = HyperparamGrid((ParamAxis("a", "numeric", (1, 2, 3)), ParamAxis("b", "categorical", ("x", "y"))))
    pts = list(g.points())
    keys = [point_key(p) for p in pts]
    assert len(set(keys)) == len(pts) == 6
    for p, q in itertools.combinations(pts, 2):
        assert (p == q) == (point_key(p) == point_key(q))


def test_enumeration_is_lexicographic():
    g = HyperparamGrid((ParamAxis("a", "numeric", (1, 2)), ParamAxis("b", "numeric", (5, 6, 7))))
    assert [p.indices() for p in g.points()] == [(i, j) for i in range(2) for j in range(3)]


def test_decimal_values_are_exact():
    g = default_grid()
    assert Decimal("0.0001") in g.axis("learning_rate")
    assert 0.0001 in g.axis("learning_rate")  # floats coerce through their shortest repr
    assert g.axis("learning_rate").index("5e-05") == 0


@pytest.mark.parametrize(
    "values, match",
    [
        ((), "no values"),
        ((1, 1), "duplicate"),
        ((0, 1), "positive"),
        ((-2,), "positive"),
    ],
)
def test_axis_validation(values, match):
    with pytest.raises(GridError, match=match):
        ParamAxis("learning_rate", "numeric", values)


def test_integer_axes_reject_fractions():
    with pytest.raises(GridError, match="not an integer"):
        ParamAxis("iterations", "numeric", (100, 150.5))


def test_point_requires_every_axis():
    g = default_grid()
    with pytest.raises(GridError, match="missing"):
        g.point({"learning_rate": 0.001})
    with pytest.raises(GridError, match="unknown axes"):
        g.point({**INITIAL_VALUES, "momentum": 0.9})


def test_grid_json_round_trip():
    g = campaign_grid()
    assert HyperparamGrid.from_json(json.loads(json.dumps(g.to_json()))) == g
    assert HyperparamGrid.loads(g.dumps()) == g


def test_subgrid_keeps_order_and_checks_membership():
    g = default_grid().subgrid({"learning_rate": [0.01, 0.001]})
    assert g.axis("learning_rate").values == (Decimal("0.01"), Decimal("0.001"))
    with pytest.raises(GridError):
        default_grid().subgrid({"learning_rate": [0.003]})
