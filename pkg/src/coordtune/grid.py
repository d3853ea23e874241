"""Hyperparameter search space: axes, grids, points and their canonical keys."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterator, Mapping, Sequence

NUMERIC = "numeric"
CATEGORICAL = "categorical"

GRID_SCHEMA = "coordtune.grid/1"

# Row order of the sweep tables; the alternating method sweeps in this order.
AXIS_ORDER = (
    "learning_rate",
    "iterations",
    "num_layers",
    "num_neurons",
    "activation",
    "optimizer",
    "sample_to_batch_ratio",
    "batch_size",
    "loss_function",
)
INTEGER_AXES = frozenset(
    {"iterations", "num_layers", "num_neurons", "sample_to_batch_ratio", "batch_size"}
)

AXIS_LABELS = {
    "learning_rate": "Learning rate",
    "iterations": "# of iteration",
    "num_layers": "# of Layer",
    "num_neurons": "# of Neuron",
    "activation": "Activation function",
    "optimizer": "Optimizer",
    "sample_to_batch_ratio": "Sample size/ Batch size",
    "batch_size": "Batch size",
    "loss_function": "Loss function",
}

_FORBIDDEN = set(";=\n")


class GridError(ValueError):
    """Raised for invalid axes, grids, points or keys."""


def _coerce_number(axis_id: str, value: Any, integer: bool) -> int | Decimal:
    if isinstance(value, bool):
        raise GridError(f"{axis_id}: boolean {value!r} is not a numeric value")
    if integer:
        if isinstance(value, Decimal):
            if value != value.to_integral_value():
                raise GridError(f"{axis_id}: {value} is not an integer")
            return int(value)
        if isinstance(value, float):
            if not value.is_integer():
                raise GridError(f"{axis_id}: {value} is not an integer")
            return int(value)
        if isinstance(value, str):
            try:
                return _coerce_number(axis_id, Decimal(value), True)
            except ArithmeticError:
                raise GridError(f"{axis_id}: cannot parse {value!r} as a number") from None
        if isinstance(value, int):
            return value
        raise GridError(f"{axis_id}: {value!r} is not a number")
    if isinstance(value, Decimal):
        return value
    if isinstance(value, (int, float, str)):
        try:
            # str() of a float is its shortest round-trip repr, so 0.01 -> Decimal("0.01")
            return Decimal(str(value))
        except ArithmeticError:
            raise GridError(f"{axis_id}: cannot parse {value!r} as a number") from None
    raise GridError(f"{axis_id}: {value!r} is not a number")


def render_value(value: Any) -> str:
    """Deterministic text for one axis value (used in keys and tables)."""
    if isinstance(value, Decimal):
        text = format(value.normalize(), "f")
        return text
    return str(value)


def jsonable(value: Any) -> Any:
    if isinstance(value, Decimal):
        as_float = float(value)
        if Decimal(repr(as_float)) == value:
            return as_float
        return render_value(value)
    return value


@dataclass(frozen=True)
class ParamAxis:
    id: str
    kind: str
    values: tuple

    def __post_init__(self) -> None:
        if not self.id or _FORBIDDEN & set(self.id):
            raise GridError(f"invalid axis id {self.id!r}")
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise GridError(f"{self.id}: unknown axis kind {self.kind!r}")
        if len(self.values) == 0:
            raise GridError(f"{self.id}: axis has no values")
        if self.kind == NUMERIC:
            integer = self.id in INTEGER_AXES or all(
                isinstance(v, int) and not isinstance(v, bool) for v in self.values
            )
            values = tuple(_coerce_number(self.id, v, integer) for v in self.values)
            for v in values:
                if v <= 0:
                    raise GridError(f"{self.id}: numeric values must be positive, got {v}")
        else:
            values = tuple(self.values)
            for v in values:
                if not isinstance(v, str) or not v or _FORBIDDEN & set(v):
                    raise GridError(f"{self.id}: invalid categorical tag {v!r}")
        if len(set(values)) != len(values):
            raise GridError(f"{self.id}: duplicate values in {list(map(render_value, values))}")
        object.__setattr__(self, "values", values)

    @property
    def integer(self) -> bool:
        return self.kind == NUMERIC and isinstance(self.values[0], int)

    def __len__(self) -> int:
        return len(self.values)

    def coerce(self, value: Any) -> Any:
        """Normalise ``value`` to this axis's value type without checking membership."""
        if self.kind == CATEGORICAL:
            if not isinstance(value, str):
                raise GridError(f"{self.id}: expected a name, got {value!r}")
            return value
        return _coerce_number(self.id, value, self.integer)

    def index(self, value: Any) -> int:
        v = self.coerce(value)
        try:
            return self.values.index(v)
        except ValueError:
            allowed = ", ".join(render_value(x) for x in self.values)
            raise GridError(
                f"{self.id}: {render_value(v)} is not an admissible value (allowed: {allowed})"
            ) from None

    def __contains__(self, value: Any) -> bool:
        try:
            self.index(value)
        except GridError:
            return False
        return True


@dataclass(frozen=True)
class HyperparamGrid:
    axes: tuple[ParamAxis, ...]
    _by_id: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        axes = tuple(self.axes)
        if not axes:
            raise GridError("a grid needs at least one axis")
        ids = [a.id for a in axes]
        if len(set(ids)) != len(ids):
            raise GridError(f"duplicate axis ids in {ids}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "_by_id", {a.id: a for a in axes})

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.axes)

    def axis(self, axis_id: str) -> ParamAxis:
        try:
            return self._by_id[axis_id]
        except KeyError:
            raise GridError(f"unknown axis {axis_id!r}; grid axes are {list(self.ids)}") from None

    def __len__(self) -> int:
        return len(self.axes)

    @property
    def size(self) -> int:
        """Number of points in the Cartesian product."""
        n = 1
        for a in self.axes:
            n *= len(a)
        return n

    def point(self, values: Mapping[str, Any] | None = None, **kwargs: Any) -> "HyperparamPoint":
        """Build a point from a mapping of axis id to value; every axis must be given."""
        merged = dict(values or {}, **kwargs)
        unknown = set(merged) - set(self.ids)
        if unknown:
            raise GridError(f"unknown axes {sorted(unknown)}; grid axes are {list(self.ids)}")
        missing = [i for i in self.ids if i not in merged]
        if missing:
            raise GridError(f"point is missing axes {missing}")
        coerced = tuple(a.values[a.index(merged[a.id])] for a in self.axes)
        return HyperparamPoint(self, coerced)

    def validate(self, point: "HyperparamPoint | Mapping[str, Any]") -> "HyperparamPoint":
        """Return ``point`` bound to this grid, raising if any value is off-axis."""
        if isinstance(point, HyperparamPoint):
            if point.grid == self:
                return point
            return self.point(point.as_dict())
        return self.point(point)

    def points(self) -> Iterator["HyperparamPoint"]:
        """All grid points, lexicographic in (axis order, value index)."""
        for combo in itertools.product(*(a.values for a in self.axes)):
            yield HyperparamPoint(self, combo)

    def at(self, indices: Sequence[int]) -> "HyperparamPoint":
        return HyperparamPoint(self, tuple(a.values[i] for a, i in zip(self.axes, indices)))

    def extended_with(self, values: "Mapping[str, Any] | HyperparamPoint") -> "HyperparamGrid":
        """Grid whose axes also admit the given values.

        Numeric values are inserted in sorted position, categorical ones appended.
        """
        if isinstance(values, HyperparamPoint):
            values = values.as_dict()
        axes = []
        for a in self.axes:
            if a.id not in values or values[a.id] in a:
                axes.append(a)
                continue
            v = a.coerce(values[a.id])
            new = a.values + (v,)
            if a.kind == NUMERIC:
                new = tuple(sorted(new))
            axes.append(ParamAxis(a.id, a.kind, new))
        return HyperparamGrid(tuple(axes))

    def subgrid(self, axis_values: Mapping[str, Sequence[Any]]) -> "HyperparamGrid":
        """Grid restricted to the listed values on the listed axes (others unchanged)."""
        axes = []
        for a in self.axes:
            if a.id in axis_values:
                vals = tuple(a.values[a.index(v)] for v in axis_values[a.id])
                axes.append(ParamAxis(a.id, a.kind, vals))
            else:
                axes.append(a)
        return HyperparamGrid(tuple(axes))

    def to_json(self) -> dict:
        return {
            "schema": GRID_SCHEMA,
            "axes": [
                {"id": a.id, "kind": a.kind, "values": [jsonable(v) for v in a.values]}
                for a in self.axes
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "HyperparamGrid":
        if "axes" not in doc:
            raise GridError("grid document has no 'axes' list")
        axes = []
        for i, entry in enumerate(doc["axes"]):
            try:
                axes.append(ParamAxis(entry["id"], entry["kind"], tuple(entry["values"])))
            except KeyError as exc:
                raise GridError(f"axes[{i}]: missing field {exc.args[0]!r}") from None
        return cls(tuple(axes))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> "HyperparamGrid":
        return cls.from_json(json.loads(text, parse_float=Decimal))


@dataclass(frozen=True)
class HyperparamPoint:
    """One value per axis of ``grid``, stored in axis order."""

    grid: HyperparamGrid
    values: tuple

    def __getitem__(self, axis_id: str) -> Any:
        for a, v in zip(self.grid.axes, self.values):
            if a.id == axis_id:
                return v
        raise KeyError(axis_id)

    def __getattr__(self, name: str) -> Any:
        if name.startswith("_") or name in ("grid", "values"):
            raise AttributeError(name)
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None

    def get(self, axis_id: str, default: Any = None) -> Any:
        try:
            return self[axis_id]
        except KeyError:
            return default

    def keys(self) -> tuple[str, ...]:
        return self.grid.ids

    def items(self):
        return zip(self.grid.ids, self.values)

    def as_dict(self) -> dict[str, Any]:
        return dict(self.items())

    def to_json(self) -> dict[str, Any]:
        return {k: jsonable(v) for k, v in self.items()}

    def indices(self) -> tuple[int, ...]:
        return tuple(a.values.index(v) for a, v in zip(self.grid.axes, self.values))

    @property
    def key(self) -> str:
        return point_key(self)

    def with_value(self, axis_id: str, value: Any) -> "HyperparamPoint":
        return point_with(self, axis_id, value)

    def diff_axes(self, other: "HyperparamPoint") -> list[str]:
        return [i for i, a, b in zip(self.grid.ids, self.values, other.values) if a != b]

    def __repr__(self) -> str:
        return f"HyperparamPoint({point_key(self)})"


def point_with(point: HyperparamPoint, axis_id: str, value: Any) -> HyperparamPoint:
    """Copy of ``point`` with one coordinate replaced by an admissible value."""
    grid = point.grid
    axis = grid.axis(axis_id)
    pos = grid.ids.index(axis_id)
    new_value = axis.values[axis.index(value)]
    if point.values[pos] == new_value:
        return point
    values = point.values[:pos] + (new_value,) + point.values[pos + 1 :]
    return HyperparamPoint(grid, values)


def render_key(items: Sequence[tuple[str, Any]]) -> str:
    return ";".join(f"{k}={render_value(v)}" for k, v in items)


def point_key(point: HyperparamPoint | Mapping[str, Any]) -> str:
    """Canonical text key: ``axis=value`` pairs joined by ``;`` in grid order."""
    if isinstance(point, HyperparamPoint):
        return render_key(list(point.items()))
    return render_key(list(point.items()))


def parse_key(grid: HyperparamGrid, key: str) -> HyperparamPoint:
    values = {}
    for part in key.split(";"):
        name, sep, text = part.partition("=")
        if not sep:
            raise GridError(f"malformed key fragment {part!r}")
        values[name] = text
    if list(values) != list(grid.ids):
        raise GridError(f"key axes {list(values)} do not match grid axes {list(grid.ids)}")
    return grid.point(values)


def default_grid() -> HyperparamGrid:
    """The nine-axis search space with its default candidate values."""
    return HyperparamGrid(
        (
            ParamAxis(
                "learning_rate",
                NUMERIC,
                tuple(
                    Decimal(s)
                    for s in ("0.00005", "0.0001", "0.0005", "0.001", "0.005", "0.01", "0.05", "0.1", "0.5")
                ),
            ),
            ParamAxis("iterations", NUMERIC, tuple(range(100, 1000, 100))),
            ParamAxis("num_layers", NUMERIC, tuple(range(1, 10))),
            ParamAxis("num_neurons", NUMERIC, tuple(range(10, 100, 10))),
            ParamAxis(
                "activation",
                CATEGORICAL,
                ("Relu", "Crelu", "Elu", "Selu", "Relu6", "Tanh", "Softmax", "Softsign", "Softplus"),
            ),
            ParamAxis(
                "optimizer",
                CATEGORICAL,
                (
                    "Adam",
                    "Adadelta",
                    "Adagrad",
                    "Ftrl",
                    "GradientDescent",
                    "ProximalAdagrad",
                    "ProximalGradientDescent",
                    "RMSProp",
                    "Momentum",
                ),
            ),
            ParamAxis("sample_to_batch_ratio", NUMERIC, tuple(range(1, 10))),
            ParamAxis("batch_size", NUMERIC, tuple(16 * 2**k for k in range(2, 11))),
            ParamAxis(
                "loss_function",
                CATEGORICAL,
                ("SoftmaxCE", "SoftmaxCEv2", "SigmoidCE", "WeightedCE"),
            ),
        )
    )


INITIAL_VALUES = {
    "learning_rate": Decimal("0.001"),
    "iterations": 250,
    "num_layers": 2,
    "num_neurons": 32,
    "activation": "Selu",
    "optimizer": "Adam",
    "sample_to_batch_ratio": 8,
    "batch_size": 128,
    "loss_function": "SoftmaxCE",
}


def campaign_grid() -> HyperparamGrid:
    """``default_grid()`` widened so that the initial point lies on it.

    The initial iteration count (250) and width (32) are not among the table's
    candidates; they are inserted in sorted position.
    """
    return default_grid().extended_with(INITIAL_VALUES)


def initial_point(grid: HyperparamGrid | None = None) -> HyperparamPoint:
    """Starting point of both search methods, on ``grid`` (default: ``campaign_grid()``)."""
    return (grid or campaign_grid()).point(INITIAL_VALUES)
