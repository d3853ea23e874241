"""Turn one hyperparameter point into one symbol error rate.

Training symbols go through the channel, the detector is trained on batches
resampled from that finite pool, and the score is measured on an independent
test stream. Every random draw is seeded from ``(base_seed, point key, role)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .channel import AwgnParams, ChannelModel, FiberParams, FsoParams, channel_from_json, channel_to_json
from .grid import HyperparamPoint, point_key, render_key
from .modem import Constellation, generate_symbols, ml_baseline_detect, qam_constellation, ser
from .neuralnet import Activation, LossKind, NetworkSpec, forward, make_optimizer, train, write_loss_trace
from .seeds import derive_seed
from .tuner import TrialResult

ROLES = ("weights", "train_symbols", "train_channel", "batches", "test_symbols", "test_channel")


@dataclass(frozen=True)
class SystemConfig:
    channel: ChannelModel = FsoParams()
    modulation_order: int = 16
    test_symbols: int = 2**14
    normalization: bool = True
    base_seed: int = 0
    pos_weight: float | None = None  # WeightedCE positive-class weight; None -> M - 1

    def __post_init__(self) -> None:
        qam_constellation(self.modulation_order)  # raises for unsupported orders
        if self.test_symbols < 1024:
            raise ValueError("test_symbols must be >= 1024")
        if self.pos_weight is not None and self.pos_weight <= 0:
            raise ValueError("pos_weight must be positive")

    @property
    def weighted_ce_pos_weight(self) -> float:
        return float(self.pos_weight) if self.pos_weight is not None else float(self.modulation_order - 1)

    def to_json(self) -> dict:
        return {
            "channel": channel_to_json(self.channel),
            "modulation_order": self.modulation_order,
            "test_symbols": self.test_symbols,
            "normalization": self.normalization,
            "base_seed": self.base_seed,
            "pos_weight": self.pos_weight,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "SystemConfig":
        doc = dict(doc)
        known = {"channel", "modulation_order", "test_symbols", "normalization", "base_seed", "pos_weight"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown system fields: {sorted(unknown)}")
        if "channel" in doc:
            doc["channel"] = channel_from_json(doc["channel"])
        return cls(**doc)


@dataclass(frozen=True)
class TrialSettings:
    """Hyperparameters of one trial, with names resolved and types fixed."""

    learning_rate: float
    iterations: int
    num_layers: int
    num_neurons: int
    activation: Activation
    optimizer: str
    sample_to_batch_ratio: int
    batch_size: int
    loss_function: LossKind

    @classmethod
    def from_point(cls, point: HyperparamPoint | Mapping[str, Any]) -> "TrialSettings":
        def get(name):
            try:
                return point[name]
            except KeyError:
                raise ValueError(f"point has no value for {name!r}") from None

        def as_int(name, minimum):
            v = get(name)
            iv = int(v)
            if iv != v or iv < minimum:
                raise ValueError(f"{name}: expected an integer >= {minimum}, got {v!r}")
            return iv

        lr = float(get("learning_rate"))
        if not lr > 0:
            raise ValueError(f"learning_rate must be positive, got {lr}")
        try:
            act = Activation(get("activation"))
        except ValueError:
            raise ValueError(
                f"activation: unknown name {get('activation')!r}; choose from {[a.value for a in Activation]}"
            ) from None
        try:
            lossk = LossKind(get("loss_function"))
        except ValueError:
            raise ValueError(
                f"loss_function: unknown name {get('loss_function')!r}; choose from {[k.value for k in LossKind]}"
            ) from None
        make_optimizer(get("optimizer"), lr)  # validates the name
        return cls(
            learning_rate=lr,
            iterations=as_int("iterations", 0),
            num_layers=as_int("num_layers", 0),
            num_neurons=as_int("num_neurons", 1),
            activation=act,
            optimizer=get("optimizer"),
            sample_to_batch_ratio=as_int("sample_to_batch_ratio", 1),
            batch_size=as_int("batch_size", 1),
            loss_function=lossk,
        )


@dataclass(frozen=True)
class TrialPlan:
    n_train: int
    batch_size: int
    iterations: int
    seeds: dict

    @classmethod
    def build(cls, settings: TrialSettings, key: str, base_seed: int) -> "TrialPlan":
        return cls(
            n_train=settings.sample_to_batch_ratio * settings.batch_size,
            batch_size=settings.batch_size,
            iterations=settings.iterations,
            seeds={role: derive_seed(base_seed, key, role) for role in ROLES},
        )


def _features(received: np.ndarray) -> np.ndarray:
    return np.column_stack([received.real, received.imag])


def _key_of(point: HyperparamPoint | Mapping[str, Any]) -> str:
    if isinstance(point, HyperparamPoint):
        return point_key(point)
    return render_key(list(point.items()))


def evaluate(
    point: HyperparamPoint | Mapping[str, Any],
    sys: SystemConfig,
    trace_dir: str | Path | None = None,
) -> TrialResult:
    """Train a detector for ``point`` on ``sys`` and score it by SER on fresh symbols."""
    t0 = time.perf_counter()
    settings = TrialSettings.from_point(point)
    key = _key_of(point)
    plan = TrialPlan.build(settings, key, sys.base_seed)
    seeds = plan.seeds
    m = sys.modulation_order
    const = qam_constellation(m)

    pool = generate_symbols(np.random.default_rng(seeds["train_symbols"]), m, plan.n_train, const)
    rx_train = sys.channel.apply(pool.mapped, np.random.default_rng(seeds["train_channel"]))
    x_pool = _features(rx_train)
    if sys.normalization:
        mean = x_pool.mean(axis=0)
        std = x_pool.std(axis=0)
        std = np.where(std > 0, std, 1.0)
    else:
        mean, std = np.zeros(2), np.ones(2)
    x_pool = (x_pool - mean) / std

    batch_rng = np.random.default_rng(seeds["batches"])
    labels = pool.indices

    def stream(batch_size: int):
        idx = batch_rng.integers(0, plan.n_train, size=batch_size)
        return x_pool[idx], labels[idx]

    spec = NetworkSpec(m, settings.num_layers, settings.num_neurons, settings.activation)
    opt = make_optimizer(settings.optimizer, settings.learning_rate)
    result = train(
        spec,
        seeds["weights"],
        stream,
        optimizer=opt,
        loss_kind=settings.loss_function,
        iterations=plan.iterations,
        batch_size=plan.batch_size,
        pos_weight=sys.weighted_ce_pos_weight,
    )

    test = generate_symbols(np.random.default_rng(seeds["test_symbols"]), m, sys.test_symbols, const)
    rx_test = sys.channel.apply(test.mapped, np.random.default_rng(seeds["test_channel"]))
    diagnostics: dict[str, Any] = {
        "n_train": plan.n_train,
        "iterations": plan.iterations,
        "final_loss": result.final_loss if len(result.losses) else None,
        "seeds": dict(seeds),
        "baseline_ser": ser(ml_baseline_detect(rx_test, const), test.indices),
    }
    failed = result.failed
    if failed:
        diagnostics["error"] = result.error
        score = 1.0
    else:
        try:
            logits = forward(spec, result.state, (_features(rx_test) - mean) / std)
            score = ser(np.argmax(logits, axis=1), test.indices)
        except FloatingPointError as exc:
            failed, score = True, 1.0
            diagnostics["error"] = str(exc)
    if diagnostics["final_loss"] is not None and not math.isfinite(diagnostics["final_loss"]):
        diagnostics["final_loss"] = None
    if trace_dir is not None:
        trace_dir = Path(trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
        path = trace_dir / f"loss_{derive_seed(key):016x}.csv"
        write_loss_trace(path, result.losses)
        diagnostics["loss_trace"] = path.name
    return TrialResult(
        point=point,
        key=key,
        score=score,
        seed=derive_seed(sys.base_seed, key),
        wall_time=time.perf_counter() - t0,
        failed=failed,
        diagnostics=diagnostics,
    )


class DetectorObjective:
    """Adapter to the tuner's ``obj(point, base_seed)`` contract."""

    def __init__(self, sys: SystemConfig, trace_dir: str | Path | None = None):
        self.sys = sys
        self.trace_dir = trace_dir

    def __call__(self, point: HyperparamPoint, base_seed: int) -> TrialResult:
        return evaluate(point, replace(self.sys, base_seed=base_seed), self.trace_dir)


def fso_system(**overrides) -> SystemConfig:
    """FSO operating point: alpha 4.2, beta 1.4, Es/N0 0 dB, 16-QAM."""
    return SystemConfig(channel=FsoParams(), **overrides)


def fiber_system(**overrides) -> SystemConfig:
    """Fiber operating point with the default NLIN calibration, 16-QAM."""
    return SystemConfig(channel=FiberParams(), **overrides)


def awgn_system(es_n0_db: float = 10.0, **overrides) -> SystemConfig:
    return SystemConfig(channel=AwgnParams.from_es_n0_db(es_n0_db), **overrides)


def qualitative_table7_trends(
    sys_fso: SystemConfig,
    sys_fiber: SystemConfig,
    point: HyperparamPoint,
    seeds: tuple[int, ...] = (0, 1, 2),
) -> dict[str, Any]:
    """Seed-averaged SERs behind the expected directional trends at a reference point.

    Returns the averages, per-seed values, the degradation factors relative to the
    reference point on fiber, and a boolean per finding.
    """

    def avg(sys, p):
        vals = [evaluate(p, replace(sys, base_seed=s)).score for s in seeds]
        return float(np.mean(vals)), vals

    fso, fso_vals = avg(sys_fso, point)
    fiber, fiber_vals = avg(sys_fiber, point)
    softmax, softmax_vals = avg(sys_fiber, point.with_value("activation", "Softmax"))
    adadelta, adadelta_vals = avg(sys_fiber, point.with_value("optimizer", "Adadelta"))
    ftrl, ftrl_vals = avg(sys_fiber, point.with_value("optimizer", "Ftrl"))
    ratio = lambda a: a / fiber if fiber > 0 else math.inf
    report = {
        "fso_ser": fso,
        "fiber_ser": fiber,
        "fiber_softmax_ser": softmax,
        "fiber_adadelta_ser": adadelta,
        "fiber_ftrl_ser": ftrl,
        "softmax_factor": ratio(softmax),
        "adadelta_factor": ratio(adadelta),
        "ftrl_factor": ratio(ftrl),
        "per_seed": {
            "fso": fso_vals,
            "fiber": fiber_vals,
            "softmax": softmax_vals,
            "adadelta": adadelta_vals,
            "ftrl": ftrl_vals,
        },
    }
    report["checks"] = {
        "fso_band": 0.5 < fso < 0.95,
        "fiber_band": fiber < 0.15,
        "fiber_below_fso": fiber < fso,
        "softmax_degrades_5x": report["softmax_factor"] >= 5,
        "adadelta_5x_worse": report["adadelta_factor"] >= 5,
        "ftrl_5x_worse": report["ftrl_factor"] >= 5,
    }
    return report
