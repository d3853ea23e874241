"""Memoryless channel models: Gamma-Gamma FSO, NLIN-AWGN fiber, and plain AWGN.

Every model is a frozen parameter record with an ``apply(symbols, rng)`` method;
randomness comes only from the generator passed in.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Any, ClassVar, Mapping, NamedTuple, Union

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln, kve

FADE_INTENSITY = "intensity"
FADE_SQRT_INTENSITY = "sqrt_intensity"


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _complex_noise(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    """Circular complex Gaussian with total variance ``variance`` (half per component)."""
    sigma = math.sqrt(variance / 2.0)
    noise = rng.standard_normal((n, 2))
    return sigma * (noise[:, 0] + 1j * noise[:, 1])


# --------------------------------------------------------------------------- Gamma-Gamma


@dataclass(frozen=True)
class FsoLinkGeometry:
    cn2: float  # m^(-2/3)
    wavelength: float  # m
    link_length: float  # m

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v}")


def rytov_variance(geom: FsoLinkGeometry) -> float:
    k = 2.0 * math.pi / geom.wavelength
    return 1.23 * geom.cn2 * k ** (7.0 / 6.0) * geom.link_length ** (11.0 / 6.0)


def gg_params_from_rytov(sigma_r2: float) -> tuple[float, float]:
    """Large- and small-scale eddy parameters (alpha, beta) for a plane wave."""
    if not sigma_r2 > 0:
        raise ValueError("Rytov variance must be positive; use an AWGN channel for no turbulence")
    s125 = sigma_r2**1.2  # sigma_R^(12/5)
    alpha = 1.0 / math.expm1(0.49 * sigma_r2 / (1.0 + 1.11 * s125) ** (7.0 / 6.0))
    beta = 1.0 / math.expm1(0.51 * sigma_r2 / (1.0 + 0.69 * s125) ** (5.0 / 6.0))
    return alpha, beta


def rytov_and_gg_params(geom: FsoLinkGeometry) -> tuple[float, float, float]:
    sigma_r2 = rytov_variance(geom)
    alpha, beta = gg_params_from_rytov(sigma_r2)
    return sigma_r2, alpha, beta


def _check_shape(alpha: float, beta: float) -> None:
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"alpha and beta must be positive, got ({alpha}, {beta})")


def gg_logpdf(i, alpha: float, beta: float):
    _check_shape(alpha, beta)
    i = np.asarray(i, dtype=float)
    if np.any(~(i > 0)):
        raise ValueError("Gamma-Gamma density is defined for intensity > 0 only")
    ab = alpha * beta
    x = 2.0 * np.sqrt(ab * i)
    half = 0.5 * (alpha + beta)
    # kve(v, x) = kv(v, x) * exp(x)
    return (
        math.log(2.0)
        + half * math.log(ab)
        - gammaln(alpha)
        - gammaln(beta)
        + (half - 1.0) * np.log(i)
        + np.log(kve(alpha - beta, x))
        - x
    )


def gg_pdf(i, alpha: float, beta: float):
    """Gamma-Gamma irradiance density (unit mean)."""
    out = np.exp(gg_logpdf(i, alpha, beta))
    return float(out) if np.ndim(out) == 0 else out


def _gg_upper(alpha: float, beta: float) -> float:
    # tail decays roughly like exp(-2 sqrt(alpha beta I)); e^-40 is far below any tolerance used
    return max(60.0, 400.0 / (alpha * beta))


def gg_quad(fn, alpha: float, beta: float) -> float:
    """Integrate ``fn(I) * f(I)`` over (0, inf) with adaptive quadrature."""
    upper = _gg_upper(alpha, beta)
    pieces = [0.0, 1e-3, 0.1, 1.0, 3.0, 10.0, upper]
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(
            lambda x: fn(x) * gg_pdf(x, alpha, beta), a, b, epsabs=1e-13, epsrel=1e-12, limit=200
        )
        total += val
    tail, _ = integrate.quad(lambda x: fn(x) * gg_pdf(x, alpha, beta), upper, np.inf, limit=200)
    return total + tail


@lru_cache(maxsize=32)
def _cdf_table(alpha: float, beta: float, knots: int = 3000):
    upper = _gg_upper(alpha, beta)
    xs = np.concatenate([[0.0], np.geomspace(1e-7, upper, knots)])
    cum = np.zeros_like(xs)
    f = lambda x: gg_pdf(x, alpha, beta)
    for j in range(1, len(xs)):
        val, _ = integrate.quad(f, xs[j - 1], xs[j], epsabs=1e-14, epsrel=1e-12)
        cum[j] = cum[j - 1] + val
    return PchipInterpolator(xs, np.minimum(cum, 1.0), extrapolate=False), upper


def gg_cdf(i, alpha: float, beta: float):
    """Distribution function by piecewise quadrature of the density, interpolated."""
    _check_shape(alpha, beta)
    interp, upper = _cdf_table(float(alpha), float(beta))
    i = np.asarray(i, dtype=float)
    out = np.where(i <= 0, 0.0, np.where(i >= upper, 1.0, interp(np.clip(i, 0.0, upper))))
    return float(out) if out.ndim == 0 else out


def gg_sample(rng: np.random.Generator, alpha: float, beta: float, n: int) -> np.ndarray:
    """I = X * Y with X ~ Gamma(alpha, 1/alpha), Y ~ Gamma(beta, 1/beta)."""
    _check_shape(alpha, beta)
    if n < 1:
        raise ValueError("n must be >= 1")
    x = rng.gamma(alpha, 1.0 / alpha, size=n)
    y = rng.gamma(beta, 1.0 / beta, size=n)
    return x * y


def gg_moment(k: int, alpha: float, beta: float) -> float:
    """E[I^k] = prod_{j<k} (alpha + j)(beta + j) / (alpha beta)^k."""
    out = 1.0
    for j in range(k):
        out *= (alpha + j) * (beta + j) / (alpha * beta)
    return out


def scintillation_index(alpha: float, beta: float) -> float:
    return 1.0 / alpha + 1.0 / beta + 1.0 / (alpha * beta)


# --------------------------------------------------------------------------- channel records


@dataclass(frozen=True)
class FsoParams:
    """Gamma-Gamma fading followed by receiver AWGN at the given Es/N0."""

    kind: ClassVar[str] = "fso"
    alpha: float = 4.2
    beta: float = 1.4
    es_n0_db: float = 0.0
    fade_on_amplitude: str = FADE_INTENSITY
    turbulence: bool = True

    def __post_init__(self) -> None:
        _check_shape(self.alpha, self.beta)
        if self.fade_on_amplitude not in (FADE_INTENSITY, FADE_SQRT_INTENSITY):
            raise ValueError(f"fade_on_amplitude must be '{FADE_INTENSITY}' or '{FADE_SQRT_INTENSITY}'")

    @property
    def noise_variance(self) -> float:
        """Total complex noise variance for unit symbol energy."""
        return 1.0 / db_to_lin(self.es_n0_db)

    def apply(self, symbols: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return fso_apply(symbols, self, rng)


def fso_apply(symbols: np.ndarray, params: FsoParams, rng: np.random.Generator) -> np.ndarray:
    """r = h * s + n with h = I (or sqrt(I)) drawn i.i.d. per symbol."""
    s = np.asarray(symbols, dtype=complex)
    n = len(s)
    if params.turbulence:
        fade = gg_sample(rng, params.alpha, params.beta, n)
        if params.fade_on_amplitude == FADE_SQRT_INTENSITY:
            fade = np.sqrt(fade)
    else:
        fade = np.ones(n)
    var = params.noise_variance
    if var == 0:
        return fade * s
    return fade * s + _complex_noise(rng, n, var)


# Calibration, not measured values: with the table's link (20 x 100 km, 2 dBm, NF 5 dB, 32 GBd)
# these put the NLIN power at about a third of the ASE power and the effective SNR near 16.6 dB,
# close to the optimum launch power of the cubic model.
DEFAULT_CHI1 = 3000.0  # 1/W^2
DEFAULT_CHI2 = 1000.0  # 1/W^2


@dataclass(frozen=True)
class FiberParams:
    """Multi-span amplified link reduced to additive Gaussian noise (ASE + NLIN).

    Dispersion, pre-dispersion, channel spacing and the nonlinear coefficient are
    carried for provenance; the memoryless model does not use them. ``mu6`` is
    likewise unused by the two-coefficient NLIN closure.
    """

    kind: ClassVar[str] = "fiber"
    n_spans: int = 20
    span_length: float = 100.0  # km
    alpha_db_per_km: float = 0.2
    gamma_nl: float = 1.3  # 1/W/km
    carrier_freq: float = 1.9341e14  # Hz
    planck: float = 6.6261e-34  # J s
    speed_of_light: float = 299792458.0
    noise_figure_db: float = 5.0
    baud_rate: float = 32e9
    channel_spacing: float = 50e9
    dispersion: float = 16.4640
    beta2: float = 21.0
    pre_dispersion: float = 0.0  # ps^2
    launch_power_dbm: float = 2.0
    mu4: float = 1.32
    mu6: float = 1.96
    chi1: float = DEFAULT_CHI1
    chi2: float = DEFAULT_CHI2

    def __post_init__(self) -> None:
        if self.n_spans < 1:
            raise ValueError("n_spans must be >= 1")
        for name in ("span_length", "carrier_freq", "planck", "baud_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mu4 < 1 or self.mu6 < 1:
            raise ValueError("modulation factors mu4, mu6 must be >= 1")

    @property
    def launch_power_w(self) -> float:
        return 1e-3 * db_to_lin(self.launch_power_dbm)

    def apply(self, symbols: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return fiber_apply(symbols, self, rng)


class FiberNoise(NamedTuple):
    ase: float  # W
    nlin: float  # W
    total: float  # W
    normalized: float  # total / P0, the variance seen by unit-energy symbols

    @property
    def snr(self) -> float:
        return 1.0 / self.normalized

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)


def fiber_noise_variance(p: FiberParams) -> FiberNoise:
    """ASE accumulated over identical spans plus cubic-in-power NLIN."""
    p0 = p.launch_power_w
    if not p0 > 0:
        raise ValueError("launch power must be positive")
    gain = db_to_lin(p.alpha_db_per_km * p.span_length)
    ase = p.n_spans * (gain - 1.0) * p.planck * p.carrier_freq * db_to_lin(p.noise_figure_db) * p.baud_rate
    nlin = p0**3 * (p.chi1 + p.chi2 * (p.mu4 - 2.0))
    if nlin < 0:
        raise ValueError("chi1 + chi2 * (mu4 - 2) must be non-negative")
    total = ase + nlin
    return FiberNoise(ase, nlin, total, total / p0)


def fiber_apply(symbols: np.ndarray, p: FiberParams, rng: np.random.Generator) -> np.ndarray:
    s = np.asarray(symbols, dtype=complex)
    var = fiber_noise_variance(p).normalized
    if var == 0:
        return s.copy()
    return s + _complex_noise(rng, len(s), var)


@dataclass(frozen=True)
class AwgnParams:
    kind: ClassVar[str] = "awgn"
    noise_variance: float = 1.0  # total complex variance

    def __post_init__(self) -> None:
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")

    @classmethod
    def from_es_n0_db(cls, es_n0_db: float) -> "AwgnParams":
        return cls(1.0 / db_to_lin(es_n0_db))

    def apply(self, symbols: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        s = np.asarray(symbols, dtype=complex)
        if self.noise_variance == 0:
            return s.copy()
        return s + _complex_noise(rng, len(s), self.noise_variance)


ChannelModel = Union[FsoParams, FiberParams, AwgnParams]
_KINDS = {cls.kind: cls for cls in (FsoParams, FiberParams, AwgnParams)}


def channel_to_json(model: ChannelModel) -> dict[str, Any]:
    return {"kind": model.kind, **asdict(model)}


def channel_from_json(doc: Mapping[str, Any]) -> ChannelModel:
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"channel.kind must be one of {sorted(_KINDS)}, got {kind!r}")
    cls = _KINDS[kind]
    if cls is AwgnParams and "es_n0_db" in doc:
        if "noise_variance" in doc:
            raise ValueError("give either channel.es_n0_db or channel.noise_variance, not both")
        return AwgnParams.from_es_n0_db(float(doc.pop("es_n0_db")))
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown {kind} channel fields: {sorted(unknown)}")
    return cls(**doc)


def preset(name: str) -> ChannelModel:
    """Reference operating points: 'fso', 'fiber'; 'awgn' at 10 dB."""
    if name == "fso":
        return FsoParams()
    if name == "fiber":
        return FiberParams()
    if name == "awgn":
        return AwgnParams.from_es_n0_db(10.0)
    raise ValueError(f"unknown channel preset {name!r}")
