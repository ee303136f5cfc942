"""Least-squares fits of measured quantities against powers of eta.

Two models are supported:

* pure power, ``value = C eta^s``;
* power times a fixed log power, ``value = C eta^s |ln(eta / divisor)|^t``
  with ``t`` held fixed and only ``s`` and ``C`` fitted.

``fit_linear`` handles the complementary question of whether a quantity is
an affine function of a log transform of eta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientSamples, NonPositiveValue

MIN_SAMPLES = 3


@dataclass(frozen=True)
class ExponentFit:
    """Result of a log-log fit.

    Attributes
    ----------
    slope, intercept
        ``ln(value) - t ln|ln(eta/divisor)| = intercept + slope ln(eta)``.
    r_squared
        Coefficient of determination of that regression, clipped to [0, 1].
    model
        ``"pure_power"`` or ``"log_power"``.
    log_power, log_divisor
        The fixed ``t`` and the divisor inside the logarithm.
    """

    slope: float
    intercept: float
    r_squared: float
    model: str
    log_power: float = 0.0
    log_divisor: float = 2.0
    samples: tuple[tuple[float, float], ...] = field(default=(), repr=False)

    def predict(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        out = np.exp(self.intercept) * eta**self.slope
        if self.log_power:
            out = out * np.abs(np.log(eta / self.log_divisor)) ** self.log_power
        return out

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r_squared,
            "model": self.model,
            "log_power": self.log_power,
            "log_divisor": self.log_divisor,
            "n_samples": len(self.samples),
        }


@dataclass(frozen=True)
class LinearFit:
    """``value = slope * |ln(eta/divisor)|^t + intercept`` with ``t = log_power``."""

    slope: float
    intercept: float
    r_squared: float
    log_power: float = 1.0
    log_divisor: float = 2.0
    samples: tuple[tuple[float, float], ...] = field(default=(), repr=False)

    model = "linear_log"

    def predict(self, eta) -> np.ndarray:
        x = np.abs(np.log(np.asarray(eta, dtype=float) / self.log_divisor)) ** self.log_power
        return self.slope * x + self.intercept

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r_squared,
            "model": self.model,
            "log_power": self.log_power,
            "log_divisor": self.log_divisor,
            "n_samples": len(self.samples),
        }


def _check(samples: Iterable[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    pairs = [(float(e), float(v)) for e, v in samples]
    if len(pairs) < MIN_SAMPLES:
        raise InsufficientSamples(f"need at least {MIN_SAMPLES} samples, got {len(pairs)}")
    eta = np.array([p[0] for p in pairs])
    value = np.array([p[1] for p in pairs])
    if np.unique(eta).size != eta.size:
        raise InsufficientSamples("eta values must be distinct")
    if np.any(eta <= 0):
        raise NonPositiveValue("eta must be positive")
    return eta, value


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    design = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(intercept), r2


def fit_exponent(
    samples: Sequence[tuple[float, float]],
    log_power: float = 0.0,
    log_divisor: float = 2.0,
) -> ExponentFit:
    """Fit ``value = C eta^s |ln(eta/divisor)|^t`` with ``t = log_power`` fixed.

    Raises
    ------
    InsufficientSamples
        Fewer than three samples or repeated eta.
    NonPositiveValue
        A value or eta that is not strictly positive.

    Examples
    --------
    >>> fit = fit_exponent([(e, 3 * e**1.5) for e in (0.1, 0.2, 0.4)])
    >>> round(fit.slope, 12)
    1.5
    """
    eta, value = _check(samples)
    if np.any(value <= 0):
        raise NonPositiveValue("log-log fit needs strictly positive values")
    logs = np.abs(np.log(eta / log_divisor))
    if log_power and np.any(logs == 0):
        raise NonPositiveValue("log factor vanishes at eta = divisor")
    y = np.log(value) - log_power * np.log(logs) if log_power else np.log(value)
    slope, intercept, r2 = _ols(np.log(eta), y)
    model = "log_power" if log_power else "pure_power"
    samples_used = tuple(zip(eta.tolist(), value.tolist()))
    return ExponentFit(slope, intercept, r2, model, float(log_power), float(log_divisor), samples_used)


def fit_linear(
    samples: Sequence[tuple[float, float]],
    log_power: float = 1.0,
    log_divisor: float = 2.0,
) -> LinearFit:
    """Fit ``value = a |ln(eta/divisor)|^t + b`` (``t = log_power``) by least squares."""
    eta, value = _check(samples)
    x = np.abs(np.log(eta / log_divisor)) ** log_power
    slope, intercept, r2 = _ols(x, value)
    samples_used = tuple(zip(eta.tolist(), value.tolist()))
    return LinearFit(slope, intercept, r2, float(log_power), float(log_divisor), samples_used)
