"""Spectral moments sigma_0, sigma_1, sigma_2 and the derived shape parameters.

Two estimators are provided.  The ``difference`` method takes population
standard deviations of the series and of its first and second differences
(unit sampling interval); it matches the discrete feature detectors and is
the default.  The ``spectrum`` method sums frequency-weighted periodogram
power, either with the continuum weight ``omega`` or with the exact transfer
function ``2 sin(omega / 2)`` of a unit difference.
"""
import json
from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "SpectralMoments",
    "power_spectrum",
    "spectral_moment",
    "moments",
    "shape_params",
]

MIN_LENGTH = 16


@dataclass(frozen=True)
class SpectralMoments:
    sigma0: float
    sigma1: float
    sigma2: float
    method: str = "difference"

    @property
    def gamma_big(self):
        """Dimensionless shape parameter ``sigma1**2 / (sigma0 * sigma2)``."""
        return shape_params(self)[0]

    @property
    def gamma_small(self):
        """Time scale ``sigma1 / sigma2`` in sampling units."""
        return shape_params(self)[1]

    @classmethod
    def from_shape(cls, gamma_big, sigma0=1.0, sigma1=1.0):
        """Moments with a prescribed ``gamma_big``, for theory evaluation."""
        return cls(sigma0, sigma1, sigma1**2 / (sigma0 * gamma_big), method="given")

    def to_dict(self):
        d = asdict(self)
        try:
            d["gamma_big"], d["gamma_small"] = shape_params(self)
        except ValueError:
            d["gamma_big"] = d["gamma_small"] = None
        return d

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _as_array(series):
    x = np.asarray(series.values if hasattr(series, "values") else series, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-d series")
    if x.size < MIN_LENGTH:
        raise ValueError(f"series too short: need >= {MIN_LENGTH} points, got {x.size}")
    return x


def power_spectrum(series):
    """One-sided periodogram on ``omega_m = 2 pi m / N``, ``m = 0 .. N // 2``.

    Interior bins carry the power of both ``+omega`` and ``-omega`` so that
    ``power.sum() / N`` equals the population variance of the (demeaned)
    input.

    Returns
    -------
    omega, power : ndarray
    """
    x = _as_array(series)
    x = x - x.mean()
    n = x.size
    power = np.abs(np.fft.rfft(x)) ** 2 / n
    power[1:] *= 2.0
    if n % 2 == 0:
        power[-1] /= 2.0
    omega = 2 * np.pi * np.arange(power.size) / n
    return omega, power


def spectral_moment(series, n, method="difference", derivative="continuum"):
    """Estimate ``sigma_n`` for ``n`` in {0, 1, 2}.

    Parameters
    ----------
    series : StandardizedSeries or array_like
    n : int
    method : {'difference', 'spectrum'}
    derivative : {'continuum', 'discrete'}
        Weight used by the spectrum method: ``omega`` or ``2 sin(omega/2)``.
        The discrete weight reproduces circular differencing exactly and is
        the one to use when cross-checking the difference method.
    """
    if n not in (0, 1, 2):
        raise ValueError(f"spectral moment order must be 0, 1 or 2, got {n!r}")
    x = _as_array(series)
    if method == "difference":
        d = np.diff(x, n) if n else x
        return float(np.sqrt(np.mean((d - d.mean()) ** 2)))
    if method == "spectrum":
        omega, power = power_spectrum(x)
        if derivative == "continuum":
            w = omega
        elif derivative == "discrete":
            w = 2 * np.sin(omega / 2)
        else:
            raise ValueError(f"unknown derivative weight {derivative!r}")
        return float(np.sqrt(np.sum(w ** (2 * n) * power) / x.size))
    raise ValueError(f"unknown method {method!r}")


def moments(series, method="difference", derivative="continuum"):
    s = [spectral_moment(series, k, method, derivative) for k in (0, 1, 2)]
    return SpectralMoments(*s, method=method)


def shape_params(m):
    """Return ``(Gamma, gamma) = (s1**2 / (s0 s2), s1 / s2)``."""
    s0, s1, s2 = m.sigma0, m.sigma1, m.sigma2
    if not s2 > 0:
        raise ValueError("degenerate second moment")
    if not s0 > 0 or not s1 > 0:
        raise ValueError("spectral moments must be positive")
    return s1 * s1 / (s0 * s2), s1 / s2
