"""Channel model: fading-averaged rate, required transmit power, distance grid.

The rate a user at distance d sees is averaged over the fading gain |h|^2
with fixed-node Gauss-Laguerre quadrature, so every quantity here is a
deterministic function of the parameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import bisect
from scipy.special import roots_genlaguerre

from edgepush.core.errors import CalibrationError

logger = logging.getLogger(__name__)

RATE_RTOL = 1e-6
GRID_MODES = ("paper", "general")


@lru_cache(maxsize=16)
def _quadrature(shape: float, n_nodes: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Nodes/weights for E[f(G)], G ~ Gamma(shape, 1). shape=1 is Rayleigh."""
    x, w = roots_genlaguerre(n_nodes, shape - 1.0)
    w = np.asarray(w, dtype=np.float64)
    return np.asarray(x, dtype=np.float64), w / w.sum()


@dataclass(frozen=True, slots=True)
class FadingModel:
    """Distribution of the power gain |h|^2.

    family: "rayleigh" (exponential gain) or "nakagami" (gamma gain with
    the given shape). mean_gain scales both.
    """
    family: str = "rayleigh"
    mean_gain: float = 1.0
    shape: float = 1.0
    n_nodes: int = 96

    def __post_init__(self) -> None:
        if self.family not in ("rayleigh", "nakagami"):
            raise ValueError(f"Unknown fading family: {self.family!r}")
        if self.mean_gain <= 0:
            raise ValueError(f"mean_gain must be > 0, got {self.mean_gain}")
        if self.family == "nakagami" and self.shape < 0.5:
            raise ValueError(f"Nakagami shape must be >= 0.5, got {self.shape}")
        if self.n_nodes < 64:
            raise ValueError(f"n_nodes must be >= 64, got {self.n_nodes}")

    def nodes(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Gain samples and probability weights (summing to 1)."""
        shape = 1.0 if self.family == "rayleigh" else float(self.shape)
        x, w = _quadrature(shape, self.n_nodes)
        return x * (self.mean_gain / shape), w


def _mean_log_rate(snr: float, fading: FadingModel) -> float:
    """E[log2(1 + snr * |h|^2)] in bit/s/Hz."""
    g, w = fading.nodes()
    return float(np.dot(w, np.log1p(snr * g))) / math.log(2.0)


@dataclass(frozen=True, slots=True)
class ChannelParams:
    """Link-budget constants. Powers in Watt, distances in metres.

    noise_power is sigma^2 plus the constant interference term. Build with
    ``ChannelParams.calibrated`` to have it solved from the edge identity.
    """
    bandwidth: float
    target_rate: float
    pathloss_gain: float
    pathloss_exp: float
    noise_power: float
    cell_radius: float
    edge_power: float
    slot_length: float = 1.0
    fading: FadingModel = field(default_factory=FadingModel)

    def __post_init__(self) -> None:
        checks = {
            "bandwidth": self.bandwidth, "target_rate": self.target_rate,
            "pathloss_gain": self.pathloss_gain, "noise_power": self.noise_power,
            "cell_radius": self.cell_radius, "edge_power": self.edge_power,
            "slot_length": self.slot_length,
        }
        for name, value in checks.items():
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if self.pathloss_exp < 2:
            raise ValueError(f"pathloss_exp must be >= 2, got {self.pathloss_exp}")

    @classmethod
    def calibrated(
        cls,
        bandwidth: float,
        target_rate: float,
        pathloss_gain: float,
        pathloss_exp: float,
        cell_radius: float,
        edge_power: float,
        slot_length: float = 1.0,
        fading: FadingModel | None = None,
    ) -> ChannelParams:
        fading = fading or FadingModel()
        noise = calibrate_noise(
            bandwidth, target_rate, pathloss_gain, pathloss_exp,
            cell_radius, edge_power, fading,
        )
        return cls(
            bandwidth=bandwidth, target_rate=target_rate,
            pathloss_gain=pathloss_gain, pathloss_exp=pathloss_exp,
            noise_power=noise, cell_radius=cell_radius, edge_power=edge_power,
            slot_length=slot_length, fading=fading,
        )

    def check_calibration(self) -> None:
        """Raise CalibrationError unless rate(Pt_R, R) = r0 within 1e-6."""
        rate = expected_rate(self, self.edge_power, self.cell_radius)
        if abs(rate - self.target_rate) > RATE_RTOL * self.target_rate:
            raise CalibrationError(
                f"Edge rate {rate:.6g} bit/s differs from target "
                f"{self.target_rate:.6g} bit/s; recalibrate noise_power"
            )


def calibrate_noise(
    bandwidth: float,
    target_rate: float,
    pathloss_gain: float,
    pathloss_exp: float,
    cell_radius: float,
    edge_power: float,
    fading: FadingModel | None = None,
) -> float:
    """Noise-plus-interference power that makes the edge user hit r0 at Pt_R."""
    fading = fading or FadingModel()
    if bandwidth <= 0 or target_rate <= 0:
        raise ValueError("bandwidth and target_rate must be > 0")
    spectral = target_rate / bandwidth

    def f(snr: float) -> float:
        return _mean_log_rate(snr, fading) - spectral

    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e30:
            raise CalibrationError(f"No mean SNR reaches {spectral} bit/s/Hz")
    snr = bisect(f, 0.0, hi, xtol=hi * 1e-15, rtol=1e-14, maxiter=500)
    noise = edge_power * pathloss_gain * cell_radius ** (-pathloss_exp) / snr
    logger.debug("Calibrated noise power %.6g W (edge mean SNR %.6g)", noise, snr)
    return noise


def expected_rate(params: ChannelParams, power: float, distance: float) -> float:
    """Fading-averaged rate W * E[log2(1 + Pt |h|^2 beta d^-alpha / noise)]."""
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    if not 0 < distance <= params.cell_radius:
        raise ValueError(f"distance must lie in (0, {params.cell_radius}], got {distance}")
    if power == 0:
        return 0.0
    snr = power * params.pathloss_gain * distance ** (-params.pathloss_exp) / params.noise_power
    return params.bandwidth * _mean_log_rate(snr, params.fading)


def required_power(params: ChannelParams, distance: float) -> float:
    """Transmit power giving rate r0 at ``distance``, by bisection."""
    if not 0 < distance <= params.cell_radius:
        raise ValueError(f"distance must lie in (0, {params.cell_radius}], got {distance}")
    r0 = params.target_rate
    hi = 10.0 * params.edge_power * (distance / params.cell_radius) ** params.pathloss_exp

    def f(p: float) -> float:
        return expected_rate(params, p, distance) - r0

    if f(hi) < 0:
        raise CalibrationError(
            f"Bracket [0, {hi:.6g}] W does not reach r0 at d={distance:.6g} m"
        )
    power = bisect(f, 0.0, hi, xtol=hi * 1e-15, rtol=1e-14, maxiter=500)
    if abs(f(power)) > RATE_RTOL * r0:
        raise CalibrationError(f"Bisection residual too large at d={distance:.6g} m")
    return power


@dataclass(frozen=True, slots=True)
class DistanceGrid:
    """Quantized distance classes.

    boundaries: d_1 < ... < d_M = R. multipliers: l_1 < ... < l_M, class m
    costs l_m units of unit_energy (Joule) per unicast.
    """
    boundaries: tuple[float, ...]
    multipliers: tuple[int, ...]
    unit_energy: float
    mode: str = "general"

    def __post_init__(self) -> None:
        if len(self.boundaries) != len(self.multipliers) or not self.boundaries:
            raise ValueError("boundaries and multipliers must be non-empty and equal length")
        _check_multipliers(self.multipliers)
        d = np.asarray(self.boundaries)
        if d[0] <= 0 or np.any(np.diff(d) <= 0):
            raise ValueError("boundaries must be positive and strictly increasing")
        if self.unit_energy <= 0:
            raise ValueError(f"unit_energy must be > 0, got {self.unit_energy}")
        if self.mode not in GRID_MODES:
            raise ValueError(f"Unknown grid mode: {self.mode!r}")

    @property
    def n_classes(self) -> int:
        return len(self.boundaries)

    @property
    def radius(self) -> float:
        return self.boundaries[-1]

    @property
    def annulus_fractions(self) -> NDArray[np.float64]:
        """Share of uniformly placed users falling in each class."""
        d = np.concatenate([[0.0], np.asarray(self.boundaries)]) / self.radius
        frac = np.diff(d ** 2)
        return frac / frac.sum()

    def class_boundary(self, m: int) -> float:
        """d_m, with d_0 = 0."""
        return 0.0 if m == 0 else self.boundaries[m - 1]


def _check_multipliers(multipliers) -> None:
    l = list(multipliers)
    if any(int(x) != x or x < 1 for x in l):
        raise ValueError(f"multipliers must be positive integers, got {l}")
    if any(b <= a for a, b in zip(l, l[1:])):
        raise ValueError(f"multipliers must be strictly increasing, got {l}")


def build_distance_grid(
    params: ChannelParams,
    classes: int,
    mode: str = "paper",
    multipliers: list[int] | tuple[int, ...] | None = None,
) -> DistanceGrid:
    """Solve the class boundaries d_m so that class m costs l_m energy units.

    paper mode: l = (1..M) and E_unit = Pt_R Tp / M. general mode: caller
    gives l; E_unit = Pt_R Tp / l_M so the edge class still lands on R.
    """
    if classes < 1:
        raise ValueError(f"classes must be >= 1, got {classes}")
    if mode not in GRID_MODES:
        raise ValueError(f"Unknown grid mode: {mode!r}")
    if mode == "paper":
        mult = tuple(range(1, classes + 1))
    else:
        if multipliers is None or len(multipliers) != classes:
            raise ValueError(f"general mode needs {classes} multipliers")
        _check_multipliers(multipliers)
        mult = tuple(int(x) for x in multipliers)

    params.check_calibration()
    R, Tp = params.cell_radius, params.slot_length
    unit = params.edge_power * Tp / mult[-1]

    bounds: list[float] = []
    for l in mult[:-1]:
        target = l * unit / Tp
        d = bisect(
            lambda r: required_power(params, r) - target,
            R * 1e-9, R, xtol=R * 1e-13, rtol=1e-13, maxiter=500,
        )
        bounds.append(d)
    bounds.append(R)

    for d, l in zip(bounds, mult):
        got = required_power(params, d) * Tp / unit
        if abs(got - l) > RATE_RTOL * l:
            raise CalibrationError(f"Grid class at d={d:.6g} costs {got:.6g} units, expected {l}")

    grid = DistanceGrid(tuple(bounds), mult, unit, mode)
    logger.info(
        "Distance grid: M=%d  d=%s m  E_unit=%.4g J",
        classes, ", ".join(f"{d:.3f}" for d in bounds), unit,
    )
    return grid


def mean_unicast_energy(grid: DistanceGrid) -> float:
    """Expected unicast energy of a uniformly placed user, in energy units."""
    return float(np.dot(grid.multipliers, grid.annulus_fractions))
