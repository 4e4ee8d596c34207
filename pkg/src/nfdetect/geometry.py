"""Device/scatterer geometry and per-device channel statistics.

The base station carries a uniform linear array with half-wavelength
spacing, centered at the origin along the x-axis.  Devices and scatterers
live in the 2-D plane.  Each device's channel is described by a
line-of-sight mean vector, a low-rank correlation factor built from
scatterer steering vectors, and a large-scale gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryConfig",
    "DeviceGeometry",
    "ChannelStats",
    "rayleigh_distance",
    "antenna_positions",
    "steering_vector",
    "los_vector",
    "correlation_factor",
    "identity_channel_stats",
    "apply_power_control",
    "pathloss_db",
    "pathloss_amplitude",
]


class GeometryError(ValueError):
    """Raised for degenerate geometric configurations."""


@dataclass(frozen=True)
class GeometryConfig:
    """Array geometry: wavelength, antenna count and cell dimensions.

    Antenna spacing is fixed at half a wavelength.
    """

    carrier_wavelength_m: float
    antenna_count: int
    cell_radius_m: float = 500.0
    scatterer_region_radius_m: float = 200.0

    def __post_init__(self):
        if self.carrier_wavelength_m <= 0:
            raise ValueError("wavelength must be positive")
        if self.antenna_count < 1:
            raise ValueError("antenna count must be positive")

    @property
    def antenna_spacing_m(self) -> float:
        return self.carrier_wavelength_m / 2.0

    @property
    def aperture_m(self) -> float:
        return (self.antenna_count - 1) * self.antenna_spacing_m


@dataclass(frozen=True)
class DeviceGeometry:
    """Position of one device and of the scatterers serving it."""

    position: tuple[float, float]
    scatterer_positions: tuple[tuple[float, float], ...] = ()
    is_near_field: bool = False


@dataclass
class ChannelStats:
    """Statistical channel model of one device.

    ``corr_factor`` is an M x r matrix F with implied correlation matrix
    R = F F^H.  ``los_mean`` is the deterministic component.  The
    large-scale gain is tr(R)/M.  ``is_identity_corr`` flags devices whose
    correlation matrix is a scaled identity (detected structurally, not
    numerically).
    """

    los_mean: np.ndarray
    corr_factor: np.ndarray
    is_identity_corr: bool = False
    geometry: DeviceGeometry | None = field(default=None, repr=False)

    @property
    def antenna_count(self) -> int:
        return self.los_mean.shape[0]

    @property
    def corr_rank(self) -> int:
        return self.corr_factor.shape[1]

    @property
    def large_scale_gain(self) -> float:
        # tr(F F^H) / M = ||F||_F^2 / M
        return float(np.sum(np.abs(self.corr_factor) ** 2)) / self.antenna_count

    def correlation_matrix(self) -> np.ndarray:
        return self.corr_factor @ self.corr_factor.conj().T

    def mean_energy(self) -> float:
        """E||h||^2 = ||los_mean||^2 + tr(R)."""
        return float(np.sum(np.abs(self.los_mean) ** 2)
                     + np.sum(np.abs(self.corr_factor) ** 2))


def rayleigh_distance(geom: GeometryConfig) -> float:
    """Near/far-field boundary 2 D^2 / lambda for aperture D."""
    return 2.0 * geom.aperture_m ** 2 / geom.carrier_wavelength_m


def antenna_positions(geom: GeometryConfig) -> np.ndarray:
    """(M, 2) antenna coordinates, centered ULA along the x-axis."""
    m = np.arange(geom.antenna_count)
    x = (m - (geom.antenna_count - 1) / 2.0) * geom.antenna_spacing_m
    return np.stack([x, np.zeros_like(x)], axis=1)


def steering_vector(point: tuple[float, float], geom: GeometryConfig,
                    gain: float) -> np.ndarray:
    """Spherical-wave steering vector from a point source to the array.

    Entry m is gain * exp(-j 2 pi / lambda * (d_m - d_0)) with d_m the exact
    distance to antenna m and d_0 the distance to the array midpoint.
    """
    p = np.asarray(point, dtype=float)
    ants = antenna_positions(geom)
    d = np.linalg.norm(ants - p[None, :], axis=1)
    d0 = np.linalg.norm(p)
    if d0 == 0.0 or np.any(d == 0.0):
        raise GeometryError("source coincides with an antenna or the array midpoint")
    phase = -2.0 * np.pi / geom.carrier_wavelength_m * (d - d0)
    return gain * np.exp(1j * phase)


def los_vector(device: DeviceGeometry, geom: GeometryConfig,
               gain: float) -> np.ndarray:
    """Line-of-sight mean vector of a device; all entries have modulus `gain`."""
    return steering_vector(device.position, geom, gain)


def correlation_factor(device: DeviceGeometry, geom: GeometryConfig,
                       scatterer_gains) -> np.ndarray:
    """Correlation factor F (M x l) with F F^H the scatterer-sum correlation.

    ``scatterer_gains`` is a sequence of (sigma_sq, dev_gain, bs_gain)
    triples, one per scatterer: intensity attenuation of the scatterer,
    scatterer-to-device channel gain, and scatterer-to-BS channel gain.
    Column l is sigma_l * |dev_gain_l| * steering(scatterer_l, bs_gain_l),
    so that F F^H = sum_l sigma_l^2 |dev_gain_l|^2 h_l h_l^H.
    """
    scatterer_gains = list(scatterer_gains)
    if len(scatterer_gains) != len(device.scatterer_positions):
        raise GeometryError("one gain triple required per scatterer")
    if not scatterer_gains:
        raise GeometryError("correlated device declared without scatterers")
    cols = []
    for pos, (sigma_sq, dev_gain, bs_gain) in zip(device.scatterer_positions,
                                                  scatterer_gains):
        h = steering_vector(pos, geom, bs_gain)
        cols.append(np.sqrt(sigma_sq) * abs(dev_gain) * h)
    return np.stack(cols, axis=1)


def identity_channel_stats(m_antennas: int, gain: float,
                           los_mean: np.ndarray | None = None) -> ChannelStats:
    """Far-field device: R = gain * I, factor sqrt(gain) * I."""
    if los_mean is None:
        los_mean = np.zeros(m_antennas, dtype=complex)
    factor = np.sqrt(gain) * np.eye(m_antennas, dtype=complex)
    return ChannelStats(los_mean=los_mean, corr_factor=factor,
                        is_identity_corr=True)


def apply_power_control(stats: ChannelStats, target: float) -> ChannelStats:
    """Scale mean and factor by one common amplitude so E||h||^2 = target.

    A single factor preserves the Rician K-factor of the device.
    """
    energy = stats.mean_energy()
    if energy <= 0:
        raise ValueError("cannot power-control all-zero channel statistics")
    scale = np.sqrt(target / energy)
    return ChannelStats(
        los_mean=scale * stats.los_mean,
        corr_factor=scale * stats.corr_factor,
        is_identity_corr=stats.is_identity_corr,
        geometry=stats.geometry,
    )


def pathloss_db(distance_km: float) -> float:
    """Path loss 128.1 + 37.6 log10(d) in dB for distance d in km."""
    if distance_km <= 0:
        raise ValueError("distance must be positive")
    return 128.1 + 37.6 * np.log10(distance_km)


def pathloss_amplitude(distance_km: float) -> float:
    """Amplitude gain corresponding to :func:`pathloss_db`."""
    return 10.0 ** (-pathloss_db(distance_km) / 20.0)
