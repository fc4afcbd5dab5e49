"""Propagation scenario configurations and the built-in preset catalog.

Presets cover the three urban-microcell flavors used for the continual
task sequence (compact / dense / standard), the three macrocell arrays,
and the nine cross-parameterization scenarios (A/B/C families) that
exercise wide swings in aperture, spacing, height, downtilt, and range.
"""

from __future__ import annotations

from dataclasses import dataclass, replace, asdict

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Full parameter set for one propagation scenario.

    Angles are in degrees, heights and distances in meters, spacing in
    wavelengths.  ``n_snapshots`` is the number of equally spaced track
    positions per user drop and ``track_length_m`` the total walk length,
    so the spatial step is ``track_length_m / (n_snapshots - 1)``.
    """

    name: str
    carrier_hz: float = 5e9
    bandwidth_hz: float = 100e6
    n_tx: int = 8
    n_rx: int = 2
    n_rb: int = 18
    tilt_deg: float = 0.0
    spacing_wavelengths: float = 0.5
    rx_spacing_wavelengths: float = 0.5
    tx_height_m: float = 10.0
    ue_height_m: float = 1.5
    dist_min_m: float = 50.0
    dist_max_m: float = 100.0
    pathloss_exponent: float = 3.1
    shadowing_sigma_db: float = 4.0
    theta3db_deg: float = 10.0
    sla_v_db: float = 20.0
    g_max_db: float = 8.0
    los_scale_m: float = 300.0
    n_clusters: int = 12
    n_clusters_spread: int = 8
    delay_spread_s: float = 50e-9
    delay_spread_sigma_dex: float = 0.25
    bulk_delay_s: float = 0.0
    los_power_fraction: float = 0.6
    n_snapshots: int = 500
    track_length_m: float = 2.0
    default_users: int = 256

    def __post_init__(self):
        if not self.dist_min_m < self.dist_max_m:
            raise ConfigError(f"{self.name}: need dist_min < dist_max")
        if min(self.n_tx, self.n_rx, self.n_rb, self.n_clusters, self.n_snapshots) < 1:
            raise ConfigError(f"{self.name}: all counts must be >= 1")
        if self.spacing_wavelengths <= 0 or self.rx_spacing_wavelengths <= 0:
            raise ConfigError(f"{self.name}: element spacing must be positive")
        if self.theta3db_deg <= 0:
            raise ConfigError(f"{self.name}: theta3db must be positive")
        if self.n_snapshots < 2:
            raise ConfigError(f"{self.name}: need at least 2 snapshots per track")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def step_m(self) -> float:
        return self.track_length_m / (self.n_snapshots - 1)

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.bandwidth_hz / self.n_rb

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)


def desk_scale(config: ScenarioConfig) -> ScenarioConfig:
    """Shrink antenna/resource-block counts for laptop-scale experiments.

    Keeps the temporal sampling (snapshot count, track length) untouched
    so the spatial step, and with it the lag-1 channel correlation, is
    identical to the full-size scenario.
    """
    return replace(config, n_tx=4, n_rb=6, n_rx=2, default_users=64)


def _umi(name, **kw) -> ScenarioConfig:
    base = dict(carrier_hz=5e9, bandwidth_hz=100e6, n_tx=8, n_rx=2,
                n_rb=18, n_snapshots=500)
    base.update(kw)
    return ScenarioConfig(name=name, **base)


def _uma(name, **kw) -> ScenarioConfig:
    base = dict(carrier_hz=2.6e9, bandwidth_hz=20e6, n_rx=2, n_rb=18,
                n_snapshots=30, tx_height_m=25.0, ue_height_m=1.5,
                dist_min_m=100.0, dist_max_m=500.0)
    base.update(kw)
    return ScenarioConfig(name=name, **base)


# Pathloss exponents for the cross-parameterization families: NLOS cells
# keep the urban-micro NLOS value, LOS-profile cells use near-free-space.
_ALPHA_LOS = 2.1
_ALPHA_NLOS = 3.1

PRESETS: dict[str, ScenarioConfig] = {}


def _register(cfg: ScenarioConfig) -> None:
    PRESETS[cfg.name] = cfg


# Urban microcell flavors (the continual-learning task sequence).
_register(_umi("umi-standard", tilt_deg=30.0, spacing_wavelengths=0.50,
               dist_min_m=50.0, dist_max_m=100.0,
               tx_height_m=10.0, ue_height_m=1.5, delay_spread_s=60e-9,
               bulk_delay_s=75.0 / SPEED_OF_LIGHT))
_register(_umi("umi-dense", tilt_deg=10.0, spacing_wavelengths=0.25,
               dist_min_m=20.0, dist_max_m=60.0,
               tx_height_m=6.0, ue_height_m=1.0, delay_spread_s=60e-9,
               bulk_delay_s=40.0 / SPEED_OF_LIGHT))
_register(_umi("umi-compact", tilt_deg=0.0, spacing_wavelengths=1.00,
               dist_min_m=120.0, dist_max_m=200.0,
               tx_height_m=15.0, ue_height_m=2.0, delay_spread_s=60e-9,
               bulk_delay_s=160.0 / SPEED_OF_LIGHT))

# Urban macrocell arrays.
_register(_uma("uma-standard", n_tx=32, tilt_deg=12.0, spacing_wavelengths=0.50))
_register(_uma("uma-large-hv", n_tx=60, tilt_deg=10.0, spacing_wavelengths=0.60))
_register(_uma("uma-small-v", n_tx=12, tilt_deg=15.0, spacing_wavelengths=0.50))

# Cross-parameterization family A: canonical geometry.
_register(_umi("umi-standard-a", n_tx=16, tx_height_m=35.0, tilt_deg=6.0,
               spacing_wavelengths=2.0 / 3.0, dist_min_m=80.0, dist_max_m=150.0,
               pathloss_exponent=_ALPHA_LOS))
_register(_umi("umi-dense-a", n_tx=4, tx_height_m=10.0, tilt_deg=0.0,
               spacing_wavelengths=0.25, dist_min_m=10.0, dist_max_m=60.0,
               pathloss_exponent=_ALPHA_NLOS, delay_spread_s=30e-9))
_register(_umi("umi-compact-a", n_tx=32, tx_height_m=25.0, tilt_deg=30.0,
               spacing_wavelengths=2.5, dist_min_m=40.0, dist_max_m=100.0,
               pathloss_exponent=_ALPHA_LOS, delay_spread_s=100e-9))

# Family B: macro / hot-spot contrast.
_register(_umi("umi-standard-b", n_tx=64, tx_height_m=45.0, tilt_deg=8.0,
               spacing_wavelengths=1.2, dist_min_m=150.0, dist_max_m=300.0,
               pathloss_exponent=_ALPHA_LOS))
_register(_umi("umi-dense-b", n_tx=2, tx_height_m=6.0, tilt_deg=0.0,
               spacing_wavelengths=0.15, dist_min_m=5.0, dist_max_m=30.0,
               pathloss_exponent=_ALPHA_NLOS, delay_spread_s=30e-9))
# Mount height is not spelled out for this cell; it reuses the family-A
# compact rooftop value.
_register(_umi("umi-compact-b", n_tx=32, tx_height_m=25.0, tilt_deg=35.0,
               spacing_wavelengths=3.0, dist_min_m=40.0, dist_max_m=120.0,
               pathloss_exponent=_ALPHA_LOS, delay_spread_s=100e-9))

# Family C: suburban / indoor mix.
_register(_umi("umi-standard-c", n_tx=16, tx_height_m=25.0, tilt_deg=0.0,
               spacing_wavelengths=1.0, dist_min_m=100.0, dist_max_m=180.0,
               pathloss_exponent=_ALPHA_LOS))
_register(_umi("umi-dense-c", n_tx=8, tx_height_m=3.0, tilt_deg=-15.0,
               spacing_wavelengths=0.5, dist_min_m=2.0, dist_max_m=15.0,
               pathloss_exponent=_ALPHA_NLOS, delay_spread_s=30e-9))
_register(_umi("umi-compact-c", n_tx=36, tx_height_m=30.0, tilt_deg=20.0,
               spacing_wavelengths=2.0, dist_min_m=60.0, dist_max_m=140.0,
               pathloss_exponent=_ALPHA_LOS, delay_spread_s=100e-9))


def get_preset(name: str, desk: bool = False) -> ScenarioConfig:
    """Look up a named preset, optionally shrunk to desk scale."""
    try:
        cfg = PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown scenario '{name}' (known: {known})") from None
    return desk_scale(cfg) if desk else cfg
