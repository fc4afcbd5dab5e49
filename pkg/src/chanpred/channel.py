"""Synthetic correlated channel generator ("quadriga-lite").

Each user is dropped uniformly on an annulus, walks a short linear track
sampled at equally spaced snapshots, and sees a sum of scattering
clusters.  Every cluster contributes three phase factors:

* a subcarrier ramp  exp(-j 2 pi k df tau)        (delay),
* an array ramp      exp(+j 2 pi d m sin(theta))  (element index),
* a motion ramp      exp(-j k_vec . p_t)          (track position),

so consecutive snapshots stay correlated like J0(2 pi ds / lambda) for a
uniform ring of scatterer directions.  Large-scale power combines a
vertical antenna pattern, log-distance pathloss, and log-normal
shadowing; line-of-sight is drawn from the distance law exp(-d / 300).

The module also owns the binary container ("CTNS") used for dataset and
buffer snapshots: complex tensors are stored as interleaved real/imag
float pairs behind a little-endian header.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .numerics import bessel_j0
from .scenarios import ScenarioConfig

__all__ = [
    "UserTrack",
    "ClusterSet",
    "ChannelDataset",
    "drop_users",
    "los_state",
    "antenna_gain",
    "large_scale_gain",
    "spatial_correlation",
    "gain_variance",
    "draw_clusters",
    "synthesize_channel",
    "generate_dataset",
    "write_ctns",
    "read_ctns",
    "write_dataset",
    "read_dataset",
]


@dataclass
class UserTrack:
    """A straight walk of ``n_snapshots`` equally spaced positions."""

    p0: np.ndarray          # (3,) start position [m]
    azimuth_rad: float      # walking direction
    length_m: float
    n_snapshots: int

    @property
    def step_m(self) -> float:
        return self.length_m / (self.n_snapshots - 1)

    def positions(self) -> np.ndarray:
        """All track positions, shape (n_snapshots, 3)."""
        frac = np.arange(self.n_snapshots) / (self.n_snapshots - 1)
        direction = np.array([math.cos(self.azimuth_rad), math.sin(self.azimuth_rad), 0.0])
        return self.p0[None, :] + frac[:, None] * self.length_m * direction[None, :]


@dataclass
class ClusterSet:
    """Per-cluster amplitudes, delays, angles, and UE-side wavevectors."""

    amplitudes: np.ndarray    # (L,) complex, sum |a|^2 == 1
    delays_s: np.ndarray      # (L,) >= 0
    departure_rad: np.ndarray  # (L,) transmit-side angle
    arrival_rad: np.ndarray    # (L,) receive-side angle
    wavevectors: np.ndarray    # (L, 3) rad/m, in the horizontal plane


@dataclass
class ChannelDataset:
    """Generated tensor plus the metadata needed to regenerate it.

    ``tensor`` has in-memory axes [time, rb, tx, rx, user] (complex); on
    disk the axes are reordered to [time, rx, rb, tx, user] and each
    complex entry becomes an interleaved float32 real/imag pair.
    """

    tensor: np.ndarray
    scenario: ScenarioConfig
    seed: int
    n_users: int
    iteration: int
    los: np.ndarray        # (U,) bool
    gains_db: np.ndarray   # (U,) large-scale gain per user

    @property
    def disk_shape(self) -> tuple:
        t, rb, tx, rx, u = self.tensor.shape
        return (t, rx, rb, tx, u)


# --- elementary statistics -------------------------------------------------


def los_state(d, rng, scale_m=300.0):
    """Draw the line-of-sight indicator, Pr[LOS] = exp(-d / scale)."""
    if d < 0:
        raise ConfigError("distance must be nonnegative")
    return bool(rng.random() < math.exp(-d / scale_m))


def antenna_gain(theta_deg, config: ScenarioConfig):
    """Vertical pattern gain in dB: G_max - min(12 ((t - tilt)/t3db)^2, SLA)."""
    off = (np.asarray(theta_deg, dtype=float) - config.tilt_deg) / config.theta3db_deg
    attenuation = np.minimum(12.0 * off * off, config.sla_v_db)
    out = config.g_max_db - attenuation
    return float(out) if np.ndim(theta_deg) == 0 else out


def elevation_angle_deg(r_m, config: ScenarioConfig):
    """Downward elevation angle from the array to a user at range r."""
    return math.degrees(math.atan((config.tx_height_m - config.ue_height_m) / r_m))


def large_scale_gain(r_m, config: ScenarioConfig, rng):
    """Large-scale channel gain in dB at range r.

    Combines the tilt-dependent pattern gain at the geometric elevation
    angle, log-distance pathloss, and a log-normal shadowing draw.
    """
    if r_m <= 0:
        raise ConfigError("range must be positive")
    g_pattern = antenna_gain(elevation_angle_deg(r_m, config), config)
    shadow = config.shadowing_sigma_db * rng.standard_normal() if config.shadowing_sigma_db > 0 else 0.0
    return g_pattern - 10.0 * config.pathloss_exponent * math.log10(r_m) + shadow


def spatial_correlation(delta_r_m, wavelength_m):
    """Small-scale correlation J0(2 pi |dr| / lambda) of an isotropic ring."""
    if wavelength_m <= 0:
        raise ConfigError("wavelength must be positive")
    return bessel_j0(2.0 * math.pi * np.abs(delta_r_m) / wavelength_m)


def gain_variance(n_elements, spacing_wavelengths):
    """Variance proxy 2 sum_k (N - k) J0(2 pi d k)^2 of instantaneous array power.

    Wider spacing decorrelates elements and tightens the gain histogram;
    N = 1 gives exactly zero (empty sum).
    """
    if n_elements < 1:
        raise ConfigError("need at least one element")
    total = 0.0
    for k in range(1, n_elements):
        rho = bessel_j0(2.0 * math.pi * spacing_wavelengths * k)
        total += (n_elements - k) * rho * rho
    return 2.0 * total


# --- user drops and cluster draws ------------------------------------------


def _drop_single(config: ScenarioConfig, rng, n_jitter=0, jitter_m=0.1) -> UserTrack:
    d = rng.uniform(config.dist_min_m, config.dist_max_m)
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    p0 = np.array([d * math.cos(azimuth), d * math.sin(azimuth), config.ue_height_m])
    for _ in range(n_jitter):
        p0 = p0 + np.array([rng.uniform(-jitter_m, jitter_m),
                            rng.uniform(-jitter_m, jitter_m), 0.0])
    return UserTrack(p0=p0, azimuth_rad=azimuth,
                     length_m=config.track_length_m, n_snapshots=config.n_snapshots)


def drop_users(config: ScenarioConfig, n_users, rng):
    """Drop users uniformly on the configured annulus with random headings."""
    if n_users < 1:
        raise ConfigError("need at least one user")
    return [_drop_single(config, rng) for _ in range(n_users)]


def draw_clusters(config: ScenarioConfig, los: bool, rng, delay_spread_s=None,
                  n_clusters=None) -> ClusterSet:
    """Draw one user's cluster parameters.

    Amplitudes are complex Gaussian normalized to unit total power; under
    LOS a dominant zero-delay cluster carries ``los_power_fraction`` of it.
    Delays are exponential with the (per-user) spread; departure, arrival,
    and scatterer directions are uniform on the ring.
    """
    L = config.n_clusters if n_clusters is None else int(n_clusters)
    spread = config.delay_spread_s if delay_spread_s is None else delay_spread_s
    amp = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / math.sqrt(2.0)
    delays = rng.exponential(spread, size=L)
    if los and L > 1:
        frac = config.los_power_fraction
        tail = amp[1:]
        tail_power = np.sum(np.abs(tail) ** 2)
        amp[1:] = tail * math.sqrt((1.0 - frac) / tail_power)
        amp[0] = math.sqrt(frac) * np.exp(1j * rng.uniform(0.0, 2.0 * math.pi))
        delays[0] = 0.0
    else:
        amp = amp / math.sqrt(np.sum(np.abs(amp) ** 2))
    departure = rng.uniform(0.0, 2.0 * math.pi, size=L)
    arrival = rng.uniform(0.0, 2.0 * math.pi, size=L)
    scatter_az = rng.uniform(0.0, 2.0 * math.pi, size=L)
    k_mag = 2.0 * math.pi / config.wavelength_m
    wavevec = k_mag * np.stack([np.cos(scatter_az), np.sin(scatter_az),
                                np.zeros(L)], axis=1)
    return ClusterSet(amplitudes=amp, delays_s=delays, departure_rad=departure,
                      arrival_rad=arrival, wavevectors=wavevec)


def synthesize_channel(track: UserTrack, clusters: ClusterSet, config: ScenarioConfig):
    """Cluster-sum channel for one user, shape (T, n_rb, n_tx, n_rx).

    Unit large-scale power: the caller applies the large-scale amplitude.
    """
    if clusters.amplitudes.size == 0:
        raise ConfigError("cluster set is empty")
    positions = track.positions()                             # (T, 3)
    df = config.subcarrier_spacing_hz
    motion = np.exp(-1j * positions @ clusters.wavevectors.T)   # (T, L)
    rb_idx = np.arange(config.n_rb)
    # total delay = cell timing offset + per-cluster excess delay
    tau = clusters.delays_s + config.bulk_delay_s
    ramp = np.exp(-2j * math.pi * df * np.outer(rb_idx, tau))  # (K, L)
    m_idx = np.arange(config.n_tx)
    tx = np.exp(2j * math.pi * config.spacing_wavelengths
                * np.outer(m_idx, np.sin(clusters.departure_rad)))           # (M, L)
    n_idx = np.arange(config.n_rx)
    rx = np.exp(2j * math.pi * config.rx_spacing_wavelengths
                * np.outer(n_idx, np.sin(clusters.arrival_rad)))             # (N, L)
    h = np.ascontiguousarray(
        np.einsum("l,tl,kl,ml,nl->tkmn", clusters.amplitudes, motion, ramp, tx, rx,
                  optimize=True))
    if not np.all(np.isfinite(h.view(float))):
        raise DataError("channel synthesis produced non-finite values")
    return h


def generate_dataset(config: ScenarioConfig, n_users, seed, iteration=0) -> ChannelDataset:
    """Generate the full per-scenario tensor [T, rb, tx, rx, users].

    Deterministic in (config, n_users, seed, iteration): each user owns an
    independent child stream spawned from the master seed, so generation
    could run user-parallel without changing a single byte.  Increasing
    ``iteration`` re-jitters every start position by <= 0.1 m per step
    while keeping all cluster draws, which makes consecutive iterations
    strongly correlated.
    """
    if n_users < 1:
        raise ConfigError("need at least one user")
    shape = (config.n_snapshots, config.n_rb, config.n_tx, config.n_rx, n_users)
    tensor = np.empty(shape, dtype=np.complex64)
    los_flags = np.zeros(n_users, dtype=bool)
    gains_db = np.zeros(n_users)
    children = np.random.SeedSequence(seed).spawn(n_users)
    for u in range(n_users):
        rng = np.random.default_rng(children[u])
        d = rng.uniform(config.dist_min_m, config.dist_max_m)
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        los = los_state(d, rng, config.los_scale_m)
        # Per-user log-normal delay spread: clutter richness varies user to
        # user around the scenario's median, so sample difficulty is not
        # decided by scenario identity alone.
        spread = config.delay_spread_s
        if config.delay_spread_sigma_dex > 0:
            spread *= 10.0 ** (config.delay_spread_sigma_dex * rng.standard_normal())
        n_cl = config.n_clusters
        if config.n_clusters_spread > 0:
            lo = max(1, config.n_clusters - config.n_clusters_spread)
            hi = config.n_clusters + config.n_clusters_spread
            n_cl = int(rng.integers(lo, hi + 1))
        clusters = draw_clusters(config, los, rng, delay_spread_s=spread,
                                 n_clusters=n_cl)
        gain_db = large_scale_gain(d, config, rng)
        p0 = np.array([d * math.cos(azimuth), d * math.sin(azimuth), config.ue_height_m])
        # Jitter a third of a wavelength at 5 GHz: small enough that the
        # motion phase keeps consecutive iterations visibly correlated.
        for _ in range(iteration):
            p0 = p0 + np.array([rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), 0.0])
        track = UserTrack(p0=p0, azimuth_rad=azimuth,
                          length_m=config.track_length_m, n_snapshots=config.n_snapshots)
        amp = 10.0 ** (gain_db / 20.0)
        tensor[..., u] = (amp * synthesize_channel(track, clusters, config)).astype(np.complex64)
        los_flags[u] = los
        gains_db[u] = gain_db
    return ChannelDataset(tensor=tensor, scenario=config, seed=int(seed),
                          n_users=int(n_users), iteration=int(iteration),
                          los=los_flags, gains_db=gains_db)


# --- CTNS container ---------------------------------------------------------

_MAGIC = b"CTNS"
_VERSION = 1
_PRECISIONS = {0: np.complex64, 1: np.complex128}
_FLAGS = {np.dtype(np.complex64): 0, np.dtype(np.complex128): 1}


def write_ctns(path, array):
    """Write a complex tensor: magic, version, precision, rank, dims, payload.

    The payload is the tensor in C order with each complex entry stored as
    an interleaved (real, imag) float pair of the array's precision.
    """
    array = np.ascontiguousarray(array)
    if array.dtype not in _FLAGS:
        array = array.astype(np.complex64)
    flag = _FLAGS[array.dtype]
    float_dtype = np.float32 if flag == 0 else np.float64
    wire = "<f4" if flag == 0 else "<f8"
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HB", _VERSION, array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(struct.pack("<B", flag))
        fh.write(array.view(float_dtype).astype(wire, copy=False).tobytes())


def read_ctns(path):
    """Read a complex tensor written by :func:`write_ctns`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        version, rank = struct.unpack("<HB", fh.read(3))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        (flag,) = struct.unpack("<B", fh.read(1))
        if flag not in _PRECISIONS:
            raise DataError(f"{path}: unknown precision flag {flag}")
        cdtype = _PRECISIONS[flag]
        fdtype = np.float32 if flag == 0 else np.float64
        wire = "<f4" if flag == 0 else "<f8"
        count = 2 * int(np.prod(dims)) if rank else 2
        payload = np.fromfile(fh, dtype=wire, count=count)
        if payload.size != count:
            raise DataError(f"{path}: truncated payload")
    return payload.astype(fdtype, copy=False).view(cdtype).reshape(dims)


def read_ctns_header(path):
    """Header-only read: returns (version, precision_flag, dims)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        version, rank = struct.unpack("<HB", fh.read(3))
        dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        (flag,) = struct.unpack("<B", fh.read(1))
    return version, flag, dims


def write_dataset(dataset: ChannelDataset, prefix):
    """Write ``<prefix>.ctns`` (tensor) and ``<prefix>.json`` (sidecar).

    The on-disk tensor axes are [time, rx, rb, tx, user] in float32
    precision, so the standard full-size microcell drop lands on disk as
    [500 x 2 x 18 x 8 x 256].
    """
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    tensor_path = prefix.parent / (prefix.name + ".ctns")
    meta_path = prefix.parent / (prefix.name + ".json")
    disk = np.ascontiguousarray(
        np.transpose(dataset.tensor, (0, 3, 1, 2, 4)).astype(np.complex64))
    write_ctns(tensor_path, disk)
    sidecar = {
        "scenario": dataset.scenario.to_dict(),
        "seed": dataset.seed,
        "n_users": dataset.n_users,
        "iteration": dataset.iteration,
        "los": [bool(v) for v in dataset.los],
        "gains_db": [float(v) for v in dataset.gains_db],
        "axes_disk": ["time", "rx", "rb", "tx", "user"],
    }
    with open(meta_path, "w") as fh:
        json.dump(sidecar, fh, indent=1)
    return tensor_path, meta_path


def read_dataset(prefix) -> ChannelDataset:
    """Round-trip counterpart of :func:`write_dataset`."""
    prefix = Path(prefix)
    meta_path = prefix.parent / (prefix.name + ".json")
    if not meta_path.exists():
        raise DataError(f"missing sidecar: {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    disk = read_ctns(prefix.parent / (prefix.name + ".ctns"))
    scenario = ScenarioConfig.from_dict(meta["scenario"])
    expected = (scenario.n_snapshots, scenario.n_rx, scenario.n_rb,
                scenario.n_tx, meta["n_users"])
    if tuple(disk.shape) != expected:
        raise DataError(f"{prefix}: header dims {disk.shape} do not match sidecar {expected}")
    tensor = np.ascontiguousarray(np.transpose(disk, (0, 2, 3, 1, 4)))
    return ChannelDataset(tensor=tensor, scenario=scenario, seed=meta["seed"],
                          n_users=meta["n_users"], iteration=meta["iteration"],
                          los=np.array(meta["los"], dtype=bool),
                          gains_db=np.array(meta["gains_db"]))
