"""Receiver/satellite scenarios and pseudorange sampling.

All quantities are SI meters in an ECEF-like frame. Everything here is a
pure function of its inputs (plus an explicit seed), so concurrent use is
safe and results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ConstellationSamplingError, GeometryError

EARTH_RADIUS_M = 6_371_000.0

# Standard GPS-like defaults; the method itself does not depend on them and
# they are overridable everywhere they appear.
DEFAULT_ORBIT_RADIUS_M = 26_560_000.0
DEFAULT_ELEVATION_MASK_DEG = 10.0
DEFAULT_SIGMA_V_M = 3.0
DEFAULT_BIAS_M = 1.0e5

_MIN_SEPARATION_M = 1.0
_RANK_TOL_REL = 1e-9
_DRAW_BATCH = 256


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _ranges(receiver: np.ndarray, satellites: np.ndarray) -> np.ndarray:
    return np.linalg.norm(satellites - receiver[None, :], axis=1)


@dataclass
class ScenarioGeometry:
    """A receiver position plus ``m`` satellite positions.

    Parameters
    ----------
    receiver : (3,) array
        Receiver position, meters.
    satellites : (m, 3) array
        One satellite position per row, meters.

    Raises
    ------
    GeometryError
        If fewer than 5 satellites are given, any two points (satellites or
        receiver) are closer than 1 m, or the full point set is coplanar
        (rank of the centered position stack < 3).
    """

    receiver: np.ndarray
    satellites: np.ndarray

    def __post_init__(self):
        self.receiver = np.asarray(self.receiver, dtype=float).reshape(3)
        self.satellites = np.atleast_2d(np.asarray(self.satellites, dtype=float))
        if self.satellites.shape[1] != 3:
            raise GeometryError(
                f"satellites must be (m, 3), got {self.satellites.shape}"
            )
        m = self.m
        if m < 5:
            raise GeometryError(
                f"need at least 5 satellites for a 5-eigenvalue test statistic, got {m}"
            )
        pts = np.vstack([self.receiver, self.satellites])
        diffs = pts[:, None, :] - pts[None, :, :]
        dist = np.linalg.norm(diffs, axis=2)
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= _MIN_SEPARATION_M:
            i, j = np.unravel_index(np.argmin(dist), dist.shape)
            raise GeometryError(
                f"points {i} and {j} are {dist[i, j]:.3g} m apart "
                f"(min separation {_MIN_SEPARATION_M} m; index 0 is the receiver)"
            )
        centered = pts - pts.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[2] <= _RANK_TOL_REL * sv[0]:
            raise GeometryError(
                "receiver and satellites are coplanar (centered position stack has "
                f"rank < 3: singular values {sv[:3]})"
            )
        self.receiver.flags.writeable = False
        self.satellites.flags.writeable = False

    @property
    def m(self) -> int:
        return self.satellites.shape[0]


@dataclass
class NoiseModel:
    """Pseudorange error model: i.i.d. N(0, sigma_v^2) noise plus a clock bias.

    ``bias_inflation`` is an additive artificial bias used to separate the
    fourth and fifth eigenvalues when the physical bias alone is too small.
    """

    sigma_v: float
    bias_b: float = DEFAULT_BIAS_M
    bias_inflation: float = 0.0

    def __post_init__(self):
        if not self.sigma_v > 0:
            raise ValueError(f"sigma_v must be > 0, got {self.sigma_v}")

    @property
    def effective_bias(self) -> float:
        return self.bias_b + self.bias_inflation


@dataclass
class PseudorangeSample:
    """Measured pseudoranges with their generating ingredients.

    ``v`` is the noise draw (None for field data). When present,
    ``rho = d_true + b_effective + v`` holds to machine precision.
    """

    rho: np.ndarray
    d_true: np.ndarray
    b_effective: float
    v: np.ndarray | None = None
    fault_index: int | None = None
    fault_bias: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.d_true = np.asarray(self.d_true, dtype=float)
        if self.v is not None:
            self.v = np.asarray(self.v, dtype=float)

    @property
    def m(self) -> int:
        return self.rho.shape[0]


def generate_constellation(
    n_sats: int,
    elevation_mask_deg: float = DEFAULT_ELEVATION_MASK_DEG,
    orbit_radius_m: float = DEFAULT_ORBIT_RADIUS_M,
    seed: int | None = None,
) -> ScenarioGeometry:
    """Draw a random receiver and ``n_sats`` visible satellites.

    The receiver is placed uniformly on a spherical Earth; satellites are
    drawn uniformly on the orbit sphere and kept only if their elevation as
    seen from the receiver is at least ``elevation_mask_deg``. Deterministic
    for a fixed seed.

    Raises
    ------
    ConstellationSamplingError
        If the rejection loop hits its draw cap (mask too high for the
        requested satellite count).
    """
    if n_sats < 5:
        raise GeometryError(f"n_sats must be >= 5, got {n_sats}")
    if not 0.0 <= elevation_mask_deg < 90.0:
        raise GeometryError(
            f"elevation mask must lie in [0, 90) degrees, got {elevation_mask_deg}"
        )
    if orbit_radius_m <= EARTH_RADIUS_M:
        raise GeometryError(
            f"orbit radius {orbit_radius_m} m must exceed the Earth radius "
            f"{EARTH_RADIUS_M} m"
        )

    rng = np.random.default_rng(seed)
    up = _unit(rng.normal(size=3))
    receiver = EARTH_RADIUS_M * up
    sin_mask = np.sin(np.radians(elevation_mask_deg))

    cap = max(200_000, 20_000 * n_sats)
    kept: list[np.ndarray] = []
    draws = 0
    while len(kept) < n_sats:
        if draws >= cap:
            raise ConstellationSamplingError(
                f"placed only {len(kept)}/{n_sats} satellites after {draws} draws; "
                f"elevation mask {elevation_mask_deg} deg is too restrictive"
            )
        pts = rng.normal(size=(_DRAW_BATCH, 3))
        pts *= orbit_radius_m / np.linalg.norm(pts, axis=1)[:, None]
        draws += _DRAW_BATCH
        los = pts - receiver[None, :]
        sin_el = (los @ up) / np.linalg.norm(los, axis=1)
        for p in pts[sin_el >= sin_mask]:
            kept.append(p)
            if len(kept) == n_sats:
                break
    return ScenarioGeometry(receiver=receiver, satellites=np.array(kept))


def true_ranges(g: ScenarioGeometry) -> np.ndarray:
    """Euclidean distance from the receiver to each satellite, meters."""
    return _ranges(g.receiver, g.satellites)


def elevation_angles(g: ScenarioGeometry) -> np.ndarray:
    """Elevation of each satellite in degrees (spherical-Earth up vector)."""
    up = _unit(g.receiver)
    los = g.satellites - g.receiver[None, :]
    sin_el = (los @ up) / np.linalg.norm(los, axis=1)
    return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))


def sample_pseudoranges(
    d: np.ndarray,
    nm: NoiseModel,
    seed: int | np.random.SeedSequence | np.random.Generator | None,
) -> PseudorangeSample:
    """Draw one noisy pseudorange vector: rho = d + effective bias + v.

    ``v`` is i.i.d. N(0, sigma_v^2); the draw is deterministic per seed.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise GeometryError("true ranges must all be positive")
    rng = np.random.default_rng(seed)
    v = rng.normal(0.0, nm.sigma_v, size=d.shape[0])
    b = nm.effective_bias
    return PseudorangeSample(rho=d + b + v, d_true=d, b_effective=b, v=v)


def nominal_pseudoranges(d: np.ndarray, nm: NoiseModel) -> PseudorangeSample:
    """The exact noiseless sample rho = d + effective bias (v = 0)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise GeometryError("true ranges must all be positive")
    b = nm.effective_bias
    return PseudorangeSample(rho=d + b, d_true=d, b_effective=b, v=np.zeros_like(d))


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------
#
# YAML mapping with SI-meter values. Either an explicit point set:
#
#   receiver: [x, y, z]
#   satellites: [[x, y, z], ...]
#
# or generated geometry:
#
#   constellation: {n_sats: 12, elevation_mask_deg: 10.0,
#                   orbit_radius_m: 26560000.0}
#   seed: 1
#
# plus the noise keys (all optional): sigma_v, bias_b, bias_inflation.

def parse_scenario(mapping: dict) -> tuple[ScenarioGeometry, NoiseModel]:
    """Build (geometry, noise model) from a scenario mapping."""
    if not isinstance(mapping, dict):
        raise ConfigError(f"scenario must be a mapping, got {type(mapping).__name__}")
    has_explicit = "receiver" in mapping or "satellites" in mapping
    has_generated = "constellation" in mapping
    if has_explicit and has_generated:
        raise ConfigError("give either receiver/satellites or constellation, not both")
    if has_explicit:
        if "receiver" not in mapping or "satellites" not in mapping:
            raise ConfigError("explicit scenarios need both receiver and satellites")
        geom = ScenarioGeometry(
            receiver=np.asarray(mapping["receiver"], dtype=float),
            satellites=np.asarray(mapping["satellites"], dtype=float),
        )
    elif has_generated:
        params = dict(mapping["constellation"] or {})
        unknown = set(params) - {"n_sats", "elevation_mask_deg", "orbit_radius_m"}
        if unknown:
            raise ConfigError(f"unknown constellation keys: {sorted(unknown)}")
        geom = generate_constellation(
            n_sats=int(params.get("n_sats", 12)),
            elevation_mask_deg=float(
                params.get("elevation_mask_deg", DEFAULT_ELEVATION_MASK_DEG)
            ),
            orbit_radius_m=float(params.get("orbit_radius_m", DEFAULT_ORBIT_RADIUS_M)),
            seed=int(mapping.get("seed", 1)),
        )
    else:
        raise ConfigError("scenario needs receiver/satellites or a constellation block")
    nm = NoiseModel(
        sigma_v=float(mapping.get("sigma_v", DEFAULT_SIGMA_V_M)),
        bias_b=float(mapping.get("bias_b", DEFAULT_BIAS_M)),
        bias_inflation=float(mapping.get("bias_inflation", 0.0)),
    )
    return geom, nm


def load_scenario_file(path: str | Path) -> tuple[ScenarioGeometry, NoiseModel]:
    """Read a YAML scenario file (schema above, documented in the README)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        mapping = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse scenario file {path}: {exc}") from exc
    try:
        return parse_scenario(mapping)
    except ConfigError:
        raise
    except (GeometryError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid scenario in {path}: {exc}") from exc
