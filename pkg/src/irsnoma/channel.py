"""Geometry, path loss, Rician fading, and cascaded effective channels.

The base station serves users only through a reflecting surface at the
origin; the direct base-station-to-user path is blocked by default and can
be re-enabled, heavily attenuated, through `direct_gain`.  All fading draws
are Rician around deterministic line-of-sight components built from uniform
linear array responses, so channels across timeslots differ only through
user motion and the fast-fading stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng, sample_standard_complex_gaussian

__all__ = [
    "Position",
    "NetworkLayout",
    "PathLossParams",
    "RicianParams",
    "ChannelRealization",
    "path_loss",
    "ula_response",
    "sample_rician",
    "generate_channels",
    "effective_channel",
    "effective_channel_factored",
    "phase_response_matrix",
]


@dataclass(frozen=True)
class Position:
    """Planar coordinates in meters."""

    x: float
    y: float

    def distance_to(self, other: "Position") -> float:
        return float(np.hypot(self.x - other.x, self.y - other.y))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass
class NetworkLayout:
    bs_position: Position
    user_positions: list[Position]
    n_antennas: int  # N, base-station ULA size
    n_elements: int  # K, reflecting elements
    irs_position: Position = field(default_factory=lambda: Position(0.0, 0.0))

    def __post_init__(self):
        if self.n_antennas < 1 or self.n_elements < 1:
            raise ValueError("antenna and element counts must be >= 1")
        if not self.user_positions:
            raise ValueError("layout needs at least one user")

    @property
    def n_users(self) -> int:
        return len(self.user_positions)


@dataclass
class PathLossParams:
    """L(d) = c_ref * d^-alpha with per-link exponents."""

    c_ref: float = 1e-3  # gain at the 1 m reference distance
    alpha_bu: float = 3.5  # base station -> user
    alpha_iu: float = 2.8  # surface -> user
    alpha_bi: float = 2.2  # base station -> surface

    def __post_init__(self):
        if self.c_ref <= 0:
            raise ValueError("reference gain must be positive")
        for name in ("alpha_bu", "alpha_iu", "alpha_bi"):
            if getattr(self, name) < 2.0:
                raise ValueError(f"{name} must be >= 2 (free space)")


@dataclass
class RicianParams:
    k_factor_bi: float = 10.0  # strong LoS on the positioned BS-IRS hop
    k_factor_iu: float = 3.0  # weaker LoS toward moving users

    def __post_init__(self):
        if self.k_factor_bi < 0 or self.k_factor_iu < 0:
            raise ValueError("Rician K-factors must be >= 0")


@dataclass
class ChannelRealization:
    """One slot's channels: g is the K x N BS->surface matrix, h_users holds
    one K-vector per user for the surface->user hop.  h_direct carries the
    optional weak blocked BS->user rows (N-vectors), or None."""

    g: np.ndarray
    h_users: list[np.ndarray]
    h_direct: list[np.ndarray] | None = None

    def __post_init__(self):
        k, n = self.g.shape
        for h in self.h_users:
            if h.shape != (k,):
                raise ValueError(f"user channel shape {h.shape} != ({k},)")
        if self.h_direct is not None:
            for d in self.h_direct:
                if d.shape != (n,):
                    raise ValueError(f"direct channel shape {d.shape} != ({n},)")

    @property
    def n_users(self) -> int:
        return len(self.h_users)


def path_loss(distance_m: float, c_ref: float, alpha: float) -> float:
    """Distance-power law c_ref * d^-alpha; `distance_m` must be positive."""
    if distance_m <= 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    return float(c_ref * distance_m ** (-alpha))


def ula_response(n: int, angle_rad: float) -> np.ndarray:
    """Half-wavelength uniform linear array steering vector.

    Entries exp(j pi m sin(angle)), m = 0..n-1; unit modulus by construction.
    """
    if n < 1:
        raise ValueError("array size must be >= 1")
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle_rad))


def sample_rician(
    rng: SeededRng, rows: int, cols: int, k_factor: float, los: np.ndarray
) -> np.ndarray:
    """sqrt(k/(1+k)) * los + sqrt(1/(1+k)) * W with W i.i.d. CN(0,1)."""
    if k_factor < 0:
        raise ValueError(f"k_factor must be >= 0, got {k_factor}")
    los = np.asarray(los, dtype=complex)
    if los.shape != (rows, cols):
        raise ValueError(f"los shape {los.shape} != ({rows}, {cols})")
    w = sample_standard_complex_gaussian(rng, rows * cols).reshape(rows, cols)
    return np.sqrt(k_factor / (1.0 + k_factor)) * los + np.sqrt(1.0 / (1.0 + k_factor)) * w


def _angle(frm: Position, to: Position) -> float:
    return float(np.arctan2(to.y - frm.y, to.x - frm.x))


def generate_channels(
    layout: NetworkLayout,
    pl: PathLossParams,
    rician: RicianParams,
    rng: SeededRng,
    direct_gain: float = 0.0,
) -> ChannelRealization:
    """Draw one slot's channel realization.

    `direct_gain` is the extra linear attenuation applied to the blocked
    BS->user path; 0 keeps it fully blocked (no rows generated).  The BS-IRS
    matrix, each user vector, and each direct row consume separate labeled
    sub-streams, so enabling or resizing one piece never shifts another.
    """
    irs = layout.irs_position
    bs = layout.bs_position
    d_bi = bs.distance_to(irs)
    if d_bi <= 0:
        raise ValueError("base station co-located with the surface")

    k, n = layout.n_elements, layout.n_antennas
    # Rank-one LoS: arrival response at the surface times departure response
    # at the base station.
    a_irs = ula_response(k, _angle(irs, bs))
    a_bs = ula_response(n, _angle(bs, irs))
    los_g = np.outer(a_irs, np.conj(a_bs))
    gain_bi = np.sqrt(path_loss(d_bi, pl.c_ref, pl.alpha_bi))
    g = gain_bi * sample_rician(rng.substream("g"), k, n, rician.k_factor_bi, los_g)

    h_users = []
    for idx, user in enumerate(layout.user_positions):
        d_iu = irs.distance_to(user)
        if d_iu <= 0:
            raise ValueError(f"user {idx} co-located with the surface")
        los_h = ula_response(k, _angle(irs, user))[:, None]
        gain_iu = np.sqrt(path_loss(d_iu, pl.c_ref, pl.alpha_iu))
        h = gain_iu * sample_rician(
            rng.substream(f"user{idx}"), k, 1, rician.k_factor_iu, los_h
        )
        h_users.append(h.ravel())

    h_direct = None
    if direct_gain > 0.0:
        # Blocked path: Rayleigh (no usable LoS), path loss plus blockage.
        h_direct = []
        for idx, user in enumerate(layout.user_positions):
            d_bu = bs.distance_to(user)
            if d_bu <= 0:
                raise ValueError(f"user {idx} co-located with the base station")
            gain_bu = np.sqrt(path_loss(d_bu, pl.c_ref, pl.alpha_bu) * direct_gain)
            row = gain_bu * sample_standard_complex_gaussian(
                rng.substream(f"direct{idx}"), n
            )
            h_direct.append(row)

    return ChannelRealization(g=g, h_users=h_users, h_direct=h_direct)


def _thetas_of(theta) -> np.ndarray:
    # Accepts a bare angle array or any object carrying `.thetas`.
    return np.asarray(getattr(theta, "thetas", theta), dtype=float)


def effective_channel(h: np.ndarray, theta, g: np.ndarray) -> np.ndarray:
    """Cascaded row h^H diag(e^{j theta}) G, shape (N,)."""
    h = np.asarray(h, dtype=complex)
    g = np.asarray(g, dtype=complex)
    thetas = _thetas_of(theta)
    if h.ndim != 1 or g.ndim != 2 or h.shape[0] != g.shape[0] or thetas.shape != h.shape:
        raise ValueError(
            f"shape mismatch: h {h.shape}, theta {thetas.shape}, g {g.shape}"
        )
    reflect = np.diag(np.exp(1j * thetas))
    return np.conj(h) @ reflect @ g


def phase_response_matrix(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Phi = diag(h^H) G: the phase-independent part of the cascade."""
    h = np.asarray(h, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if h.ndim != 1 or g.ndim != 2 or h.shape[0] != g.shape[0]:
        raise ValueError(f"shape mismatch: h {h.shape}, g {g.shape}")
    return np.conj(h)[:, None] * g

def effective_channel_factored(h: np.ndarray, theta, g: np.ndarray) -> np.ndarray:
    """Same cascade written as upsilon^H Phi with upsilon^H = [e^{j theta_k}].

    Must agree with :func:`effective_channel` to machine precision; the
    factored form is what the phase optimizer differentiates over.
    """
    thetas = _thetas_of(theta)
    phi = phase_response_matrix(h, g)
    if thetas.shape[0] != phi.shape[0]:
        raise ValueError(f"theta length {thetas.shape[0]} != {phi.shape[0]} elements")
    return np.exp(1j * thetas) @ phi
