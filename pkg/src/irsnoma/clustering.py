"""Channel-space user clustering: K-means seeding, an isotropic Gaussian
mixture refined by EM, and capacity-limited MAP assignment.

Users are clustered on direction, not strength: feature vectors are the
real/imaginary parts of unit-normalized channels, so co-directional users
share a beam while their gain disparity (useful for superposition coding)
is left intact.  The mixture keeps one scalar variance per component; the
variance update divides by the feature dimension, which is the exact
maximum-likelihood step for that model and keeps EM monotone.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng

__all__ = [
    "CapacityError",
    "CsiSet",
    "ClusterThresholds",
    "GmmParams",
    "ClusterAssignment",
    "normalize_channels",
    "csi_from_positions",
    "gain_difference",
    "correlation",
    "kmeans_seed",
    "gmm_density",
    "log_likelihood",
    "e_step",
    "m_step",
    "fit_kgmm",
    "assign_users",
    "threshold_report",
    "clusters_to_csv",
]

VARIANCE_FLOOR = 1e-8
MAX_EM_ITERATIONS = 500
MAX_KMEANS_ITERATIONS = 100
CLUSTER_CAPACITY = 3


class CapacityError(ValueError):
    """More users than the clusters can hold."""


@dataclass
class CsiSet:
    """Per-user clustering features plus the raw channels they came from.

    features: (L, d) real.  raw_channels is None when features are plain
    positions rather than channel coordinates.
    """

    features: np.ndarray
    raw_channels: list[np.ndarray] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got {self.features.shape}")
        if self.raw_channels is not None and len(self.raw_channels) != self.features.shape[0]:
            raise ValueError("raw channel count does not match feature rows")

    @property
    def n_users(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class ClusterThresholds:
    rho_gain: float = 0.5  # intra-cluster gain-difference bound
    rho_corr: float = 0.7  # intra-cluster correlation floor

    def __post_init__(self):
        if self.rho_gain < 0 or self.rho_corr < 0:
            raise ValueError("thresholds must be >= 0")


@dataclass
class GmmParams:
    """Isotropic mixture: weights (M,), means (M, d), variances (M,)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    converged: bool = True
    n_iterations: int = 0
    ll_history: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        m = self.weights.shape[0]
        if self.means.shape[0] != m or self.variances.shape != (m,):
            raise ValueError("component counts disagree across weight/mean/variance")
        if not np.isclose(self.weights.sum(), 1.0, atol=1e-9):
            raise ValueError(f"weights must sum to 1, got {self.weights.sum()}")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]


@dataclass
class ClusterAssignment:
    """Hard assignment after capacity enforcement.

    assignment[l] is the cluster index of user l; members[m] lists users of
    cluster m; centers[m] is that cluster's mean feature vector.  Empty
    clusters are dissolved before construction, so every row of centers has
    at least one member.  source_components maps each surviving cluster
    back to its mixture-component column, for anything (precoding weights,
    diagnostics) that needs the original responsibility columns.
    """

    assignment: np.ndarray
    members: list[list[int]]
    centers: np.ndarray
    source_components: list[int]
    capacity: int = CLUSTER_CAPACITY

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=int)
        self.centers = np.asarray(self.centers, dtype=float)
        sizes = [len(m) for m in self.members]
        if any(s == 0 for s in sizes):
            raise ValueError("empty cluster survived assignment")
        if any(s > self.capacity for s in sizes):
            raise ValueError(f"cluster exceeds capacity {self.capacity}: sizes {sizes}")
        if self.centers.shape[0] != len(self.members):
            raise ValueError("center count does not match cluster count")
        if len(self.source_components) != len(self.members):
            raise ValueError("source component count does not match cluster count")

    @property
    def n_clusters(self) -> int:
        return len(self.members)


def normalize_channels(raw_channels: list[np.ndarray]) -> CsiSet:
    """Build direction features: concat(Re, Im) of each unit-normalized channel."""
    if not raw_channels:
        raise ValueError("no channels to normalize")
    feats = []
    for idx, h in enumerate(raw_channels):
        h = np.asarray(h, dtype=complex).ravel()
        norm = np.linalg.norm(h)
        if norm == 0:
            raise ValueError(f"user {idx} has a zero channel")
        unit = h / norm
        feats.append(np.concatenate([unit.real, unit.imag]))
    return CsiSet(features=np.array(feats), raw_channels=[np.asarray(h) for h in raw_channels])


def csi_from_positions(positions: np.ndarray) -> CsiSet:
    """Position-space alternative feature set (2-D points, no channels)."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2:
        raise ValueError(f"positions must be (L, 2), got {pos.shape}")
    return CsiSet(features=pos.copy(), raw_channels=None)


def gain_difference(h_a: np.ndarray, h_b: np.ndarray) -> float:
    """| ||h_a|| - ||h_b|| | on raw (pre-normalization) channel gains."""
    return float(abs(np.linalg.norm(h_a) - np.linalg.norm(h_b)))


def correlation(h_a: np.ndarray, h_b: np.ndarray) -> float:
    """|<h_a, h_b>| / (||h_a|| ||h_b||), in [0, 1]."""
    na, nb = np.linalg.norm(h_a), np.linalg.norm(h_b)
    if na == 0 or nb == 0:
        raise ValueError("correlation undefined for a zero channel")
    return float(np.abs(np.vdot(h_a, h_b)) / (na * nb))


def kmeans_seed(
    csi: CsiSet, n_clusters: int, rng: SeededRng
) -> tuple[np.ndarray, np.ndarray]:
    """Plain Lloyd iterations from m distinct random users.

    Returns (centers (m, d), hard assignment (L,)).  An emptied cluster is
    re-seeded at the point farthest from its nearest center.
    """
    x = csi.features
    l_users = x.shape[0]
    if not (1 <= n_clusters <= l_users):
        raise ValueError(f"cluster count must be in [1, {l_users}], got {n_clusters}")
    idx = rng.choice(l_users, size=n_clusters, replace=False)
    centers = x[np.sort(idx)].copy()
    assign = np.zeros(l_users, dtype=int)
    for _ in range(MAX_KMEANS_ITERATIONS):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        for m in range(n_clusters):
            mask = new_assign == m
            if np.any(mask):
                centers[m] = x[mask].mean(axis=0)
            else:
                # Re-seed at the worst-covered point.
                farthest = int(np.argmax(np.min(d2, axis=1)))
                centers[m] = x[farthest]
                new_assign[farthest] = m
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centers, assign


def gmm_density(x: np.ndarray, mean: np.ndarray, variance: float) -> float:
    """Isotropic Gaussian density (2 pi s^2)^(-d/2) exp(-||x - mu||^2 / 2 s^2)."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    d = x.shape[-1]
    quad = np.sum((x - mean) ** 2, axis=-1)
    return (2 * np.pi * variance) ** (-d / 2) * np.exp(-quad / (2 * variance))


def _log_component_matrix(csi: CsiSet, params: GmmParams) -> np.ndarray:
    """log(weight_m * density_m(x_l)) for all l, m; shape (L, M)."""
    x = csi.features
    d = csi.dim
    diff2 = np.sum((x[:, None, :] - params.means[None, :, :]) ** 2, axis=2)
    log_norm = -0.5 * d * np.log(2 * np.pi * params.variances)
    with np.errstate(divide="ignore"):
        log_w = np.log(params.weights)
    return log_w[None, :] + log_norm[None, :] - diff2 / (2 * params.variances[None, :])


def _logsumexp(rows: np.ndarray) -> np.ndarray:
    peak = np.max(rows, axis=1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    return peak[:, 0] + np.log(np.sum(np.exp(rows - peak), axis=1))


def log_likelihood(csi: CsiSet, params: GmmParams) -> float:
    """Natural-log data likelihood, evaluated with the log-sum-exp guard."""
    return float(np.sum(_logsumexp(_log_component_matrix(csi, params))))


def e_step(csi: CsiSet, params: GmmParams) -> np.ndarray:
    """Responsibilities (L, M): normalized posterior component weights.

    A user that underflows every component gets a uniform row rather than
    zeros, so downstream normalizations stay defined.
    """
    logs = _log_component_matrix(csi, params)
    peak = np.max(logs, axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        unnorm = np.exp(logs - peak)
        totals = unnorm.sum(axis=1, keepdims=True)
        resp = unnorm / totals
    dead = ~np.isfinite(resp).all(axis=1)
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} user(s) underflowed every component; "
            "assigning uniform responsibilities",
            RuntimeWarning,
        )
        resp[dead] = 1.0 / params.n_components
    return resp


def m_step(csi: CsiSet, resp: np.ndarray) -> GmmParams:
    """Exact maximum-likelihood update for the isotropic mixture.

    Means are updated first and the variance update is evaluated at the new
    means (divided by the feature dimension); variances are floored.  A
    component losing all responsibility is re-seeded at the worst-fit user.
    """
    x = csi.features
    l_users, d = x.shape
    resp = np.asarray(resp, dtype=float)
    if resp.shape[0] != l_users:
        raise ValueError("responsibility rows do not match user count")
    m = resp.shape[1]
    mass = resp.sum(axis=0)  # (M,)
    weights = mass / l_users

    means = np.zeros((m, d))
    variances = np.full(m, VARIANCE_FLOOR)
    dead = mass <= 1e-12
    alive = ~dead
    means[alive] = (resp.T[alive] @ x) / mass[alive, None]
    diff2 = np.sum((x[:, None, :] - means[None, :, :]) ** 2, axis=2)
    variances[alive] = np.maximum(
        np.sum(resp[:, alive] * diff2[:, alive], axis=0) / (d * mass[alive]),
        VARIANCE_FLOOR,
    )
    if np.any(dead):
        worst = int(np.argmin(np.max(resp, axis=1)))
        fallback_var = max(float(np.mean(variances[alive])) if np.any(alive) else 1.0,
                           VARIANCE_FLOOR)
        for comp in np.flatnonzero(dead):
            means[comp] = x[worst]
            variances[comp] = fallback_var
            weights[comp] = 1.0 / l_users
        weights = weights / weights.sum()
    return GmmParams(weights=weights, means=means, variances=variances)


def _param_vector(params: GmmParams) -> np.ndarray:
    return np.concatenate([params.weights, params.means.ravel(), params.variances])


def fit_kgmm(
    csi: CsiSet,
    n_clusters: int,
    rng: SeededRng,
    eps_tilde: float = 1e-15,
    max_iterations: int = MAX_EM_ITERATIONS,
) -> tuple[GmmParams, np.ndarray]:
    """K-means-seeded EM fit.

    Initial means are the K-means centers; initial variances are the mean
    squared member distance over the dimension; initial weights are member
    fractions.  Iterates E/M until the parameter change drops below
    `eps_tilde` or the cap is hit, tracking the best likelihood seen.
    Returns (params, responsibilities); `params.converged` is False when the
    run stopped on the iteration cap.
    """
    if eps_tilde <= 0:
        raise ValueError("eps_tilde must be positive")
    x = csi.features
    d = csi.dim
    centers, hard = kmeans_seed(csi, n_clusters, rng)
    counts = np.bincount(hard, minlength=n_clusters).astype(float)
    weights = np.maximum(counts, 1.0)
    weights = weights / weights.sum()
    variances = np.full(n_clusters, VARIANCE_FLOOR)
    for m in range(n_clusters):
        mask = hard == m
        if np.any(mask):
            sq = np.sum((x[mask] - centers[m]) ** 2, axis=1)
            variances[m] = max(float(np.mean(sq) / d), VARIANCE_FLOOR)
    params = GmmParams(weights=weights, means=centers.copy(), variances=variances)

    best_params, best_ll = params, -np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        resp = e_step(csi, params)
        new_params = m_step(csi, resp)
        ll = log_likelihood(csi, new_params)
        params.ll_history.append(ll)
        if ll > best_ll:
            best_params, best_ll = new_params, ll
        delta = float(np.linalg.norm(_param_vector(new_params) - _param_vector(params)))
        new_params.ll_history = params.ll_history
        params = new_params
        if delta < eps_tilde:
            converged = True
            break
    out = params if converged else best_params
    out.converged = converged
    out.n_iterations = iterations
    out.ll_history = params.ll_history
    resp = e_step(csi, out)
    return out, resp


def assign_users(
    resp: np.ndarray, params: GmmParams, capacity: int = CLUSTER_CAPACITY
) -> ClusterAssignment:
    """Capacity-limited MAP assignment.

    Oversized clusters shed their lowest-margin members (responsibility gap
    to the member's best cluster with spare room) until every cluster fits;
    clusters that end up empty are dissolved and indices compacted.
    """
    resp = np.asarray(resp, dtype=float)
    l_users, m = resp.shape
    if l_users > capacity * m:
        raise CapacityError(
            f"{l_users} users cannot fit {m} clusters of capacity {capacity}"
        )
    assign = np.argmax(resp, axis=1)

    def sizes():
        return np.bincount(assign, minlength=m)

    while True:
        counts = sizes()
        over = np.flatnonzero(counts > capacity)
        if over.size == 0:
            break
        open_clusters = np.flatnonzero(counts < capacity)
        # Among all members of overfull clusters, move the one that loses the
        # least responsibility by switching to its best open cluster.
        best_move = None  # (margin, user, destination)
        for cluster in over:
            for user in np.flatnonzero(assign == cluster):
                alt = open_clusters[int(np.argmax(resp[user, open_clusters]))]
                margin = resp[user, cluster] - resp[user, alt]
                if best_move is None or margin < best_move[0]:
                    best_move = (margin, user, alt)
        _, user, dest = best_move
        assign[user] = dest

    kept = [c for c in range(m) if np.any(assign == c)]
    remap = {old: new for new, old in enumerate(kept)}
    assign = np.array([remap[c] for c in assign], dtype=int)
    members = [sorted(np.flatnonzero(assign == c)) for c in range(len(kept))]
    return ClusterAssignment(
        assignment=assign, members=[[int(u) for u in ms] for ms in members],
        centers=params.means[kept], source_components=kept, capacity=capacity,
    )


def threshold_report(
    csi: CsiSet, assignment: ClusterAssignment, thresholds: ClusterThresholds
) -> dict:
    """Fraction of intra-cluster pairs meeting the gain/correlation screens.

    Diagnostic only; assignment never depends on it.
    """
    if csi.raw_channels is None:
        raise ValueError("threshold report needs raw channels")
    pairs = 0
    ok_gain = 0
    ok_corr = 0
    ok_both = 0
    for members in assignment.members:
        for i, a in enumerate(members):
            for b in members[i + 1 :]:
                pairs += 1
                d = gain_difference(csi.raw_channels[a], csi.raw_channels[b])
                c = correlation(csi.raw_channels[a], csi.raw_channels[b])
                g = d < thresholds.rho_gain
                r = c > thresholds.rho_corr
                ok_gain += g
                ok_corr += r
                ok_both += g and r
    frac = lambda n: n / pairs if pairs else 1.0
    return {
        "n_pairs": pairs,
        "frac_gain_ok": frac(ok_gain),
        "frac_corr_ok": frac(ok_corr),
        "frac_both_ok": frac(ok_both),
    }


def clusters_to_csv(rows: list[tuple], path: str) -> None:
    """rows: (slot, user_id, cluster_id, resp_max)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "user_id", "cluster_id", "resp_max"])
        for slot, user, cluster, resp_max in rows:
            writer.writerow([slot, user, cluster, f"{resp_max:.6g}"])
