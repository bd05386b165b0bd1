"""Reflected-beam NOMA rate computation.

Covers the physical-layer core: discrete or continuous reflection phases,
zero-forcing precoding onto per-cluster design channels, superposition-coded
SINRs under successive interference cancellation, decode-order feasibility
checks and exhaustive order search, and the TDMA baseline.

Conventions fixed here and relied on everywhere downstream:
  * user channels enter as effective 1xN row vectors (reflected path plus
    any direct term, already combined);
  * alpha values are amplitude coefficients, so signal powers carry alpha^2
    and each cluster's alphas sum to 1;
  * a decoding order lists member-local indices in decode sequence, and a
    user's SINR sees interference only from members decoded after it;
  * inter-cluster leakage is kept as a residual term: it vanishes when the
    precoder nulls are exact, and stays physical when quantized phases or
    centroid-based design rows leave them inexact.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng, solve_linear

__all__ = [
    "PhaseShiftVector",
    "PowerAllocation",
    "DecodingOrder",
    "PrecodingMatrix",
    "RateReport",
    "reflection_matrix",
    "quantize_phases",
    "zf_precoder",
    "sinr_own",
    "sinr_cross",
    "rate",
    "build_rate_report",
    "sic_feasible",
    "sum_rate",
    "optimal_decoding_order",
    "verify_ascending_order",
    "oma_baseline",
    "rate_report_csv_rows",
    "rate_rows_to_csv",
]

TWO_PI = 2 * np.pi
DEFAULT_MIN_RATE = 0.1  # bits/s/Hz floor per user
PAIR_SLACK = 1e-12


@dataclass
class PhaseShiftVector:
    """K reflection phases in [0, 2pi), optionally locked to a 2^bits grid."""

    thetas: np.ndarray
    bits: int | None = None

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float) % TWO_PI
        if self.thetas.ndim != 1:
            raise ValueError(f"thetas must be 1-D, got shape {self.thetas.shape}")
        if self.bits is not None:
            if self.bits < 1:
                raise ValueError(f"resolution bits must be >= 1, got {self.bits}")
            step = TWO_PI / 2**self.bits
            offsets = np.abs(self.thetas / step - np.round(self.thetas / step))
            if np.any(offsets > 1e-9):
                raise ValueError(
                    f"phases are off the {self.bits}-bit grid by up to "
                    f"{float(offsets.max() * step):.3g} rad"
                )

    @property
    def n_elements(self) -> int:
        return self.thetas.shape[0]


@dataclass
class PowerAllocation:
    """Per-cluster amplitude coefficients plus the transmit power budget.

    alphas[m][i] weights the signal amplitude of member i of cluster m;
    each cluster's coefficients sum to 1.  alpha0 is the conventional
    starting coefficient handed to the strongest member when an allocation
    is initialized elsewhere.
    """

    alphas: list[np.ndarray]
    total_power: float
    alpha0: float = 0.1

    def __post_init__(self):
        self.alphas = [np.asarray(a, dtype=float) for a in self.alphas]
        if self.total_power <= 0:
            raise ValueError(f"total power must be positive, got {self.total_power}")
        for m, a in enumerate(self.alphas):
            if a.ndim != 1 or a.size == 0:
                raise ValueError(f"cluster {m} allocation must be a nonempty vector")
            if np.any(a <= 0) or np.any(a > 1):
                raise ValueError(f"cluster {m} coefficients must lie in (0, 1]")
            if abs(a.sum() - 1.0) > 1e-12:
                raise ValueError(
                    f"cluster {m} coefficients sum to {a.sum()}, expected 1"
                )

    @property
    def n_clusters(self) -> int:
        return len(self.alphas)


@dataclass
class DecodingOrder:
    """orders[m] lists cluster m's member-local indices in decode sequence."""

    orders: list[list[int]]
    fallback_flags: list[bool] = field(default_factory=list)

    def __post_init__(self):
        for m, perm in enumerate(self.orders):
            if sorted(perm) != list(range(len(perm))):
                raise ValueError(f"cluster {m} order {perm} is not a permutation")
        if not self.fallback_flags:
            self.fallback_flags = [False] * len(self.orders)

    def positions(self, m: int) -> dict[int, int]:
        """member-local index -> decode position for cluster m."""
        return {u: p for p, u in enumerate(self.orders[m])}


@dataclass
class PrecodingMatrix:
    """Columns beamform one cluster each; power_scale enforces the budget."""

    w: np.ndarray
    power_scale: float

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=complex)
        if self.w.ndim != 2:
            raise ValueError(f"precoder must be 2-D, got {self.w.shape}")
        if not (0 < self.power_scale <= 1):
            raise ValueError(f"power scale must lie in (0, 1], got {self.power_scale}")

    @property
    def w_scaled(self) -> np.ndarray:
        return self.w * self.power_scale

    @property
    def n_clusters(self) -> int:
        return self.w.shape[1]


@dataclass
class RateReport:
    """Everything the objective and the feasibility checks need, per slot.

    rate_own holds pre-penalty own-signal rates; effective_rate zeroes the
    members on the violation list, and sum_rate totals effective_rate.
    cross_rate is keyed (cluster, signal_local, decoder_local) for pairs
    where the decoder sits later in the decode order.
    """

    tau_own: list[np.ndarray]
    rate_own: list[np.ndarray]
    cross_rate: dict[tuple[int, int, int], float]
    effective_rate: list[np.ndarray]
    sum_rate: float
    sic_ok: bool
    violations: list[tuple]
    noise_var: float
    min_rate: float


def reflection_matrix(theta: PhaseShiftVector | np.ndarray) -> np.ndarray:
    """Unit-modulus diagonal exp(j theta_k)."""
    thetas = theta.thetas if hasattr(theta, "thetas") else np.asarray(theta, dtype=float)
    return np.diag(np.exp(1j * thetas))


def quantize_phases(theta: PhaseShiftVector | np.ndarray, bits: int) -> PhaseShiftVector:
    """Snap each phase to the nearest 2^bits grid point by circular distance.

    Exact ties go to the smaller grid index.
    """
    if bits < 1:
        raise ValueError(f"resolution bits must be >= 1, got {bits}")
    thetas = theta.thetas if hasattr(theta, "thetas") else np.asarray(theta, dtype=float)
    thetas = thetas % TWO_PI
    grid = TWO_PI * np.arange(2**bits) / 2**bits
    raw = np.abs(thetas[:, None] - grid[None, :])
    circ = np.minimum(raw, TWO_PI - raw)
    picked = grid[np.argmin(circ, axis=1)]  # argmin favors the smaller index on ties
    return PhaseShiftVector(thetas=picked, bits=bits)


def zf_precoder(design_rows: np.ndarray, p_total: float) -> PrecodingMatrix:
    """Right pseudo-inverse of the stacked cluster design rows.

    design_rows is (M, N); the unscaled precoder satisfies
    design_rows @ w = I exactly, then every column is shrunk by a common
    factor so the summed column power fits inside p_total.  Never scales up:
    a precoder already inside the budget is left alone.
    """
    rows = np.asarray(design_rows, dtype=complex)
    if rows.ndim != 2:
        raise ValueError(f"design rows must be 2-D, got {rows.shape}")
    m, n = rows.shape
    if m > n:
        raise ValueError(f"{m} clusters need at least as many antennas, got {n}")
    if p_total <= 0:
        raise ValueError(f"total power must be positive, got {p_total}")
    gram = rows @ rows.conj().T
    inv_gram = solve_linear(gram, np.eye(m, dtype=complex))
    w = rows.conj().T @ inv_gram
    used = float(np.sum(np.abs(w) ** 2))
    scale = min(1.0, np.sqrt(p_total / used))
    return PrecodingMatrix(w=w, power_scale=scale)


def _inter_cluster_power(
    row: np.ndarray, cluster: int, w_scaled: np.ndarray, alloc: PowerAllocation
) -> float:
    """Residual leakage from every other cluster's beam into this receiver."""
    total = 0.0
    for other in range(w_scaled.shape[1]):
        if other == cluster:
            continue
        leak = np.dot(row, w_scaled[:, other])
        total += float(np.abs(leak) ** 2) * float(np.sum(alloc.alphas[other] ** 2))
    return total


def _sinr_at_row(
    row: np.ndarray,
    signal_local: int,
    cluster: int,
    user_rows: list[list[np.ndarray]],
    w_scaled: np.ndarray,
    alloc: PowerAllocation,
    order: DecodingOrder,
    noise_var: float,
) -> float:
    """SINR for decoding member `signal_local`'s signal through `row`.

    The decode position splits the cluster: members later than the signal
    under decode remain as interference, earlier ones are already removed.
    """
    pos = order.positions(cluster)
    gain = np.dot(row, w_scaled[:, cluster])
    g2 = float(np.abs(gain) ** 2)
    alphas = alloc.alphas[cluster]
    own = g2 * float(alphas[signal_local] ** 2)
    later = [u for u in range(len(alphas)) if pos[u] > pos[signal_local]]
    intra = g2 * float(np.sum(alphas[later] ** 2)) if later else 0.0
    inter = _inter_cluster_power(row, cluster, w_scaled, alloc)
    return own / (intra + inter + noise_var)


def sinr_own(
    member: int,
    cluster: int,
    user_rows: list[list[np.ndarray]],
    precoder: PrecodingMatrix,
    alloc: PowerAllocation,
    order: DecodingOrder,
    noise_var: float,
) -> float:
    """SINR of a member decoding its own signal through its own channel."""
    if noise_var <= 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    return _sinr_at_row(
        user_rows[cluster][member], member, cluster,
        user_rows, precoder.w_scaled, alloc, order, noise_var,
    )


def sinr_cross(
    decoder: int,
    signal_of: int,
    cluster: int,
    user_rows: list[list[np.ndarray]],
    precoder: PrecodingMatrix,
    alloc: PowerAllocation,
    order: DecodingOrder,
    noise_var: float,
) -> float:
    """SINR of a later-decoded member decoding an earlier member's signal.

    Same interference split as the signal owner sees, but evaluated through
    the decoder's channel.
    """
    pos = order.positions(cluster)
    if pos[signal_of] >= pos[decoder]:
        raise ValueError(
            f"decoder {decoder} (position {pos[decoder]}) must sit after "
            f"signal owner {signal_of} (position {pos[signal_of]})"
        )
    return _sinr_at_row(
        user_rows[cluster][decoder], signal_of, cluster,
        user_rows, precoder.w_scaled, alloc, order, noise_var,
    )


def rate(tau: float) -> float:
    """Spectral efficiency log2(1 + tau)."""
    if tau < 0:
        raise ValueError(f"SINR must be nonnegative, got {tau}")
    return float(np.log2(1.0 + tau))


def build_rate_report(
    user_rows: list[list[np.ndarray]],
    precoder: PrecodingMatrix,
    alloc: PowerAllocation,
    order: DecodingOrder,
    noise_var: float,
    min_rate: float = DEFAULT_MIN_RATE,
) -> RateReport:
    """Assemble SINRs, rates, cross-decode rates, and the penalized objective.

    A member that fails a decode check contributes zero to the objective: a
    cross-decode shortfall invalidates the decoder (it cannot cancel what it
    cannot decode), a floor shortfall invalidates the member itself.
    """
    if noise_var <= 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    tau_own: list[np.ndarray] = []
    rate_own: list[np.ndarray] = []
    cross: dict[tuple[int, int, int], float] = {}
    for m, members in enumerate(user_rows):
        taus = np.array([
            sinr_own(i, m, user_rows, precoder, alloc, order, noise_var)
            for i in range(len(members))
        ])
        tau_own.append(taus)
        rate_own.append(np.array([rate(t) for t in taus]))
        perm = order.orders[m]
        for pi, i in enumerate(perm):
            for j in perm[pi + 1 :]:
                tau_c = sinr_cross(
                    j, i, m, user_rows, precoder, alloc, order, noise_var
                )
                cross[(m, i, j)] = rate(tau_c)

    report = RateReport(
        tau_own=tau_own,
        rate_own=rate_own,
        cross_rate=cross,
        effective_rate=[r.copy() for r in rate_own],
        sum_rate=0.0,
        sic_ok=True,
        violations=[],
        noise_var=noise_var,
        min_rate=min_rate,
    )
    ok, violations = sic_feasible(report, order, min_rate)
    report.sic_ok = ok
    report.violations = violations
    for kind, m, *who in violations:
        # pair violation zeroes the decoder, floor violation the member
        local = who[1] if kind == "pair" else who[0]
        report.effective_rate[m][local] = 0.0
    report.sum_rate = float(sum(r.sum() for r in report.effective_rate))
    return report


def sic_feasible(
    report: RateReport, order: DecodingOrder, min_rate: float = DEFAULT_MIN_RATE
) -> tuple[bool, list[tuple]]:
    """Decode-order feasibility: every later decoder must match the owner's
    rate on the owner's signal, and every own rate must clear the floor.

    Returns (flag, violations); violations are ("pair", m, signal, decoder)
    or ("min_rate", m, member).
    """
    violations: list[tuple] = []
    for m, perm in enumerate(order.orders):
        for pi, i in enumerate(perm):
            for j in perm[pi + 1 :]:
                own = float(report.rate_own[m][i])
                crossed = report.cross_rate[(m, i, j)]
                if crossed < own - PAIR_SLACK * max(1.0, own):
                    violations.append(("pair", m, i, j))
        for i in range(len(perm)):
            if report.rate_own[m][i] < min_rate:
                violations.append(("min_rate", m, i))
    return (not violations), violations


def sum_rate(report: RateReport) -> float:
    """Penalized objective: total of effective (post-violation) rates."""
    return report.sum_rate


def _cluster_gains(
    user_rows: list[np.ndarray], w_col: np.ndarray
) -> np.ndarray:
    return np.array([np.abs(np.dot(r, w_col)) for r in user_rows])


def optimal_decoding_order(
    user_rows: list[list[np.ndarray]],
    precoder: PrecodingMatrix,
    alloc: PowerAllocation,
    noise_var: float,
    min_rate: float = DEFAULT_MIN_RATE,
) -> DecodingOrder:
    """Exhaustive per-cluster decode-order search.

    Clusters hold at most three members, so each search covers at most six
    permutations.  Picks the feasible order with the highest cluster rate
    total; a cluster with no feasible order falls back to ascending
    effective gain (flagged), the ordering the cross-rate condition favors.
    """
    n_clusters = len(user_rows)
    best_orders: list[list[int]] = []
    flags: list[bool] = []
    for m in range(n_clusters):
        size = len(user_rows[m])
        if size == 0:
            raise ValueError(f"cluster {m} is empty")
        gains = _cluster_gains(user_rows[m], precoder.w_scaled[:, m])
        best_perm, best_value = None, -np.inf
        for perm in itertools.permutations(range(size)):
            candidate = list(perm)
            trial = DecodingOrder(
                orders=[
                    candidate if k == m else list(range(len(user_rows[k])))
                    for k in range(n_clusters)
                ]
            )
            own = [
                rate(sinr_own(i, m, user_rows, precoder, alloc, trial, noise_var))
                for i in range(size)
            ]
            feasible = all(r >= min_rate for r in own)
            for pi, i in enumerate(candidate):
                for j in candidate[pi + 1 :]:
                    crossed = rate(
                        sinr_cross(j, i, m, user_rows, precoder, alloc, trial, noise_var)
                    )
                    if crossed < own[i] - PAIR_SLACK * max(1.0, own[i]):
                        feasible = False
            if feasible and sum(own) > best_value:
                best_perm, best_value = candidate, sum(own)
        if best_perm is None:
            best_perm = [int(k) for k in np.argsort(gains, kind="stable")]
            flags.append(True)
        else:
            flags.append(False)
        best_orders.append(best_perm)
    return DecodingOrder(orders=best_orders, fallback_flags=flags)


def verify_ascending_order(
    n_instances: int,
    rng: SeededRng,
    n_antennas: int = 4,
    invert_order: bool = False,
) -> dict:
    """Numeric check that ascending-gain ordering keeps cross decodes viable.

    Samples random two-member single-cluster instances, orders by ascending
    effective gain, and verifies the later decoder's rate on the earlier
    member's signal never falls below the earlier member's own rate.
    `invert_order` flips to descending gain, which should produce violations
    (useful for demonstrating the check is not vacuous).
    """
    violations = 0
    worst = 0.0
    for trial in range(n_instances):
        sub = rng.substream(f"instance{trial}")
        scales = 10.0 ** sub.uniform(-2, 0, size=2)
        rows = [
            (sub.standard_normal(n_antennas) + 1j * sub.standard_normal(n_antennas))
            * scales[i]
            for i in range(2)
        ]
        w = sub.standard_normal((n_antennas, 1)) + 1j * sub.standard_normal(
            (n_antennas, 1)
        )
        precoder = PrecodingMatrix(w=w, power_scale=1.0)
        noise = 10.0 ** sub.uniform(-4, 0)
        gains = _cluster_gains(rows, precoder.w_scaled[:, 0])
        perm = [int(k) for k in np.argsort(gains, kind="stable")]
        if invert_order:
            perm = perm[::-1]
        # alphas follow the decode sequence: earlier position, larger share
        a0 = sub.uniform(0.55, 0.95)
        ordered_alphas = np.empty(2)
        ordered_alphas[perm[0]] = a0
        ordered_alphas[perm[1]] = 1 - a0
        alloc = PowerAllocation(alphas=[ordered_alphas], total_power=1.0)
        order = DecodingOrder(orders=[perm])
        user_rows = [rows]
        i, j = perm[0], perm[1]
        own = rate(sinr_own(i, 0, user_rows, precoder, alloc, order, noise))
        crossed = rate(sinr_cross(j, i, 0, user_rows, precoder, alloc, order, noise))
        deficit = own - crossed
        if deficit > 1e-9 * max(1.0, own):
            violations += 1
            worst = max(worst, deficit)
    return {
        "instances": n_instances,
        "violations": violations,
        "worst_deficit": worst,
    }


def oma_baseline(
    user_rows: list[np.ndarray], p_total: float, noise_var: float
) -> float:
    """Orthogonal time-sharing reference: each user gets a 1/L slot fraction
    with the full power budget on a matched beam toward its own channel.
    """
    if noise_var <= 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    if p_total <= 0:
        raise ValueError(f"total power must be positive, got {p_total}")
    l_users = len(user_rows)
    if l_users == 0:
        raise ValueError("no users")
    total = 0.0
    for row in user_rows:
        snr = p_total * float(np.sum(np.abs(row) ** 2)) / noise_var
        total += rate(snr) / l_users
    return total


def rate_report_csv_rows(
    slot: int, report: RateReport, member_ids: list[list[int]]
) -> list[tuple]:
    """(slot, cluster, user, tau_own, rate_own, sic_ok) rows for one slot."""
    rows = []
    for m, ids in enumerate(member_ids):
        for local, user in enumerate(ids):
            rows.append(
                (
                    slot,
                    m,
                    user,
                    float(report.tau_own[m][local]),
                    float(report.rate_own[m][local]),
                    int(report.sic_ok),
                )
            )
    return rows


def rate_rows_to_csv(rows: list[tuple], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "cluster", "user", "tau_own", "rate_own", "sic_ok"])
        for slot, cluster, user, tau, r, ok in rows:
            writer.writerow([slot, cluster, user, f"{tau:.6g}", f"{r:.6g}", ok])
