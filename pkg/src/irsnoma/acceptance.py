"""Runnable acceptance battery.

Thirteen numbered checks, each returning (ok, detail).  The fast ones are
numeric contracts on individual components: the zero-forcing identity, EM
log-likelihood monotonicity, the nearest-center reduction of the mixture
posterior, ascending-order decode viability, analytic-vs-finite-difference
gradients, sampler goodness of fit, and the reward telescoping identity.
The slow ones re-run the full pipeline over twenty seeds at a reduced
training budget and assert the headline trends: sum rate rising with
transmit power and element count, the scheme quality ordering, the gain of
superposition over time sharing, the value of exhaustive decode-order
search, and a rising learning curve.

``run_all`` executes any subset in order; the expensive sweeps are computed
once per process and shared between the checks that read them.
"""

import time

import numpy as np
from scipy import stats as spstats

from .clustering import GmmParams, e_step, fit_kgmm, kmeans_seed, normalize_channels
from .config import SCHEMES, ScenarioConfig
from .mobility import (
    AcceptRejectSampler,
    LstmNetwork,
    Region,
    _loss_and_grads,
    sample_initial_positions,
)
from .noma import verify_ascending_order, zf_precoder
from .numerics import SeededRng
from .rl import QNetworkMlp, _mlp_backward, _mlp_forward_batch, reward
from .sim import decoding_order_study, run_one, sweep

TREND_SEEDS = 20
POWER_GRID = (10.0, 20.0, 30.0, 40.0)
ELEMENT_GRID = (10.0, 20.0, 30.0)
IRS_SCHEMES = tuple(s for s in SCHEMES if s != "no_irs")
DQN_SCHEMES = ("dqn_continuous", "dqn_2bit", "dqn_1bit")

# Slot data and finished sweeps, shared across checks within one process.
_slot_cache: dict = {}
_memo: dict[str, object] = {}


def _trend_cfg() -> ScenarioConfig:
    # Reduced training budget: the trends survive it and the twenty-seed
    # sweeps stay inside a coffee break.  Exploration is held constant; the
    # default decay schedule needs far more episodes than these runs get,
    # and short runs live on steady exploration.
    return ScenarioConfig(
        episodes=40, steps_per_slot=10, epsilon_decay=1.0, n_seeds=TREND_SEEDS
    )


def _power_records():
    if "power" not in _memo:
        _memo["power"] = sweep(
            _trend_cfg(), "power", list(POWER_GRID), list(SCHEMES), cache=_slot_cache
        )
    return _memo["power"]


def _elements_records():
    if "elements" not in _memo:
        _memo["elements"] = sweep(
            _trend_cfg(),
            "elements",
            list(ELEMENT_GRID),
            list(DQN_SCHEMES) + ["no_irs"],
            cache=_slot_cache,
        )
    return _memo["elements"]


def _order_study():
    if "order" not in _memo:
        _memo["order"] = decoding_order_study(_trend_cfg(), cache=_slot_cache)
    return _memo["order"]


def _mean(records, scheme: str, value: float) -> float:
    vals = [
        r.sum_rate_period
        for r in records
        if r.scheme == scheme and r.sweep_value == value
    ]
    if not vals:
        raise ValueError(f"no records for {scheme} at {value}")
    return float(np.mean(vals))


def criterion_1() -> tuple[bool, str]:
    """Zero-forcing: design rows times the precoder equal the identity."""
    t0 = time.perf_counter()
    rng = SeededRng(101).substream("zf")
    worst_off = worst_diag = 0.0
    for trial in range(500):
        sub = rng.substream(f"i{trial}")
        m = int(sub.integers(1, 6))
        scales = 10.0 ** sub.uniform(-1, 1, size=m)
        rows = (
            sub.standard_normal((m, 10)) + 1j * sub.standard_normal((m, 10))
        ) * scales[:, None]
        pm = zf_precoder(rows, p_total=1.0)
        prod = rows @ pm.w
        off = prod - np.diag(np.diag(prod))
        worst_off = max(worst_off, float(np.max(np.abs(off))))
        worst_diag = max(worst_diag, float(np.max(np.abs(np.diag(prod) - 1.0))))
    elapsed = time.perf_counter() - t0
    ok = worst_off <= 1e-8 and worst_diag <= 1e-8 and elapsed < 10
    return ok, (
        f"500 instances: max off-diag {worst_off:.1e}, "
        f"max |diag-1| {worst_diag:.1e}, {elapsed:.1f}s"
    )


def criterion_2() -> tuple[bool, str]:
    """EM keeps the log-likelihood non-decreasing on every iteration."""
    t0 = time.perf_counter()
    rng = SeededRng(202).substream("em")
    worst_drop = 0.0
    total_iters = 0
    for trial in range(100):
        sub = rng.substream(f"d{trial}")
        n_dim = int(sub.integers(1, 11))  # feature dim 2..20 after splitting
        m = int(sub.integers(1, 6))
        centers = sub.standard_normal((m, n_dim)) + 1j * sub.standard_normal(
            (m, n_dim)
        )
        raw = [
            centers[u % m]
            + 0.35 * (sub.standard_normal(n_dim) + 1j * sub.standard_normal(n_dim))
            for u in range(10)
        ]
        params, _ = fit_kgmm(normalize_channels(raw), m, sub.substream("fit"))
        ll = params.ll_history
        total_iters += len(ll)
        for earlier, later in zip(ll, ll[1:]):
            worst_drop = max(worst_drop, earlier - later)
    elapsed = time.perf_counter() - t0
    ok = worst_drop <= 1e-9 and elapsed < 30
    return ok, (
        f"100 datasets, {total_iters} EM iterations: "
        f"worst drop {worst_drop:.1e}, {elapsed:.1f}s"
    )


def criterion_3() -> tuple[bool, str]:
    """Equal weights and one shared variance turn MAP into nearest-center."""
    rng = SeededRng(303).substream("km")
    mismatches = 0
    for trial in range(100):
        sub = rng.substream(f"d{trial}")
        n_dim = int(sub.integers(1, 11))
        m = int(sub.integers(2, 6))
        raw = [
            sub.standard_normal(n_dim) + 1j * sub.standard_normal(n_dim)
            for _ in range(10)
        ]
        csi = normalize_channels(raw)
        centers, _ = kmeans_seed(csi, m, sub.substream("seed"))
        sigma2 = float(10.0 ** sub.uniform(-2, 0))
        params = GmmParams(
            weights=np.full(m, 1.0 / m),
            means=centers,
            variances=np.full(m, sigma2),
        )
        map_assign = np.argmax(e_step(csi, params), axis=1)
        d2 = ((csi.features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        mismatches += int(np.sum(map_assign != nearest))
    ok = mismatches == 0
    return ok, f"100 datasets, 1000 assignments: {mismatches} disagreements"


def criterion_4() -> tuple[bool, str]:
    """Ascending-gain ordering keeps every cross decode at least as fast."""
    t0 = time.perf_counter()
    stats = verify_ascending_order(1000, SeededRng(404).substream("order"))
    elapsed = time.perf_counter() - t0
    ok = stats["violations"] == 0 and elapsed < 10
    return ok, (
        f"1000 instances: {stats['violations']} violations, "
        f"worst deficit {stats['worst_deficit']:.1e}, {elapsed:.1f}s"
    )


def _fd_max_rel(loss_fn, params: dict, grads: dict, h: float = 1e-6):
    worst, n_checked = 0.0, 0
    for name, arr in params.items():
        g = grads[name]
        for i in range(arr.size):
            orig = arr.flat[i]
            arr.flat[i] = orig + h
            lp = loss_fn()
            arr.flat[i] = orig - h
            lm = loss_fn()
            arr.flat[i] = orig
            num = (lp - lm) / (2.0 * h)
            ana = float(g.flat[i])
            denom = max(abs(num), abs(ana))
            if denom > 1e-8:
                worst = max(worst, abs(num - ana) / denom)
                n_checked += 1
    return worst, n_checked


def criterion_5() -> tuple[bool, str]:
    """Backprop gradients match central differences on small nets."""
    t0 = time.perf_counter()
    rng = SeededRng(505).substream("grad")

    lstm = LstmNetwork.initialize(5, rng.substream("lstm"))
    x = rng.substream("x").uniform(0.0, 1.0, (6, 3, 2))
    tgt = rng.substream("y").uniform(0.0, 1.0, (6, 3, 2))
    _, lstm_grads = _loss_and_grads(lstm, x, tgt)
    lstm_size = sum(v.size for v in lstm.params().values())
    lstm_rel, lstm_n = _fd_max_rel(
        lambda: _loss_and_grads(lstm, x, tgt)[0], lstm.params(), lstm_grads
    )

    qnet = QNetworkMlp.initialize(4, 5, rng.substream("qnet"), hidden=8)
    xb = rng.substream("xb").uniform(-1.0, 1.0, (7, 4))
    actions = rng.substream("a").integers(0, 5, size=7)
    targets = rng.substream("t").uniform(-1.0, 1.0, 7)
    rows = np.arange(7)

    def qloss() -> float:
        q, _ = _mlp_forward_batch(qnet, xb)
        return float(np.sum((q[rows, actions] - targets) ** 2))

    q, cache = _mlp_forward_batch(qnet, xb)
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * (q[rows, actions] - targets)
    q_grads = _mlp_backward(qnet, cache, dq)
    q_params = {n: getattr(qnet, n) for n in ("w1", "b1", "w2", "b2", "w3", "b3")}
    q_size = sum(v.size for v in q_params.values())
    q_rel, q_n = _fd_max_rel(qloss, q_params, q_grads)

    elapsed = time.perf_counter() - t0
    ok = (
        lstm_rel <= 1e-4
        and q_rel <= 1e-4
        and lstm_size <= 300
        and q_size <= 300
        and lstm_n > 50
        and q_n > 50
        and elapsed < 60
    )
    return ok, (
        f"lstm {lstm_size} params rel {lstm_rel:.1e} ({lstm_n} checked); "
        f"qnet {q_size} params rel {q_rel:.1e} ({q_n} checked); {elapsed:.1f}s"
    )


def criterion_6() -> tuple[bool, str]:
    """Acceptance-rejection draws pass a 10x10 uniformity chi-square."""
    t0 = time.perf_counter()
    region = Region(0.5, 2.5, 0.5, 2.5, density_fn_id="uniform")
    sampler = AcceptRejectSampler(
        region=region, envelope_constant=1.0, rng=SeededRng(606).substream("samp")
    )
    pts = sample_initial_positions(sampler, 100_000)
    xs = np.array([p.x for p in pts])
    ys = np.array([p.y for p in pts])
    counts, _, _ = np.histogram2d(
        xs, ys, bins=10, range=[[0.5, 2.5], [0.5, 2.5]]
    )
    expected = len(pts) / 100.0
    stat = float(((counts - expected) ** 2 / expected).sum())
    p_value = float(spstats.chi2.sf(stat, 99))
    elapsed = time.perf_counter() - t0
    ok = p_value > 0.01 and elapsed < 5
    return ok, f"1e5 samples: chi2 {stat:.1f} (99 dof), p {p_value:.3f}, {elapsed:.1f}s"


def criterion_7() -> tuple[bool, str]:
    """Mean period sum rate strictly rises with transmit power."""
    records = _power_records()
    failed = []
    min_margin = np.inf
    for scheme in IRS_SCHEMES:
        means = [_mean(records, scheme, v) for v in POWER_GRID]
        margins = [b - a for a, b in zip(means, means[1:])]
        min_margin = min(min_margin, min(margins))
        if min(margins) <= 0:
            failed.append(f"{scheme} {['%.2f' % m for m in means]}")
    ok = not failed
    if ok:
        return True, (
            f"{len(IRS_SCHEMES)} IRS schemes x {len(POWER_GRID)} powers x "
            f"{TREND_SEEDS} seeds: smallest upward step {min_margin:.2f}"
        )
    return False, "; ".join(failed)


def criterion_8() -> tuple[bool, str]:
    """Scheme quality ordering at 20 dBm."""
    records = _power_records()
    chain = ("dqn_continuous", "dqn_2bit", "dqn_1bit", "random_phase", "no_irs")
    means = [_mean(records, s, 20.0) for s in chain]
    ok = all(a >= b for a, b in zip(means, means[1:]))
    shown = " >= ".join(f"{s} {m:.2f}" for s, m in zip(chain, means))
    return ok, f"{TREND_SEEDS} seeds at 20 dBm: {shown}"


def criterion_9() -> tuple[bool, str]:
    """More surface elements never hurt; no surface means no dependence."""
    records = _elements_records()
    failed = []
    for scheme in DQN_SCHEMES:
        means = [_mean(records, scheme, v) for v in ELEMENT_GRID]
        if not all(b >= a for a, b in zip(means, means[1:])):
            failed.append(f"{scheme} {['%.2f' % m for m in means]}")
    by_seed: dict[int, set] = {}
    for r in records:
        if r.scheme == "no_irs":
            by_seed.setdefault(r.seed, set()).add(r.sum_rate_period)
    flat = all(len(v) == 1 for v in by_seed.values())
    if not flat:
        failed.append("no_irs varied with element count")
    ok = not failed
    if ok:
        chains = {
            s: [_mean(records, s, v) for v in ELEMENT_GRID] for s in DQN_SCHEMES
        }
        best = chains["dqn_continuous"]
        return True, (
            f"dqn means non-decreasing over K={tuple(int(v) for v in ELEMENT_GRID)}"
            f" (continuous: {best[0]:.1f} -> {best[-1]:.1f}); no_irs exactly flat"
        )
    return False, "; ".join(failed)


def criterion_10() -> tuple[bool, str]:
    """Superposition with SIC beats orthogonal time sharing."""
    records = _power_records()
    noma = _mean(records, "dqn_continuous", 20.0)
    oma = _mean(records, "oma_tdma", 20.0)
    ratio = noma / oma
    ok = ratio >= 1.15
    return ok, (
        f"{TREND_SEEDS} seeds at 20 dBm: NOMA {noma:.2f} vs OMA {oma:.2f}, "
        f"ratio {ratio:.3f} ({(ratio - 1) * 100:.0f}% gain; reference figure 35%)"
    )


def criterion_11() -> tuple[bool, str]:
    """Exhaustive decode-order search beats sampled random orders."""
    records, checks = _order_study()
    opt = float(
        np.mean([r.sum_rate_period for r in records if r.scheme == "optimal_order"])
    )
    rand = float(
        np.mean([r.sum_rate_period for r in records if r.scheme == "random_order"])
    )
    dominated = sum(1 for c in checks if c["optimal"] >= c["sampled"] - 1e-9)
    ok = opt >= rand and dominated == len(checks)
    return ok, (
        f"{TREND_SEEDS} paired seeds: mean optimal {opt:.2f} vs random {rand:.2f}; "
        f"exhaustive dominated the sampled order on {dominated}/{len(checks)} instances"
    )


def criterion_12() -> tuple[bool, str]:
    """The learning curve rises, and the table does not beat the network."""
    cfg = ScenarioConfig()  # full default training budget
    dqn = run_one(cfg, 0, "dqn_continuous", cache=_slot_cache)
    tab = run_one(cfg, 0, "qlearning", cache=_slot_cache)
    n = len(dqn.episode_rewards)
    w = min(100, max(1, n // 2))
    mov = np.convolve(dqn.episode_rewards, np.ones(w) / w, mode="valid")
    k = max(1, len(mov) // 10)
    first = float(np.mean(mov[:k]))
    last = float(np.mean(mov[-k:]))
    d_final = float(np.mean(dqn.episode_rewards[-w:]))
    t_final = float(np.mean(tab.episode_rewards[-w:]))
    note = (
        "tabular <= dqn"
        if t_final <= d_final
        else "tabular above dqn (directional, recorded only)"
    )
    ok = last > first
    return ok, (
        f"{n} episodes, window {w}: moving average {first:.2f} -> {last:.2f}; "
        f"final window dqn {d_final:.2f}, tabular {t_final:.2f} ({note})"
    )


def criterion_13() -> tuple[bool, str]:
    """The double-sum reward telescopes to last minus first."""
    rng = SeededRng(1313).substream("tele")
    worst = 0.0
    for trial in range(50):
        sub = rng.substream(f"t{trial}")
        t_len = int(sub.integers(2, 9))
        l_users = int(sub.integers(1, 13))
        hist = sub.uniform(0.0, 5.0, (t_len, l_users))
        got = reward(hist)
        want = float(np.sum(hist[-1] - hist[0]))
        worst = max(worst, abs(got - want))
    ok = worst <= 1e-12
    return ok, f"50 random traces: worst telescoping error {worst:.1e}"


CRITERIA = (
    (1, "zf_correctness", criterion_1),
    (2, "em_monotonicity", criterion_2),
    (3, "kmeans_reduction", criterion_3),
    (4, "ascending_order", criterion_4),
    (5, "gradient_fidelity", criterion_5),
    (6, "sampler_uniformity", criterion_6),
    (7, "trend_power", criterion_7),
    (8, "trend_scheme_ordering", criterion_8),
    (9, "trend_elements", criterion_9),
    (10, "noma_vs_oma", criterion_10),
    (11, "decoding_order", criterion_11),
    (12, "learning_signal", criterion_12),
    (13, "reward_telescoping", criterion_13),
)


def run_all(wanted: list[int] | None = None) -> list[tuple[int, str, bool, str]]:
    """Run the requested criteria (all when wanted is None), never raising:
    an exception inside a check is reported as that check's failure."""
    results = []
    for idx, name, fn in CRITERIA:
        if wanted is not None and idx not in wanted:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((idx, name, ok, detail))
    return results
