"""User motion: initial-position sampling, ground-truth walks, and recurrent
position prediction.

Initial positions come from acceptance-rejection against a target density
over the service region.  Ground truth is a reflected Gaussian random walk.
The predictor is a single shared LSTM trained on region-normalized
coordinates; after each predicted slot the prediction is appended to the
training set and the network is briefly retrained (warm start), so later
slots build on earlier forecasts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import Position
from .numerics import SeededRng
from .optim import Adam, clip_grad_norm

__all__ = [
    "Region",
    "Trajectory",
    "AcceptRejectSampler",
    "LstmTrainConfig",
    "LstmNetwork",
    "sample_initial_positions",
    "simulate_true_motion",
    "lstm_forward",
    "lstm_train",
    "predict_positions",
    "normalize_trajectories",
    "denormalize_trajectories",
    "trajectories_to_csv",
    "trajectories_from_csv",
]


def _density_uniform(region: "Region", x, y):
    return np.ones_like(np.asarray(x, dtype=float))


def _density_gaussian_center(region: "Region", x, y):
    # Unnormalized bump centered mid-region, sigma = a quarter of the width.
    cx = 0.5 * (region.x_min + region.x_max)
    cy = 0.5 * (region.y_min + region.y_max)
    sx = 0.25 * (region.x_max - region.x_min)
    sy = 0.25 * (region.y_max - region.y_min)
    return np.exp(-0.5 * (((x - cx) / sx) ** 2 + ((y - cy) / sy) ** 2))


# Hotspot pattern runs corner to corner so every bump sits at a distinct
# bearing from the region's origin corner; fractions of width/height.
_HOTSPOT_OFFSETS = (
    (0.15, 0.85), (0.35, 0.65), (0.55, 0.50), (0.70, 0.30), (0.85, 0.10),
)


def _density_hotspots(region: "Region", x, y):
    # Five tight service hotspots; sigma scales with the region size.
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx = 0.06 * region.width
    sy = 0.06 * region.height
    out = np.zeros_like(x)
    for fx, fy in _HOTSPOT_OFFSETS:
        cx = region.x_min + fx * region.width
        cy = region.y_min + fy * region.height
        out = out + np.exp(-0.5 * (((x - cx) / sx) ** 2 + ((y - cy) / sy) ** 2))
    return out


DENSITY_FNS = {
    "uniform": _density_uniform,
    "gaussian_center": _density_gaussian_center,
    "hotspots": _density_hotspots,
}


@dataclass
class Region:
    """Axis-aligned service region with an unnormalized target density."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    density_fn_id: str = "uniform"

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("region bounds must satisfy min < max")
        if self.density_fn_id not in DENSITY_FNS:
            raise ValueError(f"unknown density '{self.density_fn_id}'")

    def density(self, x, y):
        return DENSITY_FNS[self.density_fn_id](self, x, y)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        return (
            (p[:, 0] >= self.x_min)
            & (p[:, 0] <= self.x_max)
            & (p[:, 1] >= self.y_min)
            & (p[:, 1] <= self.y_max)
        )

    def normalize(self, points: np.ndarray) -> np.ndarray:
        """Meters -> unit square."""
        p = np.asarray(points, dtype=float)
        out = np.empty_like(p)
        out[..., 0] = (p[..., 0] - self.x_min) / self.width
        out[..., 1] = (p[..., 1] - self.y_min) / self.height
        return out

    def denormalize(self, points: np.ndarray) -> np.ndarray:
        """Unit square -> meters."""
        p = np.asarray(points, dtype=float)
        out = np.empty_like(p)
        out[..., 0] = self.x_min + p[..., 0] * self.width
        out[..., 1] = self.y_min + p[..., 1] * self.height
        return out


@dataclass
class Trajectory:
    """One user's positions over consecutive slots, shape (T, 2)."""

    user_id: int
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError(f"positions must be (T, 2), got {self.positions.shape}")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def position(self, t: int) -> Position:
        return Position(*self.positions[t])


@dataclass
class AcceptRejectSampler:
    """Uniform-proposal acceptance-rejection sampler over a region.

    `envelope_constant` must dominate the density everywhere; a proposal x is
    accepted when u * Z <= density(x).  Every proposal's indicator is kept in
    `audit` for inspection.
    """

    region: Region
    envelope_constant: float
    rng: SeededRng
    audit: list[int] = field(default_factory=list)
    n_proposals: int = 0
    n_accepted: int = 0

    def __post_init__(self):
        if self.envelope_constant <= 0:
            raise ValueError("envelope constant must be positive")

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposals if self.n_proposals else 0.0


_MAX_PROPOSALS = 1_000_000
_MIN_ACCEPT_RATE = 1e-3
_PROPOSAL_BATCH = 512


def sample_initial_positions(sampler: AcceptRejectSampler, l_users: int) -> list[Position]:
    """Draw `l_users` accepted positions; raises if acceptance stays pathological."""
    if l_users < 1:
        raise ValueError(f"user count must be >= 1, got {l_users}")
    region, z = sampler.region, sampler.envelope_constant
    accepted: list[Position] = []
    while len(accepted) < l_users:
        m = _PROPOSAL_BATCH
        xs = sampler.rng.uniform(region.x_min, region.x_max, m)
        ys = sampler.rng.uniform(region.y_min, region.y_max, m)
        us = sampler.rng.random(m)
        dens = np.asarray(region.density(xs, ys), dtype=float)
        if np.any(dens > z * (1 + 1e-12)):
            raise ValueError("envelope constant below target density on the region")
        take = us * z <= dens
        sampler.audit.extend(int(t) for t in take)
        sampler.n_proposals += m
        sampler.n_accepted += int(np.sum(take))
        for x, y in zip(xs[take], ys[take]):
            if len(accepted) < l_users:
                accepted.append(Position(float(x), float(y)))
        if (
            sampler.n_proposals >= _MAX_PROPOSALS
            and sampler.acceptance_rate < _MIN_ACCEPT_RATE
        ):
            raise RuntimeError(
                f"acceptance rate {sampler.acceptance_rate:.2e} after "
                f"{sampler.n_proposals} proposals; check the envelope constant"
            )
    return accepted


def _reflect(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # Fold back into [lo, hi]; handles multiple bounces in one step.
    span = hi - lo
    y = np.mod(values - lo, 2.0 * span)
    return lo + np.where(y > span, 2.0 * span - y, y)


def simulate_true_motion(
    starts: list[Position],
    region: Region,
    n_slots: int,
    step_std: float,
    rng: SeededRng,
) -> list[Trajectory]:
    """Reflected Gaussian random walk from `starts`, one step per slot.

    Returns one trajectory per user of length n_slots + 1 (start included).
    """
    if step_std <= 0:
        raise ValueError(f"step_std must be positive, got {step_std}")
    if n_slots < 0:
        raise ValueError("slot count must be >= 0")
    pos = np.array([[p.x, p.y] for p in starts], dtype=float)
    if not np.all(region.contains(pos)):
        raise ValueError("a start position lies outside the region")
    path = [pos.copy()]
    for _ in range(n_slots):
        pos = pos + step_std * rng.standard_normal(pos.shape)
        pos[:, 0] = _reflect(pos[:, 0], region.x_min, region.x_max)
        pos[:, 1] = _reflect(pos[:, 1], region.y_min, region.y_max)
        path.append(pos.copy())
    stacked = np.stack(path, axis=0)  # (T, L, 2)
    return [Trajectory(user_id=i, positions=stacked[:, i]) for i in range(len(starts))]


# ---------------------------------------------------------------------------
# LSTM predictor
# ---------------------------------------------------------------------------

_WEIGHT_NAMES = (
    "w_i", "v_i", "b_i",
    "w_f", "v_f", "b_f",
    "w_o", "v_o", "b_o",
    "w_c", "v_c",
    "w_out", "b_out",
)


@dataclass
class LstmTrainConfig:
    epochs: int = 300
    learning_rate: float = 0.005
    grad_clip_norm: float = 1.0
    lr_drop_factor: float = 0.2
    lr_drop_epoch: int = 125
    hidden_size: int = 200
    retrain_epochs: int | None = None  # None -> epochs // 4
    early_stop_patience: int | None = None  # None disables early stopping

    def __post_init__(self):
        if self.epochs < 0 or self.hidden_size < 1:
            raise ValueError("epochs must be >= 0 and hidden_size >= 1")
        if self.learning_rate <= 0 or not (0 < self.lr_drop_factor <= 1):
            raise ValueError("bad learning-rate settings")

    @property
    def effective_retrain_epochs(self) -> int:
        if self.retrain_epochs is not None:
            return self.retrain_epochs
        return max(1, self.epochs // 4)


@dataclass
class LstmNetwork:
    """Single-layer LSTM with a linear head mapping hidden state -> (x, y).

    Gate weights follow the usual input/forget/output sigmoids plus a tanh
    candidate; the candidate path carries no bias.
    """

    hidden_size: int
    w_i: np.ndarray
    v_i: np.ndarray
    b_i: np.ndarray
    w_f: np.ndarray
    v_f: np.ndarray
    b_f: np.ndarray
    w_o: np.ndarray
    v_o: np.ndarray
    b_o: np.ndarray
    w_c: np.ndarray
    v_c: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    loss_history: list = field(default_factory=list)

    @classmethod
    def initialize(
        cls, hidden_size: int, rng: SeededRng, input_dim: int = 2, output_dim: int = 2
    ) -> "LstmNetwork":
        if hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        s = 1.0 / np.sqrt(hidden_size)
        h, d, o = hidden_size, input_dim, output_dim

        def u(*shape):
            return rng.uniform(-s, s, shape)

        return cls(
            hidden_size=h,
            w_i=u(h, d), v_i=u(h, h), b_i=np.zeros(h),
            w_f=u(h, d), v_f=u(h, h), b_f=np.zeros(h),
            w_o=u(h, d), v_o=u(h, h), b_o=np.zeros(h),
            w_c=u(h, d), v_c=u(h, h),
            w_out=u(o, h), b_out=np.zeros(o),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _WEIGHT_NAMES}

    def copy(self) -> "LstmNetwork":
        kwargs = {name: getattr(self, name).copy() for name in _WEIGHT_NAMES}
        return LstmNetwork(
            hidden_size=self.hidden_size, loss_history=list(self.loss_history), **kwargs
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _forward_seq(net: LstmNetwork, x: np.ndarray) -> dict:
    """Run the cell over a batch of sequences.

    x: (T, B, input_dim).  Returns caches for backprop plus per-step
    predictions (T, B, 2) and the hidden-state stack (T, B, H).
    """
    t_len, batch, _ = x.shape
    h = net.hidden_size
    r = np.zeros((batch, h))
    c = np.zeros((batch, h))
    steps = []
    preds = np.empty((t_len, batch, net.w_out.shape[0]))
    hidden = np.empty((t_len, batch, h))
    for t in range(t_len):
        xt = x[t]
        r_prev, c_prev = r, c
        gi = _sigmoid(xt @ net.w_i.T + r_prev @ net.v_i.T + net.b_i)
        gf = _sigmoid(xt @ net.w_f.T + r_prev @ net.v_f.T + net.b_f)
        go = _sigmoid(xt @ net.w_o.T + r_prev @ net.v_o.T + net.b_o)
        cand = np.tanh(xt @ net.w_c.T + r_prev @ net.v_c.T)
        c = gf * c_prev + gi * cand
        tc = np.tanh(c)
        r = go * tc
        y = r @ net.w_out.T + net.b_out
        if not np.all(np.isfinite(r)):
            raise FloatingPointError(f"non-finite activation at step {t}")
        steps.append(
            dict(x=xt, r_prev=r_prev, c_prev=c_prev, gi=gi, gf=gf, go=go,
                 cand=cand, c=c, tc=tc, r=r)
        )
        preds[t] = y
        hidden[t] = r
    return dict(steps=steps, preds=preds, hidden=hidden)


def lstm_forward(net: LstmNetwork, sequence: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hidden states and one-step-ahead prediction for a single sequence.

    `sequence` is (T, 2) in normalized coordinates.  Returns the (T, H)
    hidden stack and the (2,) prediction from the final hidden state.
    """
    seq = np.asarray(sequence, dtype=float)
    if seq.ndim != 2 or seq.shape[1] != 2 or seq.shape[0] < 1:
        raise ValueError(f"sequence must be (T>=1, 2), got {seq.shape}")
    out = _forward_seq(net, seq[:, None, :])
    return out["hidden"][:, 0, :], out["preds"][-1, 0, :]


def _loss_and_grads(
    net: LstmNetwork, x: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean-squared one-step-ahead error and its gradients (truncated nowhere:
    full backprop through time over the whole batch)."""
    fwd = _forward_seq(net, x)
    steps, preds = fwd["steps"], fwd["preds"]
    diff = preds - targets
    n_elem = diff.size
    loss = float(np.mean(diff**2))

    grads = {name: np.zeros_like(getattr(net, name)) for name in _WEIGHT_NAMES}
    t_len = x.shape[0]
    dr_next = np.zeros_like(steps[0]["r"])
    dc_next = np.zeros_like(steps[0]["c"])
    for t in range(t_len - 1, -1, -1):
        st = steps[t]
        dy = 2.0 * diff[t] / n_elem
        grads["w_out"] += dy.T @ st["r"]
        grads["b_out"] += dy.sum(axis=0)
        dr = dy @ net.w_out + dr_next

        do = dr * st["tc"]
        da_o = do * st["go"] * (1 - st["go"])
        dc = dr * st["go"] * (1 - st["tc"] ** 2) + dc_next
        di = dc * st["cand"]
        da_i = di * st["gi"] * (1 - st["gi"])
        dcand = dc * st["gi"]
        da_c = dcand * (1 - st["cand"] ** 2)
        df = dc * st["c_prev"]
        da_f = df * st["gf"] * (1 - st["gf"])

        grads["w_i"] += da_i.T @ st["x"]
        grads["v_i"] += da_i.T @ st["r_prev"]
        grads["b_i"] += da_i.sum(axis=0)
        grads["w_f"] += da_f.T @ st["x"]
        grads["v_f"] += da_f.T @ st["r_prev"]
        grads["b_f"] += da_f.sum(axis=0)
        grads["w_o"] += da_o.T @ st["x"]
        grads["v_o"] += da_o.T @ st["r_prev"]
        grads["b_o"] += da_o.sum(axis=0)
        grads["w_c"] += da_c.T @ st["x"]
        grads["v_c"] += da_c.T @ st["r_prev"]

        dr_next = da_i @ net.v_i + da_f @ net.v_f + da_o @ net.v_o + da_c @ net.v_c
        dc_next = dc * st["gf"]
    return loss, grads


def _stack_trajectories(trajectories: list[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    lengths = {len(t) for t in trajectories}
    if len(lengths) != 1:
        raise ValueError(f"trajectories must share a length, got {sorted(lengths)}")
    (t_len,) = lengths
    if t_len < 2:
        raise ValueError("trajectories must have at least 2 positions to train on")
    seqs = np.stack([t.positions for t in trajectories], axis=1)  # (T, B, 2)
    return seqs[:-1], seqs[1:]


def lstm_train(
    net: LstmNetwork, trajectories: list[Trajectory], cfg: LstmTrainConfig
) -> LstmNetwork:
    """Train on one-step-ahead prediction with Adam, gradient clipping, and a
    single scheduled learning-rate drop.  The input net is left untouched;
    epochs == 0 returns it as-is.
    """
    if cfg.epochs == 0:
        return net
    if not trajectories:
        raise ValueError("no trajectories to train on")
    x, targets = _stack_trajectories(trajectories)

    net = net.copy()
    params = net.params()
    adam = Adam()
    best = np.inf
    stale = 0
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate
        if epoch >= cfg.lr_drop_epoch:
            lr *= cfg.lr_drop_factor
        loss, grads = _loss_and_grads(net, x, targets)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"training diverged at epoch {epoch}: loss={loss}, "
                f"lr={lr}, batch={x.shape}"
            )
        clip_grad_norm(grads, cfg.grad_clip_norm)
        adam.step(params, grads, lr)
        net.loss_history.append(loss)
        if cfg.early_stop_patience is not None:
            if loss < best - 1e-12:
                best, stale = loss, 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    return net


def predict_positions(
    net: LstmNetwork,
    history: list[Trajectory],
    n_slots: int,
    cfg: LstmTrainConfig,
) -> tuple[list[Trajectory], LstmNetwork]:
    """Roll the predictor forward `n_slots` slots.

    Each round predicts the next position for every user from its full
    (observed + previously predicted) sequence, appends the predictions, and
    retrains the shared net for a short warm-started burst.  Inputs and
    outputs are in normalized coordinates; predictions are clipped to the
    unit square.  Returns the predicted trajectories (length n_slots each)
    and the final net.
    """
    if n_slots < 1:
        raise ValueError(f"slot count must be >= 1, got {n_slots}")
    if not history:
        raise ValueError("empty history")
    seqs = [np.asarray(t.positions, dtype=float).copy() for t in history]
    retrain_cfg = replace(cfg, epochs=cfg.effective_retrain_epochs)
    predicted = [[] for _ in history]
    for _ in range(n_slots):
        batch = np.stack(seqs, axis=1)  # equal lengths enforced by training
        out = _forward_seq(net, batch)
        nxt = np.clip(out["preds"][-1], 0.0, 1.0)  # (B, 2)
        for i in range(len(seqs)):
            predicted[i].append(nxt[i])
            seqs[i] = np.vstack([seqs[i], nxt[i]])
        extended = [
            Trajectory(user_id=t.user_id, positions=s) for t, s in zip(history, seqs)
        ]
        net = lstm_train(net, extended, retrain_cfg)
    out = [
        Trajectory(user_id=t.user_id, positions=np.array(p))
        for t, p in zip(history, predicted)
    ]
    return out, net


def normalize_trajectories(trajectories: list[Trajectory], region: Region) -> list[Trajectory]:
    return [
        Trajectory(user_id=t.user_id, positions=region.normalize(t.positions))
        for t in trajectories
    ]


def denormalize_trajectories(trajectories: list[Trajectory], region: Region) -> list[Trajectory]:
    return [
        Trajectory(user_id=t.user_id, positions=region.denormalize(t.positions))
        for t in trajectories
    ]


def trajectories_to_csv(trajectories: list[Trajectory], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "slot", "x_m", "y_m"])
        for traj in trajectories:
            for slot, (x, y) in enumerate(traj.positions):
                writer.writerow([traj.user_id, slot, f"{x:.6g}", f"{y:.6g}"])


def trajectories_from_csv(path: str) -> list[Trajectory]:
    rows: dict[int, list[tuple[int, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.setdefault(int(row["user_id"]), []).append(
                (int(row["slot"]), float(row["x_m"]), float(row["y_m"]))
            )
    out = []
    for user_id in sorted(rows):
        entries = sorted(rows[user_id])
        out.append(
            Trajectory(user_id=user_id, positions=np.array([(x, y) for _, x, y in entries]))
        )
    return out
