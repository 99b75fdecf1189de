"""Stacked continuous-time LSTM intensity model for LOB event streams.

One CT-LSTM unit per event type; unit i's hidden state alone drives the
type-i intensity through a softplus read-out. Between events each unit's
cell decays exponentially toward a learned target, so intensities are
deterministic functions of the elapsed time since the last event.

Two synchronized forward implementations: a tape path for training and a
plain-numpy path for evaluation/simulation, tested to agree exactly. The
tape path uses fused kernels (one node per event step, with hand-written
backward closures) because a window touches thousands of small arrays and
generic op-by-op tracing would dominate the runtime; the fused backwards
are covered by the finite-difference gradient suite.

Parameter layout (all float64):
  Wx   (m*5D, m+n_states)  stacked per-unit input-gate blocks
  Wh   (m*5D, D)           stacked per-unit recurrent blocks
  b    (m, 5D)             gate biases
  wout (m, D)              per-type intensity read-out rows
Gate order within the 5D axis: input, forget, candidate, decay, output.
The evolving state packs (cell, target, decay rate, output gate) into one
(m, 4D) array.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .autodiff import RmspropState, Tensor, rmsprop_step, save_checkpoint, \
    load_checkpoint, zero_grads

__all__ = ["CtLstmConfig", "CtLstmState", "init_params", "step", "intensities",
           "window_nll", "nll_tape", "window_nll_np", "stream_nll", "accuracy",
           "train", "save_model", "load_model", "TrainResult"]


@dataclass(frozen=True)
class CtLstmConfig:
    m: int = 12                 # event types / stacked units
    hidden: int = 32
    n_states: int = 3           # market-state categories
    mc_samples: int = 1         # MC draws per inter-event interval in the loss
    epochs: int = 20
    batch: int = 256
    window: int = 100
    lr: float = 0.002
    splits: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.window < 2:
            raise ValueError("hidden >= 1 and window >= 2 required")
        if abs(sum(self.splits) - 1.0) > 1e-9:
            raise ValueError("splits must sum to 1")


def init_params(cfg: CtLstmConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Glorot-uniform gate weights, forget-gate bias +1, zero decay bias."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    D, m = cfg.hidden, cfg.m
    in_x = m + cfg.n_states
    lim = np.sqrt(6.0 / (in_x + D + 5 * D))
    params = {
        "Wx": rng.uniform(-lim, lim, size=(m * 5 * D, in_x)),
        "Wh": rng.uniform(-lim, lim, size=(m * 5 * D, D)),
        "b": np.zeros((m, 5 * D)),
        "wout": rng.uniform(-lim, lim, size=(m, D)),
    }
    params["b"][:, D:2 * D] = 1.0  # forget-gate bias
    return params


def _views(params, cfg: CtLstmConfig):
    D, m = cfg.hidden, cfg.m
    Wx = params["Wx"]
    Wh = params["Wh"]
    wx = Wx.value if isinstance(Wx, Tensor) else Wx
    wh = Wh.value if isinstance(Wh, Tensor) else Wh
    b = params["b"].value if isinstance(params["b"], Tensor) else params["b"]
    wout = params["wout"].value if isinstance(params["wout"], Tensor) else params["wout"]
    return (wx.reshape(m, 5 * D, -1), wh.reshape(m, 5 * D, D), b, wout)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---- numpy path ----------------------------------------------------------------


@dataclass
class CtLstmState:
    """Per-unit evolving state, packed (m, 4D): [cell, target, decay, out-gate].

    Between events: c(s) = g + (c - g) * exp(-delta * s) and
    h(s) = o * tanh(c(s)).
    """

    packed: np.ndarray

    @classmethod
    def initial(cls, cfg: CtLstmConfig) -> "CtLstmState":
        D = cfg.hidden
        p = np.zeros((cfg.m, 4 * D))
        p[:, 2 * D:3 * D] = 1.0  # decay rate
        return cls(p)

    def parts(self, D: int):
        p = self.packed
        return p[:, :D], p[:, D:2 * D], p[:, 2 * D:3 * D], p[:, 3 * D:4 * D]


def _decay_hidden_np(state: CtLstmState, dt: float, D: int):
    c, g, delta, o = state.parts(D)
    cm = g + (c - g) * np.exp(-delta * dt)
    return cm, o * np.tanh(cm)


def intensities(params, state: CtLstmState, dt: float) -> np.ndarray:
    """Intensity vector at elapsed time dt since the last event."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    wout = params["wout"]
    D = wout.shape[1]
    _, h = _decay_hidden_np(state, dt, D)
    return np.logaddexp(0.0, (wout * h).sum(axis=1))


def _gates_np(params, h: np.ndarray, etype: int, mkt: int, cfg: CtLstmConfig):
    Wx3, Wh3, b, _ = _views(params, cfg)
    z = Wx3[:, :, etype] + Wx3[:, :, cfg.m + mkt] + np.einsum("uij,uj->ui", Wh3, h) + b
    D = cfg.hidden
    return (_sigmoid(z[:, :D]), _sigmoid(z[:, D:2 * D]), np.tanh(z[:, 2 * D:3 * D]),
            np.exp(z[:, 3 * D:4 * D]), _sigmoid(z[:, 4 * D:5 * D]))


def step(params, state: CtLstmState, etype: int, mkt_state: int, dt: float,
         cfg: CtLstmConfig) -> CtLstmState:
    """Advance the state through one observed event (numpy path)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    D = cfg.hidden
    cm, h = _decay_hidden_np(state, dt, D)
    i_g, f_g, cand, delta, o_g = _gates_np(params, h, etype, mkt_state, cfg)
    if not np.all(np.isfinite(delta)):
        bad = int(np.argwhere(~np.isfinite(delta).all(axis=1))[0])
        raise FloatingPointError(f"non-finite state in unit {bad}")
    packed = np.concatenate([cm, f_g * cm + i_g * cand, delta, o_g], axis=1)
    return CtLstmState(packed)


# ---- fused tape kernels ----------------------------------------------------------


def _tape_initial(cfg: CtLstmConfig) -> Tensor:
    return Tensor(CtLstmState.initial(cfg).packed)


def _node_step(params_t: dict[str, Tensor], S: Tensor, etype: int, mkt: int,
               dt: float, cfg: CtLstmConfig) -> Tensor:
    """One event update on the tape: packed state -> packed state."""
    D, m = cfg.hidden, cfg.m
    Wx_t, Wh_t, b_t = params_t["Wx"], params_t["Wh"], params_t["b"]
    Wx3 = Wx_t.value.reshape(m, 5 * D, -1)
    Wh3 = Wh_t.value.reshape(m, 5 * D, D)
    p = S.value
    c, g, delta, o = p[:, :D], p[:, D:2 * D], p[:, 2 * D:3 * D], p[:, 3 * D:4 * D]

    e_dec = np.exp(-delta * dt)
    cm = g + (c - g) * e_dec
    th = np.tanh(cm)
    h = o * th
    z = Wx3[:, :, etype] + Wx3[:, :, m + mkt] + np.einsum("uij,uj->ui", Wh3, h) + b_t.value
    i_g = _sigmoid(z[:, :D])
    f_g = _sigmoid(z[:, D:2 * D])
    cand = np.tanh(z[:, 2 * D:3 * D])
    d_new = np.exp(z[:, 3 * D:4 * D])
    o_new = _sigmoid(z[:, 4 * D:5 * D])
    packed = np.concatenate([cm, f_g * cm + i_g * cand, d_new, o_new], axis=1)

    out = Tensor(packed, parents=(Wx_t, Wh_t, b_t, S))

    def bw(gp):
        g_cm_out = gp[:, :D]
        g_gnew = gp[:, D:2 * D]
        g_dnew = gp[:, 2 * D:3 * D]
        g_onew = gp[:, 3 * D:4 * D]
        dz = np.empty_like(z)
        dz[:, :D] = (g_gnew * cand) * i_g * (1.0 - i_g)
        dz[:, D:2 * D] = (g_gnew * cm) * f_g * (1.0 - f_g)
        dz[:, 2 * D:3 * D] = (g_gnew * i_g) * (1.0 - cand * cand)
        dz[:, 3 * D:4 * D] = g_dnew * d_new
        dz[:, 4 * D:5 * D] = g_onew * o_new * (1.0 - o_new)
        dh = np.einsum("uij,ui->uj", Wh3, dz)
        d_o = dh * th
        d_cm = g_cm_out + g_gnew * f_g + dh * o * (1.0 - th * th)
        d_c = d_cm * e_dec
        d_g = d_cm * (1.0 - e_dec)
        d_delta = d_cm * (c - g) * e_dec * (-dt)
        dWx = np.zeros_like(Wx3)
        dWx[:, :, etype] += dz
        dWx[:, :, m + mkt] += dz
        dWh = np.einsum("ui,uj->uij", dz, h)
        dS = np.concatenate([d_c, d_g, d_delta, d_o], axis=1)
        return (dWx.reshape(Wx_t.value.shape), dWh.reshape(Wh_t.value.shape), dz, dS)

    out._bw = bw
    return out


def _node_log_lam(params_t, S: Tensor, dt: float, tj: int, cfg: CtLstmConfig) -> Tensor:
    """log lambda_{tj}(t^-): read-out of unit tj at elapsed dt."""
    D = cfg.hidden
    wout_t = params_t["wout"]
    p = S.value
    c, g, delta, o = (p[tj, :D], p[tj, D:2 * D], p[tj, 2 * D:3 * D], p[tj, 3 * D:4 * D])
    e_dec = np.exp(-delta * dt)
    cm = g + (c - g) * e_dec
    th = np.tanh(cm)
    h = o * th
    pre = float(wout_t.value[tj] @ h)
    lam = np.logaddexp(0.0, pre)
    out = Tensor(np.log(lam), parents=(wout_t, S))

    def bw(gs):
        d_pre = float(gs) * _sigmoid(pre) / lam
        dwout = np.zeros_like(wout_t.value)
        dwout[tj] = d_pre * h
        dh = d_pre * wout_t.value[tj]
        d_o = dh * th
        d_cm = dh * o * (1.0 - th * th)
        dS = np.zeros_like(p)
        dS[tj, :D] = d_cm * e_dec
        dS[tj, D:2 * D] = d_cm * (1.0 - e_dec)
        dS[tj, 2 * D:3 * D] = d_cm * (c - g) * e_dec * (-dt)
        dS[tj, 3 * D:4 * D] = d_o
        return (dwout, dS)

    out._bw = bw
    return out


def _node_total_intensity(params_t, S: Tensor, dt: float, cfg: CtLstmConfig) -> Tensor:
    """sum_i lambda_i at elapsed dt; one fused node."""
    D = cfg.hidden
    wout_t = params_t["wout"]
    wout = wout_t.value
    p = S.value
    c, g, delta, o = p[:, :D], p[:, D:2 * D], p[:, 2 * D:3 * D], p[:, 3 * D:4 * D]
    e_dec = np.exp(-delta * dt)
    cm = g + (c - g) * e_dec
    th = np.tanh(cm)
    h = o * th
    pre = (wout * h).sum(axis=1)
    out = Tensor(np.logaddexp(0.0, pre).sum(), parents=(wout_t, S))

    def bw(gs):
        d_pre = float(gs) * _sigmoid(pre)
        dwout = d_pre[:, None] * h
        dh = d_pre[:, None] * wout
        d_o = dh * th
        d_cm = dh * o * (1.0 - th * th)
        dS = np.concatenate(
            [d_cm * e_dec, d_cm * (1.0 - e_dec), d_cm * (c - g) * e_dec * (-dt), d_o],
            axis=1)
        return (dwout, dS)

    out._bw = bw
    return out


def window_nll(
    params_t: dict[str, Tensor],
    types: np.ndarray,
    mkts: np.ndarray,
    dts: np.ndarray,
    cfg: CtLstmConfig,
    mc_u: np.ndarray | None = None,
) -> tuple[Tensor, int]:
    """Negative log-likelihood of one event window on the tape.

    dts[j] is the gap preceding event j (dts[0] is ignored; the window
    starts at its first event). mc_u holds uniform(0,1) fractions for the
    Monte-Carlo compensator, shape (J-1, mc_samples): drawn fresh by the
    caller during training, fixed for reproducible evaluation.

    Returns (loss tensor, number of scored events J-1).
    """
    J = len(types)
    if J < 2:
        raise ValueError("window must contain at least 2 events")
    if mc_u is None:
        mc_u = np.full((J - 1, cfg.mc_samples), 0.5)
    S = _tape_initial(cfg)
    S = _node_step(params_t, S, int(types[0]), int(mkts[0]), 0.0, cfg)
    loss = Tensor(0.0)
    for j in range(1, J):
        dt = float(dts[j])
        tj = int(types[j])
        loss = loss - _node_log_lam(params_t, S, dt, tj, cfg)
        if dt > 0:
            acc = None
            for k in range(mc_u.shape[1]):
                lam = _node_total_intensity(params_t, S, dt * float(mc_u[j - 1, k]), cfg)
                acc = lam if acc is None else acc + lam
            loss = loss + acc * (dt / mc_u.shape[1])
        S = _node_step(params_t, S, tj, int(mkts[j]), dt, cfg)
    return loss, J - 1


def nll_tape(params: dict[str, np.ndarray], types, mkts, dts, cfg: CtLstmConfig,
             mc_u: np.ndarray | None = None) -> tuple[Tensor, dict[str, Tensor], int]:
    """Lift numpy params onto the tape and score one window."""
    params_t = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
    loss, n = window_nll(params_t, np.asarray(types), np.asarray(mkts),
                         np.asarray(dts, dtype=float), cfg, mc_u)
    return loss, params_t, n


# ---- numpy evaluation ------------------------------------------------------------


def window_nll_np(params, types, mkts, dts, cfg: CtLstmConfig,
                  mc_u: np.ndarray | None = None) -> tuple[float, int]:
    """Same quantity as window_nll, computed without the tape."""
    J = len(types)
    if mc_u is None:
        mc_u = np.full((J - 1, cfg.mc_samples), 0.5)
    state = CtLstmState.initial(cfg)
    state = step(params, state, int(types[0]), int(mkts[0]), 0.0, cfg)
    loglik = 0.0
    integral = 0.0
    for j in range(1, J):
        dt = float(dts[j])
        tj = int(types[j])
        loglik += np.log(intensities(params, state, dt)[tj])
        if dt > 0:
            tot = 0.0
            for k in range(mc_u.shape[1]):
                tot += intensities(params, state, dt * float(mc_u[j - 1, k])).sum()
            integral += dt * tot / mc_u.shape[1]
        state = step(params, state, tj, int(mkts[j]), dt, cfg)
    return integral - loglik, J - 1


def _windows(n: int, w: int) -> list[tuple[int, int]]:
    """Non-overlapping [start, stop) windows of length w."""
    return [(s, s + w) for s in range(0, n - w + 1, w)]


def stream_nll(params, types, mkts, dts, cfg: CtLstmConfig,
               mc_u_per_window: list[np.ndarray] | None = None) -> float:
    """Per-event NLL over non-overlapping windows of a full stream."""
    total, count = 0.0, 0
    for wi, (s, e) in enumerate(_windows(len(types), cfg.window)):
        mc = None if mc_u_per_window is None else mc_u_per_window[wi]
        loss, n = window_nll_np(params, types[s:e], mkts[s:e], dts[s:e], cfg, mc)
        total += loss
        count += n
    if count == 0:
        raise ValueError("stream shorter than one window")
    return total / count


def accuracy(params, types, mkts, dts, cfg: CtLstmConfig) -> float:
    """Fraction of events whose pre-event argmax intensity matches the type.

    Ties break toward the lowest type index (argmax convention). Scored over
    the same non-overlapping windows as the NLL.
    """
    hits, count = 0, 0
    for s, e in _windows(len(types), cfg.window):
        state = CtLstmState.initial(cfg)
        state = step(params, state, int(types[s]), int(mkts[s]), 0.0, cfg)
        for j in range(s + 1, e):
            lam = intensities(params, state, float(dts[j]))
            hits += int(np.argmax(lam) == types[j])
            count += 1
            state = step(params, state, int(types[j]), int(mkts[j]), float(dts[j]), cfg)
    if count == 0:
        raise ValueError("stream shorter than one window")
    return hits / count


# ---- training --------------------------------------------------------------------


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]        # best-validation checkpoint
    trace: dict[str, list[float]]        # per-epoch train/val curves
    test_nll: float
    test_accuracy: float
    best_epoch: int


def _split_stream(types, mkts, dts, splits):
    n = len(types)
    cut1 = int(n * splits[0])
    cut2 = cut1 + int(n * splits[1])
    return (
        (types[:cut1], mkts[:cut1], dts[:cut1]),
        (types[cut1:cut2], mkts[cut1:cut2], dts[cut1:cut2]),
        (types[cut2:], mkts[cut2:], dts[cut2:]),
    )


def train(cfg: CtLstmConfig, times, types, mkts, verbose: bool = False) -> TrainResult:
    """Fit the model on one stream per the rolling-window protocol.

    Sequential 60/20/20 split, non-overlapping windows, per-event-normalized
    batch loss, RMSprop updates, best-validation checkpoint selection.
    """
    times = np.asarray(times, dtype=float)
    types = np.asarray(types, dtype=int)
    mkts = np.asarray(mkts, dtype=int)
    dts = np.diff(times, prepend=times[0] if len(times) else 0.0)
    train_s, val_s, test_s = _split_stream(types, mkts, dts, cfg.splits)

    wins = _windows(len(train_s[0]), cfg.window)
    if not wins or len(val_s[0]) < cfg.window or len(test_s[0]) < cfg.window:
        raise ValueError("stream too short for one window per split")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg)
    opt = RmspropState(lr=cfg.lr)

    # frozen MC fractions so validation NLL is comparable across epochs
    def frozen_mc(seg):
        r = np.random.default_rng(cfg.seed + 1)
        return [r.uniform(size=(cfg.window - 1, cfg.mc_samples))
                for _ in _windows(len(seg[0]), cfg.window)]

    val_mc = frozen_mc(val_s)
    test_mc = frozen_mc(test_s)

    trace = {"train_loss": [], "val_loss": [], "val_accuracy": []}
    best = (np.inf, -1, None)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(wins))
        epoch_loss, epoch_events = 0.0, 0
        for bstart in range(0, len(order), cfg.batch):
            batch = order[bstart:bstart + cfg.batch]
            # per-event normalization; every window scores (window - 1) events
            n_events = len(batch) * (cfg.window - 1)
            params_t = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
            batch_loss = 0.0
            for wi in batch:
                s, e = wins[wi]
                mc = rng.uniform(size=(e - s - 1, cfg.mc_samples))
                loss, _ = window_nll(params_t, train_s[0][s:e], train_s[1][s:e],
                                     train_s[2][s:e], cfg, mc)
                scaled = loss * (1.0 / n_events)
                if not np.isfinite(scaled.value):
                    raise RuntimeError(
                        f"training diverged (non-finite loss) at epoch {epoch}, "
                        f"batch {bstart // cfg.batch}"
                    )
                scaled.backward()  # gradients accumulate on params_t
                batch_loss += float(scaled.value)
            rmsprop_step(params_t, opt)
            params = {k: t.value for k, t in params_t.items()}
            zero_grads(params_t)
            epoch_loss += batch_loss * n_events
            epoch_events += n_events
        val_nll = stream_nll(params, *val_s, cfg, val_mc)
        val_acc = accuracy(params, *val_s, cfg)
        trace["train_loss"].append(epoch_loss / epoch_events)
        trace["val_loss"].append(float(val_nll))
        trace["val_accuracy"].append(val_acc)
        if val_nll < best[0]:
            best = (val_nll, epoch, copy.deepcopy(params))
        if verbose:
            print(f"epoch {epoch}: train {epoch_loss / epoch_events:.4f} "
                  f"val {val_nll:.4f} acc {val_acc:.4f}")

    best_params = best[2]
    test_nll = stream_nll(best_params, *test_s, cfg, test_mc)
    test_acc = accuracy(best_params, *test_s, cfg)
    return TrainResult(params=best_params, trace=trace, test_nll=float(test_nll),
                       test_accuracy=test_acc, best_epoch=best[1])


# ---- persistence -----------------------------------------------------------------


def save_model(params: dict[str, np.ndarray], cfg: CtLstmConfig, out_dir: str | Path,
               metrics: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "model.ckpt", meta={"kind": "ctlstm"})
    sidecar = {"config": asdict(cfg), "metrics": metrics or {}}
    (out / "model.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_model(model_dir: str | Path) -> tuple[dict[str, np.ndarray], CtLstmConfig, dict]:
    model_dir = Path(model_dir)
    params, _ = load_checkpoint(model_dir / "model.ckpt")
    sidecar = json.loads((model_dir / "model.json").read_text())
    cfgd = sidecar["config"]
    cfgd["splits"] = tuple(cfgd["splits"])
    cfg = CtLstmConfig(**cfgd)
    return params, cfg, sidecar.get("metrics", {})
