"""Discrete-action soft actor-critic over the market-making environment.

Three actions, so the categorical policy and the soft Bellman targets are
computed in exact expectation form (no sampling inside the losses). Twin
critics with polyak-averaged targets, automatic temperature tuning toward a
target entropy, uniform replay. All networks run on the in-repo tape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import RmspropState, Tensor, rmsprop_step, save_checkpoint, \
    load_checkpoint, logsumexp, zero_grads
from .mm_env import MarketMakingEnv, ACTIONS, legal_actions, MmEpisode, run_episode

__all__ = ["SacConfig", "ReplayBuffer", "SacAgent", "train_agent",
           "evaluate_agent", "policy_loss", "critic_loss"]

_MASK_OFFSET = -1e9
N_ACTIONS = 3


@dataclass(frozen=True)
class SacConfig:
    hidden: tuple[int, int] = (64, 64)
    gamma: float = 0.99
    tau: float = 0.005
    replay_capacity: int = 100_000
    batch: int = 256
    lr: float = 3e-4
    target_entropy: float = 0.98 * float(np.log(N_ACTIONS))
    init_alpha: float = 0.2
    warmup_steps: int = 500
    update_every: int = 1
    eval_episodes: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.tau <= 1.0:
            raise ValueError("gamma and tau must lie in (0, 1]")


# ---- networks ----------------------------------------------------------------


def init_mlp(rng: np.random.Generator, sizes: tuple[int, ...], prefix: str
             ) -> dict[str, np.ndarray]:
    params = {}
    for li, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = np.sqrt(6.0 / (a + b))
        params[f"{prefix}W{li}"] = rng.uniform(-lim, lim, size=(a, b))
        params[f"{prefix}b{li}"] = np.zeros(b)
    return params


def mlp_forward_np(params: dict[str, np.ndarray], prefix: str, x: np.ndarray) -> np.ndarray:
    h = x
    li = 0
    while f"{prefix}W{li}" in params:
        h = h @ params[f"{prefix}W{li}"] + params[f"{prefix}b{li}"]
        if f"{prefix}W{li + 1}" in params:
            h = np.maximum(h, 0.0)
        li += 1
    return h


def mlp_forward_tape(params_t: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    h = x
    li = 0
    while f"{prefix}W{li}" in params_t:
        h = h @ params_t[f"{prefix}W{li}"] + params_t[f"{prefix}b{li}"]
        if f"{prefix}W{li + 1}" in params_t:
            h = h.relu()
        li += 1
    return h


def masked_log_probs_np(logits: np.ndarray, masks: np.ndarray) -> np.ndarray:
    z = logits + np.where(masks, 0.0, _MASK_OFFSET)
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return logp


def masked_log_probs_tape(logits: Tensor, masks: np.ndarray) -> Tensor:
    z = logits + Tensor(np.where(masks, 0.0, _MASK_OFFSET))
    ls = logsumexp(z, axis=1).reshape(-1, 1)
    return z - ls


# ---- losses (exposed for gradient checks) -------------------------------------


def critic_loss(params_t: dict[str, Tensor], prefix: str, states: np.ndarray,
                actions: np.ndarray, targets: np.ndarray) -> Tensor:
    """MSE between Q(s, a) and the soft Bellman targets."""
    q = mlp_forward_tape(params_t, prefix, Tensor(states))
    qa = q[np.arange(len(actions)), actions]
    err = qa - Tensor(targets)
    return (err * err).mean()


def policy_loss(params_t: dict[str, Tensor], states: np.ndarray, masks: np.ndarray,
                q_min: np.ndarray, alpha: float) -> Tensor:
    """E_s sum_a pi(a|s) [alpha log pi(a|s) - Qmin(s, a)], critics detached."""
    logits = mlp_forward_tape(params_t, "pi_", Tensor(states))
    logp = masked_log_probs_tape(logits, masks)
    probs = logp.exp()
    inner = logp * alpha - Tensor(q_min)
    # illegal actions carry ~0 probability; their -1e9 logp would still
    # poison the product, so zero them explicitly
    inner = inner * Tensor(masks.astype(float))
    return (probs * inner).sum(axis=1).mean()


# ---- replay -------------------------------------------------------------------


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int = 2):
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=int)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.mask = np.zeros((capacity, N_ACTIONS), dtype=bool)
        self.mask2 = np.zeros((capacity, N_ACTIONS), dtype=bool)
        self.size = 0
        self.ptr = 0

    def push(self, s, a, r, s2, done, mask, mask2):
        i = self.ptr
        self.s[i], self.a[i], self.r[i] = s, a, r
        self.s2[i], self.done[i] = s2, done
        self.mask[i], self.mask2[i] = mask, mask2
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch)
        return (self.s[idx], self.a[idx], self.r[idx], self.s2[idx],
                self.done[idx], self.mask[idx], self.mask2[idx])


# ---- agent --------------------------------------------------------------------


def _mask_vector(legal: tuple[int, ...]) -> np.ndarray:
    return np.array([a in legal for a in ACTIONS], dtype=bool)


@dataclass
class Normalizer:
    v_mean: float
    v_std: float
    q_max: int

    def __call__(self, obs) -> np.ndarray:
        v, q = obs
        return np.array([(v - self.v_mean) / self.v_std, q / self.q_max])


class SacAgent:
    def __init__(self, cfg: SacConfig, norm: Normalizer, seed: int | None = None):
        self.cfg = cfg
        self.norm = norm
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        sizes = (2, *cfg.hidden, N_ACTIONS)
        self.params: dict[str, np.ndarray] = {}
        self.params.update(init_mlp(self.rng, sizes, "pi_"))
        self.params.update(init_mlp(self.rng, sizes, "q1_"))
        self.params.update(init_mlp(self.rng, sizes, "q2_"))
        self.targets = {k: v.copy() for k, v in self.params.items()
                        if k.startswith(("q1_", "q2_"))}
        self.log_alpha = float(np.log(cfg.init_alpha))
        self.opt_pi = RmspropState(lr=cfg.lr)
        self.opt_q = RmspropState(lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.replay_capacity)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    # -- acting --

    def action_probs(self, obs, legal: tuple[int, ...]) -> np.ndarray:
        x = self.norm(obs)[None, :]
        logits = mlp_forward_np(self.params, "pi_", x)[0]
        logp = masked_log_probs_np(logits[None, :], _mask_vector(legal)[None, :])[0]
        return np.exp(logp)

    def act(self, obs, legal: tuple[int, ...], mode: str = "sample") -> int:
        if not legal:
            raise ValueError("no legal actions")
        p = self.action_probs(obs, legal)
        if mode == "greedy":
            return ACTIONS[int(np.argmax(p))]
        return ACTIONS[int(self.rng.choice(N_ACTIONS, p=p / p.sum()))]

    # -- learning --

    def update(self) -> dict[str, float]:
        cfg = self.cfg
        s, a, r, s2, done, mask, mask2 = self.buffer.sample(cfg.batch, self.rng)

        # soft Bellman targets from target critics + current policy (no grad)
        logits2 = mlp_forward_np(self.params, "pi_", s2)
        logp2 = masked_log_probs_np(logits2, mask2)
        p2 = np.exp(logp2)
        q1t = mlp_forward_np(self.targets, "q1_", s2)
        q2t = mlp_forward_np(self.targets, "q2_", s2)
        qmin_t = np.minimum(q1t, q2t)
        soft_v = (p2 * (qmin_t - self.alpha * np.where(mask2, logp2, 0.0))).sum(axis=1)
        y = r + cfg.gamma * (1.0 - done) * soft_v

        diag: dict[str, float] = {}
        q_params = {k: Tensor(v, requires_grad=True, name=k)
                    for k, v in self.params.items() if k.startswith(("q1_", "q2_"))}
        l1 = critic_loss(q_params, "q1_", s, a, y)
        l2 = critic_loss(q_params, "q2_", s, a, y)
        closs = l1 + l2
        closs.backward()
        rmsprop_step(q_params, self.opt_q)
        for k, t in q_params.items():
            self.params[k] = t.value
        diag["critic_loss"] = float(closs.value)

        q1 = mlp_forward_np(self.params, "q1_", s)
        q2 = mlp_forward_np(self.params, "q2_", s)
        q_min = np.minimum(q1, q2)
        diag["q_mean"] = float(q_min.mean())

        pi_params = {k: Tensor(v, requires_grad=True, name=k)
                     for k, v in self.params.items() if k.startswith("pi_")}
        ploss = policy_loss(pi_params, s, mask, q_min, self.alpha)
        ploss.backward()
        rmsprop_step(pi_params, self.opt_pi)
        for k, t in pi_params.items():
            self.params[k] = t.value
        diag["policy_loss"] = float(ploss.value)

        # entropy and temperature: descend alpha * (H - H_target) in log-alpha
        logits = mlp_forward_np(self.params, "pi_", s)
        logp = masked_log_probs_np(logits, mask)
        entropy = float(-(np.exp(logp) * np.where(mask, logp, 0.0)).sum(axis=1).mean())
        self.log_alpha -= cfg.lr * self.alpha * (entropy - cfg.target_entropy)
        diag["entropy"] = entropy
        diag["alpha"] = self.alpha

        for k in self.targets:
            self.targets[k] = (1.0 - cfg.tau) * self.targets[k] + cfg.tau * self.params[k]
        self.updates += 1
        if not all(np.isfinite(v) for v in diag.values()):
            raise FloatingPointError(f"non-finite SAC diagnostics: {diag}")
        return diag

    # -- persistence --

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self.params, out / "agent.ckpt", meta={"kind": "sac"})
        (out / "agent.json").write_text(json.dumps({
            "log_alpha": self.log_alpha,
            "norm": {"v_mean": self.norm.v_mean, "v_std": self.norm.v_std,
                     "q_max": self.norm.q_max},
            "config": {"hidden": list(self.cfg.hidden), "gamma": self.cfg.gamma,
                       "tau": self.cfg.tau, "lr": self.cfg.lr, "seed": self.cfg.seed},
        }, indent=2, sort_keys=True))

    @classmethod
    def load(cls, out_dir: str | Path, cfg: SacConfig | None = None) -> "SacAgent":
        out = Path(out_dir)
        meta = json.loads((out / "agent.json").read_text())
        norm = Normalizer(**meta["norm"])
        if cfg is None:
            c = meta["config"]
            cfg = SacConfig(hidden=tuple(c["hidden"]), gamma=c["gamma"],
                            tau=c["tau"], lr=c["lr"], seed=c["seed"])
        agent = cls(cfg, norm)
        params, _ = load_checkpoint(out / "agent.ckpt")
        agent.params = params
        agent.targets = {k: v.copy() for k, v in params.items()
                         if k.startswith(("q1_", "q2_"))}
        agent.log_alpha = meta["log_alpha"]
        return agent


# ---- training / evaluation -----------------------------------------------------


def make_normalizer(prices, q_max: int) -> Normalizer:
    p = np.asarray(prices, dtype=float)
    return Normalizer(v_mean=float(p.mean()), v_std=float(max(p.std(), 1e-9)),
                      q_max=q_max)


def train_agent(agent: SacAgent, env_factory, episodes: int) -> list[dict]:
    """Collect episodes with the stochastic policy, updating every step.

    env_factory(episode_index) must return a fresh MarketMakingEnv.
    """
    history = []
    total_steps = 0
    for ep in range(episodes):
        env = env_factory(ep)
        obs = env.reset()
        ep_reward = 0.0
        while not env.done:
            legal = env.legal()
            action = agent.act(obs, legal, mode="sample")
            obs2, r, done, _ = env.step(action)
            mask2 = _mask_vector(env.legal()) if not done else _mask_vector(ACTIONS)
            agent.buffer.push(agent.norm(obs), ACTIONS.index(action), r,
                              agent.norm(obs2), float(done),
                              _mask_vector(legal), mask2)
            total_steps += 1
            if (agent.buffer.size >= max(agent.cfg.batch, agent.cfg.warmup_steps)
                    and total_steps % agent.cfg.update_every == 0):
                agent.update()
            obs = obs2
            ep_reward += r
        history.append({"episode": ep, "reward": ep_reward, "steps": total_steps})
    return history


def evaluate_agent(agent: SacAgent, env_factory, episodes: int) -> list[MmEpisode]:
    """Greedy-policy evaluation over independent episodes."""
    results = []
    for ep in range(episodes):
        env = env_factory(ep)
        policy = lambda obs, legal: agent.act(obs, legal, mode="greedy")
        results.append(run_episode(policy, env))
    return results
