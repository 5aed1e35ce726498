"""Graph-conditioned option scoring by differentiable reward propagation.

Completion values propagate through soft AND/OR relaxations of the option
preconditions for a fixed number of iterations (cycles are handled by the
bounded unrolling); each option's score is the derivative of the propagated
reward with respect to a per-option execution gate, computed by reverse-mode
accumulation through the unrolled iterations.

softAND(v) = sigmoid(beta_a * (sum_j w_j v_j / sum_j w_j - 0.5)), where w_j is
``w_a`` for positive completion literals and 1 otherwise.  softOR(u) =
eps_or * max_j u_j + (1 - eps_or) * sum_j u_j softmax_j(t_or * u).  Constant
preconditions take the softAND limits sigmoid(+-beta_a / 2), so eligibility
always lies strictly inside (0, 1).

Per iteration, each completion accumulates the gated eligibilities of the
options that set it through a noisy-OR against its remaining headroom, is
scaled down by the options that clear it, and is clamped to [0, 1]:

    v_s = 1 - (1 - p_s) * prod_{o sets s} (1 - g_o elig_o)
    p_s' = clamp(v_s * prod_{o clears s} (1 - g_o elig_o), 0, 1)

The noisy-OR keeps a long chain's completion asymptotic instead of saturating
the clamp, so gradients stay alive through deep graphs; the clamp only binds
for perturbed gates, backpropagating 1 inside [0, 1] and 0 when it truncates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import TaskInstance
from .errors import NoEligibleOptionError
from .graphs import GroundGraph, ParamGraph

__all__ = [
    "GRPropConfig",
    "GRPropScorer",
    "grprop_scores",
    "grprop_select",
]


@dataclass(frozen=True)
class GRPropConfig:
    temperature: float = 200.0
    w_a: float = 3.0
    beta_a: float = 8.0
    eps_or: float = 0.8
    t_or: float = 2.0
    k_iters: int = 8

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.w_a < 1:
            raise ValueError("w_a must be at least 1")
        if self.beta_a <= 0:
            raise ValueError("beta_a must be positive")
        if not (0.0 <= self.eps_or <= 1.0):
            raise ValueError("eps_or must lie in [0, 1]")
        if self.t_or <= 0:
            raise ValueError("t_or must be positive")
        if self.k_iters < 1:
            raise ValueError("k_iters must be at least 1")


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class GRPropScorer:
    """Compiled propagation arrays for one (graph, task) pair.

    Scores are cached per completion vector; the cache is dropped when the
    reward vector changes.
    """

    def __init__(self, ground: GroundGraph, cfg: GRPropConfig):
        self.ground = ground
        self.cfg = cfg
        self.n = ground.n_subtasks
        self.m = ground.n_options

        hi = float(_sigmoid(np.array([cfg.beta_a * 0.5]))[0])
        lo = float(_sigmoid(np.array([-cfg.beta_a * 0.5]))[0])
        soft_opts = [oi for oi in range(self.m) if ground.elig_const[oi] == -1]
        self.soft_opts = np.array(soft_opts, dtype=np.int64)
        self.elig_base = np.where(ground.elig_const == 1, hi, lo)

        d_owner: list[int] = []  # index into soft_opts
        pos_d: list[int] = []
        pos_idx: list[int] = []
        neg_d: list[int] = []
        neg_idx: list[int] = []
        cnum: list[float] = []
        den: list[float] = []
        w_a = cfg.w_a
        for si, oi in enumerate(soft_opts):
            for disj in ground.soft[oi]:
                d = len(d_owner)
                d_owner.append(si)
                for i in disj.pos:
                    pos_d.append(d)
                    pos_idx.append(i)
                for i in disj.neg:
                    neg_d.append(d)
                    neg_idx.append(i)
                cnum.append(disj.const_unit_sum)
                den.append(
                    w_a * (len(disj.pos) + disj.const_wa_n)
                    + len(disj.neg)
                    + disj.const_unit_n
                )
        self.d_owner = np.array(d_owner, dtype=np.int64)
        self.pos_d = np.array(pos_d, dtype=np.int64)
        self.pos_idx = np.array(pos_idx, dtype=np.int64)
        self.neg_d = np.array(neg_d, dtype=np.int64)
        self.neg_idx = np.array(neg_idx, dtype=np.int64)
        self.cnum = np.array(cnum, dtype=np.float64)
        self.den = np.array(den, dtype=np.float64)
        self.n_disj = len(d_owner)
        self.n_soft = len(soft_opts)

        add_opt: list[int] = []
        add_sub: list[int] = []
        del_opt: list[int] = []
        del_sub: list[int] = []
        for oi in range(self.m):
            for i in ground.adds[oi]:
                add_opt.append(oi)
                add_sub.append(i)
            for i in ground.dels[oi]:
                del_opt.append(oi)
                del_sub.append(i)
        self.add_opt = np.array(add_opt, dtype=np.int64)
        self.add_sub = np.array(add_sub, dtype=np.int64)
        self.del_opt = np.array(del_opt, dtype=np.int64)
        self.del_sub = np.array(del_sub, dtype=np.int64)

        self._rewards = ground.rewards.copy()
        self._cache: dict[bytes, np.ndarray] = {}

    @property
    def rewards(self) -> np.ndarray:
        return self._rewards

    def set_rewards(self, rewards: np.ndarray) -> None:
        rewards = np.asarray(rewards, dtype=np.float64)
        if not np.array_equal(rewards, self._rewards):
            self._rewards = rewards.copy()
            self._cache.clear()

    def _soft_eligibility(self, p: np.ndarray):
        cfg = self.cfg
        elig = self.elig_base.copy()
        if self.n_disj == 0:
            return elig, None
        s = self.cnum.copy()
        if len(self.pos_idx):
            np.add.at(s, self.pos_d, cfg.w_a * p[self.pos_idx])
        if len(self.neg_idx):
            np.add.at(s, self.neg_d, 1.0 - p[self.neg_idx])
        a = s / self.den
        u = _sigmoid(cfg.beta_a * (a - 0.5))

        seg_max = np.full(self.n_soft, -np.inf)
        np.maximum.at(seg_max, self.d_owner, u)
        first_max = np.full(self.n_soft, self.n_disj, dtype=np.int64)
        at_max = u >= seg_max[self.d_owner]
        np.minimum.at(first_max, self.d_owner[at_max], np.nonzero(at_max)[0])
        e = np.exp(cfg.t_or * (u - seg_max[self.d_owner]))
        Z = np.zeros(self.n_soft)
        np.add.at(Z, self.d_owner, e)
        w = e / Z[self.d_owner]
        mean = np.zeros(self.n_soft)
        np.add.at(mean, self.d_owner, u * w)
        mix = cfg.eps_or * seg_max + (1.0 - cfg.eps_or) * mean

        elig[self.soft_opts] = mix
        return elig, (u, w, mean, first_max)

    def _propagate(self, p: np.ndarray, elig: np.ndarray, gates: np.ndarray | None):
        q_add = elig[self.add_opt]
        q_del = elig[self.del_opt]
        if gates is not None:
            q_add = q_add * gates[self.add_opt]
            q_del = q_del * gates[self.del_opt]
        l_add = np.zeros(self.n)
        np.add.at(l_add, self.add_sub, np.log1p(-q_add))
        p_add = np.exp(l_add)
        l_del = np.zeros(self.n)
        np.add.at(l_del, self.del_sub, np.log1p(-q_del))
        p_del = np.exp(l_del)
        v = 1.0 - (1.0 - p) * p_add
        w = v * p_del
        return np.clip(w, 0.0, 1.0), (p_add, p_del, v, w, q_add, q_del)

    def _forward(self, x: np.ndarray):
        p = np.asarray(x, dtype=bool).astype(np.float64)
        tape = []
        for _ in range(self.cfg.k_iters):
            elig, soft = self._soft_eligibility(p)
            p_next, prop = self._propagate(p, elig, None)
            tape.append((p, elig, soft, prop))
            p = p_next
        return p, tape

    def propagated_reward(self, x: np.ndarray, rewards: np.ndarray | None = None) -> float:
        p_final, _ = self._forward(x)
        r = self._rewards if rewards is None else np.asarray(rewards, dtype=np.float64)
        return float(r @ p_final)

    def propagated_reward_gated(self, x: np.ndarray, gates: np.ndarray) -> float:
        """Forward pass with explicit per-option gates (finite-difference probe)."""
        gates = np.asarray(gates, dtype=np.float64)
        p = np.asarray(x, dtype=bool).astype(np.float64)
        for _ in range(self.cfg.k_iters):
            elig, _ = self._soft_eligibility(p)
            p, _ = self._propagate(p, elig, gates)
        return float(self._rewards @ p)

    def scores(self, x: np.ndarray) -> np.ndarray:
        """d(propagated reward)/d(option gate), by reverse accumulation."""
        x = np.asarray(x, dtype=bool)
        key = x.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit.copy()

        cfg = self.cfg
        _, tape = self._forward(x)
        dp = self._rewards.copy()
        dg = np.zeros(self.m)
        for p, elig, soft, prop in reversed(tape):
            p_add, p_del, v, w, q_add, q_del = prop
            # the clamp only binds when w overshoots [0, 1]
            dw = dp * np.where((w >= 0.0) & (w <= 1.0), 1.0, 0.0)
            dv = dw * p_del
            d_pdel = dw * v
            dp_prev = dv * p_add
            d_padd = -dv * (1.0 - p)
            delig = np.zeros(self.m)
            if len(self.add_sub):
                ratio = p_add[self.add_sub] / (1.0 - q_add)
                dq = -d_padd[self.add_sub] * ratio
                np.add.at(dg, self.add_opt, dq * elig[self.add_opt])
                np.add.at(delig, self.add_opt, dq)
            if len(self.del_sub):
                ratio = p_del[self.del_sub] / (1.0 - q_del)
                dq = -d_pdel[self.del_sub] * ratio
                np.add.at(dg, self.del_opt, dq * elig[self.del_opt])
                np.add.at(delig, self.del_opt, dq)
            if self.n_disj:
                u, w_or, mean, first_max = soft
                dmix = delig[self.soft_opts]
                du = (1.0 - cfg.eps_or) * dmix[self.d_owner] * w_or * (
                    1.0 + cfg.t_or * (u - mean[self.d_owner])
                )
                valid = first_max < self.n_disj
                np.add.at(du, first_max[valid], cfg.eps_or * dmix[valid])
                da = du * u * (1.0 - u) * cfg.beta_a
                ds = da / self.den
                if len(self.pos_idx):
                    np.add.at(dp_prev, self.pos_idx, cfg.w_a * ds[self.pos_d])
                if len(self.neg_idx):
                    np.add.at(dp_prev, self.neg_idx, -ds[self.neg_d])
            dp = dp_prev

        self._cache[key] = dg
        return dg.copy()


def grprop_scores(
    graph: ParamGraph,
    task: TaskInstance,
    x: np.ndarray,
    cfg: GRPropConfig | None = None,
    rewards: np.ndarray | None = None,
) -> np.ndarray:
    """One-shot scoring; long-lived callers should hold a ``GRPropScorer``."""
    cfg = cfg or GRPropConfig()
    scorer = GRPropScorer(GroundGraph(task, graph), cfg)
    if rewards is not None:
        scorer.set_rewards(rewards)
    return scorer.scores(np.asarray(x, dtype=bool))


def grprop_select(
    scores: np.ndarray,
    eligibility: np.ndarray,
    temperature: float,
    rng: np.random.Generator,
) -> int:
    """Sample among eligible options from a softmax over their scores.

    Scores are range-normalized over the eligible set first (shift- and
    scale-invariant), so the default temperature of 200 acts as argmax with
    random tie-breaking regardless of the absolute gradient magnitudes.
    """
    eligible = np.nonzero(eligibility)[0]
    if len(eligible) == 0:
        raise NoEligibleOptionError("no eligible option to select")
    z = np.asarray(scores, dtype=np.float64)[eligible]
    spread = z.max() - z.min()
    if spread > 0:
        z = (z - z.min()) / spread
    z = temperature * z
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(eligible, p=p))
