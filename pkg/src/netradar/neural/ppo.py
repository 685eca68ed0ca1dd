"""PPO trainer over the sequential-selection expansion of the simulation.

Each simulation step becomes a short chain of micro-steps: in every
micro-step each still-active radar either claims one more target or stops,
and once all radars have stopped the accumulated subsets are applied as the
step's allocations.  Only the completion micro-step carries a reward (the
step utility); the intermediate ones are worth exactly zero.  Advantages are
generalized advantage estimates over that micro-step chain, and the actor is
updated with the clipped surrogate objective.

The actor is shared by all radars and sees only the radar's own observation
matrix.  The critic sees a centralized summary (per-radar mean-pooled
extractor features plus the episode step fraction) that exists only during
training.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from netradar.esto import scenario_hash
from netradar.neural.nets import (
    ActorNet,
    Adam,
    CriticNet,
    NeuralError,
    masked_log_softmax,
)
from netradar.policy import Allocation, AllocationPolicy, make_allocation
from netradar.world import Scenario, World

CHECKPOINT_SCHEMA_VERSION = 1
COST_TOL = 1e-12


class _Preset(AllocationPolicy):
    """Replays a precomputed allocation inside the world's step loop."""

    def __init__(self, alloc: Allocation):
        self._alloc = alloc

    def decide(self, obs, radar_id, budget, costs):
        return self._alloc


@dataclass
class RolloutBatch:
    """Flattened micro-step records from one or more episodes.

    Decision-level arrays (one row per sampled agent action) index into
    ``macro_obs`` so observation matrices are stored once per simulation
    step.  Micro-step-level arrays back the value loss; episodes occupy
    contiguous micro-step ranges of lengths ``episode_lengths``.
    """

    macro_obs: np.ndarray          # (steps, n, m, 23)
    macro_of_decision: np.ndarray  # (D,) index into macro_obs
    agent: np.ndarray              # (D,)
    valid: np.ndarray              # (D, m + 1) action mask
    actions: np.ndarray            # (D,)
    logp: np.ndarray               # (D,)
    advantages: np.ndarray         # (D,)
    micro_of_decision: np.ndarray  # (D,) index into the micro-step arrays
    summaries: np.ndarray          # (U, summary_dim)
    values: np.ndarray             # (U,)
    rewards: np.ndarray            # (U,)
    returns: np.ndarray            # (U,)
    episode_lengths: np.ndarray    # (E,) micro-steps per episode
    episode_utilities: np.ndarray  # (E,) mean step utility per episode

    @property
    def n_decisions(self) -> int:
        return len(self.actions)

    @property
    def mean_utility(self) -> float:
        return float(np.mean(self.episode_utilities))


def compute_gae(rewards, values, gamma: float = 0.99, lam: float = 0.95,
                terminal_value: float = 0.0) -> np.ndarray:
    """Generalized advantage estimates for one contiguous episode."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise NeuralError("rewards and values must be matching 1-d arrays")
    adv = np.empty_like(rewards)
    carry = 0.0
    next_value = float(terminal_value)
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        carry = delta + gamma * lam * carry
        adv[t] = carry
        next_value = values[t]
    return adv


def _summary(actor: ActorNet, obs_rows: np.ndarray, step_fraction: float):
    """Centralized critic input: per-radar mean extractor features + time."""
    feats = actor.features(obs_rows)           # (n, m, embed)
    pooled = feats.mean(axis=1).ravel()
    return np.concatenate([pooled, [step_fraction]])


def summary_dim(n_radars: int, embed: int = 6) -> int:
    return n_radars * embed + 1


def rollout(scenario: Scenario, actor: ActorNet, critic: CriticNet,
            episodes: int, horizon: int, seed: int = 0,
            gamma: float = 0.99, lam: float = 0.95) -> RolloutBatch:
    """Collect episodes by sampling the actor; fully seeded and repeatable.

    One world per episode; within a step every still-active radar samples
    one micro-action per micro-step until all have stopped, then the
    accumulated subsets run through the regular step loop.
    """
    if episodes < 1 or horizon < 1:
        raise NeuralError("episodes and horizon must be at least 1")
    n, m = scenario.n_radars, scenario.n_targets
    macro_obs = []
    dec_macro, dec_agent, dec_valid = [], [], []
    dec_action, dec_logp, dec_micro = [], [], []
    summaries, values, rewards, ep_lengths, ep_utils = [], [], [], [], []
    micro_count = 0

    for ep in range(episodes):
        ep_rng = np.random.default_rng([seed, ep])
        w = World(scenario, seed=int(ep_rng.integers(0, 2**31 - 1)))
        act_rng = np.random.default_rng([seed, ep, 1])
        ep_start = micro_count
        util_sum = 0.0
        for t in range(horizon):
            obs_list = [w.observe(i) for i in range(n)]
            rows = np.stack([o.rows for o in obs_list])
            fov = np.stack([o.fov_mask for o in obs_list])
            costs = np.stack([w.costs_for(i) for i in range(n)])
            macro_idx = len(macro_obs)
            macro_obs.append(rows)
            logits_all, _ = actor.logits(rows)
            summary = _summary(actor, rows, t / horizon)
            value = float(critic.forward(summary)[0])

            chosen = [[] for _ in range(n)]
            remaining = w.budgets.copy()
            done = np.zeros(n, dtype=bool)
            for _micro in range(m + 1):
                for i in range(n):
                    if done[i]:
                        continue
                    valid = np.ones(m + 1, dtype=bool)
                    valid[:m] = fov[i] & (costs[i] <= remaining[i] + COST_TOL)
                    valid[chosen[i]] = False
                    logp_row = masked_log_softmax(logits_all[i], valid)
                    p = np.where(valid, np.exp(logp_row), 0.0)
                    a = int(act_rng.choice(m + 1, p=p / p.sum()))
                    dec_macro.append(macro_idx)
                    dec_agent.append(i)
                    dec_valid.append(valid)
                    dec_action.append(a)
                    dec_logp.append(float(logp_row[a]))
                    dec_micro.append(micro_count)
                    if a == m:
                        done[i] = True
                    else:
                        chosen[i].append(a)
                        remaining[i] -= costs[i][a]
                summaries.append(summary)
                values.append(value)
                micro_count += 1
                if done.all():
                    allocs = [make_allocation(i, sorted(chosen[i]), costs[i])
                              for i in range(n)]
                    record = w.step([_Preset(a) for a in allocs])
                    rewards.append(record.utility)
                    util_sum += record.utility
                    break
                rewards.append(0.0)
            else:
                raise NeuralError("selection did not terminate")  # unreachable
        ep_lengths.append(micro_count - ep_start)
        ep_utils.append(util_sum / horizon)

    values = np.array(values)
    rewards = np.array(rewards)
    advantages_micro = np.empty_like(values)
    start = 0
    for length in ep_lengths:
        sl = slice(start, start + length)
        advantages_micro[sl] = compute_gae(rewards[sl], values[sl], gamma, lam)
        start += length
    dec_micro = np.array(dec_micro)
    return RolloutBatch(
        macro_obs=np.stack(macro_obs),
        macro_of_decision=np.array(dec_macro),
        agent=np.array(dec_agent),
        valid=np.array(dec_valid),
        actions=np.array(dec_action),
        logp=np.array(dec_logp),
        advantages=advantages_micro[dec_micro],
        micro_of_decision=dec_micro,
        summaries=np.array(summaries),
        values=values,
        rewards=rewards,
        returns=advantages_micro + values,
        episode_lengths=np.array(ep_lengths),
        episode_utilities=np.array(ep_utils),
    )


def _actor_loss_and_grads(actor, X, valid, actions, logp_old, adv,
                          clip_eps, entropy_coef):
    """Clipped surrogate + entropy bonus on one minibatch."""
    B = len(actions)
    logits, cache = actor.logits(X)
    logp = masked_log_softmax(logits, valid)
    p = np.where(valid, np.exp(logp), 0.0)
    rows = np.arange(B)
    lp_a = logp[rows, actions]
    ratio = np.exp(lp_a - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    objective = np.minimum(unclipped, clipped)
    entropy = -np.sum(np.where(valid, p * logp, 0.0), axis=-1)
    loss = float(-objective.mean() - entropy_coef * entropy.mean())

    # gradient flows through the ratio only where the min picks it
    d_lp = np.where(unclipped <= clipped, -adv * ratio, 0.0) / B
    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    d_logits = d_lp[:, None] * (onehot - p)
    d_logits += (entropy_coef / B) * p * (logp + entropy[:, None])
    d_logits = np.where(valid, d_logits, 0.0)
    grads = actor.backward_logits(d_logits, cache)
    stats = {
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean(unclipped > clipped)),
        "approx_kl": float(np.mean(logp_old - lp_a)),
        "policy_loss": float(-objective.mean()),
    }
    return loss, grads, stats


def ppo_update(actor: ActorNet, critic: CriticNet, batch: RolloutBatch,
               clip_eps: float = 0.2, epochs: int = 4, minibatch: int = 64,
               lr: float = 3e-4, entropy_coef: float = 1e-2,
               actor_opt: Adam | None = None, critic_opt: Adam | None = None,
               seed: int = 0) -> dict:
    """Several epochs of minibatch updates on one rollout batch.

    A non-finite loss anywhere aborts the update: all parameters are
    restored to their pre-update values and the failure is reported with
    the offending statistics.
    """
    if batch.n_decisions == 0:
        raise NeuralError("empty rollout batch")
    if not (np.all(np.isfinite(batch.advantages))
            and np.all(np.isfinite(batch.logp))
            and np.all(np.isfinite(batch.returns))):
        raise NeuralError("rollout batch contains non-finite values")
    if actor_opt is None:
        actor_opt = Adam(actor.parameters(), lr=lr)
    if critic_opt is None:
        critic_opt = Adam(critic.parameters(), lr=lr)
    rng = np.random.default_rng(seed)

    adv = batch.advantages.copy()
    spread = adv.std()
    if spread > 1e-8:
        adv = (adv - adv.mean()) / spread

    snapshot = [p.copy() for p in actor.parameters() + critic.parameters()]

    def _restore():
        for p, s in zip(actor.parameters() + critic.parameters(), snapshot):
            p[:] = s

    value_targets = batch.returns
    stats_rows = []
    value_losses = []
    D = batch.n_decisions
    U = len(value_targets)
    try:
        for _epoch in range(epochs):
            order = rng.permutation(D)
            for lo in range(0, D, minibatch):
                mb = order[lo:lo + minibatch]
                X = batch.macro_obs[batch.macro_of_decision[mb],
                                    batch.agent[mb]]
                loss, grads, stats = _actor_loss_and_grads(
                    actor, X, batch.valid[mb], batch.actions[mb],
                    batch.logp[mb], adv[mb], clip_eps, entropy_coef)
                if not np.isfinite(loss):
                    raise NeuralError(
                        f"non-finite actor loss {loss!r} (stats {stats})")
                actor_opt.step(grads)
                stats_rows.append(stats)
            vorder = rng.permutation(U)
            for lo in range(0, U, minibatch):
                mb = vorder[lo:lo + minibatch]
                v, cache = critic.forward(batch.summaries[mb])
                resid = v - value_targets[mb]
                vloss = float(np.mean(resid ** 2))
                if not np.isfinite(vloss):
                    raise NeuralError(f"non-finite value loss {vloss!r}")
                critic_opt.step(critic.backward(
                    (2.0 / len(mb)) * resid, cache))
                value_losses.append(vloss)
    except NeuralError:
        _restore()
        raise
    report = {k: float(np.mean([row[k] for row in stats_rows]))
              for k in stats_rows[0]}
    report["value_loss"] = float(np.mean(value_losses))
    report["n_decisions"] = D
    return report


@dataclass
class TrainRlResult:
    actor: ActorNet
    critic: CriticNet
    history: list = field(default_factory=list)
    scenario_name: str = ""
    scenario_hash: str = ""


def train_rl(scenario: Scenario, iterations: int, episodes: int = 4,
             horizon: int | None = None, seed: int = 0, lr: float = 3e-4,
             clip_eps: float = 0.2, epochs: int = 4, minibatch: int = 64,
             entropy_coef: float = 1e-2, gamma: float = 0.99,
             lam: float = 0.95, hidden: int = 16, embed: int = 6,
             checkpoint_path=None, resume=None,
             callback=None) -> TrainRlResult:
    """Iterate rollout + update; optionally checkpoints every iteration.

    ``resume`` restarts from a checkpoint file (the remaining iteration
    budget still counts from the checkpoint's iteration number).
    """
    if iterations < 1:
        raise NeuralError("iterations must be at least 1")
    if horizon is None:
        horizon = scenario.episode_length
    history = []
    start_iter = 0
    if resume is not None:
        actor, critic, actor_opt, critic_opt, meta = load_checkpoint(resume)
        if meta["scenario_hash"] != scenario_hash(scenario):
            raise NeuralError("checkpoint was trained on a different scenario")
        start_iter = meta["iteration"] + 1
        history = list(meta["history"])
    else:
        actor = ActorNet(hidden=hidden, embed=embed, seed=seed)
        critic = CriticNet(summary_dim(scenario.n_radars, embed),
                           seed=seed + 1)
        actor_opt = Adam(actor.parameters(), lr=lr)
        critic_opt = Adam(critic.parameters(), lr=lr)

    for it in range(start_iter, iterations):
        roll_seed = int(np.random.default_rng([seed, 7, it]).integers(
            0, 2**31 - 1))
        batch = rollout(scenario, actor, critic, episodes, horizon,
                        seed=roll_seed, gamma=gamma, lam=lam)
        report = ppo_update(actor, critic, batch, clip_eps=clip_eps,
                            epochs=epochs, minibatch=minibatch, lr=lr,
                            entropy_coef=entropy_coef, actor_opt=actor_opt,
                            critic_opt=critic_opt, seed=roll_seed + 1)
        row = {"iteration": it, "mean_utility": batch.mean_utility, **report}
        history.append(row)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, actor, critic, actor_opt,
                            critic_opt, iteration=it, scenario=scenario,
                            history=history)
        if callback is not None:
            callback(it, row)
    return TrainRlResult(actor=actor, critic=critic, history=history,
                         scenario_name=scenario.name,
                         scenario_hash=scenario_hash(scenario))


def save_checkpoint(path, actor: ActorNet, critic: CriticNet,
                    actor_opt: Adam, critic_opt: Adam, iteration: int,
                    scenario: Scenario, history=()):
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": "ppo-checkpoint",
        "iteration": int(iteration),
        "scenario_name": scenario.name,
        "scenario_hash": scenario_hash(scenario),
        "actor": {
            "n_features": actor.n_features,
            "hidden": actor.hidden,
            "embed": actor.embed,
            "params": [p.tolist() for p in actor.parameters()],
        },
        "critic": {
            "input_dim": critic.input_dim,
            "hidden": critic.hidden,
            "params": [p.tolist() for p in critic.parameters()],
        },
        "actor_opt": actor_opt.state_dict(),
        "critic_opt": critic_opt.state_dict(),
        "history": list(history),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def _load_params(target_params, stored, what: str):
    if len(stored) != len(target_params):
        raise NeuralError(f"{what}: expected {len(target_params)} parameter "
                          f"arrays, got {len(stored)}")
    for p, s in zip(target_params, stored):
        arr = np.array(s, dtype=np.float64)
        if arr.shape != p.shape:
            raise NeuralError(f"{what}: parameter shape {arr.shape} != "
                              f"{p.shape}")
        p[:] = arr


def load_checkpoint(path):
    """Returns (actor, critic, actor_opt, critic_opt, metadata dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "ppo-checkpoint":
        raise NeuralError(f"{path}: not a training checkpoint")
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise NeuralError(f"{path}: unsupported schema version "
                          f"{payload.get('schema_version')}")
    a = payload["actor"]
    actor = ActorNet(n_features=a["n_features"], hidden=a["hidden"],
                     embed=a["embed"])
    _load_params(actor.parameters(), a["params"], "actor")
    c = payload["critic"]
    critic = CriticNet(input_dim=c["input_dim"], hidden=c["hidden"])
    _load_params(critic.parameters(), c["params"], "critic")
    actor_opt = Adam(actor.parameters())
    actor_opt.load_state_dict(payload["actor_opt"])
    critic_opt = Adam(critic.parameters())
    critic_opt.load_state_dict(payload["critic_opt"])
    meta = {"iteration": payload["iteration"],
            "scenario_name": payload["scenario_name"],
            "scenario_hash": payload["scenario_hash"],
            "history": payload["history"]}
    return actor, critic, actor_opt, critic_opt, meta


class NeuralPolicy(AllocationPolicy):
    """Wraps a trained actor as a decision policy for the step loop.

    In greedy mode the most probable action is taken at every micro-step;
    sample mode draws from the distribution (used during training and for
    stochastic evaluation).
    """

    name = "rl"

    def __init__(self, actor: ActorNet, mode: str = "greedy", seed: int = 0):
        if mode not in ("greedy", "sample"):
            raise NeuralError(f"unknown mode {mode!r}")
        self.actor = actor
        self.mode = mode
        self._seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self, seed=None):
        self.rng = np.random.default_rng(self._seed if seed is None else seed)

    def decide(self, obs, radar_id, budget, costs):
        m = obs.rows.shape[0]
        logits, _ = self.actor.logits(obs.rows)
        chosen = []
        remaining = float(budget)
        for _ in range(m + 1):
            valid = np.ones(m + 1, dtype=bool)
            valid[:m] = obs.fov_mask & (costs <= remaining + COST_TOL)
            valid[chosen] = False
            logp = masked_log_softmax(logits, valid)
            p = np.where(valid, np.exp(logp), 0.0)
            if self.mode == "greedy":
                a = int(np.argmax(p))
            else:
                a = int(self.rng.choice(m + 1, p=p / p.sum()))
            if a == m:
                break
            chosen.append(a)
            remaining -= costs[a]
        return make_allocation(radar_id, sorted(chosen), costs)
