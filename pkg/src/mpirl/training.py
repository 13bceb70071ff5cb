"""Two-phase trainer that learns a shared reward and minimal per-trajectory
reward perturbations from demonstrations.

Phase 1 fits a base reward and soft Q-critic to the recorded data alone
(perturbation input pinned at zero). Phase 2 freezes the reward, then learns
per-trajectory kernel coefficients z_n (plus the critic and optionally the
kernel centers) so that remaining action mismatches are explained by the
smallest localized reward perturbations; an anchor term ties the critic's
zero-perturbation outputs to the phase-1 critic so gains must come from z.

The critic input is [normalized observation ; induced per-action perturbation
p], where p_a = sum_k kappa(x, mu_k) z[n, k, a], and the perturbation acts
additively: Q(x, p)[a] = net([x; 0])[a] + p_a. The p slot of the net input is
zeroed, so the perturbation reaches Q only through the unit-gain skip - the
same rate at which it perturbs the reward. This keeps the size of z
meaningful: when the net is allowed to read p directly it learns to treat
tiny p patterns as an episode code (unpenalized, since Bellman consistency
constrains only the recorded action), and the learned perturbation scale
collapses while spurious coefficients survive. With z = 0 everything reduces
exactly to the base case. Bellman targets use a Polyak-averaged target critic
and are stop-gradient except through the reward term.
"""

import numpy as np
from dataclasses import dataclass

from .ndmath import (Mlp, adam_init, adam_step, grads_to_flat, log_sum_exp,
                     mlp_backward, mlp_forward, mlp_get_params, mlp_init,
                     mlp_set_params, smooth_l1, softmax)
from .kernels import (KernelSet, PerturbationBank, sparse_group_prox,
                      sparsity_penalty)


class NumericError(RuntimeError):
    """A loss term became non-finite during training."""


@dataclass
class TrainConfig:
    temperature: float = 0.3
    discount: float = 0.99
    bellman_weight: float = 1.0      # lambda
    sparsity_weight: float = 0.01    # alpha
    anchor_weight: float = 1.0       # beta
    lr_reward: float = 1e-3
    lr_critic: float = 1e-3
    lr_z: float = 1e-2
    lr_centers: float = 1e-3
    phase1_iterations: int = 5000
    phase2_iterations: int = 10000
    batch_trajectories: int = 32
    target_update_rate: float = 0.005
    learn_centers: bool = False
    hidden_sizes: tuple = (64, 64)
    value_temperature_scaling: bool = False  # off: V = log sum exp(Q) as-is
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0 < self.discount < 1:
            raise ValueError("discount must be in (0, 1)")
        for name in ("bellman_weight", "sparsity_weight", "anchor_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.batch_trajectories < 1:
            raise ValueError("batch_trajectories must be >= 1")


@dataclass
class RewardModel:
    base_net: Mlp

    def base_rewards(self, obs_norm):
        """Base reward table r(x, .) for a batch of normalized observations."""
        out, _ = mlp_forward(self.base_net, obs_norm)
        return out


@dataclass
class Critic:
    net: Mlp
    target_net: Mlp


def init_reward(n_features, n_actions, hidden_sizes, rng):
    return RewardModel(mlp_init([n_features, *hidden_sizes, n_actions], rng))


def init_critic(n_features, n_actions, hidden_sizes, rng):
    net = mlp_init([n_features + n_actions, *hidden_sizes, n_actions], rng)
    return Critic(net, net.copy())


def update_target(critic, rate):
    """Polyak step target <- (1-rate)*target + rate*online; returns target."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"target update rate must be in [0, 1], got {rate}")
    for wt, w in zip(critic.target_net.weights, critic.net.weights):
        wt += rate * (w - wt)
    for bt, b in zip(critic.target_net.biases, critic.net.biases):
        bt += rate * (b - bt)
    return critic.target_net


def soft_policy(q_values, temperature):
    """Boltzmann policy over Q-values at the given temperature."""
    return softmax(q_values, temperature)


def bellman_target(reward_value, next_q_target, discount,
                   temperature=None, temperature_scaled=False):
    """Soft Bellman target r + gamma * log sum exp(next Q); terminal next
    states (next_q_target None) contribute no continuation value."""
    if next_q_target is None:
        return float(reward_value)
    next_q = np.asarray(next_q_target, dtype=float)
    if temperature_scaled:
        value = temperature * log_sum_exp(next_q / temperature)
    else:
        value = log_sum_exp(next_q)
    return float(reward_value) + discount * value


# ---------------------------------------------------------------------------
# Flattened dataset views and batches
# ---------------------------------------------------------------------------

@dataclass
class FlatData:
    """Dataset transitions stacked into contiguous arrays (normalized)."""
    obs: np.ndarray        # (M, d) normalized observations
    next_obs: np.ndarray   # (M, d)
    actions: np.ndarray    # (M,)
    dones: np.ndarray      # (M,)
    traj_slices: list      # [(start, end)] per trajectory
    n_actions: int


def flatten_dataset(dataset, normalizer):
    obs, nxt, acts, dones, slices = [], [], [], [], []
    start = 0
    for traj in dataset.trajectories:
        obs.append(normalizer.normalize(traj.observations))
        nxt.append(normalizer.normalize(traj.next_observations))
        acts.append(traj.actions)
        dones.append(traj.dones)
        slices.append((start, start + len(traj)))
        start += len(traj)
    return FlatData(np.vstack(obs), np.vstack(nxt),
                    np.concatenate(acts).astype(int),
                    np.concatenate(dones).astype(bool),
                    slices, dataset.action_count)


@dataclass
class Batch:
    """Transitions of a set of trajectories, with per-trajectory segments.

    segments[j] = (bank_row, start, end) locates trajectory j's transitions
    inside the batch arrays; global_idx maps them back into the FlatData
    arrays (used to slice precomputed per-transition constants).
    """
    obs: np.ndarray
    next_obs: np.ndarray
    actions: np.ndarray
    dones: np.ndarray
    segments: list
    global_idx: np.ndarray
    n_actions: int

    @property
    def size(self):
        return self.obs.shape[0]


def make_batch(flat, traj_indices):
    if len(traj_indices) == 0:
        raise ValueError("batch must contain at least one trajectory")
    pieces, segments, pos = [], [], 0
    for n in traj_indices:
        s, e = flat.traj_slices[n]
        pieces.append(np.arange(s, e))
        segments.append((int(n), pos, pos + (e - s)))
        pos += e - s
    idx = np.concatenate(pieces)
    return Batch(flat.obs[idx], flat.next_obs[idx], flat.actions[idx],
                 flat.dones[idx], segments, idx, flat.n_actions)


def _rbf(x_norm, kernels):
    d2 = ((x_norm[:, None, :] - kernels.centers[None]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2.0 * kernels.bandwidth ** 2))


def _batch_z(bank, batch):
    """Per-transition (K, A) coefficients, expanded from the bank rows."""
    z = np.empty((batch.size, bank.coefficients.shape[1],
                  bank.coefficients.shape[2]))
    for row, s, e in batch.segments:
        z[s:e] = bank.coefficients[row]
    return z


def _continuation(next_q, dones, cfg):
    """gamma * soft value of the next state, zero where the episode ended."""
    if cfg.value_temperature_scaling:
        value = cfg.temperature * log_sum_exp(next_q / cfg.temperature, axis=1)
    else:
        value = log_sum_exp(next_q, axis=1)
    return cfg.discount * value * (~dones)


def _critic_inputs(obs, p):
    return np.concatenate([obs, p], axis=1)


def _critic_forward(net, obs, p):
    """Q(x, p) = net([x; 0]) + p: the net sees a zeroed perturbation slot and
    p enters through the additive skip only."""
    out, cache = mlp_forward(net, _critic_inputs(obs, np.zeros_like(p)))
    return out + p, cache


# ---------------------------------------------------------------------------
# Phase-1 loss (base IRL)
# ---------------------------------------------------------------------------

def phase1_loss(batch, reward, critic, cfg):
    """Action NLL plus soft-Bellman consistency, with perturbations off.

    Returns (terms, grads): terms has nll/bellman/total, grads has flat
    parameter gradients for the reward and critic nets. The Bellman target is
    built from the target critic (constant in the online critic) but remains
    differentiable in the reward parameters.
    """
    if batch.size == 0:
        raise ValueError("empty batch")
    m, a_count = batch.size, batch.n_actions
    rows = np.arange(m)
    zeros_p = np.zeros((m, a_count))

    q, cache_q = _critic_forward(critic.net, batch.obs, zeros_p)
    pi = softmax(q, cfg.temperature)
    nll = -np.log(pi[rows, batch.actions]).sum()

    rbar, cache_r = mlp_forward(reward.base_net, batch.obs)
    next_q, _ = _critic_forward(critic.target_net, batch.next_obs, zeros_p)
    y = rbar[rows, batch.actions] + _continuation(next_q, batch.dones, cfg)

    bell_terms, bell_grad = smooth_l1(q[rows, batch.actions], y)
    bellman = bell_terms.sum()

    g_q = pi.copy()
    g_q[rows, batch.actions] -= 1.0
    g_q /= cfg.temperature
    g_q[rows, batch.actions] += cfg.bellman_weight * bell_grad
    critic_grads, _ = mlp_backward(critic.net, cache_q, g_q)

    g_rbar = np.zeros_like(rbar)
    g_rbar[rows, batch.actions] = -cfg.bellman_weight * bell_grad
    reward_grads, _ = mlp_backward(reward.base_net, cache_r, g_rbar)

    terms = {"nll": float(nll), "bellman": float(bellman),
             "penalty": 0.0, "anchor": 0.0,
             "total": float(nll + cfg.bellman_weight * bellman)}
    grads = {"reward": grads_to_flat(reward_grads),
             "critic": grads_to_flat(critic_grads)}
    return terms, grads


# ---------------------------------------------------------------------------
# Phase-2 loss (minimum-perturbation IRL)
# ---------------------------------------------------------------------------

def phase2_loss(batch, reward, critic, phase1_critic, bank, kernels, cfg,
                rbar=None, q0_ref=None, frozen_cont=None):
    """Perturbed NLL + Bellman, sparsity penalty, and the phase-1 anchor.

    The reward net must be the frozen phase-1 model; its table (rbar) and the
    phase-1 critic's zero-perturbation outputs (q0_ref) may be passed in as
    precomputed constants. frozen_cont pins the (stop-gradient) continuation
    values; when None they are recomputed from the current bank/centers,
    which is what the training loop does every iteration.

    Returns (terms, grads) with grads for the critic, the bank rows in the
    batch ({row: (K, A) array}, data fit plus penalty subgradient), and the
    centers when cfg.learn_centers.
    """
    if batch.size == 0:
        raise ValueError("empty batch")
    m, a_count = batch.size, batch.n_actions
    k_count = kernels.n_kernels
    rows = np.arange(m)

    z = _batch_z(bank, batch)                       # (m, K, A)
    act_x = _rbf(batch.obs, kernels)                # (m, K)
    p = np.einsum("mk,mka->ma", act_x, z)

    q, cache_q = _critic_forward(critic.net, batch.obs, p)
    pi = softmax(q, cfg.temperature)
    nll = -np.log(pi[rows, batch.actions]).sum()

    if rbar is None:
        rbar = reward.base_rewards(batch.obs)
    if frozen_cont is None:
        act_next = _rbf(batch.next_obs, kernels)
        p_next = np.einsum("mk,mka->ma", act_next, z)
        next_q, _ = _critic_forward(critic.target_net, batch.next_obs, p_next)
        frozen_cont = _continuation(next_q, batch.dones, cfg)
    y = rbar[rows, batch.actions] + p[rows, batch.actions] + frozen_cont

    bell_terms, bell_grad = smooth_l1(q[rows, batch.actions], y)
    bellman = bell_terms.sum()

    zeros_p = np.zeros((m, a_count))
    if q0_ref is None:
        q0_ref, _ = _critic_forward(phase1_critic.net, batch.obs, zeros_p)
    q0, cache_q0 = _critic_forward(critic.net, batch.obs, zeros_p)
    anchor_terms, anchor_grad = smooth_l1(q0, q0_ref)
    anchor = anchor_terms.sum()

    penalty = 0.0
    penalty_subgrads = {}
    for row, _, _ in batch.segments:
        value, subgrad = sparsity_penalty(bank, row)
        penalty += value
        penalty_subgrads[row] = subgrad

    # critic gradient: NLL + Bellman through q, anchor through q0
    g_q = pi.copy()
    g_q[rows, batch.actions] -= 1.0
    g_q /= cfg.temperature
    g_q[rows, batch.actions] += cfg.bellman_weight * bell_grad
    critic_grads, input_grad = mlp_backward(critic.net, cache_q, g_q)
    anchor_pgrads, _ = mlp_backward(critic.net, cache_q0,
                                    cfg.anchor_weight * anchor_grad)
    critic_flat = grads_to_flat(critic_grads) + grads_to_flat(anchor_pgrads)

    # perturbation gradient: the additive skip (dq/dp = I) plus the reward
    # side of the Bellman target (y grows with p[a], so d/dp[a] -= lambda*
    # huber'); the net input carries no p, so nothing flows through it
    g_p = g_q.copy()
    g_p[rows, batch.actions] -= cfg.bellman_weight * bell_grad

    z_grads = {}
    for row, s, e in batch.segments:
        g = act_x[s:e].T @ g_p[s:e]                 # (K, A)
        z_grads[row] = g + cfg.sparsity_weight * penalty_subgrads[row]

    center_grad = None
    if cfg.learn_centers:
        g_act = np.einsum("ma,mka->mk", g_p, z)     # (m, K)
        scale = g_act * act_x / kernels.bandwidth ** 2
        diff = batch.obs[:, None, :] - kernels.centers[None]   # (m, K, d)
        center_grad = np.einsum("mk,mkd->kd", scale, diff)

    total = (nll + cfg.bellman_weight * bellman
             + cfg.sparsity_weight * penalty + cfg.anchor_weight * anchor)
    terms = {"nll": float(nll), "bellman": float(bellman),
             "penalty": float(penalty), "anchor": float(anchor),
             "total": float(total)}
    grads = {"critic": critic_flat, "z": z_grads, "centers": center_grad}
    return terms, grads


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------

def _check_finite(terms, iteration, phase):
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericError(
                f"{phase} iteration {iteration}: {name} loss became {value}")


def _sample_trajectories(rng, n_trajectories, batch_size):
    take = min(batch_size, n_trajectories)
    return rng.permutation(n_trajectories)[:take]


def train_phase1(dataset, cfg, kernels, normalizer):
    """Base IRL: fit reward and critic on the recorded data with z = 0.

    Deterministic in cfg.seed. Returns (reward, critic, history).
    """
    if dataset.n_trajectories == 0:
        raise ValueError("dataset is empty")
    flat = flatten_dataset(dataset, normalizer)
    d = flat.obs.shape[1]
    init_seq, batch_seq = np.random.SeedSequence([cfg.seed, 1]).spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(init_seq))
    batch_rng = np.random.Generator(np.random.PCG64(batch_seq))

    reward = init_reward(d, flat.n_actions, cfg.hidden_sizes, init_rng)
    critic = init_critic(d, flat.n_actions, cfg.hidden_sizes, init_rng)
    theta = mlp_get_params(reward.base_net)
    phi = mlp_get_params(critic.net)
    adam_theta = adam_init(theta.size, cfg.lr_reward)
    adam_phi = adam_init(phi.size, cfg.lr_critic)

    history = []
    for it in range(cfg.phase1_iterations):
        batch = make_batch(flat, _sample_trajectories(
            batch_rng, dataset.n_trajectories, cfg.batch_trajectories))
        terms, grads = phase1_loss(batch, reward, critic, cfg)
        _check_finite(terms, it, "phase1")
        theta, adam_theta = adam_step(theta, grads["reward"], adam_theta)
        phi, adam_phi = adam_step(phi, grads["critic"], adam_phi)
        reward.base_net = mlp_set_params(reward.base_net, theta)
        critic.net = mlp_set_params(critic.net, phi)
        update_target(critic, cfg.target_update_rate)
        history.append(terms)
    return reward, critic, history


def train_phase2(dataset, reward, phase1_critic, cfg, kernels, normalizer):
    """Minimum-perturbation phase: freeze the reward, learn z, the critic,
    and (optionally) the kernel centers.

    The critic and its target start from the phase-1 critic; bank rows start
    at zero. z rows take proximal gradient steps (plain gradient on the data
    fit, then the sparse-group shrinkage of the penalty) so unused
    coefficients land on exact zeros; the critic and centers use Adam.
    Returns (critic, bank, kernels, history).
    """
    flat = flatten_dataset(dataset, normalizer)
    n_traj = dataset.n_trajectories
    kernels = KernelSet(kernels.centers.copy(), kernels.bandwidth,
                        cfg.learn_centers)
    bank = PerturbationBank.zeros(n_traj, kernels.n_kernels, flat.n_actions)
    critic = Critic(phase1_critic.net.copy(), phase1_critic.net.copy())
    snapshot = Critic(phase1_critic.net.copy(), phase1_critic.net.copy())

    theta_before = mlp_get_params(reward.base_net)
    rbar_all = reward.base_rewards(flat.obs)
    q0_ref_all, _ = _critic_forward(
        snapshot.net, flat.obs, np.zeros((flat.obs.shape[0], flat.n_actions)))

    batch_rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([cfg.seed, 2])))
    phi = mlp_get_params(critic.net)
    adam_phi = adam_init(phi.size, cfg.lr_critic)
    adam_mu = adam_init(kernels.centers.size, cfg.lr_centers)
    mu = kernels.centers.ravel().copy()

    history = []
    for it in range(cfg.phase2_iterations):
        traj_idx = _sample_trajectories(batch_rng, n_traj, cfg.batch_trajectories)
        batch = make_batch(flat, traj_idx)
        terms, grads = phase2_loss(
            batch, reward, critic, snapshot, bank, kernels, cfg,
            rbar=rbar_all[batch.global_idx], q0_ref=q0_ref_all[batch.global_idx])
        _check_finite(terms, it, "phase2")

        phi, adam_phi = adam_step(phi, grads["critic"], adam_phi)
        critic.net = mlp_set_params(critic.net, phi)

        shrink = cfg.lr_z * cfg.sparsity_weight
        for row, _, _ in batch.segments:
            data_grad = grads["z"][row] \
                - cfg.sparsity_weight * sparsity_penalty(bank, row)[1]
            stepped = bank.coefficients[row] - cfg.lr_z * data_grad
            bank.coefficients[row] = sparse_group_prox(stepped, shrink)

        if cfg.learn_centers:
            mu, adam_mu = adam_step(mu, grads["centers"].ravel(), adam_mu)
            kernels.centers = mu.reshape(kernels.centers.shape)

        update_target(critic, cfg.target_update_rate)
        history.append(terms)

    if not np.array_equal(theta_before, mlp_get_params(reward.base_net)):
        raise RuntimeError("phase 2 must not modify the frozen reward")
    return critic, bank, kernels, history


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def critic_q_values(critic, obs_norm, p):
    """Q table for a batch of normalized observations and perturbations."""
    out, _ = _critic_forward(critic.net, obs_norm, p)
    return out


def predict_action_distribution(critic, observation, z_row, kernels,
                                normalizer, temperature):
    """Soft policy at one raw observation; z_row None means no perturbation."""
    x = normalizer.normalize(observation)
    if x.ndim != 1:
        raise ValueError("expected a single observation vector")
    a_count = critic.net.layer_sizes[-1]
    if z_row is None:
        p = np.zeros(a_count)
    else:
        act = _rbf(x[None, :], kernels)[0]
        p = act @ z_row
    q, _ = _critic_forward(critic.net, x[None, :], p[None, :])
    return softmax(q[0], temperature)
