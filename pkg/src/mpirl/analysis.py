"""Evaluation metrics and missingness analysis over trained bundles:
action-matching accuracy (overall / inside / outside decision regions),
summed NLL, perturbation sizes, PCA of the learned z rows, reward and
perturbation grids, and context-cluster purity.
"""

import numpy as np
from dataclasses import dataclass

from .kernels import PerturbationBank, kmeans, z_l1_size
from .navigation import NAV_VARIANTS, in_decision_region, make_nav_spec
from .ndmath import log_sum_exp
from .training import critic_q_values, flatten_dataset, _rbf


@dataclass
class MetricsReport:
    overall_accuracy: float
    decision_region_accuracy: object   # float or None outside navigation
    non_decision_accuracy: object
    total_nll: float
    mean_z_size: float
    per_kernel_mean_magnitude: list

    def to_dict(self):
        return {"overall_accuracy": self.overall_accuracy,
                "decision_region_accuracy": self.decision_region_accuracy,
                "non_decision_accuracy": self.non_decision_accuracy,
                "total_nll": self.total_nll,
                "mean_z_size": self.mean_z_size,
                "per_kernel_mean_magnitude": self.per_kernel_mean_magnitude}


def nav_spec_for_tag(env_tag):
    if env_tag.startswith("nav_") and env_tag[4:] in NAV_VARIANTS:
        return make_nav_spec(env_tag[4:])
    return None


def _policy_inputs(dataset, bundle, use_learned_z):
    """Normalized observations and per-transition perturbation vectors."""
    flat = flatten_dataset(dataset, bundle.normalizer)
    p = np.zeros((flat.obs.shape[0], dataset.action_count))
    if use_learned_z and bundle.bank is not None:
        act = _rbf(flat.obs, bundle.kernels)
        for n, (s, e) in enumerate(flat.traj_slices):
            p[s:e] = act[s:e] @ bundle.bank.coefficients[n]
    return flat, p


def _decision_mask(dataset, flat):
    """Boolean mask over transitions whose recorded observation lies in a
    decision region; None for domains without region geometry."""
    spec = None
    if dataset.trajectories:
        spec = nav_spec_for_tag(dataset.trajectories[0].env_tag)
    if spec is None:
        return None
    raw = np.vstack([t.observations for t in dataset.trajectories])
    return np.array([in_decision_region(spec, x) for x in raw])


def action_accuracy(dataset, bundle, region_filter="all", use_learned_z=False):
    """Fraction of recorded steps whose argmax predicted action matches the
    recorded one, optionally restricted to (non-)decision-region steps.

    Returns None when the filtered set is empty (e.g. region filters on a
    domain without decision regions)."""
    if region_filter not in ("all", "decision", "non_decision"):
        raise ValueError(f"unknown region filter {region_filter!r}")
    flat, p = _policy_inputs(dataset, bundle, use_learned_z)
    q = critic_q_values(bundle.critic_obj(), flat.obs, p)
    predicted = q.argmax(axis=1)
    hits = predicted == flat.actions
    if region_filter == "all":
        keep = np.ones(len(hits), dtype=bool)
    else:
        mask = _decision_mask(dataset, flat)
        if mask is None:
            return None
        keep = mask if region_filter == "decision" else ~mask
    if not keep.any():
        return None
    return float(hits[keep].mean())


def total_nll(dataset, bundle, use_learned_z=False):
    """Summed negative log-likelihood of the recorded actions."""
    flat, p = _policy_inputs(dataset, bundle, use_learned_z)
    q = critic_q_values(bundle.critic_obj(), flat.obs, p)
    logits = q / bundle.config.temperature
    log_pi = logits - log_sum_exp(logits, axis=1)[:, None]
    return float(-log_pi[np.arange(len(flat.actions)), flat.actions].sum())


def mean_z_size(bank):
    """Average elementwise l1 norm of the bank rows."""
    n = bank.n_trajectories
    if n < 1:
        raise ValueError("bank has no trajectories")
    return float(sum(z_l1_size(bank, i) for i in range(n)) / n)


def kernel_summary(bank, kernels):
    """Mean per-kernel l1 magnitude across trajectories, plus the centers."""
    magnitudes = np.abs(bank.coefficients).sum(axis=2).mean(axis=0)
    return magnitudes, kernels.centers.copy()


def metrics_report(dataset, bundle, use_learned_z):
    bank = bundle.bank_or_zero(dataset.n_trajectories)
    if not use_learned_z:
        bank = PerturbationBank(np.zeros_like(bank.coefficients))
    magnitudes, _ = kernel_summary(bank, bundle.kernels)
    return MetricsReport(
        overall_accuracy=action_accuracy(dataset, bundle, "all", use_learned_z),
        decision_region_accuracy=action_accuracy(dataset, bundle, "decision",
                                                 use_learned_z),
        non_decision_accuracy=action_accuracy(dataset, bundle, "non_decision",
                                              use_learned_z),
        total_nll=total_nll(dataset, bundle, use_learned_z),
        mean_z_size=mean_z_size(bank),
        per_kernel_mean_magnitude=magnitudes.tolist(),
    )


# ---------------------------------------------------------------------------
# PCA of perturbation rows (power iteration with deflation)
# ---------------------------------------------------------------------------

def pca_project(bank_or_rows, dims=2):
    """Project flattened z rows onto their top principal components.

    Returns (coords (N, dims), explained_variance_fractions (dims,)).
    Components are orthonormal with the largest-magnitude entry of each made
    positive; degenerate data (all rows equal) maps to zero coordinates.
    """
    rows = bank_or_rows
    if hasattr(rows, "coefficients"):
        rows = rows.coefficients.reshape(rows.coefficients.shape[0], -1)
    rows = np.asarray(rows, dtype=float)
    n, d = rows.shape
    if n < dims:
        raise ValueError(f"need at least {dims} rows, got {n}")
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / n
    total = float(np.trace(cov))

    components, variances = [], []
    work = cov.copy()
    for _ in range(dims):
        v = _power_iteration(work, components)
        lam = float(v @ work @ v)
        if lam < 0:
            lam = 0.0
        components.append(v)
        variances.append(lam)
        work = work - lam * np.outer(v, v)

    comps = np.array(components)
    # sign convention: largest-magnitude entry positive
    for i in range(dims):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    coords = centered @ comps.T
    explained = np.array([v / total if total > 0 else 0.0 for v in variances])
    return coords, explained


def _power_iteration(matrix, previous, max_iterations=5000, tol=1e-14):
    d = matrix.shape[0]
    # deterministic start with a ramp so no coordinate pattern is special
    v = np.ones(d) + np.linspace(0, 0.5, d)
    v /= np.linalg.norm(v)
    for prev in previous:
        v -= (v @ prev) * prev
    for _ in range(max_iterations):
        w = matrix @ v
        for prev in previous:
            w -= (w @ prev) * prev
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            # null direction: return anything orthonormal to previous
            return _orthonormal_fallback(d, previous)
        w /= norm
        if np.linalg.norm(w - v) < tol:
            return w
        v = w
    return v


def _orthonormal_fallback(d, previous):
    for i in range(d):
        v = np.zeros(d)
        v[i] = 1.0
        for prev in previous:
            v -= (v @ prev) * prev
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm
    raise RuntimeError("could not build an orthonormal direction")


# ---------------------------------------------------------------------------
# Reward / perturbation grids (navigation domains)
# ---------------------------------------------------------------------------

@dataclass
class RewardGrid:
    bounds: tuple            # (x_lo, x_hi, y_lo, y_hi)
    resolution: int
    points: np.ndarray       # (resolution^2, 2) raw-space grid points
    values: np.ndarray       # (resolution^2, A)
    perturbation_context: object  # None for the base reward


def grid_points(bounds, resolution):
    x_lo, x_hi, y_lo, y_hi = bounds
    xs = x_lo + (np.arange(resolution) + 0.5) * (x_hi - x_lo) / resolution
    ys = y_lo + (np.arange(resolution) + 0.5) * (y_hi - y_lo) / resolution
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def group_average_z(bundle, context_value):
    if bundle.bank is None:
        raise ValueError("bundle has no learned perturbations")
    if bundle.context_labels is None:
        raise ValueError("bundle carries no context labels")
    labels = np.array([-1 if c is None else int(c)
                       for c in bundle.context_labels])
    rows = bundle.bank.coefficients[labels == int(context_value)]
    if rows.shape[0] == 0:
        raise ValueError(f"no trajectories with context {context_value}")
    return rows.mean(axis=0)


def reward_grid(bundle, bounds, resolution, perturbation_context=None):
    """Base-reward values over a 2-D grid, or the perturbation term under the
    group-averaged z row when a context value is given."""
    if len(bundle.feature_names) != 2:
        raise ValueError("reward grids need a 2-D observation space")
    pts = grid_points(bounds, resolution)
    obs_norm = bundle.normalizer.normalize(pts)
    if perturbation_context is None:
        values = bundle.reward.base_rewards(obs_norm)
    else:
        z_row = group_average_z(bundle, perturbation_context)
        act = _rbf(obs_norm, bundle.kernels)
        values = act @ z_row
    return RewardGrid(tuple(bounds), resolution, pts, values,
                      perturbation_context)


# ---------------------------------------------------------------------------
# Context recovery
# ---------------------------------------------------------------------------

def context_cluster_purity(rows, labels, cluster_count, seed=0):
    """K-means purity of the rows against true context labels: the fraction
    of rows landing in a cluster whose majority label matches theirs."""
    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels)
    n = rows.shape[0]
    if cluster_count < 1 or cluster_count > n:
        raise ValueError(f"cluster_count must be in [1, {n}]")
    if len(labels) != n:
        raise ValueError("one label per row required")
    _, assignments = kmeans(rows, cluster_count, seed)
    majority_total = 0
    for c in range(cluster_count):
        members = labels[assignments == c]
        if members.size == 0:
            continue
        _, counts = np.unique(members, return_counts=True)
        majority_total += counts.max()
    return float(majority_total) / n
