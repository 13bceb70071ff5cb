"""Feature normalization, Gaussian RBF kernels, K-means center placement,
and the per-trajectory perturbation bank.

A bank row z_n is a (K, A) coefficient matrix; the induced per-action reward
perturbation at an observation x is p_a = sum_k kappa(x, mu_k) * z_n[k, a].
Kernel distances are always computed in normalized feature space.
"""

import numpy as np
from dataclasses import dataclass


@dataclass
class FeatureNormalizer:
    mean: np.ndarray
    std: np.ndarray  # strictly positive; constant features guarded to 1

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x, dtype=float) * self.std + self.mean


def stack_observations(dataset):
    return np.vstack([t.observations for t in dataset.trajectories])


def fit_normalizer(dataset):
    """Per-feature mean and population std over every recorded observation."""
    obs = stack_observations(dataset)
    if obs.shape[0] < 2:
        raise ValueError("need at least 2 observations to fit a normalizer")
    mean = obs.mean(axis=0)
    std = obs.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return FeatureNormalizer(mean, std)


@dataclass
class KernelSet:
    centers: np.ndarray  # (K, d) in normalized feature space
    bandwidth: float
    learnable_centers: bool = False

    @property
    def n_kernels(self):
        return self.centers.shape[0]

    def copy(self):
        return KernelSet(self.centers.copy(), self.bandwidth, self.learnable_centers)


@dataclass
class PerturbationBank:
    coefficients: np.ndarray  # (N, K, A)

    @classmethod
    def zeros(cls, n_trajectories, n_kernels, n_actions):
        return cls(np.zeros((n_trajectories, n_kernels, n_actions)))

    @property
    def n_trajectories(self):
        return self.coefficients.shape[0]


# ---------------------------------------------------------------------------
# K-means (Lloyd's algorithm with k-means++ seeding)
# ---------------------------------------------------------------------------

def kmeans(points, k, seed, max_iterations=100):
    """Cluster points; returns (centers, assignments). Deterministic in seed."""
    points = np.asarray(points, dtype=float)
    distinct = np.unique(points, axis=0)
    if k < 1 or k > distinct.shape[0]:
        raise ValueError(
            f"k must be in [1, {distinct.shape[0]}] (distinct points), got {k}")
    rng = np.random.Generator(np.random.PCG64(seed))

    # k-means++ seeding on the distinct points
    centers = [distinct[rng.integers(distinct.shape[0])]]
    for _ in range(k - 1):
        d2 = np.min(((distinct[:, None, :] - np.array(centers)[None]) ** 2
                     ).sum(axis=2), axis=1)
        total = d2.sum()
        if total <= 0:
            probs = np.full(distinct.shape[0], 1.0 / distinct.shape[0])
        else:
            probs = d2 / total
        centers.append(distinct[rng.choice(distinct.shape[0], p=probs)])
    centers = np.array(centers)

    assignments = None
    for _ in range(max_iterations):
        d2 = ((points[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new_assignments = d2.argmin(axis=1)
        if assignments is not None and np.array_equal(assignments, new_assignments):
            break
        assignments = new_assignments
        for j in range(k):
            members = points[assignments == j]
            if members.shape[0] > 0:  # empty clusters keep their center
                centers[j] = members.mean(axis=0)
    return centers, assignments


def kmeans_init(dataset, k, seed, normalizer=None):
    """K-means centers over the dataset's normalized observations."""
    normalizer = normalizer or fit_normalizer(dataset)
    points = normalizer.normalize(stack_observations(dataset))
    centers, _ = kmeans(points, k, seed)
    return centers


def default_bandwidth(centers, points=None):
    """Median pairwise distance between centers, divided by sqrt(2).

    With a single center (no pairwise distances) the median center-to-point
    distance is used instead; 1.0 if no points are given either.
    """
    centers = np.asarray(centers, dtype=float)
    k = centers.shape[0]
    if k >= 2:
        d = np.sqrt(((centers[:, None, :] - centers[None]) ** 2).sum(axis=2))
        pairwise = d[np.triu_indices(k, 1)]
        med = np.median(pairwise)
    elif points is not None and len(points) > 0:
        med = np.median(np.linalg.norm(np.asarray(points) - centers[0], axis=1))
    else:
        med = np.sqrt(2.0)
    if med <= 0:
        med = np.sqrt(2.0)
    return float(med / np.sqrt(2.0))


# ---------------------------------------------------------------------------
# RBF activations and perturbations
# ---------------------------------------------------------------------------

def kernel_activations(kernels, normalizer, observation):
    """kappa(x, mu_k) = exp(-||x_norm - mu_k||^2 / (2 sigma^2)).

    Accepts one observation (d,) -> (K,) or a batch (m, d) -> (m, K).
    """
    x = normalizer.normalize(observation)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != kernels.centers.shape[1]:
        raise ValueError(
            f"observation has {x.shape[1]} features, centers have "
            f"{kernels.centers.shape[1]}")
    d2 = ((x[:, None, :] - kernels.centers[None]) ** 2).sum(axis=2)
    act = np.exp(-d2 / (2.0 * kernels.bandwidth ** 2))
    return act[0] if single else act


def perturbation_vector(bank, n, activations):
    """Per-action perturbation p_a = sum_k activations_k * z[n, k, a]."""
    z = bank.coefficients
    if not 0 <= n < z.shape[0]:
        raise IndexError(f"trajectory index {n} out of range")
    activations = np.asarray(activations, dtype=float)
    if activations.shape != (z.shape[1],):
        raise ValueError(
            f"expected {z.shape[1]} activations, got {activations.shape}")
    return activations @ z[n]


def perturbed_reward(base_value, p, action):
    """Base reward plus the action's perturbation component."""
    return float(base_value) + float(p[action])


def sparsity_penalty(bank, n):
    """Group-plus-elementwise penalty sum_k ||z[n,k,:]||_2 + ||z[n]||_1.

    Returns (value, subgradient); the subgradient is 0 at zero rows/entries
    so exactly-zero coefficients generate no penalty pull of their own.
    """
    z = bank.coefficients[n]
    row_norms = np.linalg.norm(z, axis=1)
    value = float(row_norms.sum() + np.abs(z).sum())
    safe = np.where(row_norms > 0, row_norms, 1.0)
    subgrad = z / safe[:, None] + np.sign(z)
    return value, subgrad


def z_l1_size(bank, n):
    """Elementwise l1 norm of one trajectory's coefficients."""
    return float(np.abs(bank.coefficients[n]).sum())


def sparse_group_prox(z, threshold):
    """Proximal map of threshold * (sum_k ||z_k||_2 + ||z||_1) on a (K, A)
    block: elementwise soft-threshold, then per-row group shrinkage."""
    soft = np.sign(z) * np.maximum(np.abs(z) - threshold, 0.0)
    norms = np.linalg.norm(soft, axis=1, keepdims=True)
    scale = np.where(norms > 0, np.maximum(0.0, 1.0 - threshold / np.where(norms > 0, norms, 1.0)), 0.0)
    return soft * scale


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def kernels_to_dict(kernels, bank=None):
    out = {"centers": kernels.centers.tolist(),
           "sigma": float(kernels.bandwidth),
           "learnable_centers": bool(kernels.learnable_centers)}
    out["z"] = bank.coefficients.tolist() if bank is not None else None
    return out


def kernels_from_dict(data):
    kernels = KernelSet(np.array(data["centers"], dtype=float),
                        float(data["sigma"]),
                        bool(data.get("learnable_centers", False)))
    bank = None
    if data.get("z") is not None:
        bank = PerturbationBank(np.array(data["z"], dtype=float))
    return kernels, bank
