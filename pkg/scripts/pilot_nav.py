"""Pilot run for navigation experiments: reports everything the acceptance
criteria look at so hyperparameters can be tuned quickly."""

import sys
import time

import numpy as np

from mpirl.analysis import (action_accuracy, context_cluster_purity,
                            kernel_summary, mean_z_size, metrics_report,
                            total_nll)
from mpirl.bundle import ModelBundle
from mpirl.dataset import generate_dataset
from mpirl.kernels import KernelSet, default_bandwidth, fit_normalizer, kmeans_init, stack_observations
from mpirl.navigation import make_nav_spec, in_decision_region
from mpirl.training import TrainConfig, train_phase1, train_phase2


def run(variant="single", episodes=500, k=10, alpha=0.01, ph1=2000, ph2=4000,
        seed=7, sigma=None, learn_centers=True, lr_z=1e-2, anchor=1.0):
    spec = make_nav_spec(variant)
    dataset = generate_dataset(spec, episodes, seed)
    normalizer = fit_normalizer(dataset)
    centers = kmeans_init(dataset, k, seed, normalizer)
    if sigma is None:
        pts = normalizer.normalize(stack_observations(dataset))
        sigma = default_bandwidth(centers, pts)
    print(f"[{variant}] sigma={sigma:.4f} K={k} alpha={alpha}")
    kernels = KernelSet(centers, sigma, learn_centers)
    cfg = TrainConfig(phase1_iterations=ph1, phase2_iterations=ph2,
                      sparsity_weight=alpha, learn_centers=learn_centers,
                      lr_z=lr_z, anchor_weight=anchor, seed=seed)

    t0 = time.time()
    reward, critic1, h1 = train_phase1(dataset, cfg, kernels, normalizer)
    t1 = time.time()
    critic2, bank, kernels2, h2 = train_phase2(dataset, reward, critic1, cfg,
                                               kernels, normalizer)
    t2 = time.time()
    print(f"phase1 {t1-t0:.1f}s phase2 {t2-t1:.1f}s")

    def mk_bundle(critic_net, use_bank):
        return ModelBundle(normalizer, kernels2, bank if use_bank else None,
                           reward, critic1.net, critic_net, cfg,
                           {"phase1": [], "phase2": []},
                           dataset.feature_names, dataset.action_count,
                           dataset.trajectories[0].env_tag,
                           [t.episode_id for t in dataset.trajectories],
                           [t.hidden_context_label for t in dataset.trajectories])

    b1 = mk_bundle(critic1.net, False)
    b2 = mk_bundle(critic2.net, True)
    for name, b, learned in (("phase1", b1, False), ("phase2 z", b2, True),
                             ("phase2 z=0", b2, False)):
        acc = action_accuracy(dataset, b, "all", learned)
        dec = action_accuracy(dataset, b, "decision", learned)
        non = action_accuracy(dataset, b, "non_decision", learned)
        nll = total_nll(dataset, b, learned)
        print(f"{name:12s} overall={acc:.4f} dec={dec:.4f} non={non:.4f} nll={nll:.1f}")

    print("mean z size:", mean_z_size(bank))
    labels = [t.hidden_context_label for t in dataset.trajectories]
    n_ctx = len(set(labels))
    purity = context_cluster_purity(
        bank.coefficients.reshape(episodes, -1), labels, n_ctx, seed=0)
    print(f"purity ({n_ctx} clusters): {purity:.4f}")

    mags, cvecs = kernel_summary(bank, kernels2)
    raw_centers = normalizer.denormalize(cvecs)
    inside = np.array([in_decision_region(spec, c) for c in raw_centers])
    print("kernel centers (raw) / mean |z| / in-region:")
    for i in range(k):
        print(f"  k{i}: ({raw_centers[i][0]:.3f},{raw_centers[i][1]:.3f}) "
              f"mag={mags[i]:.4f} in={inside[i]}")
    if (~inside).any() and inside.any():
        print("max outside/max =", mags[~inside].max() / mags.max(),
              " (need <= 0.10 for kernels outside regions)")
    print("history tail:", h2[-1])
    return dataset, b1, b2, bank


if __name__ == "__main__":
    kwargs = {}
    for arg in sys.argv[1:]:
        key, value = arg.split("=")
        try:
            value = int(value)
        except ValueError:
            try:
                value = float(value)
            except ValueError:
                pass
        kwargs[key] = value
    run(**kwargs)
