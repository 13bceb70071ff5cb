"""Serialization of trained artifacts to a single JSON model bundle.

The bundle carries everything analysis needs: the frozen normalizer, the
kernel set, the learned perturbation bank, the reward and both critics, the
training config and histories, plus dataset alignment metadata (episode ids,
hidden-context labels, env tag) so evaluation can verify it is paired with
the dataset it was trained on.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .dataset import DataError, atomic_write_text, canonical_json
from .kernels import FeatureNormalizer, KernelSet, PerturbationBank
from .ndmath import Mlp
from .training import Critic, RewardModel, TrainConfig

FORMAT_VERSION = 1


@dataclass
class ModelBundle:
    normalizer: FeatureNormalizer
    kernels: KernelSet
    bank: object              # PerturbationBank or None (phase-1 only)
    reward: RewardModel
    phase1_critic: Mlp
    critic: Mlp               # final critic (same as phase1_critic when bank is None)
    config: TrainConfig
    history: dict             # {"phase1": [...], "phase2": [...] or None}
    feature_names: list
    action_count: int
    env_tag: str
    episode_ids: list
    context_labels: object    # list or None

    def phase1_critic_obj(self):
        return Critic(self.phase1_critic.copy(), self.phase1_critic.copy())

    def critic_obj(self):
        return Critic(self.critic.copy(), self.critic.copy())

    def bank_or_zero(self, n_trajectories=None):
        """The learned bank, or an all-zero bank shaped for the dataset."""
        if self.bank is not None:
            return self.bank
        n = len(self.episode_ids) if n_trajectories is None else n_trajectories
        return PerturbationBank.zeros(n, self.kernels.n_kernels, self.action_count)


def _mlp_to_dict(net):
    return {"layer_sizes": list(net.layer_sizes),
            "weights": [w.tolist() for w in net.weights],
            "biases": [b.tolist() for b in net.biases]}


def _mlp_from_dict(data):
    return Mlp(list(data["layer_sizes"]),
               [np.array(w, dtype=float) for w in data["weights"]],
               [np.array(b, dtype=float) for b in data["biases"]])


def bundle_to_dict(bundle):
    cfg = asdict(bundle.config)
    cfg["hidden_sizes"] = list(cfg["hidden_sizes"])
    return {
        "format_version": FORMAT_VERSION,
        "normalizer": {"mean": bundle.normalizer.mean.tolist(),
                       "std": bundle.normalizer.std.tolist()},
        "kernels": {"centers": bundle.kernels.centers.tolist(),
                    "sigma": float(bundle.kernels.bandwidth),
                    "learnable_centers": bool(bundle.kernels.learnable_centers)},
        "z_bank": (bundle.bank.coefficients.tolist()
                   if bundle.bank is not None else None),
        "reward_params": _mlp_to_dict(bundle.reward.base_net),
        "critic_params": _mlp_to_dict(bundle.critic),
        "phase1_critic_params": _mlp_to_dict(bundle.phase1_critic),
        "config": cfg,
        "history": bundle.history,
        "dataset_info": {"feature_names": list(bundle.feature_names),
                         "action_count": int(bundle.action_count),
                         "env": bundle.env_tag,
                         "episode_ids": list(bundle.episode_ids),
                         "context_labels": bundle.context_labels},
    }


def bundle_from_dict(data):
    if data.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported bundle format {data.get('format_version')!r}")
    cfg = dict(data["config"])
    cfg["hidden_sizes"] = tuple(cfg["hidden_sizes"])
    info = data["dataset_info"]
    bank = None
    if data["z_bank"] is not None:
        bank = PerturbationBank(np.array(data["z_bank"], dtype=float))
    return ModelBundle(
        normalizer=FeatureNormalizer(
            np.array(data["normalizer"]["mean"], dtype=float),
            np.array(data["normalizer"]["std"], dtype=float)),
        kernels=KernelSet(np.array(data["kernels"]["centers"], dtype=float),
                          float(data["kernels"]["sigma"]),
                          bool(data["kernels"]["learnable_centers"])),
        bank=bank,
        reward=RewardModel(_mlp_from_dict(data["reward_params"])),
        phase1_critic=_mlp_from_dict(data["phase1_critic_params"]),
        critic=_mlp_from_dict(data["critic_params"]),
        config=TrainConfig(**cfg),
        history=data["history"],
        feature_names=list(info["feature_names"]),
        action_count=int(info["action_count"]),
        env_tag=info["env"],
        episode_ids=list(info["episode_ids"]),
        context_labels=info["context_labels"],
    )


def save_bundle(bundle, path):
    atomic_write_text(path, canonical_json(bundle_to_dict(bundle)) + "\n")


def load_bundle(path):
    import json
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a valid bundle: {exc}") from exc
    return bundle_from_dict(data)
