"""Command-line surface: dataset generation, training, evaluation, PCA
projection, and reward/perturbation heatmaps.

Every command is deterministic given its config and seed. Options may come
from a JSON config file (--config); explicit flags win over the file. All
file writes are atomic. Exit codes: 0 success, 2 usage, 3 data/schema,
4 numeric failure.
"""

import argparse
import json
import sys
from dataclasses import fields

import numpy as np

from .analysis import (context_cluster_purity, mean_z_size, metrics_report,
                       nav_spec_for_tag, pca_project, reward_grid)
from .bundle import ModelBundle, load_bundle, save_bundle
from .cancer import CancerExpertConfig, CancerParams
from .dataset import (DataError, apply_mask, atomic_write_text,
                      canonical_json, generate_dataset, load_csv_dataset,
                      load_jsonl, save_jsonl)
from .kernels import KernelSet, default_bandwidth, fit_normalizer, kmeans_init
from .navigation import make_nav_spec
from .svg import svg_heatmap, svg_scatter
from .training import (NumericError, TrainConfig, train_phase1, train_phase2)

ENV_CHOICES = ("nav_single", "nav_two_dep", "nav_two_ind", "cancer")

CONTEXT_ALIASES = {
    "nav_single": {"left": 0, "right": 1},
    "nav_two_dep": {"left": 0, "right": 1,
                    "left-left": 0, "right-right": 1},
    "nav_two_ind": {"left-left": 0, "left-right": 1,
                    "right-left": 2, "right-right": 3},
}


class UsageError(ValueError):
    """Bad option combination that argparse cannot catch on its own."""


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc


def _merged(args, config, key, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _load_dataset(path):
    if str(path).endswith(".csv"):
        return load_csv_dataset(path)
    return load_jsonl(path)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args):
    config = _load_config_file(args.config)
    env_name = _merged(args, config, "env", None)
    if env_name not in ENV_CHOICES:
        raise UsageError(f"--env must be one of {ENV_CHOICES}")
    episodes = int(_merged(args, config, "episodes", 500))
    seed = int(_merged(args, config, "seed", 0))
    mask = _merged(args, config, "mask", None)
    if isinstance(mask, str):
        mask = [m for m in mask.split(",") if m]

    expert = None
    if env_name == "cancer":
        params = CancerParams(**config.get("cancer_params", {}))
        noise = _merged(args, config, "noise_scale", None)
        if noise is not None:
            params = CancerParams(**{**_params_dict(params),
                                     "transition_noise_scale": float(noise)})
        expert = CancerExpertConfig(**config.get("cancer_expert", {}))
        env = params
    else:
        if mask:
            raise UsageError("navigation observations are already (x, y); "
                             "masks apply to cancer or CSV datasets only")
        env = make_nav_spec(env_name[len("nav_"):])

    dataset = generate_dataset(env, episodes, seed, expert)
    if mask:
        dataset = apply_mask(dataset, mask)
    save_jsonl(dataset, args.out)

    labels = [t.hidden_context_label for t in dataset.trajectories]
    freq = {}
    for lab in labels:
        key = "none" if lab is None else str(lab)
        freq[key] = freq.get(key, 0) + 1
    freq = {k: v / len(labels) for k, v in sorted(freq.items())}
    print(f"wrote {dataset.n_trajectories} episodes "
          f"({dataset.n_steps} steps) to {args.out}")
    print(f"context frequencies: {canonical_json(freq)}")
    return 0


def _params_dict(params):
    return {f.name: getattr(params, f.name) for f in fields(params)}


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _train_config(args, config):
    kwargs = {}
    for f in fields(TrainConfig):
        value = _merged(args, config, f.name, None)
        if value is not None:
            if f.name == "hidden_sizes":
                value = tuple(int(v) for v in value)
            kwargs[f.name] = value
    return TrainConfig(**kwargs)


def _parse_centers(text):
    centers = []
    for part in text.split(";"):
        coords = [float(v) for v in part.split(",")]
        centers.append(coords)
    return np.array(centers)


def cmd_train(args):
    config = _load_config_file(args.config)
    dataset = _load_dataset(args.dataset)
    if dataset.n_trajectories == 0:
        raise DataError(f"{args.dataset}: dataset has no trajectories")

    cfg = _train_config(args, config)
    k = int(_merged(args, config, "k", 10))
    normalizer = fit_normalizer(dataset)

    centers_opt = _merged(args, config, "centers", None)
    if centers_opt is not None:
        raw = _parse_centers(centers_opt) if isinstance(centers_opt, str) \
            else np.array(centers_opt, dtype=float)
        if raw.shape[1] != len(dataset.feature_names):
            raise UsageError("--centers dimension does not match the dataset")
        centers = normalizer.normalize(raw)
        k = centers.shape[0]
    else:
        centers = kmeans_init(dataset, k, cfg.seed, normalizer)

    sigma = _merged(args, config, "sigma", None)
    if sigma is None:
        from .kernels import stack_observations
        points = normalizer.normalize(stack_observations(dataset))
        sigma = default_bandwidth(centers, points)
    learn_default = k > 1  # a single hand-placed kernel stays put
    learn = _merged(args, config, "learn_centers", learn_default)
    cfg = TrainConfig(**{**_config_dict(cfg), "learn_centers": bool(learn)})
    kernels = KernelSet(centers, float(sigma), bool(learn))

    reward, critic1, history1 = train_phase1(dataset, cfg, kernels, normalizer)
    if args.phase1_only:
        final_critic, bank, out_kernels, history2 = critic1, None, kernels, None
    else:
        final_critic, bank, out_kernels, history2 = train_phase2(
            dataset, reward, critic1, cfg, kernels, normalizer)

    bundle = ModelBundle(
        normalizer=normalizer, kernels=out_kernels, bank=bank, reward=reward,
        phase1_critic=critic1.net, critic=final_critic.net, config=cfg,
        history={"phase1": history1, "phase2": history2},
        feature_names=dataset.feature_names, action_count=dataset.action_count,
        env_tag=dataset.trajectories[0].env_tag,
        episode_ids=[t.episode_id for t in dataset.trajectories],
        context_labels=[t.hidden_context_label for t in dataset.trajectories],
    )
    save_bundle(bundle, args.out)
    print(f"wrote model bundle to {args.out} "
          f"(phase1 iters {cfg.phase1_iterations}, "
          f"phase2 iters {0 if args.phase1_only else cfg.phase2_iterations})")
    return 0


def _config_dict(cfg):
    out = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    return out


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _check_alignment(bundle, dataset, path):
    ids = [t.episode_id for t in dataset.trajectories]
    if len(ids) != len(bundle.episode_ids) or ids != list(bundle.episode_ids):
        raise DataError(
            f"{path}: episodes do not align with the bundle "
            f"({len(ids)} vs {len(bundle.episode_ids)} trajectories); "
            "evaluate with the dataset the model was trained on")


def cmd_eval(args):
    bundle = load_bundle(args.bundle)
    dataset = _load_dataset(args.dataset)
    _check_alignment(bundle, dataset, args.dataset)
    report = {
        "irl": metrics_report(dataset, bundle, use_learned_z=False).to_dict(),
        "mp_irl": metrics_report(dataset, bundle, use_learned_z=True).to_dict(),
    }
    atomic_write_text(args.out, canonical_json(report) + "\n")
    irl, mp = report["irl"], report["mp_irl"]
    print(f"wrote metrics to {args.out}")
    print(f"overall accuracy irl={irl['overall_accuracy']:.4f} "
          f"mp_irl={mp['overall_accuracy']:.4f}; "
          f"mean z size={mp['mean_z_size']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# project
# ---------------------------------------------------------------------------

def cmd_project(args):
    bundle = load_bundle(args.bundle)
    bank = bundle.bank_or_zero()
    coords, explained = pca_project(bank, dims=2)
    labels = bundle.context_labels

    lines = ["episode,context,pc1,pc2"]
    for i, ep in enumerate(bundle.episode_ids):
        lab = "" if labels is None or labels[i] is None else labels[i]
        lines.append(f"{ep},{lab},{coords[i, 0]!r},{coords[i, 1]!r}")
    atomic_write_text(args.out_prefix + ".csv", "\n".join(lines) + "\n")

    have_labels = labels is not None and all(l is not None for l in labels)
    purity = None
    if have_labels:
        clusters = args.clusters or len(set(labels))
        purity = context_cluster_purity(
            bank.coefficients.reshape(bank.n_trajectories, -1),
            labels, clusters, seed=bundle.config.seed)
    atomic_write_text(
        args.out_prefix + ".svg",
        svg_scatter(coords, labels if have_labels else None,
                    title="perturbation PCA") + "\n")
    summary = {"explained_variance": explained.tolist(),
               "purity": purity,
               "mean_z_size": mean_z_size(bank)}
    atomic_write_text(args.out_prefix + "_summary.json",
                      canonical_json(summary) + "\n")
    print(canonical_json(summary))
    return 0


# ---------------------------------------------------------------------------
# heatmap
# ---------------------------------------------------------------------------

def _resolve_group(bundle, group):
    if group is None or group == "none":
        return None
    aliases = CONTEXT_ALIASES.get(bundle.env_tag, {})
    if group in aliases:
        return aliases[group]
    try:
        return int(group)
    except ValueError:
        raise UsageError(
            f"unknown context group {group!r} for env {bundle.env_tag} "
            f"(expected one of {sorted(aliases)} or an integer label)")


def cmd_heatmap(args):
    bundle = load_bundle(args.bundle)
    if nav_spec_for_tag(bundle.env_tag) is None or len(bundle.feature_names) != 2:
        raise DataError(
            f"heatmaps need a 2-D navigation bundle, got env {bundle.env_tag!r}")
    bounds = tuple(float(v) for v in args.bounds.split(","))
    if len(bounds) != 4:
        raise UsageError("--bounds must be x_lo,x_hi,y_lo,y_hi")
    resolution = args.resolution
    action = args.action

    base = reward_grid(bundle, bounds, resolution, None)
    group = _resolve_group(bundle, args.group)
    pert = None
    if group is not None:
        pert = reward_grid(bundle, bounds, resolution, group)

    a_count = base.values.shape[1]
    if not 0 <= action < a_count:
        raise UsageError(f"--action must be in [0, {a_count})")
    header = ["x", "y"] + [f"base_{a}" for a in range(a_count)]
    if pert is not None:
        header += [f"pert_{a}" for a in range(a_count)]
    lines = [",".join(header)]
    for i in range(base.points.shape[0]):
        row = [repr(base.points[i, 0]), repr(base.points[i, 1])]
        row += [repr(v) for v in base.values[i]]
        if pert is not None:
            row += [repr(v) for v in pert.values[i]]
        lines.append(",".join(row))
    atomic_write_text(args.out_prefix + ".csv", "\n".join(lines) + "\n")

    shown = pert if pert is not None else base
    grid = shown.values[:, action].reshape(resolution, resolution)
    what = f"perturbation (group {args.group})" if pert is not None else "base reward"
    markup = svg_heatmap(grid, title=f"{what}, action {action}",
                         diverging=pert is not None)
    atomic_write_text(args.out_prefix + ".svg", markup + "\n")
    print(f"wrote {args.out_prefix}.csv and {args.out_prefix}.svg")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="mpirl",
        description="Minimum-perturbation IRL: generate data, train, analyze.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an expert dataset")
    p.add_argument("--env", choices=ENV_CHOICES)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mask", help="comma-separated features to retain (cancer)")
    p.add_argument("--noise-scale", type=float, dest="noise_scale",
                   help="cancer multiplicative transition noise")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="run the two-phase trainer")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--k", type=int, help="number of RBF kernels")
    p.add_argument("--sigma", type=float, help="kernel bandwidth override")
    p.add_argument("--centers", help="explicit centers 'x,y;x,y' (raw space)")
    p.add_argument("--phase1-only", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--discount", type=float)
    p.add_argument("--bellman-weight", type=float, dest="bellman_weight")
    p.add_argument("--alpha", type=float, dest="sparsity_weight")
    p.add_argument("--anchor-weight", type=float, dest="anchor_weight")
    p.add_argument("--lr-reward", type=float, dest="lr_reward")
    p.add_argument("--lr-critic", type=float, dest="lr_critic")
    p.add_argument("--lr-z", type=float, dest="lr_z")
    p.add_argument("--lr-centers", type=float, dest="lr_centers")
    p.add_argument("--phase1-iterations", type=int, dest="phase1_iterations")
    p.add_argument("--phase2-iterations", type=int, dest="phase2_iterations")
    p.add_argument("--batch", type=int, dest="batch_trajectories")
    p.add_argument("--target-update-rate", type=float, dest="target_update_rate")
    p.add_argument("--learn-centers", action="store_true", default=None,
                   dest="learn_centers")
    p.add_argument("--fixed-centers", action="store_false", default=None,
                   dest="learn_centers")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics for a bundle on its dataset")
    p.add_argument("--bundle", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("project", help="PCA of the learned perturbations")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.add_argument("--clusters", type=int)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("heatmap", help="reward / perturbation grids (nav)")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.add_argument("--group", help="context group (e.g. left, right-right)")
    p.add_argument("--action", type=int, default=0)
    p.add_argument("--bounds", default="0,1,0,1")
    p.add_argument("--resolution", type=int, default=25)
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
