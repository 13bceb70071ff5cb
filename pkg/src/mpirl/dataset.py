"""Trajectory datasets: episode generation from the simulators, observation
masking, and the JSONL / CSV persistence formats.

File format (one JSON object per line):
  header  {"feature_names": [...], "action_count": int, "mask": [...] | null}
  record  {"episode": id, "t": int, "obs": [...], "action": int,
           "next_obs": [...], "done": bool, "context": int | null, "env": str}

CSV ingestion expects columns episode_id, t, action plus named feature
columns; next observations come from the following row of the same episode.
"""

import csv
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .cancer import (CANCER_FEATURES, CancerExpertConfig, CancerParams,
                     cancer_expert_action, cancer_reset, cancer_step)
from .navigation import (NavEnvSpec, context_label, nav_expert_action,
                         nav_reset, nav_step)


class DataError(ValueError):
    """Malformed dataset file or schema violation."""


@dataclass
class Trajectory:
    episode_id: object
    observations: np.ndarray       # (T, d)
    actions: np.ndarray            # (T,)
    next_observations: np.ndarray  # (T, d)
    dones: np.ndarray              # (T,) bool, true exactly at the last step
    hidden_context_label: object   # int or None; evaluation only
    env_tag: str

    def __len__(self):
        return len(self.actions)


@dataclass
class TrajectoryDataset:
    trajectories: list
    feature_names: list
    action_count: int
    mask_applied: object = None  # list of retained feature names, or None

    @property
    def n_trajectories(self):
        return len(self.trajectories)

    @property
    def n_steps(self):
        return sum(len(t) for t in self.trajectories)

    def context_labels(self):
        return [t.hidden_context_label for t in self.trajectories]


def datasets_equal(a, b):
    if (a.feature_names != b.feature_names or a.action_count != b.action_count
            or a.mask_applied != b.mask_applied
            or a.n_trajectories != b.n_trajectories):
        return False
    for ta, tb in zip(a.trajectories, b.trajectories):
        if (ta.episode_id != tb.episode_id
                or ta.hidden_context_label != tb.hidden_context_label
                or ta.env_tag != tb.env_tag
                or not np.array_equal(ta.observations, tb.observations)
                or not np.array_equal(ta.actions, tb.actions)
                or not np.array_equal(ta.next_observations, tb.next_observations)
                or not np.array_equal(ta.dones, tb.dones)):
            return False
    return True


# ---------------------------------------------------------------------------
# Episode generation
# ---------------------------------------------------------------------------

def _rollout_nav(spec, episode_id, rng):
    state = nav_reset(spec, rng)
    obs, acts, nxt = [], [], []
    done = False
    while not done:
        action = nav_expert_action(spec, state)
        next_state, _, done = nav_step(spec, state, action, rng)
        obs.append(state.position.copy())
        acts.append(action)
        nxt.append(next_state.position.copy())
        state = next_state
    dones = np.zeros(len(acts), dtype=bool)
    dones[-1] = True
    return Trajectory(episode_id, np.array(obs), np.array(acts, dtype=int),
                      np.array(nxt), dones,
                      context_label(spec, state.hidden_context),
                      "nav_" + spec.variant)


def _rollout_cancer(params, expert_cfg, episode_id, rng):
    state = cancer_reset(params)
    obs, acts, nxt = [], [], []
    done = False
    while not done:
        action = cancer_expert_action(params, state, expert_cfg)
        next_state, _, done = cancer_step(params, state, action, rng)
        obs.append(state.observation())
        acts.append(action)
        nxt.append(next_state.observation())
        state = next_state
    dones = np.zeros(len(acts), dtype=bool)
    dones[-1] = True
    return Trajectory(episode_id, np.array(obs), np.array(acts, dtype=int),
                      np.array(nxt), dones, None, "cancer")


def generate_dataset(env, n_episodes, seed, expert=None):
    """Roll out n_episodes scripted-expert episodes; deterministic in seed.

    env is a NavEnvSpec or CancerParams; expert is an optional
    CancerExpertConfig (ignored for navigation, whose expert has no knobs).
    Episodes use independently derived seeds, so generation order is safe to
    parallelize without changing results.
    """
    if n_episodes <= 0:
        raise ValueError("n_episodes must be positive")
    children = np.random.SeedSequence(seed).spawn(n_episodes)
    trajectories = []
    for i, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        if isinstance(env, NavEnvSpec):
            trajectories.append(_rollout_nav(env, i, rng))
        elif isinstance(env, CancerParams):
            cfg = expert if expert is not None else CancerExpertConfig()
            trajectories.append(_rollout_cancer(env, cfg, i, rng))
        else:
            raise TypeError(f"unsupported environment {type(env).__name__}")
    if isinstance(env, NavEnvSpec):
        features, action_count = ["x", "y"], 4
    else:
        features, action_count = list(CANCER_FEATURES), 2
    return TrajectoryDataset(trajectories, features, action_count)


def apply_mask(dataset, retained_features):
    """Project observations onto the retained features (original order kept).

    Actions, episode structure and labels are untouched; the mask is recorded
    on the returned dataset.
    """
    if not retained_features:
        raise DataError("mask must retain at least one feature")
    unknown = [f for f in retained_features if f not in dataset.feature_names]
    if unknown:
        raise DataError(f"unknown feature names in mask: {unknown}")
    idx = [i for i, f in enumerate(dataset.feature_names) if f in retained_features]
    names = [dataset.feature_names[i] for i in idx]
    trajectories = [
        Trajectory(t.episode_id, t.observations[:, idx].copy(), t.actions.copy(),
                   t.next_observations[:, idx].copy(), t.dones.copy(),
                   t.hidden_context_label, t.env_tag)
        for t in dataset.trajectories
    ]
    return TrajectoryDataset(trajectories, names, dataset.action_count, names)


# ---------------------------------------------------------------------------
# JSONL persistence
# ---------------------------------------------------------------------------

def canonical_json(obj):
    """Deterministic JSON encoding (sorted keys, no NaN) used for all
    artifacts so identical runs produce byte-identical files."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


_dumps = canonical_json


def atomic_write_text(path, text):
    """Write-temp-then-rename so interrupted runs never leave partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_jsonl(dataset, path):
    lines = [_dumps({"feature_names": list(dataset.feature_names),
                     "action_count": int(dataset.action_count),
                     "mask": dataset.mask_applied})]
    for traj in dataset.trajectories:
        for t in range(len(traj)):
            lines.append(_dumps({
                "episode": traj.episode_id,
                "t": t,
                "obs": traj.observations[t].tolist(),
                "action": int(traj.actions[t]),
                "next_obs": traj.next_observations[t].tolist(),
                "done": bool(traj.dones[t]),
                "context": traj.hidden_context_label,
                "env": traj.env_tag,
            }))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_jsonl(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: bad header: {exc}") from exc
    for key in ("feature_names", "action_count"):
        if key not in header:
            raise DataError(f"{path}:1: header missing {key!r}")

    groups, order = {}, []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: bad record: {exc}") from exc
        ep = rec["episode"]
        if ep not in groups:
            groups[ep] = []
            order.append(ep)
        groups[ep].append(rec)

    trajectories = []
    for ep in order:
        recs = sorted(groups[ep], key=lambda r: r["t"])
        obs = np.array([r["obs"] for r in recs], dtype=float)
        nxt = np.array([r["next_obs"] for r in recs], dtype=float)
        acts = np.array([r["action"] for r in recs], dtype=int)
        dones = np.array([r["done"] for r in recs], dtype=bool)
        if not dones[-1] or dones[:-1].any():
            raise DataError(f"{path}: episode {ep!r} must end (and only end) with done")
        trajectories.append(Trajectory(ep, obs, acts, nxt, dones,
                                       recs[0].get("context"),
                                       recs[0].get("env", "unknown")))
    return TrajectoryDataset(trajectories, list(header["feature_names"]),
                             int(header["action_count"]), header.get("mask"))


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def load_csv_dataset(path, feature_columns=None, action_count=None):
    """Build a dataset from a CSV of (episode_id, t, action, features...).

    Rows are grouped by episode and ordered by t, so shuffled files load
    identically. Every column that is not a role column is a feature unless
    feature_columns narrows the list. The final row of each episode is marked
    done with a self-loop next observation.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty CSV file")
        fields = list(reader.fieldnames)
        for col in ("episode_id", "t", "action"):
            if col not in fields:
                raise DataError(f"{path}: missing required column {col!r}")
        if feature_columns is None:
            feature_columns = [c for c in fields
                               if c not in ("episode_id", "t", "action")]
        else:
            missing = [c for c in feature_columns if c not in fields]
            if missing:
                raise DataError(f"{path}: feature columns not found: {missing}")
        if not feature_columns:
            raise DataError(f"{path}: need at least one feature column")

        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                t = int(rec["t"])
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: non-integer t {rec['t']!r}")
            try:
                action = int(rec["action"])
            except (TypeError, ValueError):
                raise DataError(
                    f"{path}:{lineno}: non-integer action {rec['action']!r}")
            if action < 0:
                raise DataError(f"{path}:{lineno}: negative action {action}")
            feats = []
            for col in feature_columns:
                try:
                    feats.append(float(rec[col]))
                except (TypeError, ValueError):
                    raise DataError(
                        f"{path}:{lineno}: non-numeric value {rec[col]!r} "
                        f"in column {col!r}")
            rows.append((rec["episode_id"], t, action, feats))

    if not rows:
        raise DataError(f"{path}: no data rows")

    groups, ids = {}, []
    for ep, t, action, feats in rows:
        if ep not in groups:
            groups[ep] = []
            ids.append(ep)
        groups[ep].append((t, action, feats))

    def _episode_key(ep):
        try:
            return (0, int(ep), "")
        except (TypeError, ValueError):
            return (1, 0, str(ep))

    trajectories = []
    max_action = 0
    for ep in sorted(ids, key=_episode_key):
        recs = sorted(groups[ep], key=lambda r: r[0])
        times = [r[0] for r in recs]
        if len(set(times)) != len(times):
            raise DataError(f"{path}: episode {ep!r} has duplicate time steps")
        obs = np.array([r[2] for r in recs], dtype=float)
        acts = np.array([r[1] for r in recs], dtype=int)
        nxt = np.vstack([obs[1:], obs[-1:]])
        dones = np.zeros(len(recs), dtype=bool)
        dones[-1] = True
        max_action = max(max_action, int(acts.max()))
        trajectories.append(Trajectory(_coerce_id(ep), obs, acts, nxt, dones,
                                       None, "csv"))
    if action_count is None:
        action_count = max_action + 1
    return TrajectoryDataset(trajectories, list(feature_columns), action_count)


def _coerce_id(ep):
    try:
        return int(ep)
    except (TypeError, ValueError):
        return ep
