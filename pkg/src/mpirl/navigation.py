"""Continuous 2-D navigation tasks with hidden episode-level context.

Three variants share the same geometry:

* ``single``   -- one branching point at the center square; a hidden bit
  decides whether the episode ends at the left or right boundary.
* ``two_dep``  -- center square plus side portals that teleport to a landing
  region near the top; one hidden bit controls both branchings.
* ``two_ind``  -- same geometry, but two independent hidden bits control the
  portal choice and the final boundary separately.

The learner only ever sees the (x, y) position; the context bits are recorded
as evaluation-only labels.
"""

import numpy as np
from dataclasses import dataclass, replace

ACTION_NAMES = ("right", "left", "up", "down")
# action index -> unit displacement, scaled by step_size in nav_step
DISPLACEMENTS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])

NAV_VARIANTS = ("single", "two_dep", "two_ind")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [x_lo, x_hi] x [y_lo, y_hi]."""
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def contains(self, p):
        return (self.x_lo <= p[0] <= self.x_hi) and (self.y_lo <= p[1] <= self.y_hi)

    def center(self):
        return np.array([(self.x_lo + self.x_hi) / 2, (self.y_lo + self.y_hi) / 2])

    def sample(self, rng):
        return np.array([rng.uniform(self.x_lo, self.x_hi),
                         rng.uniform(self.y_lo, self.y_hi)])


@dataclass(frozen=True)
class NavEnvSpec:
    variant: str
    step_size: float = 0.1
    noise_halfwidth: float = 0.02
    horizon: int = 30
    step_reward: float = -0.1
    center_bonus: float = 20.0
    portal_bonus: float = 20.0
    terminal_bonus: float = 20.0
    center_region: Box = Box(0.4, 0.6, 0.4, 0.6)
    portal_left: Box = Box(0.0, 0.2, 0.4, 0.6)
    portal_right: Box = Box(0.8, 1.0, 0.4, 0.6)
    landing_region: Box = Box(0.45, 0.55, 0.90, 0.98)
    start_box: Box = Box(0.47, 0.53, 0.00, 0.05)
    left_terminal_x: float = 0.02
    right_terminal_x: float = 0.98

    @property
    def has_portals(self):
        return self.variant in ("two_dep", "two_ind")


def make_nav_spec(variant, noise_halfwidth=None):
    """Spec with the per-variant defaults (noise can be overridden, e.g. 0)."""
    if variant not in NAV_VARIANTS:
        raise ValueError(f"unknown navigation variant {variant!r}")
    if variant == "single":
        noise = 0.02 if noise_halfwidth is None else noise_halfwidth
        return NavEnvSpec("single", noise_halfwidth=noise, horizon=30,
                          step_reward=-0.1, terminal_bonus=20.0)
    noise = 0.01 if noise_halfwidth is None else noise_halfwidth
    return NavEnvSpec(variant, noise_halfwidth=noise, horizon=50,
                      step_reward=-1.0, terminal_bonus=100.0)


@dataclass
class NavState:
    position: np.ndarray
    center_visited: bool
    portal_visited: bool
    hidden_context: tuple  # (z,) or (z1, z2)
    steps_elapsed: int

    def copy(self):
        return NavState(self.position.copy(), self.center_visited,
                        self.portal_visited, self.hidden_context, self.steps_elapsed)


def context_label(spec_or_variant, hidden_context):
    """Flat integer label for a context tuple: z, or z1*2 + z2."""
    if len(hidden_context) == 1:
        return int(hidden_context[0])
    return int(hidden_context[0]) * 2 + int(hidden_context[1])


def n_contexts(variant):
    return 4 if variant == "two_ind" else 2


def nav_reset(spec, rng):
    """Start state: uniform in the start box, fresh fair-coin context bits."""
    position = spec.start_box.sample(rng)
    if spec.variant == "two_ind":
        context = (int(rng.integers(2)), int(rng.integers(2)))
    else:
        context = (int(rng.integers(2)),)
    return NavState(position, False, False, context, 0)


def _first_bit(state):
    return state.hidden_context[0]


def _second_bit(state):
    return state.hidden_context[-1]


def nav_step(spec, state, action, rng):
    """Advance one step; returns (next_state, reward, done).

    Position follows the clipped noisy displacement rule. Bonuses trigger in
    the same step as their condition: first center entry, matching side portal
    (two-decision; teleports into the landing region either way), and the
    context-correct boundary once the prerequisite flags are set.
    """
    if action not in (0, 1, 2, 3):
        raise ValueError(f"action must be in 0..3, got {action}")
    pos = state.position + spec.step_size * DISPLACEMENTS[action]
    if spec.noise_halfwidth > 0:
        pos = pos + rng.uniform(-spec.noise_halfwidth, spec.noise_halfwidth, size=2)
    pos = np.clip(pos, 0.0, 1.0)

    reward = spec.step_reward
    center_visited = state.center_visited
    portal_visited = state.portal_visited
    done = False

    if not center_visited and spec.center_region.contains(pos):
        reward += spec.center_bonus
        center_visited = True

    if spec.has_portals and center_visited and not portal_visited:
        in_left = spec.portal_left.contains(pos)
        in_right = spec.portal_right.contains(pos)
        if in_left or in_right:
            wanted_right = _first_bit(state) == 1
            if in_right == wanted_right:
                reward += spec.portal_bonus
            portal_visited = True
            pos = spec.landing_region.sample(rng)

    ready = portal_visited if spec.has_portals else center_visited
    if ready:
        bit = _second_bit(state)
        if (bit == 0 and pos[0] <= spec.left_terminal_x) or \
           (bit == 1 and pos[0] >= spec.right_terminal_x):
            reward += spec.terminal_bonus
            done = True

    steps = state.steps_elapsed + 1
    if steps >= spec.horizon:
        done = True
    next_state = NavState(pos, center_visited, portal_visited,
                          state.hidden_context, steps)
    return next_state, reward, done


def _expert_waypoint(spec, state):
    if not state.center_visited:
        return spec.center_region.center()
    if spec.has_portals and not state.portal_visited:
        portal = spec.portal_right if _first_bit(state) == 1 else spec.portal_left
        return portal.center()
    # head for the context-correct boundary at the current leg's height
    y = spec.landing_region.center()[1] if spec.has_portals else spec.center_region.center()[1]
    x = 1.0 if _second_bit(state) == 1 else 0.0
    return np.array([x, y])


def nav_expert_action(spec, state):
    """Greedy waypoint controller: the action whose ideal (noise-free,
    unclipped) displacement gets closest to the current waypoint. Ties break
    toward the lowest action index."""
    waypoint = _expert_waypoint(spec, state)
    best_action, best_dist = 0, np.inf
    for a in range(4):
        cand = state.position + spec.step_size * DISPLACEMENTS[a]
        dist = float(np.linalg.norm(cand - waypoint))
        if dist < best_dist - 1e-12:
            best_action, best_dist = a, dist
    return best_action


def in_decision_region(spec, observation):
    """True iff the observation lies where the hidden context decides the
    action: the center square, plus the landing region for two-decision
    variants."""
    p = np.asarray(observation, dtype=float)
    if p.shape != (2,):
        raise ValueError("navigation observations are 2-D positions")
    if spec.center_region.contains(p):
        return True
    return spec.has_portals and spec.landing_region.contains(p)
