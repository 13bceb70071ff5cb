"""Monthly chemotherapy-planning simulator on a four-compartment tumor model.

State is (drug concentration C, proliferative tissue P, quiescent tissue Q,
damaged quiescent tissue Qp); total tumor diameter is P* = P + Q + Qp.
Dosing adds one unit of drug, the drug decays, and drug kills proliferative
tissue while pushing quiescent tissue into the damaged compartment.

Default rates are the population estimates of the low-grade glioma model this
simulator discretizes; all of them are config-overridable. The dose penalty
and terminal weight shape the recorded reward only - the scripted expert is a
threshold controller and does not read the reward.
"""

import numpy as np
from dataclasses import dataclass, field

CANCER_FEATURES = ("drug", "proliferative", "quiescent", "damaged", "time")


@dataclass(frozen=True)
class CancerParams:
    drug_decay: float = 0.24           # K_DE
    proliferative_growth: float = 0.121
    transition_rate: float = 0.0295    # proliferative -> quiescent
    repair_rate: float = 0.0031        # damaged quiescent -> proliferative
    treatment_efficacy: float = 0.729
    damaged_elimination: float = 0.00867
    carrying_capacity: float = 100.0
    dose_penalty: float = 0.1
    terminal_weight: float = 1.0
    horizon: int = 30
    transition_noise_scale: float = 0.0
    initial_state: tuple = (0.0, 7.13, 41.2, 0.0)  # (C0, P0, Q0, Qp0)


@dataclass
class CancerState:
    drug_concentration: float
    proliferative: float
    quiescent: float
    damaged_quiescent: float
    month: int

    def total_diameter(self):
        return self.proliferative + self.quiescent + self.damaged_quiescent

    def observation(self):
        return np.array([self.drug_concentration, self.proliferative,
                         self.quiescent, self.damaged_quiescent, float(self.month)])


def cancer_reset(params):
    c0, p0, q0, qp0 = params.initial_state
    return CancerState(c0, p0, q0, qp0, 0)


def _initial_total(params):
    _, p0, q0, qp0 = params.initial_state
    return p0 + q0 + qp0


def cancer_step(params, state, action, rng=None):
    """One month of the coupled difference equations; returns
    (next_state, reward, done).

    The drug compartment updates first (dose added, old concentration
    decays); the tissue compartments then use the new concentration. Optional
    multiplicative Gaussian noise hits all four variables before they are
    clamped at zero. Reward is tumor shrinkage minus the dose penalty, plus a
    terminal bonus for the total reduction at the final month.
    """
    if action not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {action}")
    if state.month >= params.horizon:
        raise ValueError("episode already finished")

    c, p, q, qp = (state.drug_concentration, state.proliferative,
                   state.quiescent, state.damaged_quiescent)
    total = p + q + qp
    kill = params.treatment_efficacy * params.drug_decay

    c_next = c + action - params.drug_decay * c
    p_next = (p
              + params.proliferative_growth * p * (1 - total / params.carrying_capacity)
              + params.repair_rate * qp
              - params.transition_rate * p
              - kill * c_next * p)
    q_next = q + params.transition_rate * p - kill * c_next * q
    qp_next = (qp + kill * c_next * q
               - params.repair_rate * qp
               - params.damaged_elimination * qp)

    values = np.array([c_next, p_next, q_next, qp_next])
    if params.transition_noise_scale > 0:
        if rng is None:
            raise ValueError("transition noise requires a random source")
        values = values * (1.0 + params.transition_noise_scale * rng.standard_normal(4))
    values = np.maximum(values, 0.0)

    next_state = CancerState(values[0], values[1], values[2], values[3],
                             state.month + 1)
    reward = (total - next_state.total_diameter()) - params.dose_penalty * values[0]
    done = next_state.month >= params.horizon
    if done:
        reward += params.terminal_weight * (_initial_total(params)
                                            - next_state.total_diameter())
    return next_state, reward, done


@dataclass(frozen=True)
class CancerExpertConfig:
    treat_threshold: float = 40.0  # dose while total diameter exceeds this
    drug_cap: float = 1.6          # and concentration is below this


def cancer_expert_action(params, state, expert_cfg=None):
    """Scripted threshold controller: treat while the tumor is large and the
    drug concentration has room."""
    cfg = expert_cfg or CancerExpertConfig()
    if (state.total_diameter() > cfg.treat_threshold
            and state.drug_concentration < cfg.drug_cap):
        return 1
    return 0
