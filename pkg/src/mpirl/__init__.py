"""Minimum-perturbation IRL laboratory: simulators with controlled
observation missingness, a two-phase reward/perturbation trainer, and
analysis tooling for quantifying and localizing potential missingness."""

__version__ = "0.1.0"
