"""Desk-scale reinforcement-learning lab: sparse-reward gridworlds, intrinsic
exploration bonuses, baseline and decoupled (two-policy) trainers, and an
evaluation/sweep harness."""

__version__ = "0.1.0"
