"""Bandit learning in serial-dictatorship matching markets.

A deterministic, seedable simulator of two-sided markets where one side
learns its preferences online, plus the decentralized multi-level
successive selection policy, centralized baselines, and an experiment
harness for stable-regret studies.
"""

__version__ = "0.1.0"
