"""Reinforcement-learning driven macro architecture search (REINFORCE and PPO controllers)."""

__version__ = "0.1.0"
