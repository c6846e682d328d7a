"""Critic-free policy-gradient lab comparing Kalman-filtered, group-mean and fixed advantage baselines."""

__version__ = "0.1.0"
