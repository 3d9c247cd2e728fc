"""Partial-state synchronization of agents on SO(n) and R^n."""
