"""Deterministic poisoning-robustness benchmark harness for decentralized
federated learning."""

__version__ = "0.1.0"
