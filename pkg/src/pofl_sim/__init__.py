"""Proof-of-Federated-Learning consensus simulator."""

__version__ = "1.0.0"
