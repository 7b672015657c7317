"""Federated mining: models, synthetic data and the in-pool training loop."""
