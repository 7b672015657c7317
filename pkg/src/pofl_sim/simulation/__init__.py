"""Scenario loading, round orchestration, sweeps and cost reports."""
