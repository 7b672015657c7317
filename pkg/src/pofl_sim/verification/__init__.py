"""Accuracy verification: homomorphic prediction, garbled comparison and OT."""
