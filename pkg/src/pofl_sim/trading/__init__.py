"""Data trading between mining pools and data providers."""
