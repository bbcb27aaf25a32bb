"""Data formats, synthetic data, experiment orchestration, reports and CLI."""
