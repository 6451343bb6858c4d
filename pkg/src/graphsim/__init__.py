"""Benchmark harness comparing rater-perceived graph similarity with feature-based measures."""

__version__ = "0.1.0"
