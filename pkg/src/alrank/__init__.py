"""Active learning to rank with committee-based ranking entropy and prediction variance."""

__version__ = "0.1.0"
