"""Affect-aware pain-level recognition from EDA, ECG and EMG windows."""

__version__ = "0.1.0"
