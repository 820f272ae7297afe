"""
Bayes Fusion App - deterministic Bayesian data fusion and its performance analysis.
"""

__version__ = "1.0.0"
