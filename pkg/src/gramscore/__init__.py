"""Essay scoring toolkit: grammatical feature extraction, 2PL calibration
of grammar usage, IRT-based feature weighting, and multi-task feed-forward
scoring networks evaluated with quadratic weighted kappa."""

__version__ = "0.1.0"
