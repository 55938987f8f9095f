"""defectlab: process vs. product metrics for defect prediction, from git history to ranked results."""

__version__ = "0.1.0"
