"""Airport visibility estimation from single hazy images and a DSM.

Stages: dark-channel transmission estimation with guided-filter
refinement, GCP-based camera resection, line-of-sight depth mapping
against a 2.5D surface model, and percentile visibility statistics.
"""

__version__ = "0.1.0"
