"""Extreme-event detection in gridded monthly GPP series.

Two interchangeable anomaly engines, a windowed variational autoencoder
and a singular-spectrum-analysis baseline, feed a shared percentile
thresholding and regional aggregation protocol.
"""

__version__ = "0.1.0"
