"""Split a synthetic series into trend, seasonal and remainder.

    python demos/decompose_series.py
"""

import numpy as np

from decompad.decompose import decompose, detect_period
from decompad.synthetic import make_series

s = make_series(np.random.default_rng(3), length=720)
est = detect_period(s.values)
print(f"detected period: {est.period} (periodic={est.periodic})")

dec = decompose(s)
print(f"max |input - (trend + seasonal + remainder)| = {np.max(np.abs(dec.reconstruct() - s.values)):.1e}")

# the labeled spikes stand out in the remainder, not in the raw values
z = np.abs(dec.remainder) / (1.4826 * np.median(np.abs(dec.remainder)))
top = np.argsort(z)[::-1][:len(np.flatnonzero(s.labels))]
print("labeled anomalies:       ", sorted(np.flatnonzero(s.labels).tolist()))
print("largest remainder points:", sorted(top.tolist()))
