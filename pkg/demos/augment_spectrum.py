"""Frequency-domain augmentation keeps amplitudes or phases as advertised.

    python demos/augment_spectrum.py
"""

import numpy as np

from decompad.augment import AugmentPolicy, augment_series, dft
from decompad.synthetic import make_series

s = make_series(np.random.default_rng(0), length=480)
policy = AugmentPolicy(flip=True, magnitude=True, phase=True, ratio=0.05, segments=2)
before = dft(s.values)
for name, aug in augment_series(s, policy, np.random.default_rng(1)):
    after = dft(aug.values)
    d_amp = np.max(np.abs(after.amplitude - before.amplitude))
    moved = np.count_nonzero(np.abs(after.amplitude - before.amplitude) > 1e-9)
    print(f"{name:10s} max amplitude change {d_amp:8.3f} over {moved:3d} bins, "
          f"labels kept: {np.array_equal(aug.labels, s.labels)}")
