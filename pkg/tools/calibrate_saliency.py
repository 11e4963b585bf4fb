"""One-off sweep that fixes saliency.CALIBRATED_NORM_SCALE.

Renders 10^4 random arm/object scenes (angles uniform in the joint limits,
object area-uniform in the reachable annulus) and prints the reciprocal of
the 99th percentile of raw field peaks, so that scaled rewards approximately
lie in [0, 1].

Run: python3 tools/calibrate_saliency.py
"""

import numpy as np

from latentgoals import arm, saliency


def main(n_scenes=10_000, seed=12345):
    rng = np.random.default_rng(seed)
    peaks = np.empty(n_scenes)
    for i in range(n_scenes):
        angles = rng.uniform(-np.pi, np.pi, 3)
        radius = np.sqrt(rng.uniform(arm.INNER_RADIUS ** 2, arm.OUTER_RADIUS ** 2))
        phi = rng.uniform(0.0, 2.0 * np.pi)
        obj = radius * np.array([np.cos(phi), np.sin(phi)])
        peaks[i] = saliency.field_peak(arm.render_scene(angles, obj))
    p99 = np.percentile(peaks, 99)
    print(f"p99 raw field peak: {p99!r}")
    print(f"norm_scale = {1.0 / p99!r}")


if __name__ == "__main__":
    main()
