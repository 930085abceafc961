"""Score congestion over a day-like density/speed profile.

Calibrates the fuzzy system on the series' own ranges, then prints the
congestion probability and dominant level as traffic builds from free
flow to a jam and recovers.
"""

import numpy as np

from pptflow.fuzzy import FuzzySystem


def main():
    steps = 24
    phase = np.linspace(0.0, np.pi, steps)
    density = 0.12 * np.sin(phase) ** 2          # veh-equivalents per meter
    speed = 12.0 - 11.5 * np.sin(phase) ** 2     # m/s

    system = FuzzySystem.calibrate(density, speed)
    d = system.describe()
    print("density sets centered at", [round(c, 3) for c in d["density"]["centers"]])
    print("speed sets centered at", [round(c, 3) for c in d["speed"]["centers"]])
    print()

    series = system.congestion_series(density, speed)
    print(" t     k      v      P(congestion)  level")
    for t, p, label in zip(series.timestamps, series.probabilities,
                           series.labels):
        bar = "#" * int(round(p * 30))
        print(f"{t:2d}  {density[t]:.3f}  {speed[t]:5.1f}   {p:.3f} {bar:<30} "
              f"{label}")


if __name__ == "__main__":
    main()
