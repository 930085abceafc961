"""Mamdani congestion-probability inference from (density, speed) pairs.

Pipeline: Gaussian fuzzification of density and speed into low/medium/high,
min-activation of a 9-rule base, clipping, max-aggregation onto a Ruspini
partition of four output triangles on [0, 1], centroid defuzzification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NoActivationError

INPUT_LABELS = ("low", "medium", "high")
OUTPUT_LABELS = ("low", "medium", "high", "full")
OUTPUT_PEAKS = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)

# (density label, speed label) -> congestion label
RULE_BASE = {
    ("low", "low"): "medium",
    ("low", "medium"): "low",
    ("low", "high"): "low",
    ("medium", "low"): "high",
    ("medium", "medium"): "medium",
    ("medium", "high"): "low",
    ("high", "low"): "full",
    ("high", "medium"): "high",
    ("high", "high"): "medium",
}

DEFAULT_GRID_POINTS = 10001


@dataclass(frozen=True)
class FuzzyVariable:
    name: str
    x_min: float
    x_max: float
    centers: tuple      # 3 equally spaced centers, x_min .. x_max
    sigma: float


def build_variable(name, values):
    """Three Gaussian sets spanning the calibration data's range.

    Centers sit at x_min, midpoint, x_max; the shared width is
    (x_max - x_min) / (2 * M) with M = 3 sets.
    """
    values = np.asarray(values, dtype=np.float64)
    x_min, x_max = float(values.min()), float(values.max())
    if x_max <= x_min:
        raise ConfigurationError(
            f"degenerate calibration range for {name!r}: "
            f"[{x_min}, {x_max}]"
        )
    m = len(INPUT_LABELS)
    centers = tuple(
        x_min + (i / (m - 1)) * (x_max - x_min) for i in range(m)
    )
    sigma = (x_max - x_min) / (2 * m)
    return FuzzyVariable(
        name=name, x_min=x_min, x_max=x_max, centers=centers, sigma=sigma
    )


def fuzzify(x, var):
    """Gaussian memberships (low, medium, high) of a crisp value."""
    centers = np.asarray(var.centers)
    return np.exp(-((x - centers) ** 2) / (2.0 * var.sigma ** 2))


def activate_rules(mu_k, mu_v):
    """Min-activation of all 9 rules; returns {(k_label, v_label): alpha}."""
    mu_k = np.asarray(mu_k)
    mu_v = np.asarray(mu_v)
    return {
        (kl, vl): min(mu_k[i], mu_v[j])
        for i, kl in enumerate(INPUT_LABELS)
        for j, vl in enumerate(INPUT_LABELS)
    }


def output_membership(label, x):
    """Triangular membership of a congestion level, shoulders at 0 and 1.

    Peaks sit at 0, 1/3, 2/3, 1; each triangle spans its two neighboring
    peaks, so the four functions sum to 1 everywhere on [0, 1].
    """
    idx = OUTPUT_LABELS.index(label)
    peak = OUTPUT_PEAKS[idx]
    left = OUTPUT_PEAKS[idx - 1] if idx > 0 else peak
    right = OUTPUT_PEAKS[idx + 1] if idx < len(OUTPUT_PEAKS) - 1 else peak
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    if idx > 0:
        rising = (x >= left) & (x < peak)
        out[rising] = (x[rising] - left) / (peak - left)
    if idx < len(OUTPUT_PEAKS) - 1:
        falling = (x > peak) & (x <= right)
        out[falling] = (right - x[falling]) / (right - peak)
    out[x == peak] = 1.0
    return out


@dataclass(frozen=True)
class OutputPartition:
    grid_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if self.grid_points < 1001:
            raise ConfigurationError(
                f"defuzzification grid needs >= 1001 points, got "
                f"{self.grid_points}"
            )

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.grid_points)


def label_activations(rule_alphas):
    """Max rule activation per output label."""
    levels = {label: 0.0 for label in OUTPUT_LABELS}
    for pair, alpha in rule_alphas.items():
        label = RULE_BASE[pair]
        levels[label] = max(levels[label], alpha)
    return levels


def aggregate(rule_alphas, partition):
    """Pointwise max over rules of the clipped output memberships."""
    grid = partition.grid
    mu_m = np.zeros_like(grid)
    for label, alpha in label_activations(rule_alphas).items():
        if alpha <= 0.0:
            continue
        clipped = np.minimum(output_membership(label, grid), alpha)
        np.maximum(mu_m, clipped, out=mu_m)
    return mu_m


def defuzzify_centroid(mu_m, partition):
    """Center of mass of the aggregated membership, by trapezoidal rule."""
    grid = partition.grid
    denom = np.trapezoid(mu_m, grid)
    if denom <= 0.0:
        raise NoActivationError(
            "aggregated membership is identically zero; congestion undefined"
        )
    return float(np.trapezoid(grid * mu_m, grid) / denom)


@dataclass
class CongestionSeries:
    timestamps: list
    probabilities: list
    labels: list


@dataclass
class FuzzySystem:
    density_var: FuzzyVariable
    speed_var: FuzzyVariable
    partition: OutputPartition = field(default_factory=OutputPartition)

    @classmethod
    def calibrate(cls, density_values, speed_values, grid_points=DEFAULT_GRID_POINTS):
        """Build input memberships from ground-truth series ranges."""
        return cls(
            density_var=build_variable("density", density_values),
            speed_var=build_variable("speed", speed_values),
            partition=OutputPartition(grid_points),
        )

    def infer(self, k, v):
        """Congestion probability in [0, 1] plus the dominant level label."""
        alphas = activate_rules(
            fuzzify(k, self.density_var), fuzzify(v, self.speed_var)
        )
        mu_m = aggregate(alphas, self.partition)
        p = defuzzify_centroid(mu_m, self.partition)
        grid = self.partition.grid
        areas = {}
        for label, alpha in label_activations(alphas).items():
            clipped = np.minimum(output_membership(label, grid), alpha)
            areas[label] = np.trapezoid(clipped, grid)
        dominant = max(OUTPUT_LABELS, key=lambda lb: areas[lb])
        return p, dominant

    def congestion_series(self, k_series, v_series):
        """Per-timestep congestion probabilities for paired series."""
        k_series = np.asarray(k_series, dtype=np.float64)
        v_series = np.asarray(v_series, dtype=np.float64)
        if k_series.shape != v_series.shape:
            raise ValueError(
                f"series length mismatch: {k_series.shape} vs {v_series.shape}"
            )
        timestamps, probs, labels = [], [], []
        for t, (k, v) in enumerate(zip(k_series, v_series)):
            p, label = self.infer(k, v)
            timestamps.append(t)
            probs.append(p)
            labels.append(label)
        return CongestionSeries(
            timestamps=timestamps, probabilities=probs, labels=labels
        )

    def describe(self):
        """JSON-serializable calibration summary."""
        return {
            "density": {
                "range": [self.density_var.x_min, self.density_var.x_max],
                "centers": list(self.density_var.centers),
                "sigma": self.density_var.sigma,
            },
            "speed": {
                "range": [self.speed_var.x_min, self.speed_var.x_max],
                "centers": list(self.speed_var.centers),
                "sigma": self.speed_var.sigma,
            },
            "output_peaks": list(OUTPUT_PEAKS),
            "grid_points": self.partition.grid_points,
            "rules": {f"{k[0]}&{k[1]}": v for k, v in RULE_BASE.items()},
        }
