"""Trajectory-CSV ingestion and per-second traffic feature extraction.

Input follows the highD-family layout: three CSVs per recorded segment
(``<id>_recordingMeta.csv``, ``<id>_tracks.csv``, ``<id>_tracksMeta.csv``).
Output is a 12-feature per-second time series:

    second, car, bus, truck, G, k, q, v_x, v_y, a_x, a_y, R_s

with G the class-weighted equivalent-vehicle count (car 1.0, bus 2.0,
truck 2.5), k = G/(n*L), R_s the lane space occupancy, and q the number
of distinct vehicles present in the direction during the second.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    ConfigurationError,
    DataInconsistencyWarning,
    DataSchemaError,
    DomainError,
    EmptyDirectionError,
    SeriesTooShortError,
)

FEATURE_NAMES = [
    "second", "car", "bus", "truck", "G", "k", "q",
    "v_x", "v_y", "a_x", "a_y", "R_s",
]

BUS_FACTOR = 2.0
TRUCK_FACTOR = 2.5

VEHICLE_CLASSES = ("car", "bus", "truck")
DIRECTIONS = ("positive_x", "negative_x")

_CONST_STD_EPS = 1e-12

RECORDING_META_COLUMNS = ["id", "frameRate", "segmentLength", "lanesPerDirection"]
TRACKS_COLUMNS = [
    "frame", "id", "x", "y",
    "xVelocity", "yVelocity", "xAcceleration", "yAcceleration",
]
TRACKS_META_COLUMNS = ["id", "class", "drivingDirection", "length"]


@dataclass(frozen=True)
class SegmentMeta:
    segment_id: str
    frame_rate: float
    segment_length_L: float
    lanes_per_direction_n: int

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise DomainError(f"frame_rate must be > 0, got {self.frame_rate}")
        if self.segment_length_L <= 0:
            raise DomainError(
                f"segment_length_L must be > 0, got {self.segment_length_L}"
            )
        if self.lanes_per_direction_n < 1:
            raise DomainError(
                f"lanes_per_direction_n must be >= 1, got "
                f"{self.lanes_per_direction_n}"
            )


@dataclass
class VehicleTrack:
    vehicle_id: int
    vehicle_class: str            # car | bus | truck
    driving_direction: str        # positive_x | negative_x
    length_l: float
    frames: np.ndarray            # [N] strictly increasing ints
    kinematics: np.ndarray        # [N, 4]: v_x, v_y, a_x, a_y

    def __post_init__(self):
        if self.vehicle_class not in VEHICLE_CLASSES:
            raise DomainError(f"unknown vehicle class {self.vehicle_class!r}")
        if self.driving_direction not in DIRECTIONS:
            raise DomainError(
                f"unknown driving direction {self.driving_direction!r}"
            )
        if self.length_l <= 0:
            raise DomainError(f"vehicle length must be > 0, got {self.length_l}")
        if len(self.frames) > 1 and not np.all(np.diff(self.frames) > 0):
            raise DomainError(
                f"frames of vehicle {self.vehicle_id} are not strictly increasing"
            )


@dataclass
class TimeSeriesDataset:
    values: np.ndarray            # [T_total, 12]
    direction: str
    feature_names: list = field(default_factory=lambda: list(FEATURE_NAMES))
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    gap_bins: list = field(default_factory=list)


@dataclass(frozen=True)
class WindowSample:
    input: np.ndarray             # [T, C]
    target: np.ndarray            # [H, C]
    origin: int


# ---------------------------------------------------------------------------
# core per-second quantities
# ---------------------------------------------------------------------------


def equivalent_vehicles(n_car, n_bus, n_truck):
    """Class-weighted vehicle count: car 1.0, bus 2.0, truck 2.5."""
    if n_car < 0 or n_bus < 0 or n_truck < 0:
        raise DomainError(
            f"vehicle counts must be >= 0, got ({n_car}, {n_bus}, {n_truck})"
        )
    return n_car + BUS_FACTOR * n_bus + TRUCK_FACTOR * n_truck


def traffic_density(g, meta):
    """Equivalent vehicles per meter of directional lane: G / (n * L)."""
    if g < 0:
        raise DomainError(f"equivalent-vehicle count must be >= 0, got {g}")
    return g / (meta.lanes_per_direction_n * meta.segment_length_L)


def lane_occupancy(lengths, meta):
    """Fraction of directional road length covered by vehicle projections."""
    for length in lengths:
        if length <= 0:
            raise DomainError(f"vehicle length must be > 0, got {length}")
    total = float(sum(lengths))
    r_s = total / (meta.lanes_per_direction_n * meta.segment_length_L)
    if r_s > 1.0:
        warnings.warn(
            f"lane occupancy {r_s:.4f} exceeds 1 (overlapping projections?); "
            "clamping to 1",
            DataInconsistencyWarning,
        )
        r_s = 1.0
    return r_s


def iqr_filter(values):
    """Drop values outside [Q1 - 1.5*IQR, Q3 + 1.5*IQR].

    Quartiles use linear interpolation of order statistics.  Idempotent
    in the sense that the surviving values are kept by a second pass.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("iqr_filter requires a non-empty list")
    q1, q3 = np.percentile(values, [25.0, 75.0])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return values[(values >= lo) & (values <= hi)]


def kde_estimate(values, grid, bandwidth=None):
    """Gaussian-kernel density estimate evaluated on ``grid``.

    Defaults to Silverman's rule-of-thumb bandwidth.
    """
    values = np.asarray(values, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if values.size < 1:
        raise ValueError("kde_estimate requires at least one value")
    if bandwidth is None:
        spread = values.std()
        bandwidth = 1.06 * spread * values.size ** (-0.2) if spread > 0 else 1.0
    if bandwidth <= 0:
        raise ConfigurationError(f"bandwidth must be > 0, got {bandwidth}")
    z = (grid[:, None] - values[None, :]) / bandwidth
    kernels = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return kernels.mean(axis=1) / bandwidth


# ---------------------------------------------------------------------------
# time-series construction
# ---------------------------------------------------------------------------


def build_timeseries(tracks, meta, direction):
    """Aggregate vehicle tracks into the per-second 12-feature series.

    Frames map to 1-second bins via floor(frame / frame_rate).  Kinematic
    columns are IQR-filtered means of the per-vehicle bin means; bins with
    no vehicle forward-fill the previous bin's kinematics and are flagged
    in ``gap_bins``.
    """
    if direction not in DIRECTIONS:
        raise DomainError(f"unknown direction {direction!r}")
    selected = [t for t in tracks if t.driving_direction == direction]
    if not selected:
        raise EmptyDirectionError(
            f"no tracks travel in direction {direction!r}"
        )
    last_bin = max(
        int(t.frames[-1] // meta.frame_rate) for t in selected if len(t.frames)
    )
    n_bins = last_bin + 1
    values = np.zeros((n_bins, len(FEATURE_NAMES)))
    values[:, 0] = np.arange(n_bins)
    gap_bins = []

    # per-bin membership and per-vehicle bin-mean kinematics
    per_bin = [[] for _ in range(n_bins)]  # entries: (track, kin_mean[4])
    for track in sorted(selected, key=lambda t: t.vehicle_id):
        bins = (track.frames // meta.frame_rate).astype(np.intp)
        for b in np.unique(bins):
            in_bin = bins == b
            per_bin[b].append((track, track.kinematics[in_bin].mean(axis=0)))

    col = {name: i for i, name in enumerate(FEATURE_NAMES)}
    prev_kin = np.zeros(4)
    for b in range(n_bins):
        members = per_bin[b]
        counts = {c: 0 for c in VEHICLE_CLASSES}
        for track, _ in members:
            counts[track.vehicle_class] += 1
        g = equivalent_vehicles(counts["car"], counts["bus"], counts["truck"])
        values[b, col["car"]] = counts["car"]
        values[b, col["bus"]] = counts["bus"]
        values[b, col["truck"]] = counts["truck"]
        values[b, col["G"]] = g
        values[b, col["k"]] = traffic_density(g, meta)
        values[b, col["q"]] = len(members)
        values[b, col["R_s"]] = lane_occupancy(
            [t.length_l for t, _ in members], meta
        )
        if members:
            kin = np.stack([k for _, k in members])
            filtered = []
            for j in range(4):
                filtered.append(iqr_filter(kin[:, j]).mean())
            prev_kin = np.array(filtered)
        else:
            gap_bins.append(b)
        values[b, col["v_x"]:col["a_y"] + 1] = prev_kin

    return TimeSeriesDataset(values=values, direction=direction, gap_bins=gap_bins)


# ---------------------------------------------------------------------------
# standardization and windowing
# ---------------------------------------------------------------------------


def feature_stats(values, n_train=None):
    """Per-feature mean/population-std over the first ``n_train`` rows.

    Constant columns (std < 1e-12) record mean 0 / std 1 so they pass
    through standardization unchanged.
    """
    rows = values if n_train is None else values[:n_train]
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    constant = std < _CONST_STD_EPS
    mean = np.where(constant, 0.0, mean)
    std = np.where(constant, 1.0, std)
    return mean, std


def standardize(ds, n_train=None):
    """Z-score transform with statistics from the training prefix."""
    mean, std = feature_stats(ds.values, n_train)
    return TimeSeriesDataset(
        values=(ds.values - mean) / std,
        direction=ds.direction,
        feature_names=list(ds.feature_names),
        mean=mean,
        std=std,
        gap_bins=list(ds.gap_bins),
    )


def destandardize(values, mean, std):
    """Inverse of ``standardize`` on raw arrays."""
    return values * std + mean


def window_split(values, t_len, h_len, stride=1):
    """Sliding windows plus a chronological leak-free 7:2:1 partition.

    The series rows are cut 7:2:1; every window belongs to the split that
    contains its origin row and is dropped if it does not fit entirely
    inside that split's rows (straddling windows would leak later-split
    data into the earlier split).
    """
    values = np.asarray(values, dtype=np.float64)
    if not t_len >= h_len >= 1:
        raise ValueError(f"need T >= H >= 1, got T={t_len}, H={h_len}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    total = t_len + h_len
    n_rows = values.shape[0]
    if n_rows < total:
        raise SeriesTooShortError(
            f"series has {n_rows} rows but windows need T+H={total}",
            required=total,
        )
    windows = [
        WindowSample(
            input=values[o:o + t_len],
            target=values[o + t_len:o + total],
            origin=o,
        )
        for o in range(0, n_rows - total + 1, stride)
    ]
    b1 = int(0.7 * n_rows)
    b2 = b1 + int(0.2 * n_rows)
    split = {"train": [], "val": [], "test": []}
    for w in windows:
        end = w.origin + total
        if w.origin < b1:
            if end <= b1:
                split["train"].append(w)
        elif w.origin < b2:
            if end <= b2:
                split["val"].append(w)
        elif end <= n_rows:
            split["test"].append(w)
    return windows, split


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------


def _require_columns(df, required, path):
    for column in required:
        if column not in df.columns:
            raise DataSchemaError(
                f"{path}: missing required column {column!r}", column=column
            )


def _parse_direction(value):
    text = str(value).strip().lower()
    if text in ("1", "negative_x", "left"):
        return "negative_x"
    if text in ("2", "positive_x", "right"):
        return "positive_x"
    raise DataSchemaError(
        f"unrecognized drivingDirection value {value!r}", column="drivingDirection"
    )


def read_segment(meta_path, tracks_path, tracks_meta_path):
    """Load a recording's CSV triple into (SegmentMeta, list of VehicleTrack)."""
    rec = pd.read_csv(meta_path)
    _require_columns(rec, RECORDING_META_COLUMNS, meta_path)
    row = rec.iloc[0]
    meta = SegmentMeta(
        segment_id=str(row["id"]),
        frame_rate=float(row["frameRate"]),
        segment_length_L=float(row["segmentLength"]),
        lanes_per_direction_n=int(row["lanesPerDirection"]),
    )

    tracks_df = pd.read_csv(tracks_path)
    _require_columns(tracks_df, TRACKS_COLUMNS, tracks_path)
    meta_df = pd.read_csv(tracks_meta_path)
    _require_columns(meta_df, TRACKS_META_COLUMNS, tracks_meta_path)

    tracks = []
    grouped = tracks_df.sort_values("frame").groupby("id")
    for _, info in meta_df.iterrows():
        vid = int(info["id"])
        if vid not in grouped.groups:
            continue
        rows = grouped.get_group(vid)
        tracks.append(
            VehicleTrack(
                vehicle_id=vid,
                vehicle_class=str(info["class"]).strip().lower(),
                driving_direction=_parse_direction(info["drivingDirection"]),
                length_l=float(info["length"]),
                frames=rows["frame"].to_numpy(dtype=np.int64),
                kinematics=rows[
                    ["xVelocity", "yVelocity", "xAcceleration", "yAcceleration"]
                ].to_numpy(dtype=np.float64),
            )
        )
    return meta, tracks


def write_flow_csv(ds, path):
    df = pd.DataFrame(ds.values, columns=ds.feature_names)
    df.to_csv(path, index=False)


def read_flow_csv(path):
    df = pd.read_csv(path)
    for column in FEATURE_NAMES:
        if column not in df.columns:
            raise DataSchemaError(
                f"{path}: missing flow column {column!r}", column=column
            )
    return df[FEATURE_NAMES].to_numpy(dtype=np.float64)


def stats_sidecar(ds, meta):
    """JSON-serializable normalization statistics plus segment metadata."""
    mean, std = feature_stats(ds.values)
    return {
        "segment": {
            "id": meta.segment_id,
            "frame_rate": meta.frame_rate,
            "segment_length_L": meta.segment_length_L,
            "lanes_per_direction_n": meta.lanes_per_direction_n,
        },
        "direction": ds.direction,
        "feature_names": list(ds.feature_names),
        "mean": mean.tolist(),
        "std": std.tolist(),
        "gap_bins": list(ds.gap_bins),
    }


def write_stats_json(ds, meta, path):
    with open(path, "w") as handle:
        json.dump(stats_sidecar(ds, meta), handle, indent=2)
