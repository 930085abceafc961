"""Traffic flow feature extraction, periodic-pattern forecasting, and
fuzzy congestion identification."""

from .autodiff import (
    Param,
    Tensor,
    backward,
    conv2d_same,
    layer_norm,
    matmul,
    rfft_magnitudes,
    softmax_lastdim,
)
from .features import (
    FEATURE_NAMES,
    SegmentMeta,
    TimeSeriesDataset,
    VehicleTrack,
    WindowSample,
    build_timeseries,
    equivalent_vehicles,
    iqr_filter,
    kde_estimate,
    lane_occupancy,
    standardize,
    destandardize,
    traffic_density,
    window_split,
)
from .fuzzy import FuzzySystem, defuzzify_centroid
from .model import PPTNet, PPTNetConfig
from .periods import PeriodSet, amplitude_spectrum, per_sample_weights, topk_periods
from .checkpoint import load_checkpoint, save_checkpoint
from .training import (
    AdamW,
    MetricReport,
    TrainConfig,
    compute_metrics,
    cosine_lr,
    grad_check,
    mse_loss,
    train,
)

__version__ = "0.1.0"
