"""Time-series anomaly detection on decomposed remainders.

A robust seasonal-trend decomposition strips level, trend and seasonality;
a small 1-D U-Net scores the remainder, trained with value and label
weighting and time/frequency-domain augmentation.
"""

__version__ = "0.1.0"

from .core import (DataError, LabeledSeries, ParseError, TimeSeries, load_csv,
                   save_csv, sliding_windows, split_train_test)
from .decompose import DecomposeConfig, Decomposition, decompose
from .trend import SolverError, TrendResult, WarmStart, solve_trend
from .augment import AugmentPolicy, augment_series
from .net import NetConfig, Network
from .metrics import MetricReport, evaluate
from .stream import OnlineDecomposer, StreamConfig, StreamDetector
from .train import Detector, PipelineConfig, evaluate_batch, train_model

__all__ = [
    "DataError", "ParseError", "TimeSeries", "LabeledSeries", "load_csv", "save_csv",
    "sliding_windows", "split_train_test", "DecomposeConfig", "Decomposition", "decompose",
    "SolverError", "TrendResult", "WarmStart", "solve_trend", "AugmentPolicy",
    "augment_series", "NetConfig", "Network", "MetricReport", "evaluate",
    "OnlineDecomposer", "StreamConfig", "StreamDetector", "Detector", "PipelineConfig",
    "evaluate_batch", "train_model",
]
