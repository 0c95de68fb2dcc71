"""Loading, normalization, windowing, and batching of multivariate series.

Raw series arrive as CSV (header row, one timestep per row). Features are
min-max scaled to [0,1] per column; constant columns map to 0.5 and
denormalize back to their constant value. Windows are fixed-length
contiguous slices taken at a fixed stride.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    EmptyAfterCleaning,
    FeatureCountMismatch,
    NoNumericColumns,
    SeriesTooShort,
)


@dataclass
class RawSeries:
    values: np.ndarray          # (L, M) float64
    feature_names: list
    source_path: str = ""
    dropped_rows: int = 0

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def feature_count(self):
        return self.values.shape[1]


@dataclass
class NormStats:
    minimum: np.ndarray         # (M,)
    maximum: np.ndarray         # (M,)
    feature_names: list = field(default_factory=list)

    @property
    def is_constant(self):
        return self.maximum == self.minimum

    @property
    def feature_count(self):
        return self.minimum.shape[0]


@dataclass
class TimeSeriesWindow:
    values: np.ndarray          # (T, M), entries in [0,1]
    origin_index: int


def load_csv(path, feature_columns=None, drop_datetime=True, min_rows=1):
    """Read a CSV into a RawSeries, dropping rows with missing/bad entries.

    Args:
        path: CSV file with a header row, one timestep per row.
        feature_columns: optional list of column names to keep.
        drop_datetime: ignore non-numeric columns (e.g. a datetime index)
            instead of failing on them.
        min_rows: minimum usable rows required after cleaning.
    """
    frame = pd.read_csv(path)
    if feature_columns is not None:
        missing = [c for c in feature_columns if c not in frame.columns]
        if missing:
            raise NoNumericColumns(f"columns not found: {missing}")
        frame = frame[list(feature_columns)]
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    if feature_columns is None and drop_datetime:
        keep = [c for c in numeric.columns if not numeric[c].isna().all()]
        numeric = numeric[keep]
    if numeric.shape[1] == 0:
        raise NoNumericColumns(f"no numeric columns in {path}")
    clean = numeric.dropna(axis=0, how="any")
    dropped = len(numeric) - len(clean)
    if len(clean) < min_rows:
        raise EmptyAfterCleaning(
            f"{path}: {len(clean)} usable rows after dropping {dropped}, need >= {min_rows}"
        )
    values = clean.to_numpy(dtype=np.float64)
    if not np.isfinite(values).all():
        keep = np.isfinite(values).all(axis=1)
        dropped += int((~keep).sum())
        values = values[keep]
        if len(values) < min_rows:
            raise EmptyAfterCleaning(f"{path}: {len(values)} finite rows, need >= {min_rows}")
    return RawSeries(
        values=values,
        feature_names=[str(c) for c in clean.columns],
        source_path=str(path),
        dropped_rows=dropped,
    )


def fit_normalizer(raw):
    """Exact column-wise min/max of the series."""
    if raw.length < 1:
        raise EmptyAfterCleaning("cannot fit normalizer on an empty series")
    return NormStats(
        minimum=raw.values.min(axis=0),
        maximum=raw.values.max(axis=0),
        feature_names=list(raw.feature_names),
    )


def _check_feature_count(stats, m):
    if stats.feature_count != m:
        raise FeatureCountMismatch(f"stats have {stats.feature_count} features, data has {m}")


def normalize(raw, stats):
    """Map each entry to (x - min) / (max - min), clamped to [0,1].

    Constant columns go to 0.5 everywhere. Returns a new RawSeries.
    """
    _check_feature_count(stats, raw.feature_count)
    span = stats.maximum - stats.minimum
    safe = np.where(stats.is_constant, 1.0, span)
    out = (raw.values - stats.minimum) / safe
    out = np.clip(out, 0.0, 1.0)
    out[:, stats.is_constant] = 0.5
    return RawSeries(out, list(raw.feature_names), raw.source_path, raw.dropped_rows)


def denormalize(windows, stats):
    """Invert `normalize` on an array of windows or a single matrix.

    Accepts (T, M), (B, T, M), or a list of TimeSeriesWindow; constant
    columns return their constant value.
    """
    arr = as_window_array(windows)
    _check_feature_count(stats, arr.shape[-1])
    span = stats.maximum - stats.minimum
    out = arr * span + stats.minimum
    if stats.is_constant.any():
        out[..., stats.is_constant] = stats.minimum[stats.is_constant]
    return out


def make_windows(raw, window_length, stride=1):
    """Slice the series into windows at origins 0, stride, 2*stride, ...

    Emits floor((L - T) / stride) + 1 windows; requires L >= T >= 2.
    """
    if window_length < 2:
        raise SeriesTooShort(f"window length {window_length} < 2")
    if stride < 1:
        raise SeriesTooShort(f"stride {stride} < 1")
    length = raw.length
    if length < window_length:
        raise SeriesTooShort(f"series length {length} < window length {window_length}")
    windows = []
    for origin in range(0, length - window_length + 1, stride):
        windows.append(TimeSeriesWindow(raw.values[origin:origin + window_length].copy(), origin))
    return windows


def as_window_array(windows, dtype=None):
    """Normalize windows input to a (B, T, M) array."""
    if isinstance(windows, np.ndarray):
        arr = windows if windows.ndim == 3 else windows[None]
    else:
        arr = np.stack([w.values if isinstance(w, TimeSeriesWindow) else np.asarray(w)
                        for w in windows])
    return arr.astype(dtype) if dtype is not None else arr


def train_eval_split(windows, eval_fraction=0.2, seed=0):
    """One shuffle with the given seed, then an (1-f)/f split."""
    arr = as_window_array(windows)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(arr))
    arr = arr[order]
    n_eval = int(round(len(arr) * eval_fraction))
    n_train = len(arr) - n_eval
    return arr[:n_train], arr[n_train:]


def iter_batches(array, batch_size, rng, drop_last=False):
    """Yield shuffled batches; deterministic given the rng state.

    Single consumer per iterator; create one per worker.
    """
    order = rng.permutation(len(array))
    for start in range(0, len(array), batch_size):
        idx = order[start:start + batch_size]
        if drop_last and len(idx) < batch_size:
            return
        yield array[idx]


# bundled synthetic fixtures ------------------------------------------------

def make_sine_frame(length=2000, features=5, seed=0):
    """Multivariate sinusoid mixture; frequencies and phases drawn per seed.

    Each feature is a two-harmonic sinusoid inside (0, 1), suitable as a
    quick desk-scale fixture.
    """
    rng = np.random.default_rng([seed, 0x51E])
    t = np.arange(length, dtype=np.float64)
    cols = {}
    for j in range(features):
        freq = rng.uniform(0.02, 0.12)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        second = rng.uniform(0.1, 0.4)
        wave = np.sin(2.0 * np.pi * freq * t + phase)
        wave = wave + second * np.sin(4.0 * np.pi * freq * t + 2.0 * phase)
        cols[f"f{j}"] = 0.5 + 0.45 * wave / (1.0 + second)
    return pd.DataFrame(cols)


def make_stock_like_frame(length=3680, seed=0):
    """Daily OHLCV-style surrogate: geometric random walk with intraday
    spread plus a correlated volume column (6 features)."""
    rng = np.random.default_rng([seed, 0x570C4])
    log_ret = rng.normal(0.0003, 0.02, size=length)
    close = 100.0 * np.exp(np.cumsum(log_ret))
    open_ = close * np.exp(rng.normal(0.0, 0.005, size=length))
    base = np.maximum(open_, close)
    low_base = np.minimum(open_, close)
    high = base * np.exp(np.abs(rng.normal(0.0, 0.006, size=length)))
    low = low_base * np.exp(-np.abs(rng.normal(0.0, 0.006, size=length)))
    adj = close * np.exp(rng.normal(0.0, 0.001, size=length))
    volume = np.exp(rng.normal(13.0, 0.35, size=length) + 8.0 * np.abs(log_ret))
    return pd.DataFrame({
        "Open": open_, "High": high, "Low": low,
        "Close": close, "Adj Close": adj, "Volume": volume,
    })
