"""
Trajectory metrics and CSV exchange.

ATE is the position RMSE in the UTM frame with estimates associated to
ground truth by exact timestamp and no alignment. Heading error is
reported separately.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.exceptions import AssociationError, DataError, InvalidArgumentError
from models.run_models import TrajectoryRecord
from services.se2_geometry import wrap_angle

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["t", "x", "y", "theta"]
CSV_FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def _associate(est: TrajectoryRecord, gt: TrajectoryRecord) -> Tuple[np.ndarray, np.ndarray]:
    if len(est) == 0 or len(gt) == 0:
        raise InvalidArgumentError("trajectories must not be empty")
    if len(est) != len(gt) or est.timestamps != gt.timestamps:
        mismatch = next(
            (i for i, (a, b) in enumerate(zip(est.timestamps, gt.timestamps)) if a != b),
            min(len(est), len(gt)),
        )
        raise AssociationError(
            f"timestamps differ at row {mismatch}: estimate has {len(est)} rows, ground truth {len(gt)}"
        )
    return est.pose_array(), gt.pose_array()


def error_series(est: TrajectoryRecord, gt: TrajectoryRecord) -> List[Tuple[float, float]]:
    """Per-step Euclidean position error as (t, meters)."""
    est_poses, gt_poses = _associate(est, gt)
    errors = np.hypot(est_poses[:, 0] - gt_poses[:, 0], est_poses[:, 1] - gt_poses[:, 1])
    return [(t, float(e)) for t, e in zip(est.timestamps, errors)]


def ate_rmse(est: TrajectoryRecord, gt: TrajectoryRecord) -> float:
    est_poses, gt_poses = _associate(est, gt)
    sq = (est_poses[:, 0] - gt_poses[:, 0]) ** 2 + (est_poses[:, 1] - gt_poses[:, 1]) ** 2
    return float(np.sqrt(np.mean(sq)))


def heading_error_mean(est: TrajectoryRecord, gt: TrajectoryRecord) -> float:
    """Mean |wrapped heading difference| in radians."""
    est_poses, gt_poses = _associate(est, gt)
    return float(np.mean(np.abs(wrap_angle(est_poses[:, 2] - gt_poses[:, 2]))))


def error_cdf(errors: Sequence[float], n_bins: int = 50) -> List[Tuple[float, float]]:
    """Empirical CDF at n_bins evenly spaced thresholds from 0 to max error."""
    values = np.sort(np.asarray(errors, dtype=np.float64).reshape(-1))
    if values.size == 0:
        raise InvalidArgumentError("error_cdf needs at least one error")
    if n_bins < 2:
        raise InvalidArgumentError(f"n_bins must be at least 2, got {n_bins}")
    thresholds = np.linspace(0.0, values[-1], n_bins)
    fractions = np.searchsorted(values, thresholds, side="right") / values.size
    return [(float(t), float(f)) for t, f in zip(thresholds, fractions)]


def improvement_ratio(baseline_ate: float, ate: float) -> float:
    """How many times lower `ate` is than `baseline_ate`."""
    if baseline_ate < 0 or ate < 0:
        raise InvalidArgumentError("ATE values must be non-negative")
    if ate == 0:
        return math.inf
    return float(baseline_ate) / float(ate)


def summarize_runs(runs: Sequence[Dict]) -> pd.DataFrame:
    """
    Per-run ATE table with one mean row per group.

    Each run dict needs `run`, `group`, `ate` and `baseline_ate`.
    """
    if not runs:
        raise InvalidArgumentError("summarize_runs needs at least one run")
    table = pd.DataFrame(list(runs), columns=["run", "group", "ate", "baseline_ate"])
    table["ratio"] = [improvement_ratio(b, a) for b, a in zip(table["baseline_ate"], table["ate"])]

    means = table.groupby("group", sort=True)[["ate", "baseline_ate"]].mean().reset_index()
    means["run"] = "mean"
    means["ratio"] = [improvement_ratio(b, a) for b, a in zip(means["baseline_ate"], means["ate"])]
    return pd.concat([table, means[table.columns]], ignore_index=True)


def write_trajectory_csv(record: TrajectoryRecord, path: PathLike) -> None:
    poses = record.pose_array()
    frame = pd.DataFrame({
        "t": np.asarray(record.timestamps, dtype=np.float64),
        "x": poses[:, 0],
        "y": poses[:, 1],
        "theta": poses[:, 2],
    })
    write_csv(frame, path)


def read_trajectory_csv(path: PathLike) -> TrajectoryRecord:
    frame = read_csv(path)
    if list(frame.columns) != TRAJECTORY_COLUMNS:
        raise DataError(f"{path}: expected columns {','.join(TRAJECTORY_COLUMNS)}, got {','.join(frame.columns)}")
    try:
        return TrajectoryRecord.from_arrays(frame["t"].to_numpy(), frame[["x", "y", "theta"]].to_numpy())
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


def write_cdf_csv(cdf: Sequence[Tuple[float, float]], path: PathLike) -> None:
    write_csv(pd.DataFrame(list(cdf), columns=["threshold", "fraction"]), path)


def write_csv(frame: pd.DataFrame, path: PathLike) -> None:
    """UTF-8, LF line endings, round-trip float formatting."""
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")


def read_csv(path: PathLike) -> pd.DataFrame:
    if not Path(path).is_file():
        raise DataError(f"{path}: file not found")
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"{path}: {e}") from e
