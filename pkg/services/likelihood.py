"""
Confidence-weighted cosine score and log-domain particle weight updates.
"""

import numpy as np

from core.exceptions import DegenerateWeightsError, InvalidArgumentError
from models.filter_models import ScoreParams
from models.map_models import ConfidenceMap, FeatureMap


def score(g_hat: FeatureMap, conf: ConfidenceMap, f_patch_hat: FeatureMap) -> float:
    """
    Mean over BEV cells of C_uv * <g_uv, f_uv>.

    Both feature maps must already be L2-normalized per cell; the result is
    clipped to [-1, 1] against float32 rounding.
    """
    if g_hat.data.shape != f_patch_hat.data.shape:
        raise InvalidArgumentError(
            f"feature shapes differ: {g_hat.data.shape} vs {f_patch_hat.data.shape}"
        )
    if conf.data.shape != g_hat.data.shape[:2]:
        raise InvalidArgumentError(
            f"confidence shape {conf.data.shape} does not match BEV grid {g_hat.data.shape[:2]}"
        )
    cell_dots = np.einsum("hwd,hwd->hw", g_hat.data, f_patch_hat.data, dtype=np.float64)
    total = np.einsum("hw,hw->", conf.data.astype(np.float64), cell_dots)
    value = total / (g_hat.height * g_hat.width)
    return float(np.clip(value, -1.0, 1.0))


def log_likelihood(s, params: ScoreParams):
    """log p(z | x) up to a constant: s / tau_s."""
    if isinstance(s, np.ndarray):
        return s / params.tau_s
    return float(s) / params.tau_s


def update_log_weights(log_w_prev, log_lik) -> np.ndarray:
    """Add log-likelihoods and renormalize with a max shift so sum(exp(w)) == 1."""
    log_w_prev = np.asarray(log_w_prev, dtype=np.float64)
    log_lik = np.asarray(log_lik, dtype=np.float64)
    if log_w_prev.shape != log_lik.shape or log_w_prev.ndim != 1 or log_w_prev.size == 0:
        raise InvalidArgumentError(
            f"weight update needs equal-length 1-D inputs, got {log_w_prev.shape} and {log_lik.shape}"
        )

    combined = log_w_prev + log_lik
    if np.any(np.isnan(combined)) or np.any(combined == np.inf):
        raise DegenerateWeightsError("particle log-weights are not finite")
    peak = np.max(combined)
    if peak == -np.inf:
        raise DegenerateWeightsError("all particle weights vanished")

    log_norm = peak + np.log(np.sum(np.exp(combined - peak)))
    return combined - log_norm


def score_batch(g_hat: FeatureMap, conf: ConfidenceMap, taps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Scores of N poses from their gathered bilinear taps.

    `taps` is (4, N, H, W, D) and `weights` (4, N, H, W), as returned by
    `gather_patch_taps`. Equal to `score` of each interpolated patch up to
    float32 rounding: interpolation is linear, so each tap is dotted with
    the observation before the taps are blended.
    """
    if taps.ndim != 5 or taps.shape[0] != 4 or taps.shape[2:] != g_hat.data.shape:
        raise InvalidArgumentError(
            f"taps of shape {taps.shape} do not match BEV features {g_hat.data.shape}"
        )
    if weights.shape != taps.shape[:-1]:
        raise InvalidArgumentError(f"tap weights {weights.shape} do not match taps {taps.shape}")
    if conf.data.shape != g_hat.data.shape[:2]:
        raise InvalidArgumentError(
            f"confidence shape {conf.data.shape} does not match BEV grid {g_hat.data.shape[:2]}"
        )
    tap_dots = np.einsum("tnhwd,hwd->tnhw", taps, g_hat.data)
    cell_weights = weights * conf.data.astype(np.float64)
    totals = np.einsum("tnhw,tnhw->n", cell_weights, tap_dots.astype(np.float64))
    return np.clip(totals / (g_hat.height * g_hat.width), -1.0, 1.0)
