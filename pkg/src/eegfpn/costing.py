"""Analytic parameter and FLOP accounting plus wall-clock inference
timing. The FLOP convention is stated in every report because published
counts are meaningless without one."""

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .autoencoder import AeDims, count_ae_params
from .config import RunConfig
from .errors import ConfigError
from .gru import count_branch_params
from .model import ModelParams, model_forward
from .reducer import count_nsdru_params

FLOP_CONVENTION = (
    "MAC = 2 FLOPs; dense in->out = 2*in*out + out; "
    "conv = 2*kh*kw*cin*cout*hout*wout + cout*hout*wout; "
    "GRU step = 3*(2*f*h + 2*h*h + 2*h) + 9*h elementwise; "
    "activations, pooling, skip adds, branch averaging and softmax uncounted; "
    "model forward only (preprocessing excluded), per single epoch"
)


@dataclass
class CostReport:
    trainable_params: int
    flops_per_inference: int
    cpu_ms: float = None
    convention: str = FLOP_CONVENTION


def dense_flops(n_in: int, n_out: int) -> int:
    return 2 * n_in * n_out + n_out


def conv_flops(kh: int, kw: int, c_in: int, c_out: int, h_out: int, w_out: int) -> int:
    return 2 * kh * kw * c_in * c_out * h_out * w_out + c_out * h_out * w_out


def gru_step_flops(f: int, h: int) -> int:
    return 3 * (2 * f * h + 2 * h * h + 2 * h) + 9 * h


def count_params(config: RunConfig) -> int:
    """Closed-form trainable parameter count for a configuration."""
    config.validate()
    f = config.ch // 2
    total = count_ae_params(AeDims(d=config.d, e1=config.e1, e2=config.e2, z=config.z))
    total += count_nsdru_params(config.nsdru_hidden_channels)
    total += config.k * count_branch_params(f, config.h)
    total += 2 * config.h + 2
    return total


def count_flops(config: RunConfig) -> int:
    """FLOPs for one epoch's forward pass under FLOP_CONVENTION."""
    config.validate()
    ch, t, c = config.ch, config.t, config.nsdru_hidden_channels
    f, steps = ch // 2, t // 2
    widths = [config.d, config.e1, config.e2, config.z,
              config.e2, config.e1, config.d]
    total = sum(dense_flops(a, b) for a, b in zip(widths[:-1], widths[1:]))
    total += conv_flops(3, 3, 1, c, ch, t)
    total += conv_flops(3, 3, c, 1, ch // 2, t // 2)
    total += config.k * steps * gru_step_flops(f, config.h)
    total += dense_flops(config.h, 2)
    return total


def time_inference(
    params: ModelParams, rows: np.ndarray, ch: int, t: int,
    repetitions: int = 5, output_activation: str = "relu",
) -> float:
    """Median wall-clock milliseconds of a single-epoch forward pass,
    after one untimed warm-up."""
    if repetitions < 3:
        raise ConfigError(f"repetitions must be >= 3, got {repetitions}")
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    model_forward(rows[:1], ch, t, params, output_activation)
    laps = []
    for _ in range(repetitions):
        start = time.perf_counter()
        model_forward(rows[:1], ch, t, params, output_activation)
        laps.append((time.perf_counter() - start) * 1000.0)
    return float(statistics.median(laps))


def format_cost_report(report: CostReport) -> str:
    lines = [
        f"trainable_params: {report.trainable_params}",
        f"flops_per_inference: {report.flops_per_inference}",
    ]
    if report.cpu_ms is not None:
        lines.append(f"cpu_ms: {report.cpu_ms:.3f}")
    lines.append(f"flop_convention: {report.convention}")
    return "\n".join(lines) + "\n"
