"""
Compute Report.

Collects analytic counts, measured latency and streaming memory into one
record, rendered as a table for people and key=value lines for tools.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field, model_validator

from model.config import ModelConfig
from model.network import SSMRadNet
from streaming.session import StreamSession
from .counters import STAGES, count_macs, count_params
from .latency import LatencyStats

logger = logging.getLogger(__name__)


class ComputeReport(BaseModel):
    """Efficiency figures of one configuration."""

    params_total: int = Field(..., ge=0)
    macs: Dict[str, int]
    macs_total: int = Field(..., ge=0)
    latency_p50_ms: Optional[float] = None
    latency_p95_ms: Optional[float] = None
    latency_mode: Optional[str] = None
    latency_frames: int = 0
    tick_p99_us: Optional[float] = None
    throughput_fps: Optional[float] = None
    resident_state_floats: int = Field(..., ge=0)
    peak_state_floats: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _stages_sum(self) -> "ComputeReport":
        if sum(self.macs.values()) != self.macs_total:
            raise ValueError(f"Stage MACs {self.macs} do not sum to {self.macs_total}")
        return self

    def to_kv(self) -> str:
        """Machine-readable key=value lines."""
        lines: List[str] = [f"params={self.params_total}", f"macs_total={self.macs_total}"]
        lines += [f"macs_{stage}={self.macs[stage]}" for stage in STAGES]
        lines.append(f"gmacs={self.macs_total / 1e9:.6f}")
        for key in ("latency_mode", "latency_frames", "latency_p50_ms", "latency_p95_ms",
                    "tick_p99_us", "throughput_fps"):
            value = getattr(self, key)
            if value is not None:
                lines.append(f"{key}={value:.6f}" if isinstance(value, float) else f"{key}={value}")
        lines.append(f"resident_state_floats={self.resident_state_floats}")
        lines.append(f"peak_state_floats={self.peak_state_floats}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        """Human-readable summary table."""
        rows = [("Params", f"{self.params_total:,}")]
        rows += [(f"MACs {stage}", f"{self.macs[stage]:,}") for stage in STAGES]
        rows.append(("MACs total", f"{self.macs_total:,} ({self.macs_total / 1e9:.3f} G)"))
        if self.latency_p50_ms is not None:
            rows.append((f"Latency p50 ({self.latency_mode})", f"{self.latency_p50_ms:.3f} ms"))
            rows.append((f"Latency p95 ({self.latency_mode})", f"{self.latency_p95_ms:.3f} ms"))
        if self.tick_p99_us is not None:
            rows.append(("Tick p99", f"{self.tick_p99_us:.1f} us"))
        if self.throughput_fps is not None:
            rows.append(("Throughput", f"{self.throughput_fps:.2f} frames/s"))
        rows.append(("Resident state floats", f"{self.resident_state_floats:,}"))
        rows.append(("Peak state floats", f"{self.peak_state_floats:,}"))
        width = max(len(k) for k, _ in rows)
        rule = "-" * (width + 24)
        body = "\n".join(f"{k:<{width}}  {v}" for k, v in rows)
        return f"{rule}\n{body}\n{rule}\n"

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_kv())
        logger.info(f"Wrote compute report to {path}")


def parse_report(text: str) -> Dict[str, str]:
    """Read key=value report lines back into a dict."""
    values = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if sep:
            values[key.strip()] = value.strip()
    return values


def build_report(
    config: ModelConfig,
    latency: Optional[LatencyStats] = None,
    throughput_fps: Optional[float] = None,
    model: Optional[SSMRadNet] = None
) -> ComputeReport:
    """
    Assemble a ComputeReport; counts come from ``config`` alone.

    Args:
        config: Model configuration
        latency: Measured latency, if any
        throughput_fps: Measured throughput, if any
        model: Network used for the streaming memory report (built when omitted)
    """
    macs = count_macs(config)
    memory = StreamSession(model or SSMRadNet(config)).memory_report()
    return ComputeReport(
        params_total=count_params(config),
        macs=macs.as_dict(),
        macs_total=macs.total,
        latency_p50_ms=latency.p50_ms if latency else None,
        latency_p95_ms=latency.p95_ms if latency else None,
        latency_mode=latency.mode if latency else None,
        latency_frames=latency.frames if latency else 0,
        tick_p99_us=latency.tick_p99_us if latency else None,
        throughput_fps=throughput_fps,
        resident_state_floats=memory.resident_floats,
        peak_state_floats=memory.peak_floats,
    )
