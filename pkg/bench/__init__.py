"""Parameter/MAC counters, latency harness and compute reports."""
from .counters import MacCounts, count_params, count_macs, param_groups, decoder_macs, STAGES
from .latency import LatencyStats, measure_latency, measure_throughput
from .report import ComputeReport, build_report, parse_report

__all__ = [
    'MacCounts', 'count_params', 'count_macs', 'param_groups', 'decoder_macs', 'STAGES',
    'LatencyStats', 'measure_latency', 'measure_throughput',
    'ComputeReport', 'build_report', 'parse_report',
]
