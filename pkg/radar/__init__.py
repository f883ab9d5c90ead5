"""
Synthetic FMCW radar: scenes, ADC frame synthesis, BEV labels, ADCC files.
"""

from .scene import Target, Scene, AdcFrame, Labels
from .simulator import synthesize_frame, random_scenes, smooth_sequence, noise_sigma
from .labels import rasterize_labels, centre_cells, target_cell
from .dataset_io import write_dataset, write_records, read_dataset, load_dataset, read_header, frame_payload_bytes

__all__ = [
    "Target", "Scene", "AdcFrame", "Labels",
    "synthesize_frame", "random_scenes", "smooth_sequence", "noise_sigma",
    "rasterize_labels", "centre_cells", "target_cell",
    "write_dataset", "write_records", "read_dataset", "load_dataset", "read_header",
    "frame_payload_bytes",
]
