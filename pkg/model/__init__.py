"""
SSMRadNet model: configuration, parameters, SSM layers, decoder, checkpoints.
"""

from .config import ModelConfig, build_model_config, parse_model_values, STRUCTURAL_KEYS
from .params import Parameters, parameter_shapes
from .layers import (
    ConvFifo,
    causal_conv_sequence,
    causal_conv_step,
    compute_decay,
    embed_sample,
    emit_output,
    project_modulations,
    split_complex,
    update_state,
)
from .ssm_block import SsmBlock, SsmState
from .decoder import BevMaps, decode_bev
from .network import SSMRadNet, ChirpCarry, ChirpPool, ChirpState, forward_frame
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint, read_checkpoint_header

__all__ = [
    "ModelConfig", "build_model_config", "parse_model_values", "STRUCTURAL_KEYS",
    "Parameters", "parameter_shapes",
    "ConvFifo", "causal_conv_sequence", "causal_conv_step", "compute_decay",
    "embed_sample", "emit_output", "project_modulations", "split_complex", "update_state",
    "SsmBlock", "SsmState", "BevMaps", "decode_bev",
    "SSMRadNet", "ChirpCarry", "ChirpPool", "ChirpState", "forward_frame",
    "Checkpoint", "save_checkpoint", "load_checkpoint", "read_checkpoint_header",
]
