"""Masked multiscale reconstruction pretraining for pulse-like signals."""

__version__ = "0.1.0"

from .coeffmap import CoeffMap, build_map, invert_map
from .model import ArchConfig, arch_preset, encode, forward_mae, param_count
from .preprocess import BandpassSpec, SqiSpec, preprocess_segment
from .synth import CohortSpec, Segment, SynthConfig, generate_cohort, generate_segment
from .tokenizer import MaskPlan, PatchGrid, make_mask, patchify, pos_embed
from .train import AugSpec, PipelineConfig, TrainConfig, pretrain
from .wavelet import WaveletFamily, get_family, wavedec, waverec

__all__ = [
    "ArchConfig", "AugSpec", "BandpassSpec", "CoeffMap", "CohortSpec",
    "MaskPlan", "PatchGrid", "PipelineConfig", "Segment", "SqiSpec",
    "SynthConfig", "TrainConfig", "WaveletFamily", "arch_preset",
    "build_map", "encode", "forward_mae", "generate_cohort",
    "generate_segment", "get_family", "invert_map", "make_mask",
    "param_count", "patchify", "pos_embed", "preprocess_segment",
    "pretrain", "wavedec", "waverec",
]
