"""Minimal float64 neural-network engine: layers, Adam, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (BatchNorm1d, Conv1d, ConvTranspose1d, Dense, Flatten, Layer, ReLU, Reshape,
                     Sequential, conv_output_length)
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Adam", "AdamState", "BatchNorm1d", "Conv1d", "ConvTranspose1d", "Dense", "Flatten", "Layer",
    "ReLU", "Reshape", "Sequential", "adam_step", "conv_output_length", "load_checkpoint",
    "save_checkpoint",
]
