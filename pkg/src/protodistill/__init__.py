"""Valence-arousal prototype distillation from EEG topomaps to a face classifier.

Modules: ``vagrid`` (V/A binning), ``topomap`` (band power and scalp maps),
``nn_core`` (dense network, AdamW, checkpoints), ``losses``, ``protobank``,
``trainer``, ``metrics``, ``artifacts`` (containers and checksums) and
``cli``.
"""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
