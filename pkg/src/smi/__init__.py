"""Skin-Machine Interface: contact-motion classification from multimodal
skin-sensor streams, mapped to 8-dimensional robot commands.

Subpackage tour:

- ``smi.sensekit``   sensor frame model, patch geometry, pseudo-force,
  mirroring, modality masks, wire formats
- ``smi.neuralcore`` from-scratch encoder + LSTM + classifier/predictor
  heads with exact BPTT gradients and an adaptive-moment optimizer
- ``smi.synthgen``   labeled synthetic trajectory generator for the 17
  contact classes, soft vs. rigid support physics
- ``smi.trainer``    training protocol, step-level accuracy metric,
  modality/support ablation harness
- ``smi.runtime``    streaming inference engine and the paired-class
  command mapping with deadzone and saturation
- ``smi.cli``        the ``smi`` command-line tool (gen/train/eval/
  ablate/infer/serve)
"""

__version__ = "0.1.0"
