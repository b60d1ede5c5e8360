"""Graph classification under structure distribution shift.

Core building blocks: TU-format dataset handling with biased splits, a
small reverse-mode autodiff engine, a rationale-masked GCN encoder with
a prototype head, same-label embedding mixup with extreme-value-theory
reweighting, and the training loops that tie them together.
"""

__version__ = "0.1.0"
