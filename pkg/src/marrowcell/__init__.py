"""Bone marrow cell classification: dataset handling, transfer-learning model,
training loop, confusion-matrix metrics and Table-style run reports."""

__version__ = "0.1.0"
