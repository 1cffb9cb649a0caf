"""Embedding-space toolkit for person re-identification: distances,
mAP/CMC evaluation, triplet mining, mean-teacher EMA, mask preprocessing,
camera-context analysis, and exact t-SNE."""

__version__ = "0.1.0"
