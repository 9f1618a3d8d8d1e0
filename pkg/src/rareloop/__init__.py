"""Active-learning loop for retrieving rare positive documents.

Submodules: corpus (documents, pools, splits), motifs (seed patterns),
skipgrams (gap-tolerant gram mining), scoring (hashed logistic scorer),
calibration (decision-threshold bootstrap), evaluation (rank-scheduled
metrics), strategies (query selection), experiment (the orchestration
loop), server (labeling HTTP API), cli (command-line entry points).
"""

__version__ = "0.1.0"
