"""Skull-fracture CT classification pipeline.

Batch toolkit covering the full chain: DICOM ingest, Hounsfield-unit
preprocessing, patient-grouped splitting with rebalancing, CNN-style
feature extraction (toy or exported-model backend), tree-ensemble and
linear classifier heads, and a seven-metric evaluation panel.
"""

__version__ = "0.1.0"
