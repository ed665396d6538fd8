"""Brick-kiln monitoring toolkit: plan imagery surveys, ingest tiles,
label chips, merge detections and audit siting rules."""

__version__ = "0.1.0"
