"""Offline figures from emitted run CSVs: learning curves with bootstrap-CI
shading, sensitivity bars, normalized cross-task summaries, and diagnostic
panels. Consumes only the run directory file formats (run.csv and the
config.snapshot comment header)."""

__version__ = "0.1.0"
