"""Adapter that exports GAN synthesis-block activations as feature stores."""

from .export import CheckpointLoadError, ExportConfig, ExportError, export_features

__version__ = "0.1.0"
