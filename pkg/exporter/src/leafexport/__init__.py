"""Feature exporter: CNN backbones over an image tree to FEATMAT1 files."""

__version__ = "0.1.0"
