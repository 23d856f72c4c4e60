"""Export torchvision-style models into nframe model bundles."""

__version__ = "0.1.0"

from .export import ExportError, ExportSpec, emit_manifest, export_bundle
from .zoo import ZOO_SPECS

__all__ = ["ExportError", "ExportSpec", "ZOO_SPECS", "emit_manifest", "export_bundle"]
