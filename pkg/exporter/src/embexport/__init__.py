"""Image-embedding exporter producing EMB1 files."""

from .export import ExportJob, export

__version__ = "0.1.0"
__all__ = ["ExportJob", "export"]
