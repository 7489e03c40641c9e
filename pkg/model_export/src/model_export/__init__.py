"""CNN export utility for the skullct feature-extraction backend."""

from .export import (
    ARCHITECTURES,
    DownloadFailure,
    ExportParityError,
    ExportSpec,
    UnknownArchitecture,
    export_model,
)

__all__ = [
    "ARCHITECTURES",
    "DownloadFailure",
    "ExportParityError",
    "ExportSpec",
    "UnknownArchitecture",
    "export_model",
]
