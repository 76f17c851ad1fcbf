"""Feature and alignment export into the STNS / JSON-lines formats read by syllabion."""

from .alignments import AlignmentError, export_alignments, merge_alignments, read_alignment_rows
from .export import ExportError, ExportSpec, export_features
from .stns import StnsError, read_stns, write_stns

__all__ = [
    "AlignmentError",
    "ExportError",
    "ExportSpec",
    "StnsError",
    "export_alignments",
    "export_features",
    "merge_alignments",
    "read_alignment_rows",
    "read_stns",
    "write_stns",
]
