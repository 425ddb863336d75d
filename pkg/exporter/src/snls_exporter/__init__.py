"""Offline sentence-embedding exporter producing SNLS-EMB v1 tables."""

from .export import ExportJob, VerifyReport, export_table, read_sentences, verify_table

__version__ = "0.1.0"

__all__ = ["ExportJob", "VerifyReport", "export_table", "read_sentences", "verify_table"]
