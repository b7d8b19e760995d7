"""Exporters producing cmsf interchange bundles from real or analytic models."""

from .export import ExportJob, ExportReport, run_export
from .models import ModelSet, available_model_sets, create_model_set, register_model_set

__version__ = "0.1.0"
