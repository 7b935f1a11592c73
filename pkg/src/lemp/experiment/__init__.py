from .data import (PRESETS, BundleError, DatasetBundle, ingest, preset_bundle, read_embeddings, synth_bundle,
                   synth_dataset, write_bundle, write_embeddings)
from .loop import EdgeSelector, LempConfig, RunReport, SelectionRound, run_baseline, run_lemp
from .probe import AMBIGUOUS, BENIGN, MALIGNANT, categorize, probe
from .report import budget_sweep, report_export, sweep_row, write_sweep

__all__ = [
    "PRESETS", "BundleError", "DatasetBundle", "ingest", "preset_bundle", "read_embeddings", "synth_bundle",
    "synth_dataset", "write_bundle", "write_embeddings",
    "EdgeSelector", "LempConfig", "RunReport", "SelectionRound", "run_baseline", "run_lemp",
    "AMBIGUOUS", "BENIGN", "MALIGNANT", "categorize", "probe",
    "budget_sweep", "report_export", "sweep_row", "write_sweep",
]
