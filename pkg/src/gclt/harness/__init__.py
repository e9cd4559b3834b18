"""Experiment orchestration, reports and the command line."""

from .experiments import (ConfigError, ExperimentConfig, KSResult, MomentReport, Row,
                          TightnessResult, ks_report, limit_moments, mixture_reference,
                          reference_null, run_clt_experiment, run_increment_experiment,
                          run_ks_test, run_tightness_scan)
from .report import emit_report, render_csv, render_json, report_from_dict, report_to_dict
