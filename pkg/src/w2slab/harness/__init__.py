from .config import KINDS, ExperimentConfig, load_config, load_data
from .experiment import RunResult, run_experiment
from .fewshot import FewShotResult, centroid_predict, mean_ci, nearest_centroid_eval
from .report import CSV_COLUMNS, emit_report, load_results

__all__ = [
    "KINDS", "ExperimentConfig", "load_config", "load_data",
    "RunResult", "run_experiment",
    "FewShotResult", "centroid_predict", "mean_ci", "nearest_centroid_eval",
    "CSV_COLUMNS", "emit_report", "load_results",
]
