"""Paired image translation with calibrated per-voxel uncertainty.

Thin re-export of the native module: scalar numerics, recalibration maps,
evaluation metrics, the phantom generator, volume I/O and the pipeline
commands (gen-data, train, predict, calibrate, evaluate).
"""

from bcgan._core import (
    CalibrationMap,
    ConfigError,
    PipelineError,
    bernoulli_entropy,
    calibrated_interval,
    calibration_curve,
    concrete_gate,
    concrete_regularizer,
    default_recalls,
    fit_calibration,
    generate_phantom,
    load_calibration,
    normal_cdf,
    normal_quantile,
    nrmse,
    nstd,
    paired_ttest,
    read_posterior,
    read_rvol,
    rmse,
    run_calibrate,
    run_evaluate,
    run_gen_data,
    run_predict,
    run_train,
    save_calibration,
    sparsification_curve,
    student_t_pvalue,
    write_rvol,
)

__all__ = [
    "CalibrationMap",
    "ConfigError",
    "PipelineError",
    "bernoulli_entropy",
    "calibrated_interval",
    "calibration_curve",
    "concrete_gate",
    "concrete_regularizer",
    "default_recalls",
    "fit_calibration",
    "generate_phantom",
    "load_calibration",
    "normal_cdf",
    "normal_quantile",
    "nrmse",
    "nstd",
    "paired_ttest",
    "read_posterior",
    "read_rvol",
    "rmse",
    "run_calibrate",
    "run_evaluate",
    "run_gen_data",
    "run_predict",
    "run_train",
    "save_calibration",
    "sparsification_curve",
    "student_t_pvalue",
    "write_rvol",
]

__version__ = "0.1.0"
