"""Budgeted pipeline selection via low-rank models of pipeline performance.

Offline, a corpus of (dataset x pipeline) cross-validation errors is
completed and factorized into pipeline embeddings and runtime predictors.
Online, a new dataset gets an informative, affordable set of pipelines to
try (greedy D-optimal design), its embedding is estimated from those
observations, every pipeline's error is predicted, and the best few are
kept as an ensemble, with time targets doubling under a hard runtime
budget.
"""

from .completion import (CompletionResult, EmMatrixCompleter, EmTuckerCompleter,
                         em_matrix, em_tucker, relative_error)
from .design import (DesignPool, DesignState, add_to_design, design_payoff,
                     estimate_pipeline_variances, greedy_size_constrained,
                     greedy_time_constrained, init_design, qr_init, select_design,
                     select_design_weighted)
from .factorization import (EmbeddingModel, PcaFactors, TuckerFactors, pca_factorize,
                            pipeline_embeddings, rank_from_energy, tucker_decompose)
from .kernel_completion import (KernelizedCompleter, KfmcModel, kfmc_fit,
                                kfmc_gradients, kfmc_objective,
                                kfmc_predict_new_column, kfmc_predict_new_row)
from .runtime import (RuntimeModel, fit_runtime_models, runtime_features,
                      within_factor_accuracy)
from .selection import (ArrayOracle, RoundLog, SelectionConfig, SelectionContext,
                        SelectionReport, estimate_embedding, fit_one_round,
                        majority_vote, predict_errors, run_online)
from .synth import (LooFold, RegretCurve, SyntheticCorpus, SyntheticSpec,
                    censor_by_runtime, censor_uniform, compare_completion_methods,
                    evaluate_loo, generate_synthetic, generate_union_of_quadratics)
from .tensors import (ObservedTensor, dof_counts, fold, frobenius_norm, matricize,
                      mode_product, multi_mode_product)

__version__ = "0.1.0"

__all__ = [
    "ArrayOracle", "CompletionResult", "DesignPool", "DesignState",
    "EmMatrixCompleter", "EmTuckerCompleter", "EmbeddingModel", "KernelizedCompleter",
    "KfmcModel", "LooFold", "ObservedTensor", "PcaFactors", "RegretCurve",
    "RoundLog", "RuntimeModel", "SelectionConfig", "SelectionContext",
    "SelectionReport", "SyntheticCorpus", "SyntheticSpec", "TuckerFactors",
    "add_to_design", "censor_by_runtime", "censor_uniform",
    "compare_completion_methods", "design_payoff", "dof_counts", "em_matrix",
    "em_tucker", "estimate_embedding", "estimate_pipeline_variances",
    "evaluate_loo", "fit_one_round", "fit_runtime_models", "fold",
    "frobenius_norm", "generate_synthetic", "generate_union_of_quadratics",
    "greedy_size_constrained", "greedy_time_constrained", "init_design",
    "kfmc_fit", "kfmc_gradients", "kfmc_objective", "kfmc_predict_new_column",
    "kfmc_predict_new_row", "majority_vote", "matricize", "mode_product",
    "multi_mode_product", "pca_factorize", "pipeline_embeddings",
    "predict_errors", "qr_init", "rank_from_energy", "relative_error",
    "run_online", "runtime_features", "select_design", "select_design_weighted",
    "tucker_decompose", "within_factor_accuracy",
]
