"""Two-stage somatic mutation model, driver-gene scores, and FDR benchmarks."""

from .domain import (
    Dataset,
    DatasetMeta,
    GeneRecord,
    InputError,
    MutationTypeTable,
    Scenario,
    ScenarioOrigin,
    StageSummary,
    load_dataset,
    load_rates,
    load_scenario,
    reference_rates_path,
    save_dataset,
    save_rates,
    save_scenario,
    summary_counts,
)
from .genmodel import GeneLogLik, loglik_gene, mle_theta, simulate_dataset
from .dpmix import (
    ElicitationError,
    MixingEstimate,
    PosteriorState,
    SpikedBaseMeasure,
    cluster_marginal_loglik,
    elicit_base_measure,
    export_scenarios,
    npmle_fit,
    posterior_driver_count,
    run_mcmc,
)
from .scores import (
    GeneScore,
    NullScoreSample,
    camp_scores,
    loglik_ratio,
    mc_pvalue,
    null_score_sample,
    pg_probability,
    score_dataset,
    tail_pvalue,
)
from .fdr import SelectionResult, bh_select, eb_select, storey_select
from .bench import (
    OperatingCharacteristics,
    RocCurve,
    bootstrap_variability,
    fit_summary_distribution,
    roc_estimate,
    run_benchmark,
)

__version__ = "0.1.0"
