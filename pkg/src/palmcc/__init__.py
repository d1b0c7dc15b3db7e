"""Palmprint competitive-coding toolkit.

Orientation coding with a zero-DC Gabor bank, class-specific masked
matching with an exponential difference mapping, a synthetic palm
generator with ground truth, a statistics workbench for difference
fields, and a ROC/EER/FRR evaluation harness.
"""

from .coding import (
    CompetitiveCode,
    PalmLineMask,
    Template,
    competitive_code,
    encode_template,
    orientation_responses,
    palm_line_mask,
)
from .errors import PalmccError
from .evaluation import (
    BenchmarkConfig,
    EvalReport,
    PairPlan,
    ROCCurve,
    eer,
    frr_at_far,
    plan_pairs,
    roc,
    run_benchmark,
)
from .filterbank import (
    FilterBank,
    FilterParams,
    GaborFilter,
    LineModel,
    convolve,
    make_bank,
    make_gabor,
    predicted_line_response,
    zero_dc,
)
from .matching import (
    MatchDifference,
    MatchScore,
    METHODS,
    aligned_distance,
    angular_difference,
    compcode_distance,
    cscc_distance,
)
from .stats import (
    CodingScheme,
    DecidabilityReport,
    FieldStatistics,
    FisherWeightReport,
    StationarityReport,
    decidability,
    empirical_covariance,
    empirical_mean_field,
    exhaustive_code_pair_pmf,
    fisher_weight,
    ideal_coding_dprime,
    ideal_dprime_bound,
    impostor_difference_pmf,
    optimal_coding_search,
    stationarity_score,
)
from .store import (
    Manifest,
    load_image,
    load_template,
    parse_manifest,
    save_image,
    save_template,
)
from .synth import (
    PairJitter,
    SynthConfig,
    SynthSample,
    generate_genuine_pair,
    generate_palm,
    generate_sample_set,
    render_line,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
