"""Distance-matrix GNSS fault detection: test statistic, analytic nominal
distribution via first-order eigenvalue perturbation, and a seeded Monte
Carlo validation harness."""

from .edm import (
    DEFAULT_ORDERING,
    ORDERING_ALGEBRAIC,
    ORDERING_MAGNITUDE,
    GramSpectrum,
    SquaredDistanceMatrix,
    augment_edm,
    centering_matrix,
    edm_from_gram,
    gram_centered,
    gram_from_positions,
    matrix_to_csv,
    spectrum,
    test_statistic,
)
from .errors import (
    ConfigError,
    ConstellationSamplingError,
    DegenerateEigenvalueError,
    GeometryError,
    SpectrumError,
)
from .geometry import (
    NoiseModel,
    PseudorangeSample,
    ScenarioGeometry,
    elevation_angles,
    generate_constellation,
    load_scenario_file,
    nominal_pseudoranges,
    sample_pseudoranges,
    true_ranges,
)
from .montecarlo import (
    FiniteDifferenceAudit,
    SimulationSummary,
    TrialRecord,
    finite_difference_audit,
    inject_fault,
    run_trials,
    summarize,
)
from .perturbation import (
    DetectionThresholds,
    GramSensitivity,
    SensitivityTable,
    StatisticDistribution,
    detection_threshold,
    eigenvalue_sensitivities,
    eigenvalue_variance,
    gram_sensitivities,
    numerator_moments,
    predict_q_distribution,
    ratio_gaussian,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstellationSamplingError",
    "DEFAULT_ORDERING",
    "DegenerateEigenvalueError",
    "DetectionThresholds",
    "FiniteDifferenceAudit",
    "GeometryError",
    "GramSensitivity",
    "GramSpectrum",
    "NoiseModel",
    "ORDERING_ALGEBRAIC",
    "ORDERING_MAGNITUDE",
    "PseudorangeSample",
    "ScenarioGeometry",
    "SensitivityTable",
    "SimulationSummary",
    "SpectrumError",
    "SquaredDistanceMatrix",
    "StatisticDistribution",
    "TrialRecord",
    "augment_edm",
    "centering_matrix",
    "detection_threshold",
    "edm_from_gram",
    "eigenvalue_sensitivities",
    "eigenvalue_variance",
    "elevation_angles",
    "finite_difference_audit",
    "generate_constellation",
    "gram_centered",
    "gram_from_positions",
    "gram_sensitivities",
    "inject_fault",
    "load_scenario_file",
    "matrix_to_csv",
    "nominal_pseudoranges",
    "numerator_moments",
    "predict_q_distribution",
    "ratio_gaussian",
    "run_trials",
    "sample_pseudoranges",
    "spectrum",
    "summarize",
    "test_statistic",
    "true_ranges",
]
