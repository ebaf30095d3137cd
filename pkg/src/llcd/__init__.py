"""Log-likelihood change detection on multivariate datastreams.

The package builds density models (Gaussian and Gaussian mixture), generates
changes of calibrated symmetric-KL magnitude, monitors the log-likelihood
with two-window hypothesis tests, and runs the power/variance experiments
that exhibit how detectability degrades as the data dimension grows.
"""

from .changegen import (
    ChangeSpec,
    generate_change,
    load_change,
    random_unit_vector,
    rotation_sequence,
    save_change,
    select_rotation,
    solve_translation_gaussian,
    solve_translation_mc,
)
from .divergence import (
    DivergenceEstimate,
    skl_gaussian_transform,
    skl_monte_carlo,
    transform_model,
)
from .models import (
    GaussianMixtureModel,
    GaussianModel,
    as_data_matrix,
    evaluate_log_likelihood,
    fit_gaussian,
    fit_gmm_em,
    load_data_csv,
    load_model,
    random_gaussian,
    random_mixture,
    save_data_csv,
    save_model,
    select_k_cv,
)
from .stats_tests import (
    TestOutcome,
    lepage_test,
    mann_whitney_standardized,
    mood_standardized,
    snr_of_change,
    welch_t_one_sided,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "GaussianModel",
    "GaussianMixtureModel",
    "as_data_matrix",
    "load_data_csv",
    "save_data_csv",
    "fit_gaussian",
    "fit_gmm_em",
    "select_k_cv",
    "random_gaussian",
    "random_mixture",
    "evaluate_log_likelihood",
    "save_model",
    "load_model",
    "DivergenceEstimate",
    "skl_gaussian_transform",
    "skl_monte_carlo",
    "transform_model",
    "ChangeSpec",
    "rotation_sequence",
    "select_rotation",
    "random_unit_vector",
    "solve_translation_gaussian",
    "solve_translation_mc",
    "generate_change",
    "save_change",
    "load_change",
    "TestOutcome",
    "welch_t_one_sided",
    "mann_whitney_standardized",
    "mood_standardized",
    "lepage_test",
    "snr_of_change",
]
