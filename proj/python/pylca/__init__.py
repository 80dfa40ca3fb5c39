"""Local component analysis: learned Parzen-window metrics, Gauss-Parzen
product models and their stochastic variants."""

from ._core import (
    CovarianceStructure,
    DataError,
    FitConfig,
    GaussParzenModel,
    MetricModel,
    NumericalError,
    SplitResult,
    StochasticConfig,
    clustering_accuracy,
    deserialize,
    e_step,
    fit,
    fit_gauss,
    fit_gauss_red,
    fit_stochastic,
    fit_stochastic_gauss,
    generate,
    gp_nll,
    jensen_bound,
    loo_nll,
    m_step,
    serialize,
    set_num_threads,
    spectral_cluster,
    split_solve,
    transform,
)

__all__ = [name for name in dir() if not name.startswith("_")]
