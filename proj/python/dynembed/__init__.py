"""Stable spectral embedding of dynamic networks.

Thin Python layer over the C++ library. Communities and times are 0-based
here, unlike the command-line tool's files which are 1-based.
"""

from ._core import (
    DataError,
    DsbmSpec,
    Embedding,
    Error,
    GraphSeries,
    InvalidArgument,
    LatentSeries,
    MemoryBudgetError,
    ParameterError,
    __version__,
    construct_mrdpg,
    embed,
    error_covariance,
    fit_gmm,
    ingest,
    noise_free_embedding,
    procrustes,
    profile_likelihood,
    read_series,
    run_cli,
    select_dimension,
    simulate,
    spherical_coordinates,
    stability_report,
    write_series,
)

__all__ = [
    "DataError",
    "DsbmSpec",
    "Embedding",
    "Error",
    "GraphSeries",
    "InvalidArgument",
    "LatentSeries",
    "MemoryBudgetError",
    "ParameterError",
    "__version__",
    "construct_mrdpg",
    "embed",
    "error_covariance",
    "fit_gmm",
    "ingest",
    "noise_free_embedding",
    "procrustes",
    "profile_likelihood",
    "read_series",
    "run_cli",
    "select_dimension",
    "simulate",
    "spherical_coordinates",
    "stability_report",
    "write_series",
]
