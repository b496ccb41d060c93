"""Gene-gene interaction tests with allele-matching kernels."""

from ._core import (
    NumericError,
    ValidationError,
    components_from_heritability,
    gene_kernel,
    interaction_kernel,
    interaction_test,
    overall_test,
    reml_fit,
    run_cli,
    scan,
    simulate_genotypes,
    simulate_phenotype,
)

__all__ = [
    "NumericError",
    "ValidationError",
    "components_from_heritability",
    "gene_kernel",
    "interaction_kernel",
    "interaction_test",
    "overall_test",
    "reml_fit",
    "run_cli",
    "scan",
    "simulate_genotypes",
    "simulate_phenotype",
]
