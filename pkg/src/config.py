"""
Configuration settings for the packing toolkit.

This module defines all numerical tolerances and campaign defaults using
Pydantic BaseSettings. Every field can be overridden by an environment
variable of the same name (case-insensitive) or through a `.env` file.
"""

import os
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Toolkit settings loaded from environment variables.

    Defaults match the tolerances the solvers and the Monte Carlo harness
    are tested with; overriding them is meant for experiments, not for
    production runs.
    """

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    # Absolute tolerance for Σ s_ij x_i ≤ c_j checks
    feasibility_tol: float = Field(default=1e-9)
    # Tolerance when checking that a caller-supplied x lies in an LP polytope
    x_feasibility_tol: float = Field(default=1e-7)

    # Simplex tolerances
    lp_pivot_tol: float = Field(default=1e-10)
    lp_optimality_tol: float = Field(default=1e-9)
    lp_max_iterations: int = Field(default=50_000)
    # Bland's rule is engaged after factor * (rows + cols) degenerate pivots in a row
    bland_trigger_factor: int = Field(default=5)

    # Items with s_ij strictly above this are big for constraint j
    big_item_threshold: float = Field(default=0.5)

    # Sigma multiplier for Monte Carlo acceptance and Wilson bounds
    confidence_z: float = Field(default=3.0)
    # Items sampled fewer times are left out of empirical retention minima
    retention_min_samples: int = Field(default=100)

    # Trials are drawn in fixed-size blocks, one random stream per block
    trial_block_size: int = Field(default=4096)
    threads: Optional[int] = Field(default=None)

    # CI_DETERMINISTIC=1 makes --seed mandatory on randomized commands
    ci_deterministic: bool = Field(default=False)

    # Exact oracle limits
    exact_exhaustive_max_items: int = Field(default=24)
    exact_bnb_max_items: int = Field(default=40)
    multilinear_exact_max_n: int = Field(default=25)
    # Exhaustive alteration-monotonicity check enumerates 2^n subsets
    monotone_check_max_n: int = Field(default=16)

    # Continuous greedy defaults
    greedy_exact_max_n: int = Field(default=20)
    greedy_min_steps: int = Field(default=100)
    greedy_samples: int = Field(default=200)

    # Guard for the general-B gap family, m = C(n, t+1)
    gap_b_max_constraints: int = Field(default=1_000_000)

    results_db_path: str = Field(default="pip_results.duckdb")

    @field_validator(
        "feasibility_tol",
        "x_feasibility_tol",
        "lp_pivot_tol",
        "lp_optimality_tol",
        "confidence_z",
        mode="after",
    )
    @classmethod
    def check_positive_float(cls, v: float) -> float:
        """Tolerances and sigma multipliers must be strictly positive."""
        if v <= 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    @field_validator(
        "lp_max_iterations",
        "bland_trigger_factor",
        "trial_block_size",
        "retention_min_samples",
        "exact_exhaustive_max_items",
        "exact_bnb_max_items",
        "multilinear_exact_max_n",
        "monotone_check_max_n",
        "greedy_min_steps",
        "greedy_samples",
        "gap_b_max_constraints",
        mode="after",
    )
    @classmethod
    def check_positive_int(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"must be at least 1, got {v}")
        return v

    @field_validator("threads", mode="after")
    @classmethod
    def check_threads(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError(f"threads must be at least 1, got {v}")
        return v

    def resolve_threads(self) -> int:
        """
        Get the worker pool size for trial fan-out.

        Returns:
            int: `threads` when set, otherwise the number of logical cores
        """
        return self.threads or os.cpu_count() or 1


# Create a global settings instance that loads configuration on import
settings = Settings()
