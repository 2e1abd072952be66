from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit configuration settings."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="RTP_",
        case_sensitive=False,
        extra="ignore",
    )

    # Execution
    workers: int = 1
    chunk_size: int = 256  # replicas per worker task

    # Monte Carlo budgets
    replicas: int = 10_000
    pilot_replicas: int = 32
    hitting_replicas: int = 100_000
    tv_replicas: int = 2_000

    # Discretization
    occupation_bins: int = 50
    w1_bins_per_sigma: int = 1000
    w1_max_atoms_per_sigma: int = 2000

    # Numerical tolerances
    boundary_tolerance: float = 1e-12  # relative to ell
    stationary_residual_tolerance: float = 1e-12  # relative to the largest rate
    direct_solve_limit: int = 100_000
    power_iteration_max_sweeps: int = 2_000_000
    max_event_time: float = 1e7
    coupling_horizon_scales: float = 400.0  # mixing runs stop at this multiple of the time scale

    # Output
    output_dir: str = "results"
    log_level: str = "INFO"
    log_format: str = "console"  # console, json

    # Development
    debug: Optional[str] = None


settings = Settings()
