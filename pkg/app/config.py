from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Averaging kernel (p vanishing moments, C^q smoothness)
    kernel_p: int = 3
    kernel_q: int = 6

    # Micro solver
    micro_cfl: float = 0.5
    pts_per_eps: int = 32
    # "staggered" samples A grad(u) on edges, "nodal" at nodes with central differences
    flux_sampling: str = "staggered"

    # Macro solver
    macro_cfl: float = 0.5

    # Cell problems
    cell_n_1d: int = 256
    cell_n_2d: int = 128
    cell_tol: float = 1e-10
    cell_max_iter: int = 200_000

    # Catalog "constant" coefficient value
    constant_coefficient: float = 1.0

    # Harness
    error_floor: float = 1e-11
    rate_residual_flag: float = 0.5
    jobs: int = 1
    output_dir: str = "results"
    log_level: str = "INFO"

    model_config = {"env_prefix": "HMMWAVE_", "env_file": ".env", "env_file_encoding": "utf-8"}


settings = Settings()
