"""
Settings management using Pydantic Settings.
Reads solver tolerances and output locations from the environment / .env file,
and defines the strict run configuration models used by the CLI.
"""
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import orjson
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings

from tableaux import get_scheme


class Settings(BaseSettings):
    """Application settings loaded from environment variables and .env file."""

    # Output location (CLI artifacts)
    output_dir: str = Field(default="./output", alias="IMEX_OUTPUT_DIR")

    # Implicit stage solves
    newton_tol: float = Field(default=1e-12, alias="IMEX_NEWTON_TOL")
    newton_max_iter: int = Field(default=50, alias="IMEX_NEWTON_MAX_ITER")

    # Finite-difference gradient oracle
    fd_eps: float = Field(default=1e-6, alias="IMEX_FD_EPS")
    fd_n_jobs: int = Field(default=1, alias="IMEX_FD_N_JOBS")

    log_level: str = Field(default="INFO", alias="IMEX_LOG_LEVEL")

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": False,
        "extra": "ignore"
    }

    def ensure_directories(self) -> None:
        """Create the output directory if it doesn't exist."""
        self.output_path.mkdir(parents=True, exist_ok=True)

    @property
    def output_path(self) -> Path:
        """Get output directory as Path object."""
        return Path(self.output_dir)


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """
    Get the global settings instance.
    Creates and initializes settings on first call.

    Returns:
        Settings: The application settings object
    """
    global _settings

    if _settings is None:
        _settings = Settings()
        _settings.ensure_directories()

    return _settings


def reload_settings() -> Settings:
    """
    Force reload of settings from environment/file.
    Useful for testing or when environment changes.

    Returns:
        Settings: The reloaded settings object
    """
    global _settings
    _settings = Settings()
    _settings.ensure_directories()
    return _settings


PROBLEMS = ("piston", "linear-model", "scalar-decay")


class PistonConfig(BaseModel):
    """Physical and discretization constants of the 1D piston benchmark (JSON file format)."""

    model_config = ConfigDict(extra="forbid")

    n_cells: int = Field(default=100, ge=2)
    gamma: float = Field(default=1.4, gt=1.0)
    rho0: float = Field(default=1.0, gt=0.0)
    p0: float = Field(default=0.4, gt=0.0)
    m_s: float = Field(default=1.0, gt=0.0)
    c_s: float = 0.0
    mu_k: float = 1.0
    u_eq: float = 0.0
    # None -> -p0 * area (piston backs onto vacuum)
    preload: Optional[float] = None
    area: float = Field(default=1.0, gt=0.0)
    rho_m: float = Field(default=1.0, gt=0.0)
    E_m: float = Field(default=1.0, gt=0.0)
    c_m: float = 0.0
    dt: float = Field(default=0.01, gt=0.0)
    T: float = 1.0
    scheme: str = "imex1"

    @field_validator("scheme")
    @classmethod
    def _known_scheme(cls, value: str) -> str:
        return get_scheme(value).name

    @property
    def preload_force(self) -> float:
        return -self.p0 * self.area if self.preload is None else self.preload


class LinearModelConfig(BaseModel):
    """Coefficients and initial data of the two-subsystem linear model problem."""

    model_config = ConfigDict(extra="forbid")

    a11: float = -1.0
    a12: float = 0.5
    a21: float = 0.5
    a22: float = -1.0
    u0: List[float] = Field(default_factory=lambda: [1.0, 0.0], min_length=2, max_length=2)
    # minimizer of the manufactured parameter-quadratic objective
    target: Optional[List[float]] = None


class RunConfig(BaseModel):
    """One CLI run: problem, scheme, time grid, parameters and output options."""

    model_config = ConfigDict(extra="forbid")

    problem: Literal["piston", "linear-model", "scalar-decay"] = "piston"
    scheme: Optional[str] = None
    dt: Optional[float] = Field(default=None, gt=0.0)
    T: Optional[float] = None
    t0: float = 0.0
    mu: Optional[List[float]] = None
    qoi: Optional[str] = None
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    output_dir: Optional[str] = None
    trajectory: str = "memory"
    piston: PistonConfig = Field(default_factory=PistonConfig)
    linear: LinearModelConfig = Field(default_factory=LinearModelConfig)

    @field_validator("scheme")
    @classmethod
    def _known_scheme(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return None
        return get_scheme(value).name

    @field_validator("trajectory")
    @classmethod
    def _backend(cls, value: str) -> str:
        if value != "memory" and not (value.startswith("file:") and len(value) > 5):
            raise ValueError("trajectory backend must be 'memory' or 'file:<path>'")
        return value

    @model_validator(mode="after")
    def _time_window(self) -> "RunConfig":
        if self.T is not None and self.T < self.t0:
            raise ValueError(f"final time T={self.T} precedes t0={self.t0}")
        return self

    def normalized(self) -> Dict[str, Any]:
        """Plain-JSON form; validates back into an equal RunConfig."""
        return self.model_dump(mode="json")

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Return a re-validated copy with non-None CLI overrides applied."""
        data = self.normalized()
        data.update({key: value for key, value in overrides.items() if value is not None})
        return RunConfig.model_validate(data)

    def resolved_output_dir(self) -> Path:
        path = Path(self.output_dir) if self.output_dir else get_settings().output_path
        path.mkdir(parents=True, exist_ok=True)
        return path


def load_run_config(path: Path) -> RunConfig:
    """
    Load a run configuration from JSON.

    A file with a "problem" key is a full RunConfig; otherwise it is read as a
    flat piston configuration (n_cells, gamma, rho0, p0, m_s, c_s, mu_k, u_eq,
    dt, T, scheme, ...).

    Args:
        path: JSON file path

    Returns:
        RunConfig: validated configuration (unknown keys rejected)
    """
    data = orjson.loads(Path(path).read_bytes())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: configuration must be a JSON object")
    if "problem" in data:
        return RunConfig.model_validate(data)

    piston = PistonConfig.model_validate(data)
    return RunConfig(
        problem="piston",
        scheme=piston.scheme,
        dt=piston.dt,
        T=piston.T,
        mu=[piston.mu_k],
        piston=piston,
    )
