"""Experiment configuration loaded from YAML."""
from __future__ import annotations
from dataclasses import asdict, dataclass, field, fields
import hashlib
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

__all__ = ["ExperimentConfig", "COEFFICIENTS", "SOURCES", "FINE_SOLVERS"]

COEFFICIENTS = ("four_channels", "constant", "raster", "irregular")
SOURCES = ("right_half", "constant", "raster")
FINE_SOLVERS = ("direct", "cg")

_FLOAT_FIELDS = ("coefficient_value", "source_value", "source_norm")
# fields that decide the offline stage of a cell
_OFFLINE_FIELDS = (
    "fine_divisions",
    "coefficient",
    "coefficient_value",
    "raster_path",
    "irregular_seed",
    "dual_seed",
    "cond_seed",
)


def _as_float(value: Any, name: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError) as err:
        raise ValueError(f"{name} must be numeric, got {value!r}") from err


@dataclass
class ExperimentConfig:
    """Sweep over coarse mesh sizes and contrasts on one fine mesh."""

    # pylint: disable=too-many-instance-attributes
    coarse_divisions: List[int] = field(default_factory=lambda: [8, 16, 32])
    fine_divisions: int = 128
    betas: List[float] = field(default_factory=lambda: [1e2, 1e4, 1e6])
    coefficient: str = "four_channels"
    coefficient_value: float = 1.0
    raster_path: Optional[str] = None
    irregular_seed: int = 0
    source: str = "right_half"
    source_value: float = 1.0
    source_raster_path: Optional[str] = None
    source_norm: float = 0.5
    dual_seed: int = 0
    cond_seed: int = 0
    threads: int = 1
    batch_size: int = 64
    fine_solver: str = "direct"
    run_ideal: bool = False
    dump_basis: bool = False
    reuse_basis: bool = False
    verify_structure: bool = False
    out_dir: str = "results"

    def __post_init__(self) -> None:
        """Coerce numeric strings and validate."""
        self.coarse_divisions = [int(value) for value in self.coarse_divisions]
        self.betas = [_as_float(value, "beta") for value in self.betas]
        for name in _FLOAT_FIELDS:
            setattr(self, name, _as_float(getattr(self, name), name))
        self.validate()

    def validate(self) -> None:
        """Raise ValueError on inconsistent settings."""
        if not self.coarse_divisions:
            raise ValueError("coarse_divisions must not be empty")
        for coarse in self.coarse_divisions:
            if coarse < 2 or self.fine_divisions % coarse or self.fine_divisions // coarse < 2:
                raise ValueError(
                    f"coarse_divisions={coarse} does not nest into fine_divisions="
                    f"{self.fine_divisions} with a refine ratio of at least 2"
                )
        if self.coefficient not in COEFFICIENTS:
            raise ValueError(
                f"Unknown coefficient {self.coefficient!r}, expected one of {COEFFICIENTS}"
            )
        if self.source not in SOURCES:
            raise ValueError(f"Unknown source {self.source!r}, expected one of {SOURCES}")
        if self.fine_solver not in FINE_SOLVERS:
            raise ValueError(
                f"Unknown fine solver {self.fine_solver!r}, expected one of {FINE_SOLVERS}"
            )
        if self.coefficient == "raster" and not self.raster_path:
            raise ValueError("coefficient 'raster' needs raster_path")
        if self.source == "raster" and not self.source_raster_path:
            raise ValueError("source 'raster' needs source_raster_path")
        if self.coefficient != "constant" and (not self.betas or min(self.betas) <= 0):
            raise ValueError("betas must be a non-empty list of positive values")
        if self.coefficient_value <= 0:
            raise ValueError(f"coefficient_value must be positive, got {self.coefficient_value}")
        if self.threads < 1 or self.batch_size < 1:
            raise ValueError("threads and batch_size must be at least 1")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ExperimentConfig":
        """Build from a mapping; unknown keys are rejected."""
        known = {item.name for item in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"Unknown config keys: {', '.join(unknown)}")
        return cls(**values)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """Load a YAML mapping of config keys."""
        try:
            with open(path, "r") as file:
                values = yaml.load(file, yaml.FullLoader)
        except FileNotFoundError:
            raise FileNotFoundError(f"Config file not found at: {path}")
        if values is None:
            values = {}
        if not isinstance(values, dict):
            raise ValueError(f"Config file {path} must hold a mapping")
        return cls.from_dict(values)

    def cell_betas(self) -> List[float]:
        """Contrast values swept; a constant coefficient has only its own value."""
        if self.coefficient == "constant":
            return [self.coefficient_value]
        return list(self.betas)

    def to_yaml(self) -> str:
        """Every field, defaults included."""
        return yaml.safe_dump(asdict(self), sort_keys=False)

    def dump(self, path: Union[str, Path]) -> Path:
        """Write the resolved configuration."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_yaml())
        return path

    def fingerprint(self, beta: float, coarse: int) -> str:
        """SHA-256 over everything that determines the offline stage of one cell."""
        payload = {name: getattr(self, name) for name in _OFFLINE_FIELDS}
        payload.update(beta=float(beta), coarse_divisions=int(coarse))
        return hashlib.sha256(yaml.safe_dump(payload, sort_keys=True).encode()).hexdigest()
