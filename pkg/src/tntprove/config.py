"""Analysis settings shared by the driver and the command line."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

MODES = ("auto", "term", "nonterm")
REPORTS = ("text", "json")


@dataclass
class Config:
    mode: str = "auto"
    seed: int = 0
    bnd: int = 500
    upperbound: int = 3
    inputs: int = 100
    range: int = 300
    degree: int = 2
    k_pairs: int = 200
    timeout_secs: float = 400.0
    emit_smt_dir: Optional[str] = None
    report: str = "text"
    # knobs below have no command-line flag
    cegis_rounds: int = 10
    cex_neighbors: int = 20
    cex_radius: int = 5
    box: int = 50
    reach_box: int = 300
    sat_budget: int = 200_000
    validate_points: int = 3000
    guess_models: int = 10
    min_refine_states: int = 2
    max_conjuncts: int = 12
    step_budget: int = 10 ** 6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.report not in REPORTS:
            raise ValueError(f"report must be one of {REPORTS}")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("seed", "mode", "report", "emit_smt_dir"):
                continue
            if isinstance(v, (int, float)) and v <= 0:
                raise ValueError(f"{f.name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)
