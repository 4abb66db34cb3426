from dataclasses import dataclass


@dataclass(frozen=True)
class SuspectBlock:
    name: str
    columns: tuple


@dataclass(frozen=True)
class AnalysisSettings:
    """A validated analysis configuration (see AnalysisConfigSerializer)."""
    input: str
    outcome: str
    regressors: tuple
    baseline: tuple
    suspect_blocks: tuple
    targets: tuple
    candidate_mode: str
    add_constant: bool
    alpha: float
    delta: float
    draws_J: int
    seed: int
    output: str
    format: str

    @property
    def suspect_columns(self):
        return tuple(column for block in self.suspect_blocks for column in block.columns)
