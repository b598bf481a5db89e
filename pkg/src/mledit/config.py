"""Run configuration and backend wiring shared by the CLI and the service."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigurationError
from .gateway import FixtureEmbedder, MockGenerationBackend
from .prompting import PromptMode
from .retrieval import REMOTE_CLASSIFIER, ScorerConfig

#: Normalization applied before every string comparison in the metrics;
#: recorded in report snapshots so numbers are interpretable later.
NORMALIZATION_NOTE = "casefold, whitespace collapsed, terminal sentence punctuation stripped"


@dataclass(frozen=True)
class RunConfig:
    """One evaluation run's knobs.

    Shot-count coupling: zero => shots == 0, few_mono/few_bi => shots > 0.
    ike_all accepts any shot count (its demonstrations are optional);
    passthrough takes none.
    """

    mode: PromptMode = PromptMode.FEW_BI
    shots: int = 16
    example_strategy: str = "search"
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    seed: int = 0
    concurrency: int = 1
    max_new_tokens: int = 64
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.shots < 0:
            raise ConfigurationError("shots must be >= 0")
        if self.mode in (PromptMode.ZERO, PromptMode.PASSTHROUGH) and self.shots != 0:
            raise ConfigurationError(f"{self.mode.value} runs take shots=0")
        if self.mode in (PromptMode.FEW_MONO, PromptMode.FEW_BI) and self.shots == 0:
            raise ConfigurationError(f"{self.mode.value} runs need shots > 0")
        if self.example_strategy not in ("search", "random"):
            raise ConfigurationError(f"unknown example strategy: {self.example_strategy!r}")
        if self.concurrency < 1:
            raise ConfigurationError("concurrency must be >= 1")

    def snapshot(self) -> dict:
        return {
            "mode": self.mode.value,
            "shots": self.shots,
            "example_strategy": self.example_strategy,
            "scorer": {
                "kind": self.scorer.kind,
                "threshold": self.scorer.effective_threshold,
                "pair_separator": self.scorer.pair_separator,
            },
            "seed": self.seed,
            "concurrency": self.concurrency,
            "max_new_tokens": self.max_new_tokens,
            "stop_sequences": list(self.stop_sequences),
            "normalization": NORMALIZATION_NOTE,
        }


@dataclass
class Backends:
    """The three external dependencies of a run. The scorer backend is the
    embedder for reference-cosine configs and the classifier for remote ones.
    """

    generator: object = field(default_factory=MockGenerationBackend)
    embedder: object = field(default_factory=FixtureEmbedder)
    classifier: object | None = None

    def scorer_backend(self, scorer: ScorerConfig):
        if scorer.kind == REMOTE_CLASSIFIER:
            if self.classifier is None:
                raise ConfigurationError(
                    "scorer kind remote-classifier requires a classifier backend"
                )
            return self.classifier
        if self.embedder is None:
            raise ConfigurationError("reference-cosine scoring requires an embedder")
        return self.embedder
