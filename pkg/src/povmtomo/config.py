"""Experiment configuration: JSON in, validated dataclasses out."""

import json
from dataclasses import asdict, dataclass, field

from .errors import FormatError
from .povm import POVM_IDS

STATE_KINDS = ("ghz", "tfim", "heisenberg_tri")
MODEL_KINDS = ("gru", "rbm")


@dataclass
class StateSpec:
    kind: str
    n: int = 0
    p: float = 0.0  # ghz: per-site depolarization
    j: float = 1.0  # tfim
    h: float = 1.0  # tfim
    l: int = 0  # heisenberg_tri: lattice side, n = l*l
    boundary: str = ""

    def __post_init__(self):
        if self.kind not in STATE_KINDS:
            raise FormatError(f"unknown state kind {self.kind!r}")
        if self.kind == "heisenberg_tri":
            if self.l < 2:
                raise FormatError("heisenberg_tri needs l >= 2")
            self.n = self.l * self.l
            self.boundary = self.boundary or "periodic"
        elif self.kind == "tfim":
            if self.n < 2:
                raise FormatError("tfim needs n >= 2")
            self.boundary = self.boundary or "open"
        else:
            if self.n < 2:
                raise FormatError("ghz needs n >= 2")
            if not 0.0 <= self.p <= 1.0:
                raise FormatError("ghz depolarization p must be in [0, 1]")


@dataclass
class ModelSpec:
    kind: str = "gru"
    hidden: int = 100  # gru
    n_hidden: int = 0  # rbm; default 2N chosen at build time

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise FormatError(f"unknown model kind {self.kind!r}")


@dataclass
class TrainingConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 128
    epochs: int = 10
    cd_k: int = 1
    checkpoint_every: float = 0.5  # fraction of an epoch
    n_model_avg: int = 30
    val_fraction: float = 0.1
    val_max_samples: int = 20000
    clip_norm: float = 5.0
    lr_decay: float = 1.0  # multiplicative per epoch

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.epochs, self.cd_k) < 0:
            raise FormatError("training parameters must be positive")
        if self.n_model_avg < 1:
            raise FormatError("n_model_avg must be >= 1")
        if not 0.0 < self.checkpoint_every <= float(self.epochs):
            raise FormatError("checkpoint_every must be in (0, epochs]")


@dataclass
class EvalSpec:
    n_samples: int = 100_000
    metrics: tuple = ("fc_mc",)
    correlators: str = "none"  # none | tfim | heisenberg

    def __post_init__(self):
        self.metrics = tuple(self.metrics)
        known = {"fc_mc", "fc_exact", "kl_exact", "nll", "fidelity_reconstruction"}
        for m in self.metrics:
            if m not in known:
                raise FormatError(f"unknown metric {m!r}")
        if self.correlators not in ("none", "tfim", "heisenberg"):
            raise FormatError(f"unknown correlator preset {self.correlators!r}")


@dataclass
class SweepSpec:
    n_list: tuple = ()
    ns_grid: tuple = (1000, 3000, 10_000, 30_000, 100_000, 300_000, 1_000_000)
    target_fc: float = 0.99
    eval_samples: int = 100_000
    target_steps: int = 4000  # optimizer updates per cell (epochs scale with N_s)
    max_epochs: int = 300

    def __post_init__(self):
        self.n_list = tuple(int(x) for x in self.n_list)
        self.ns_grid = tuple(int(x) for x in self.ns_grid)
        if sorted(self.ns_grid) != list(self.ns_grid):
            raise FormatError("ns_grid must be ascending")


@dataclass
class ExperimentConfig:
    state: StateSpec
    povm: str = "tetra"
    model: ModelSpec = field(default_factory=ModelSpec)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvalSpec = field(default_factory=EvalSpec)
    sweep: SweepSpec | None = None
    n_samples: int = 0  # dataset size for gen-data
    seed: int = 0

    def __post_init__(self):
        if self.povm not in POVM_IDS:
            raise FormatError(f"unknown POVM {self.povm!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.sweep is None:
            d.pop("sweep")
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            state = StateSpec(**d.pop("state"))
            model = ModelSpec(**d.pop("model", {}))
            training = TrainingConfig(**d.pop("training", {}))
            evaluation = EvalSpec(**d.pop("evaluation", {}))
            sweep = d.pop("sweep", None)
            sweep = SweepSpec(**sweep) if sweep is not None else None
            return ExperimentConfig(
                state=state, model=model, training=training, evaluation=evaluation,
                sweep=sweep, **d,
            )
        except TypeError as exc:
            raise FormatError(f"bad config: {exc}") from exc

    @staticmethod
    def load(path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            return ExperimentConfig.from_dict(json.load(f))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
