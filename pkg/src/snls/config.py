"""Training configuration with declared hyperparameter grids.

Values outside the grids are rejected unless ``unsafe_override`` is
set, so experiment configs stay inside the space the protocols cover.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

LR_GRID = (1e-3, 1e-4, 5e-4)
WEIGHT_DECAY_GRID = (0.0, 1e-4)
BATCH_GRID = (128, 256, 512)
OBJECTIVES = ("clip", "unicl", "slip")
TRAIN_POLICIES = ("base_only", "random_template", "random_corpus")
KNOWLEDGE_MODES = (None, "body_parts", "movements", "both")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 0.0
    batch_size: int = 256
    epochs: int = 50
    patience: int = 5
    objective: str = "clip"
    slip_lambda: float = 1.0
    simclr_tau: float = 0.1
    train_policy: str = "base_only"
    eval_policy: str = "base"
    knowledge_mode: str | None = None
    aggregate: str = "mean"
    provider: str = "hash"
    joint_dim: int = 512
    seed: int = 0
    unsafe_override: bool = False

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.train_policy not in TRAIN_POLICIES:
            raise ValueError(f"train_policy must be one of {TRAIN_POLICIES}")
        if self.knowledge_mode not in KNOWLEDGE_MODES:
            raise ValueError(f"knowledge_mode must be one of {KNOWLEDGE_MODES}")
        if self.provider not in ("hash", "table"):
            raise ValueError("provider must be 'hash' or 'table'")
        if self.aggregate not in ("single", "mean"):
            raise ValueError("aggregate must be 'single' or 'mean'")
        if self.unsafe_override:
            return
        if self.lr not in LR_GRID:
            raise ValueError(f"lr must be in {LR_GRID} (or set unsafe_override)")
        if self.weight_decay not in WEIGHT_DECAY_GRID:
            raise ValueError(f"weight_decay must be in {WEIGHT_DECAY_GRID} (or set unsafe_override)")
        if self.batch_size not in BATCH_GRID:
            raise ValueError(f"batch_size must be in {BATCH_GRID} (or set unsafe_override)")
        if self.epochs != 50:
            raise ValueError("epochs is fixed at 50 (or set unsafe_override)")
        if self.patience != 5:
            raise ValueError("patience is fixed at 5 (or set unsafe_override)")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


# fixed settings for the unseen-activity protocol
UNSEEN_CONFIG = dict(lr=1e-4, weight_decay=0.0, batch_size=256, epochs=50)


@dataclass
class UnseenGroupPlan:
    """Disjoint activity groups, each held out in turn as unseen classes."""

    groups: list[set[str]]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for i, group in enumerate(self.groups):
            if len(group) < 2:
                raise ValueError(f"group {i} has fewer than 2 activities")
            overlap = seen & group
            if overlap:
                raise ValueError(f"activities in multiple groups: {sorted(overlap)}")
            seen |= group

    def validate_for(self, activities: set[str]) -> None:
        extra = set().union(*self.groups) - activities
        if extra:
            raise ValueError(f"plan references unknown activities: {sorted(extra)}")

    def to_json(self) -> str:
        return json.dumps({"groups": [sorted(g) for g in self.groups]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "UnseenGroupPlan":
        return cls(groups=[set(g) for g in json.loads(text)["groups"]])


def round_robin_plan(activities: list[str], num_groups: int) -> UnseenGroupPlan:
    """Deterministic plan for synthetic datasets: sorted activities dealt
    round-robin into the requested number of groups."""
    acts = sorted(activities)
    if num_groups < 1 or len(acts) < 2 * num_groups:
        raise ValueError("need at least 2 activities per group")
    groups: list[set[str]] = [set() for _ in range(num_groups)]
    for i, a in enumerate(acts):
        groups[i % num_groups].add(a)
    return UnseenGroupPlan(groups=groups)


def shipped_unseen_plan(dataset: str) -> UnseenGroupPlan:
    """The packaged unseen-activity group plan for a named public dataset."""
    from importlib import resources

    text = resources.files("snls.data").joinpath("unseen_groups.json").read_text("utf-8")
    plans = json.loads(text)
    key = dataset.strip().lower()
    if key not in plans:
        raise KeyError(f"no shipped unseen plan for {dataset!r}; have {sorted(plans)}")
    return UnseenGroupPlan(groups=[set(g) for g in plans[key]])
