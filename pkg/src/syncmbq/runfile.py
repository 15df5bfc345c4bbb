"""JSON run files: environment, trainer settings, seeds and evaluation.

Example::

    {
      "environment": {"name": "taxi", "params": {}},
      "algorithm": "syncmbq",
      "trainer": {"step_size": 0.1, "discount": 0.9, "total_episodes": 300},
      "sampler": {"mode": "epsilon_greedy", "epsilon": 0.1},
      "seeds": [0, 1, 2],
      "evaluation": {"episodes": 2000, "max_episode_len": 200},
      "output_dir": "runs/taxi",
      "moving_average_window": 20
    }

Environment names: ``taxi``, ``frozenlake8x8``, ``random`` (alias
``random_mdp``; params ``num_states``, ``num_actions``, ``seed``) and
``mdp_file`` (param ``path``).
The trainer discount is applied to the environment. An iid sampler takes
``"distribution": "uniform"`` or an explicit list over flattened pairs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from syncmbq.envs import ENVIRONMENTS, EpisodicEnv, SamplerSpec, make_env, random_mdp
from syncmbq.learner import TrainerConfig
from syncmbq.mdp import TabularMdp, load_mdp

ENV_NAMES = tuple(sorted(ENVIRONMENTS)) + ("mdp_file", "random", "random_mdp")
DEFAULT_EVAL_LEN = {"taxi": 200, "frozenlake8x8": 400}
TRAINER_KEYS = ("step_size", "discount", "warmup_steps", "total_steps", "total_episodes", "q_init", "log_stride", "delta")


class RunFileError(ValueError):
    pass


@dataclass
class EnvSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in ENV_NAMES:
            raise RunFileError(f"unknown environment {self.name!r}; choose from {ENV_NAMES}")

    @property
    def episodic(self) -> bool:
        return self.name in ENVIRONMENTS

    def build(self, discount: float) -> TabularMdp | EpisodicEnv:
        p = dict(self.params)
        if self.name in ("random", "random_mdp"):
            try:
                return random_mdp(int(p["num_states"]), int(p["num_actions"]), int(p.get("seed", 0)), discount)
            except KeyError as exc:
                raise RunFileError(f"{self.name} needs parameter {exc.args[0]!r}") from None
        if self.name == "mdp_file":
            if "path" not in p:
                raise RunFileError("mdp_file needs parameter 'path'")
            mdp = load_mdp(p["path"])
            if abs(mdp.discount - discount) > 1e-15:
                raise RunFileError(f"trainer discount {discount} differs from the file's {mdp.discount}")
            return mdp
        return make_env(self.name, discount=discount, **p)


@dataclass
class EvalSpec:
    episodes: int = 2000
    max_episode_len: int | None = None
    seed_offset: int = 10_000

    def __post_init__(self):
        if self.episodes < 1:
            raise RunFileError(f"evaluation episodes must be >= 1, got {self.episodes}")
        if self.max_episode_len is not None and self.max_episode_len < 1:
            raise RunFileError(f"max_episode_len must be >= 1, got {self.max_episode_len}")


@dataclass
class RunFile:
    environment: EnvSpec
    trainer: dict
    sampler: dict
    seeds: list[int]
    algorithm: str = "syncmbq"
    evaluation: EvalSpec = field(default_factory=EvalSpec)
    output_dir: str = "runs"
    moving_average_window: int = 100

    def __post_init__(self):
        if not self.seeds:
            raise RunFileError("seeds must be a non-empty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise RunFileError("seeds must be distinct")
        self.seeds = [int(s) for s in self.seeds]
        if self.moving_average_window < 1:
            raise RunFileError(f"moving_average_window must be >= 1, got {self.moving_average_window}")
        unknown = set(self.trainer) - set(TRAINER_KEYS)
        if unknown:
            raise RunFileError(f"unknown trainer fields {sorted(unknown)}")
        if "step_size" not in self.trainer:
            raise RunFileError("trainer.step_size is required")
        self.trainer_config(self.seeds[0])  # surface validation errors early

    @property
    def discount(self) -> float:
        return float(self.trainer.get("discount", 0.9))

    def build_source(self) -> TabularMdp | EpisodicEnv:
        return self.environment.build(self.discount)

    def sampler_spec(self, seed: int, num_pairs: int | None = None) -> SamplerSpec:
        sp = dict(self.sampler)
        mode = sp.pop("mode", "epsilon_greedy" if self.environment.episodic else "iid")
        dist = sp.pop("distribution", None)
        if mode == "iid":
            if dist is None or dist == "uniform":
                n = num_pairs if num_pairs is not None else self._num_pairs()
                dist = np.full(n, 1.0 / n)
            else:
                dist = np.asarray(dist, dtype=float)
        unknown = set(sp) - {"epsilon", "tie_break"}
        if unknown:
            raise RunFileError(f"unknown sampler fields {sorted(unknown)}")
        return SamplerSpec(mode, dist, seed=seed, **sp)

    def _num_pairs(self) -> int:
        src = self.build_source()
        return src.num_pairs if isinstance(src, TabularMdp) else src.num_states * src.num_actions

    def trainer_config(self, seed: int, num_pairs: int | None = None) -> TrainerConfig:
        try:
            return TrainerConfig(
                sampler=self.sampler_spec(seed, num_pairs), algorithm=self.algorithm, **self.trainer
            )
        except TypeError as exc:
            raise RunFileError(str(exc)) from None

    def eval_len(self) -> int:
        if self.evaluation.max_episode_len is not None:
            return self.evaluation.max_episode_len
        return DEFAULT_EVAL_LEN.get(self.environment.name, 200)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunFile":
        if not isinstance(doc, dict):
            raise RunFileError("run file must be a JSON object")
        known = {"environment", "trainer", "sampler", "seeds", "algorithm", "evaluation", "output_dir",
                 "moving_average_window"}
        unknown = set(doc) - known
        if unknown:
            raise RunFileError(f"unknown run-file fields {sorted(unknown)}")
        try:
            env = doc["environment"]
            return cls(
                environment=EnvSpec(env["name"], dict(env.get("params", {}))),
                trainer=dict(doc["trainer"]),
                sampler=dict(doc.get("sampler", {})),
                seeds=list(doc["seeds"]),
                algorithm=doc.get("algorithm", "syncmbq"),
                evaluation=EvalSpec(**doc.get("evaluation", {})),
                output_dir=doc.get("output_dir", "runs"),
                moving_average_window=int(doc.get("moving_average_window", 100)),
            )
        except KeyError as exc:
            raise RunFileError(f"run file is missing field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise RunFileError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "RunFile":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise RunFileError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)


def parse_seeds(text: str) -> list[int]:
    """Parse ``"0-4,7,9"`` into ``[0, 1, 2, 3, 4, 7, 9]``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise RunFileError(f"empty seed range {part!r}")
            seeds.extend(range(lo_i, hi_i + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise RunFileError("seed list is empty")
    return seeds
