"""Run configuration: TOML file, dotted ``key=value`` overrides, validation."""

import copy
import json
import sys
from dataclasses import asdict, dataclass, field, fields

from ._validation import check_float, check_int
from .data import HOLDOUT, OFFICIAL
from .exceptions import ConfigurationError
from .fitness import NON_VERIFIABLE, TASK_KINDS, VERIFIABLE, JudgeWeights
from .space import DECODING_FIELDS, UPDATE_STRATEGIES, LeaderWeights, SamplingPolicy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PROVIDER_KINDS = ("mock", "scripted", "http")


@dataclass
class GwoSettings:
    n: int = 5
    K: int = 10
    m: int = 3
    batch_size: int = 16
    update: str = "weighted-average"
    sigma: float = 0.1
    leader_weights: list | None = None
    seed: int = 0
    per_agent_batches: bool = False
    adapt_prompts: bool = True


@dataclass
class FitnessSettings:
    mode: str = VERIFIABLE
    judge: bool = False
    judge_weights: list = field(default_factory=lambda: [0.5, 0.2, 0.3])
    judge_seeds: list = field(default_factory=lambda: [0, 1, 2])


@dataclass
class ProviderSettings:
    kind: str = "mock"
    base_url: str | None = None
    agent_model: str = "mock-agent"
    judge_model: str = "mock-judge"
    editor_model: str = "mock-editor"
    max_concurrency: int = 8
    max_attempts: int = 5
    judge_temperature: float = 0.0
    editor_temperature: float = 0.7
    landscape_peak: dict = field(default_factory=lambda: {"temperature": 0.6})
    landscape_width: float = 0.2
    transcript: str | None = None
    trace_llm: bool = False


@dataclass
class DataSettings:
    path: str | None = None
    test_path: str | None = None
    split: str = HOLDOUT
    split_seed: int = 0
    synthetic_size: int = 100
    task_kind: str = "numeric"


@dataclass
class PromptSettings:
    pool_path: str | None = None
    instruction_path: str | None = None


_SECTIONS = {
    "gwo": GwoSettings,
    "fitness": FitnessSettings,
    "provider": ProviderSettings,
    "data": DataSettings,
    "prompts": PromptSettings,
}


@dataclass
class RunConfig:
    gwo: GwoSettings = field(default_factory=GwoSettings)
    sampling: SamplingPolicy = field(default_factory=SamplingPolicy)
    fitness: FitnessSettings = field(default_factory=FitnessSettings)
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    data: DataSettings = field(default_factory=DataSettings)
    prompts: PromptSettings = field(default_factory=PromptSettings)

    def __post_init__(self):
        self.validate()

    @property
    def leader_weights(self):
        if self.gwo.leader_weights is None:
            return LeaderWeights.default(self.gwo.m)
        return LeaderWeights(tuple(self.gwo.leader_weights))

    @property
    def judge_weights(self):
        return JudgeWeights(*self.fitness.judge_weights)

    def validate(self):
        g = self.gwo
        check_int(g.K, "gwo.K", min_val=1)
        check_int(g.m, "gwo.m", min_val=1)
        check_int(g.n, "gwo.n", min_val=1)
        if g.n < g.m:
            raise ConfigurationError(f"n >= m required (n={g.n}, m={g.m})")
        check_int(g.batch_size, "gwo.batch_size", min_val=1)
        check_float(g.sigma, "gwo.sigma", min_val=0.0)
        if g.update not in UPDATE_STRATEGIES:
            raise ConfigurationError(
                f"gwo.update must be one of {UPDATE_STRATEGIES}, got {g.update!r}")
        if len(self.leader_weights) != g.m:
            raise ConfigurationError(
                f"gwo.leader_weights has {len(self.leader_weights)} entries for m={g.m}")
        f = self.fitness
        if f.mode not in (VERIFIABLE, NON_VERIFIABLE):
            raise ConfigurationError(f"unknown fitness.mode {f.mode!r}")
        if f.mode == NON_VERIFIABLE and not f.judge:
            raise ConfigurationError("non-verifiable fitness requires fitness.judge = true")
        if len(f.judge_seeds) != 3:
            raise ConfigurationError("fitness.judge_seeds must list exactly 3 seeds")
        self.judge_weights  # noqa: B018 - validates
        p = self.provider
        if p.kind not in PROVIDER_KINDS:
            raise ConfigurationError(f"provider.kind must be one of {PROVIDER_KINDS}")
        if p.kind == "scripted" and not p.transcript:
            raise ConfigurationError("scripted provider needs provider.transcript")
        check_int(p.max_concurrency, "provider.max_concurrency", min_val=1)
        check_int(p.max_attempts, "provider.max_attempts", min_val=1)
        d = self.data
        if d.split not in (HOLDOUT, OFFICIAL):
            raise ConfigurationError(f"unknown data.split {d.split!r}")
        if d.split == OFFICIAL and not (d.path and d.test_path):
            raise ConfigurationError("official split needs data.path and data.test_path")
        if d.task_kind not in TASK_KINDS:
            raise ConfigurationError(f"unknown data.task_kind {d.task_kind!r}")

    def to_dict(self):
        out = {name: asdict(getattr(self, name)) for name in _SECTIONS}
        out["sampling"] = self.sampling.to_dict()
        return out

    @classmethod
    def from_dict(cls, data):
        data = copy.deepcopy(data or {})
        unknown = set(data) - set(_SECTIONS) - {"sampling"}
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            values = data.get(name, {})
            allowed = {f.name for f in fields(section_cls)}
            bad = set(values) - allowed
            if bad:
                raise ConfigurationError(f"unknown keys in [{name}]: {sorted(bad)}")
            kwargs[name] = section_cls(**values)
        if "sampling" in data:
            merged = SamplingPolicy().to_dict()
            for key, value in data["sampling"].items():
                if key in merged and key != "max_tokens" and isinstance(value, dict):
                    merged[key].update(value)
                else:
                    merged[key] = value
            extra = set(merged) - set(DECODING_FIELDS)
            if extra:
                raise ConfigurationError(f"unknown keys in [sampling]: {sorted(extra)}")
            try:
                kwargs["sampling"] = SamplingPolicy.from_dict(merged)
            except TypeError as exc:
                raise ConfigurationError(f"bad [sampling] section: {exc}") from exc
        return cls(**kwargs)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_override(text):
    """``"gwo.seed=7"`` -> ``(["gwo", "seed"], 7)``; values are read as TOML."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigurationError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return path, value


def apply_overrides(data, overrides):
    data = copy.deepcopy(data)
    for text in overrides or ():
        path, value = parse_override(text)
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {text!r} descends into a non-table value")
        node[path[-1]] = value
    return data


def load_config(path=None, overrides=()):
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigurationError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
    return RunConfig.from_dict(apply_overrides(data, overrides))
