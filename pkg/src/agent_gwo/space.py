"""Agent search space: decoding hyperparameters, prompt templates, leader updates."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_float, check_interval, check_weights
from .exceptions import ConfigurationError

CONTINUOUS_FIELDS = ("temperature", "top_p", "frequency_penalty", "presence_penalty")
DECODING_FIELDS = CONTINUOUS_FIELDS + ("max_tokens",)

QUESTION_PLACEHOLDER = "{question}"

UPDATE_STRATEGIES = ("weighted-average", "single-leader")


def clip(x, interval):
    """``max(a, min(x, b))`` for ``interval = (a, b)``."""
    a, b = interval
    if a > b:
        raise ConfigurationError(f"invalid interval [{a}, {b}]")
    return max(a, min(x, b))


@dataclass(frozen=True)
class DecodingConfig:
    temperature: float
    top_p: float
    frequency_penalty: float
    presence_penalty: float
    max_tokens: int

    def to_dict(self):
        return {name: getattr(self, name) for name in DECODING_FIELDS}

    @classmethod
    def from_dict(cls, data):
        missing = [k for k in DECODING_FIELDS if k not in data]
        if missing:
            raise ConfigurationError(f"decoding config missing fields: {missing}")
        return cls(
            temperature=float(data["temperature"]),
            top_p=float(data["top_p"]),
            frequency_penalty=float(data["frequency_penalty"]),
            presence_penalty=float(data["presence_penalty"]),
            max_tokens=int(data["max_tokens"]),
        )


@dataclass(frozen=True)
class FieldPolicy:
    """Gaussian sampling rule ``N(mean, std**2)`` clipped to ``[low, high]``."""

    mean: float
    std: float
    low: float
    high: float

    def __post_init__(self):
        check_interval(self.low, self.high)
        check_float(self.std, "std", min_val=0.0)
        if not self.low <= self.mean <= self.high:
            raise ConfigurationError(
                f"mean {self.mean} outside clip interval [{self.low}, {self.high}]"
            )

    @property
    def interval(self):
        return (self.low, self.high)


@dataclass(frozen=True)
class MaxTokensPolicy:
    """Either a fixed length or a uniform draw from a discrete set of lengths."""

    choices: tuple = tuple(range(1274, 1525))
    fixed: int | None = None

    def __post_init__(self):
        if self.fixed is not None:
            if int(self.fixed) < 1:
                raise ConfigurationError(f"fixed max_tokens must be positive, got {self.fixed}")
            return
        choices = tuple(sorted({int(c) for c in self.choices}))
        if not choices:
            raise ConfigurationError("max_tokens choice set is empty")
        if choices[0] < 1:
            raise ConfigurationError("max_tokens choices must be positive")
        object.__setattr__(self, "choices", choices)

    @classmethod
    def from_range(cls, low, high):
        return cls(choices=tuple(range(int(low), int(high) + 1)))

    def sample(self, rng):
        if self.fixed is not None:
            return int(self.fixed)
        return int(self.choices[rng.integers(len(self.choices))])

    def snap(self, value):
        """Nearest admissible length; exact midpoints go to the larger value."""
        if self.fixed is not None:
            return int(self.fixed)
        choices = np.asarray(self.choices, dtype=float)
        dist = np.abs(choices - value)
        best = dist.min()
        # tolerance so that e.g. 1300.5 computed as 1300.4999999 still ties up
        near = np.flatnonzero(dist <= best + 1e-9)
        return int(self.choices[near[-1]])

    def contains(self, value):
        if self.fixed is not None:
            return value == self.fixed
        return value in self.choices

    def to_dict(self):
        if self.fixed is not None:
            return {"fixed": int(self.fixed)}
        lo, hi = self.choices[0], self.choices[-1]
        if len(self.choices) == hi - lo + 1:
            return {"range": [lo, hi]}
        return {"choices": list(self.choices)}

    @classmethod
    def from_dict(cls, data):
        if "fixed" in data:
            return cls(fixed=int(data["fixed"]))
        if "range" in data:
            return cls.from_range(*data["range"])
        return cls(choices=tuple(data["choices"]))


def _default_field(low, high):
    return field(default_factory=lambda: FieldPolicy(0.6, 0.1, low, high))


@dataclass(frozen=True)
class SamplingPolicy:
    """Per-field sampling rules; defaults are the mean 0.6 / std 0.1 baselines."""

    temperature: FieldPolicy = _default_field(0.0, 1.0)
    top_p: FieldPolicy = _default_field(0.05, 1.0)
    frequency_penalty: FieldPolicy = _default_field(-2.0, 2.0)
    presence_penalty: FieldPolicy = _default_field(-2.0, 2.0)
    max_tokens: MaxTokensPolicy = field(default_factory=MaxTokensPolicy)

    def __post_init__(self):
        if self.top_p.low <= 0.0 or self.top_p.high > 1.0:
            raise ConfigurationError("top_p clip interval must lie within (0, 1]")

    def field_policy(self, name):
        return getattr(self, name)

    def contains(self, config):
        """True when every field of ``config`` satisfies this policy's bounds."""
        for name in CONTINUOUS_FIELDS:
            fp = self.field_policy(name)
            v = getattr(config, name)
            if not (fp.low <= v <= fp.high):
                return False
        return self.max_tokens.contains(config.max_tokens)

    def with_std(self, std):
        """Copy with every continuous field's std replaced."""
        kw = {name: replace(self.field_policy(name), std=std) for name in CONTINUOUS_FIELDS}
        return replace(self, **kw)

    def to_dict(self):
        out = {
            name: {
                "mean": fp.mean, "std": fp.std, "low": fp.low, "high": fp.high,
            }
            for name in CONTINUOUS_FIELDS
            for fp in [self.field_policy(name)]
        }
        out["max_tokens"] = self.max_tokens.to_dict()
        return out

    @classmethod
    def from_dict(cls, data):
        kw = {name: FieldPolicy(**data[name]) for name in CONTINUOUS_FIELDS if name in data}
        if "max_tokens" in data:
            kw["max_tokens"] = MaxTokensPolicy.from_dict(data["max_tokens"])
        return cls(**kw)


def sample_decoding(policy, rng):
    values = {}
    for name in CONTINUOUS_FIELDS:
        fp = policy.field_policy(name)
        values[name] = clip(float(rng.normal(fp.mean, fp.std)), fp.interval)
    values["max_tokens"] = policy.max_tokens.sample(rng)
    return DecodingConfig(**values)


@dataclass(frozen=True)
class LeaderWeights:
    """Influence of each elite, best first.

    The three-leader case is ``(w_alpha, w_beta, w_delta)``; longer tuples
    generalize to ``m`` elites.
    """

    values: tuple = (0.5, 0.3, 0.2)

    def __post_init__(self):
        object.__setattr__(self, "values", check_weights(self.values, "leader weights"))

    @classmethod
    def linear(cls, m):
        """Normalized ``(m, m-1, ..., 1)``."""
        if m < 1:
            raise ConfigurationError(f"elite count must be >= 1, got {m}")
        raw = np.arange(m, 0, -1, dtype=float)
        return cls(tuple(raw / raw.sum()))

    @classmethod
    def default(cls, m=3):
        return cls() if m == 3 else cls.linear(m)

    def __len__(self):
        return len(self.values)

    @property
    def alpha(self):
        return self.values[0]

    @property
    def beta(self):
        return self.values[1]

    @property
    def delta(self):
        return self.values[2]


def _check_leaders(leaders, weights):
    if len(leaders) != len(weights):
        raise ConfigurationError(
            f"{len(leaders)} leaders given but {len(weights)} leader weights"
        )
    if not leaders:
        raise ConfigurationError("at least one leader is required")


def weighted_leader_update(follower, leaders, weights, sigma, rng, policy):
    """Weighted average of Gaussian draws centred on each leader, then clipped.

    For every continuous field a draw ``N(leader_value, sigma**2)`` is taken per
    leader and the draws are combined with ``weights``. ``max_tokens`` gets the
    noiseless weighted sum snapped onto the policy's admissible lengths.
    ``follower`` is accepted for interface symmetry; its current values do not
    enter the update.
    """
    _check_leaders(leaders, weights)
    if sigma < 0:
        raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
    w = weights.values
    values = {}
    for name in CONTINUOUS_FIELDS:
        draws = [float(rng.normal(getattr(leader, name), sigma)) for leader in leaders]
        total = math.fsum(wr * x for wr, x in zip(w, draws))
        if sigma == 0:
            # keep float rounding from stepping outside the leaders' hull
            total = clip(total, (min(draws), max(draws)))
        values[name] = clip(total, policy.field_policy(name).interval)
    tokens = math.fsum(wr * leader.max_tokens for wr, leader in zip(w, leaders))
    values["max_tokens"] = policy.max_tokens.snap(tokens)
    return DecodingConfig(**values)


def sample_leader_index(weights, rng):
    return int(rng.choice(len(weights), p=np.asarray(weights.values)))


def single_leader_update(follower, leaders, weights, sigma, rng, policy):
    """Pick one leader with probability ``weights`` and perturb around it."""
    _check_leaders(leaders, weights)
    if sigma < 0:
        raise ConfigurationError(f"sigma must be >= 0, got {sigma}")
    leader = leaders[sample_leader_index(weights, rng)]
    values = {
        name: clip(float(rng.normal(getattr(leader, name), sigma)),
                   policy.field_policy(name).interval)
        for name in CONTINUOUS_FIELDS
    }
    values["max_tokens"] = policy.max_tokens.snap(leader.max_tokens)
    return DecodingConfig(**values)


UPDATE_RULES = {
    "weighted-average": weighted_leader_update,
    "single-leader": single_leader_update,
}


class InvalidPromptError(ConfigurationError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt text with required placeholder markers and an edit history.

    ``lineage`` holds ``(iteration, edit_kind)`` pairs, one per accepted edit.
    """

    text: str
    placeholders: tuple = (QUESTION_PLACEHOLDER,)
    lineage: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "placeholders", tuple(self.placeholders))
        object.__setattr__(self, "lineage", tuple(tuple(e) for e in self.lineage))
        problem = template_problem(self.text, self.placeholders)
        if problem:
            raise InvalidPromptError(problem)

    def render(self, question):
        if QUESTION_PLACEHOLDER in self.placeholders:
            return self.text.replace(QUESTION_PLACEHOLDER, question)
        return f"{self.text}\n\n{question}"

    def edited(self, text, iteration, edit_kind):
        return PromptTemplate(text, self.placeholders, self.lineage + ((iteration, edit_kind),))

    def to_dict(self):
        return {
            "text": self.text,
            "placeholders": list(self.placeholders),
            "lineage": [list(e) for e in self.lineage],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["text"], tuple(data.get("placeholders", ())), tuple(data.get("lineage", ())))


def template_problem(text, placeholders):
    """Reason a prompt text is invalid, or ``None`` when it is fine."""
    if not isinstance(text, str) or not text.strip():
        return "empty"
    for marker in placeholders:
        if text.count(marker) != 1:
            return "placeholder-lost"
    return None


@dataclass(frozen=True)
class AgentConfig:
    id: int
    decoding: DecodingConfig
    prompt: PromptTemplate
    provider_ref: str = "default"

    def to_dict(self):
        return {
            "id": self.id,
            "decoding": self.decoding.to_dict(),
            "prompt": self.prompt.to_dict(),
            "provider_ref": self.provider_ref,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=int(data["id"]),
            decoding=DecodingConfig.from_dict(data["decoding"]),
            prompt=PromptTemplate.from_dict(data["prompt"]),
            provider_ref=data.get("provider_ref", "default"),
        )
