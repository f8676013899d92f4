"""Fitness of an agent: exact-match accuracy, judge sub-scores, ranking."""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction

from ._validation import check_float
from .exceptions import ConfigurationError, EvaluationError, ProtocolError, ProviderError, ShapeError
from .resources import JUDGE_PROMPT, load_text

logger = logging.getLogger(__name__)

TASK_KINDS = ("numeric", "multiple-choice", "free-form")
VERIFIABLE = "verifiable"
NON_VERIFIABLE = "non-verifiable"
RUBRIC_VERSION = "v1"

_NUMBER = re.compile(r"-?\$?\d[\d,]*(?:\.\d+)?")
_BOXED = re.compile(r"\\boxed\{([^{}]*)\}")
_CHOICE_PAREN = re.compile(r"\(([A-Ea-e])\)")
_CHOICE_BARE = re.compile(r"\b([A-E])\b")
_TRAILING_PUNCT = ".,;:!?"


# -- answers -----------------------------------------------------------------

def _canonical_number(text):
    s = text.replace(",", "").replace("$", "").strip()
    try:
        d = Decimal(s)
    except InvalidOperation:
        return None
    if not d.is_finite():
        return None
    if d == d.to_integral_value():
        return str(int(d))
    return format(d.normalize(), "f")


def normalize_answer(answer):
    """Case-fold, trim, drop terminal punctuation and canonicalize numbers."""
    if answer is None:
        return None
    s = str(answer).strip().casefold().rstrip(_TRAILING_PUNCT).strip()
    number = _canonical_number(s)
    return number if number is not None else s


def extract_answer(completion_text, task_kind="numeric"):
    """Pull the final answer out of a completion.

    Returns ``None`` (the extraction-failure marker) when nothing usable is
    found; callers score that as incorrect.
    """
    if task_kind not in TASK_KINDS:
        raise ConfigurationError(f"unknown task kind {task_kind!r}")
    text = completion_text or ""
    if task_kind == "numeric":
        boxed = _BOXED.findall(text)
        for source in (boxed[-1:] if boxed else []) + [text]:
            numbers = _NUMBER.findall(source)
            if numbers:
                return _canonical_number(numbers[-1])
        return None
    if task_kind == "multiple-choice":
        found = _CHOICE_PAREN.findall(text) or _CHOICE_BARE.findall(text)
        return found[-1].upper() if found else None
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    return lines[-1] if lines else None


def exact_match_fitness(answers, golds):
    """Fraction of items whose normalized answer equals the normalized gold."""
    answers, golds = list(answers), list(golds)
    if len(answers) != len(golds):
        raise ShapeError(f"{len(answers)} answers for {len(golds)} gold labels")
    if not answers:
        raise EvaluationError("empty batch: exact-match accuracy is undefined")
    hits = sum(
        a is not None and normalize_answer(a) == normalize_answer(g)
        for a, g in zip(answers, golds)
    )
    return hits / len(answers)


# -- judge -------------------------------------------------------------------

@dataclass(frozen=True)
class JudgeWeights:
    w1: float = 0.5
    w2: float = 0.2
    w3: float = 0.3

    def __post_init__(self):
        for name in ("w1", "w2", "w3"):
            check_float(getattr(self, name), name, min_val=0.0, include_boundaries="neither")
        if abs(self.w1 + self.w2 + self.w3 - 1.0) > 1e-12:
            raise ConfigurationError("judge weights must sum to 1")

    def as_tuple(self):
        return (self.w1, self.w2, self.w3)


@dataclass(frozen=True)
class JudgeScores:
    logic: float
    creativity: float
    completeness: float
    seeds_used: tuple = ()

    def __post_init__(self):
        for name in ("logic", "creativity", "completeness"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ProtocolError(f"judge score {name}={v} outside [0, 1]")
        object.__setattr__(self, "seeds_used", tuple(self.seeds_used))

    def as_tuple(self):
        return (self.logic, self.creativity, self.completeness)

    def to_dict(self):
        return {
            "logic": self.logic,
            "creativity": self.creativity,
            "completeness": self.completeness,
            "seeds_used": list(self.seeds_used),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["logic"], data["creativity"], data["completeness"],
                   tuple(data.get("seeds_used", ())))

    @classmethod
    def mean(cls, scores, seeds_used=()):
        scores = list(scores)
        if not scores:
            raise EvaluationError("no judge scores to average")
        # exact rational mean, rounded once
        cols = zip(*(s.as_tuple() for s in scores))
        return cls(*(float(sum(map(Fraction, c)) / len(scores)) for c in cols),
                   seeds_used=seeds_used)


def judge_composite(scores, weights=JudgeWeights()):
    return (
        weights.w1 * scores.logic
        + weights.w2 * scores.creativity
        + weights.w3 * scores.completeness
    )


_AXIS_ALIASES = {
    "logic": ("logic",),
    "creativity": ("creativity", "ingenuity"),
    "completeness": ("completeness", "complete"),
}


def _first_json_object(text):
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except (json.JSONDecodeError, TypeError):
        pass
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start:end + 1])
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            pass
    raise ProtocolError(f"judge reply is not a JSON object: {text[:200]!r}")


def parse_judge_response(text):
    """Parse ``{logic, creativity, completeness}`` into normalized scores.

    Integer values (and any value above 1) are read as 0-100 points and divided
    by 100; floats within ``[0, 1]`` are taken as already normalized.
    """
    obj = _first_json_object(text)
    raw = {}
    for axis, keys in _AXIS_ALIASES.items():
        for k in keys:
            if k in obj:
                raw[axis] = obj[k]
                break
        else:
            raise ProtocolError(f"judge reply lacks {axis!r}: {obj}")
        if isinstance(raw[axis], bool) or not isinstance(raw[axis], (int, float)):
            raise ProtocolError(f"judge score {axis!r} is not numeric: {raw[axis]!r}")
    points = obj.get("scale") == 100 or any(
        isinstance(v, int) or v > 1.0 for v in raw.values()
    )
    if points:
        raw = {k: v / 100.0 for k, v in raw.items()}
    return JudgeScores(**raw)


@dataclass(frozen=True)
class JudgeRequest:
    question: str
    trajectory: str
    rubric_version: str = RUBRIC_VERSION

    def to_json(self):
        return json.dumps(
            {"question": self.question, "trajectory": self.trajectory,
             "rubric_version": self.rubric_version},
            ensure_ascii=False,
        )


def judge_averaged(question, trajectory, judge_client, seeds=(0, 1, 2), prompt=None):
    """Score one trajectory three times with different seeds and average.

    ``judge_client`` needs a ``complete(system_text, user_text, seed)`` method
    returning a response with a ``text`` attribute.
    """
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) != 3:
        raise ConfigurationError(f"judge averaging needs exactly 3 seeds, got {len(seeds)}")
    prompt = prompt or load_text(JUDGE_PROMPT)
    user = JudgeRequest(question, trajectory).to_json()
    runs = []
    for seed in seeds:
        try:
            reply = judge_client.complete(prompt.text, user, seed=seed)
            runs.append(parse_judge_response(reply.text))
        except ProviderError as exc:
            raise EvaluationError(f"judge failed on seed {seed}: {exc}", partial=runs) from exc
    return JudgeScores.mean(runs, seeds_used=seeds)


# -- reports and ranking -------------------------------------------------------

@dataclass(frozen=True)
class FitnessReport:
    composite: float
    mode: str = VERIFIABLE
    batch_size: int = 1
    accuracy: float | None = None
    judge: JudgeScores | None = None
    judge_composite: float | None = None

    def __post_init__(self):
        if self.mode not in (VERIFIABLE, NON_VERIFIABLE):
            raise ConfigurationError(f"unknown fitness mode {self.mode!r}")
        if self.mode == VERIFIABLE and self.accuracy is None:
            raise ConfigurationError("verifiable reports need an accuracy")
        if self.mode == NON_VERIFIABLE and self.judge is None:
            raise ConfigurationError("non-verifiable reports need judge scores")

    @classmethod
    def verifiable(cls, accuracy, batch_size, judge=None, weights=JudgeWeights()):
        jc = judge_composite(judge, weights) if judge is not None else None
        return cls(composite=accuracy, mode=VERIFIABLE, batch_size=batch_size,
                   accuracy=accuracy, judge=judge, judge_composite=jc)

    @classmethod
    def non_verifiable(cls, judge, batch_size, weights=JudgeWeights()):
        jc = judge_composite(judge, weights)
        return cls(composite=jc, mode=NON_VERIFIABLE, batch_size=batch_size,
                   judge=judge, judge_composite=jc)

    def to_dict(self):
        return {
            "composite": self.composite,
            "mode": self.mode,
            "batch_size": self.batch_size,
            "accuracy": self.accuracy,
            "judge": self.judge.to_dict() if self.judge is not None else None,
            "judge_composite": self.judge_composite,
        }

    @classmethod
    def from_dict(cls, data):
        judge = data.get("judge")
        return cls(
            composite=data["composite"],
            mode=data["mode"],
            batch_size=data["batch_size"],
            accuracy=data.get("accuracy"),
            judge=JudgeScores.from_dict(judge) if judge is not None else None,
            judge_composite=data.get("judge_composite"),
        )


@dataclass(frozen=True)
class Ranking:
    order: tuple
    n_elites: int = 3
    warnings: tuple = field(default=(), compare=False)

    @property
    def elites(self):
        return self.order[: self.n_elites]

    @property
    def followers(self):
        return self.order[self.n_elites:]

    @property
    def alpha(self):
        return self.order[0]


def rank_population(reports, n_elites=3):
    """Order agents best first.

    Sort key: composite (descending); within exact ties of a verifiable
    composite, the judge composite (descending) when available; then the
    agent's position in ``reports``.
    """
    reports = list(reports)
    if n_elites < 1:
        raise ConfigurationError(f"n_elites must be >= 1, got {n_elites}")
    if len(reports) < n_elites:
        raise ConfigurationError(
            f"need at least {n_elites} fitness reports to pick elites, got {len(reports)}"
        )

    def tie_break(r):
        if r.mode == VERIFIABLE and r.judge_composite is not None:
            return r.judge_composite
        return -math.inf

    order = sorted(range(len(reports)), key=lambda i: (-reports[i].composite,
                                                      -tie_break(reports[i]), i))
    warnings = []
    composites = [r.composite for r in reports]
    if len(set(composites)) < len(composites) and any(
        r.mode == VERIFIABLE and r.judge_composite is None for r in reports
    ):
        msg = "accuracy ties without judge scores; falling back to agent index"
        logger.warning(msg)
        warnings.append(msg)
    return Ranking(tuple(order), n_elites, tuple(warnings))
