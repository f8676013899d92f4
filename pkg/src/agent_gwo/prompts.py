"""Elite-guided prompt editing and prompt pool initialization."""

import logging
import re
import time
from dataclasses import dataclass

from .exceptions import ConfigurationError, ProviderError
from .providers import _mock_response
from .resources import ADAPTATION_INSTRUCTION, COT_TEMPLATES, load_templates, load_text
from .space import QUESTION_PLACEHOLDER, PromptTemplate, template_problem

logger = logging.getLogger(__name__)

ALLOWED_EDITS = frozenset({"reorder-steps", "paraphrase", "adjust-format-constraints"})
LENGTH_FACTOR = 2

REJECT_EMPTY = "empty"
REJECT_PLACEHOLDER = "placeholder-lost"
REJECT_LENGTH = "over-length"
REJECT_PROVIDER = "provider-failure"

_OPEN, _CLOSE = "<<<", ">>>"
_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*?)\n```$", re.S)


@dataclass(frozen=True)
class AdaptationInstruction:
    text: str
    version: str
    sha256: str
    allowed_edits: frozenset = ALLOWED_EDITS

    @classmethod
    def load(cls, path=None):
        frozen = load_text(path or ADAPTATION_INSTRUCTION)
        return cls(frozen.text, frozen.version, frozen.sha256)


@dataclass(frozen=True)
class AdaptationOutcome:
    new_prompt: PromptTemplate
    accepted: bool
    rejection_reason: str | None = None
    raw_reply: str | None = None


def format_adaptation_request(current, elites):
    """User message for the editor: the current template, then elites best first."""
    parts = [f"CURRENT TEMPLATE:\n{_OPEN}\n{current.text}\n{_CLOSE}"]
    labels = ["best", "second best", "third best"]
    for i, elite in enumerate(elites):
        label = labels[i] if i < len(labels) else f"rank {i + 1}"
        parts.append(f"ELITE {i + 1} ({label}):\n{_OPEN}\n{elite.text}\n{_CLOSE}")
    return "\n\n".join(parts)


def parse_adaptation_reply(text):
    """Split an editor reply into ``(prompt_text, edit_kinds)``.

    Replies that ignore the ``EDITS:``/``PROMPT:`` layout are taken verbatim as
    the prompt with no declared edits.
    """
    text = (text or "").strip()
    kinds = ()
    if "PROMPT:" in text:
        head, _, body = text.partition("PROMPT:")
        m = re.search(r"EDITS:\s*(.*)", head)
        if m:
            declared = [k.strip().lower() for k in m.group(1).split(",")]
            kinds = tuple(k for k in declared if k in ALLOWED_EDITS)
        text = body.strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    return text, kinds


def adapt_prompt(current, elites, instruction, client, rng, iteration=0):
    """Ask the editor model for a light revision of ``current`` guided by ``elites``.

    Never raises for editor trouble: any invalid reply, or a provider failure,
    yields a rejected outcome whose ``new_prompt`` is ``current``.
    """
    elites = list(elites)
    if not elites:
        raise ConfigurationError("prompt adaptation needs at least one elite prompt")
    seed = int(rng.integers(2**31 - 1))
    user = format_adaptation_request(current, elites)
    try:
        reply = client.complete(instruction.text, user, seed=seed).text
    except ProviderError as exc:
        logger.warning("prompt adaptation failed: %s", exc)
        return AdaptationOutcome(current, False, REJECT_PROVIDER)

    text, kinds = parse_adaptation_reply(reply)
    reason = template_problem(text, current.placeholders)
    if reason is None:
        budget = LENGTH_FACTOR * max(len(e.text) for e in elites)
        if len(text) > budget:
            reason = REJECT_LENGTH
    if reason is not None:
        return AdaptationOutcome(current, False, reason, reply)
    edit_kind = "+".join(sorted(kinds)) if kinds else "unspecified"
    return AdaptationOutcome(current.edited(text, iteration, edit_kind), True, None, reply)


# -- initialization --------------------------------------------------------------

GENERATION_INSTRUCTION = (
    "Write one instruction that tells a solver how to approach a reasoning question "
    "step by step and how to state its final answer. Reply with the instruction only."
)


class TemplateGenerator:
    """Draws new templates from an LLM; the question slot is appended if missing."""

    def __init__(self, client, instruction=GENERATION_INSTRUCTION):
        self.client = client
        self.instruction = instruction

    def __call__(self, rng, index):
        seed = int(rng.integers(2**31 - 1))
        reply = self.client.complete(self.instruction, f"Instruction #{index + 1}", seed=seed)
        return as_template(reply.text.strip())


def as_template(text):
    if isinstance(text, PromptTemplate):
        return text
    if QUESTION_PLACEHOLDER not in text:
        text = f"{text}\n\nQuestion: {QUESTION_PLACEHOLDER}"
    return PromptTemplate(text)


def default_pool():
    return [PromptTemplate(t) for t in load_templates(COT_TEMPLATES)]


def init_prompt_pool(count, rng, pool=None, generator=None):
    """``count`` starting templates.

    Drawn without replacement from ``pool`` when it is large enough, with
    replacement otherwise. With an empty pool, ``generator(rng, i)`` makes them.
    """
    pool = [as_template(p) for p in (pool or [])]
    if pool:
        if len(pool) >= count:
            idx = rng.permutation(len(pool))[:count]
        else:
            idx = rng.integers(len(pool), size=count)
        return [pool[i] for i in idx]
    if generator is None:
        raise ConfigurationError("empty prompt pool and no template generator configured")
    return [generator(rng, i) for i in range(count)]


# -- offline editor ----------------------------------------------------------------

_SWAPS = (
    ("step by step", "one step at a time"),
    ("one step at a time", "step by step"),
    ("carefully", "closely"),
    ("closely", "carefully"),
    ("Finish with", "End with"),
    ("End with", "Finish with"),
)
_CHECK_LINE = "Check the arithmetic before giving the final answer."


class MockEditorBackend:
    """Deterministic editor for offline runs: one small phrase-level edit per call."""

    def generate(self, request, model):
        started = time.monotonic()
        m = re.search(rf"CURRENT TEMPLATE:\n{_OPEN}\n(.*?)\n{_CLOSE}", request.user_text, re.S)
        current = m.group(1) if m else ""
        options = [(a, b) for a, b in _SWAPS if a in current]
        seed = request.seed or 0
        if options and seed % 3:
            a, b = options[seed % len(options)]
            text, kind = current.replace(a, b, 1), "paraphrase"
        elif _CHECK_LINE in current:
            text, kind = current.replace(f"\n{_CHECK_LINE}", "", 1), "adjust-format-constraints"
        else:
            text, kind = f"{current}\n{_CHECK_LINE}", "adjust-format-constraints"
        return _mock_response(request, f"EDITS: {kind}\nPROMPT:\n{text}", model, started)
