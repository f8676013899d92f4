"""Text-generation backends behind one client with retries and usage accounting.

Backends implement ``generate(request, model) -> GenerationResponse`` and
signal retryable trouble with :class:`TransientProviderError`.
:class:`LLMClient` adds the operational layer: bounded concurrency, exponential
backoff with jitter, a per-run response cache and a :class:`UsageLedger`.
"""

import hashlib
import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field

import httpx

from ._seeding import derive_rng
from .exceptions import ProtocolError, ProviderError, TransientProviderError
from .space import CONTINUOUS_FIELDS, DecodingConfig

logger = logging.getLogger(__name__)

API_KEY_ENV = "PROVIDER_API_KEY"
BASE_URL_ENV = "PROVIDER_BASE_URL"


@dataclass(frozen=True)
class GenerationRequest:
    system_text: str
    user_text: str
    decoding: DecodingConfig
    seed: int | None = None

    def cache_key(self, model):
        payload = json.dumps(
            {
                "model": model,
                "system": self.system_text,
                "user": self.user_text,
                "decoding": self.decoding.to_dict(),
                "seed": self.seed,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0
    provider_id: str = ""


class UsageLedger:
    """Cumulative call and token counts per provider id. Thread-safe."""

    def __init__(self, totals=None):
        self._lock = threading.Lock()
        self._totals = {}
        for pid, row in (totals or {}).items():
            self._totals[pid] = dict(row)

    def record(self, response):
        with self._lock:
            row = self._totals.setdefault(
                response.provider_id, {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
            )
            row["calls"] += 1
            row["prompt_tokens"] += response.prompt_tokens
            row["completion_tokens"] += response.completion_tokens

    def snapshot(self):
        with self._lock:
            return {pid: dict(row) for pid, row in sorted(self._totals.items())}

    def totals(self):
        snap = self.snapshot()
        out = {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0}
        for row in snap.values():
            for k in out:
                out[k] += row[k]
        return out


# -- retrying client -----------------------------------------------------------

class LLMClient:
    """Role-bound client: one model, one default decoding config.

    Parameters
    ----------
    backend : object
        Anything with ``generate(request, model)``.
    model : str
        Model name sent to the backend; also the ledger's provider id.
    decoding : DecodingConfig, optional
        Used by :meth:`complete` (judge and editor roles).
    max_attempts, base_delay, backoff_factor, jitter
        Retry policy: ``base_delay * backoff_factor**i`` seconds, scaled by a
        uniform factor in ``[1 - jitter, 1 + jitter]``. A ``retry_after`` hint
        from the backend replaces the computed delay.
    max_concurrency : int
        Cap on simultaneous backend calls through this client.
    """

    def __init__(self, backend, model="mock", decoding=None, ledger=None, max_attempts=5,
                 base_delay=1.0, backoff_factor=2.0, jitter=0.2, max_concurrency=8,
                 cache=True, sleep=time.sleep, jitter_seed=None):
        self.backend = backend
        self.model = model
        self.decoding = decoding
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self.backoff_factor = backoff_factor
        self.jitter = jitter
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._cache = {} if cache else None
        self._cache_lock = threading.Lock()
        self._jitter_rng = random.Random(jitter_seed)

    def backoff_delay(self, attempt, retry_after=None):
        if retry_after is not None:
            return float(retry_after)
        base = self.base_delay * self.backoff_factor**attempt
        return base * self._jitter_rng.uniform(1.0 - self.jitter, 1.0 + self.jitter)

    def generate(self, request):
        key = request.cache_key(self.model) if self._cache is not None else None
        if key is not None:
            with self._cache_lock:
                if key in self._cache:
                    return self._cache[key]
        last = None
        for attempt in range(self.max_attempts):
            try:
                with self._slots:
                    response = self.backend.generate(request, self.model)
            except TransientProviderError as exc:
                last = exc
                if attempt + 1 < self.max_attempts:
                    delay = self.backoff_delay(attempt, exc.retry_after)
                    logger.warning("transient provider error (%s); retry %d in %.2fs",
                                   exc, attempt + 1, delay)
                    self.sleep(delay)
                continue
            if response.completion_tokens > request.decoding.max_tokens:
                raise ProtocolError(
                    f"backend returned {response.completion_tokens} completion tokens, "
                    f"limit {request.decoding.max_tokens}"
                )
            self.ledger.record(response)
            if key is not None:
                with self._cache_lock:
                    self._cache[key] = response
            return response
        raise ProviderError(f"giving up after {self.max_attempts} attempts: {last}")

    def complete(self, system_text, user_text, seed=None, decoding=None):
        decoding = decoding or self.decoding
        if decoding is None:
            raise ProviderError("no decoding config for this client role")
        return self.generate(GenerationRequest(system_text, user_text, decoding, seed))


# -- HTTP chat-completions backend ---------------------------------------------

class ChatCompletionsBackend:
    """Chat-completions style JSON over HTTP(S).

    ``api_key`` and ``base_url`` default to ``PROVIDER_API_KEY`` and
    ``PROVIDER_BASE_URL``. When ``trace_path`` is set every exchange is appended
    there as a JSON line with the key redacted.
    """

    def __init__(self, base_url=None, api_key=None, timeout=60.0, http_client=None,
                 trace_path=None):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV, "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.base_url:
            raise ProviderError(f"no base URL configured (set {BASE_URL_ENV})")
        self._http = http_client or httpx.Client(timeout=timeout)
        self.trace_path = trace_path
        self._trace_lock = threading.Lock()

    @staticmethod
    def payload(request, model):
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        body = {"model": model, "messages": messages}
        body.update(request.decoding.to_dict())
        if request.seed is not None:
            body["seed"] = request.seed
        return body

    def _trace(self, record):
        if not self.trace_path:
            return
        with self._trace_lock, open(self.trace_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def generate(self, request, model):
        body = self.payload(request, model)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        start = time.monotonic()
        try:
            resp = self._http.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
        except httpx.TransportError as exc:
            raise TransientProviderError(f"transport failure: {exc}") from exc
        latency_ms = int((time.monotonic() - start) * 1000)
        self._trace({"request": body, "status": resp.status_code, "response": resp.text,
                     "authorization": "[REDACTED]" if self.api_key else None})

        if resp.status_code == 429:
            raise TransientProviderError("rate limited", status_code=429,
                                         retry_after=_retry_after(resp.headers.get("retry-after")))
        if resp.status_code >= 500:
            raise TransientProviderError(f"server error {resp.status_code}",
                                         status_code=resp.status_code)
        if resp.status_code >= 400:
            raise ProviderError(f"request rejected with {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage") or {}
            prompt_tokens = int(usage.get("prompt_tokens", 0))
            completion_tokens = int(usage.get("completion_tokens", 0))
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat-completions response: {resp.text[:200]}") from exc
        if not isinstance(text, str):
            raise ProtocolError("chat-completions content is not a string")
        return GenerationResponse(text, prompt_tokens, completion_tokens, latency_ms, model)


def _retry_after(value):
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


# -- deterministic mocks -------------------------------------------------------

def _count_tokens(text):
    return len(text.split())


def _mock_response(request, text, model, started):
    completion = _count_tokens(text)
    if completion > request.decoding.max_tokens:
        text = " ".join(text.split()[: request.decoding.max_tokens])
        completion = request.decoding.max_tokens
    return GenerationResponse(
        text=text,
        prompt_tokens=_count_tokens(request.system_text) + _count_tokens(request.user_text),
        completion_tokens=completion,
        latency_ms=int((time.monotonic() - started) * 1000),
        provider_id=model,
    )


def _match_key(keys, text):
    """Longest key contained in ``text``, or ``None``."""
    best = None
    for k in keys:
        if k in text and (best is None or len(k) > len(best)):
            best = k
    return best


@dataclass(frozen=True)
class MockBackendSpec:
    """Mock configuration.

    ``mode`` is ``"landscape"`` (synthetic accuracy surface) or ``"scripted"``
    (replay of ``transcript``). ``peak`` maps decoding fields to the optimum and
    ``width`` gives the Gaussian width per field (a scalar applies to all).
    An empty ``peak`` makes every configuration always correct.
    """

    mode: str = "landscape"
    peak: dict = field(default_factory=lambda: {"temperature": 0.6})
    width: object = 0.2
    transcript: object = None

    def width_of(self, name):
        if isinstance(self.width, dict):
            return float(self.width[name])
        return float(self.width)


def mock_fitness_landscape(decoding, spec):
    """Correctness probability ``exp(-sum(((x - peak) / width)**2))``."""
    total = 0.0
    for name, peak in spec.peak.items():
        if name not in CONTINUOUS_FIELDS and name != "max_tokens":
            raise ValueError(f"unknown decoding field {name!r} in landscape peak")
        z = (float(getattr(decoding, name)) - float(peak)) / spec.width_of(name)
        total += z * z
    return math.exp(-total)


def _wrong_answer(gold):
    try:
        value = float(str(gold).replace(",", ""))
    except ValueError:
        return "I could not determine the answer."
    return f"The answer is {int(value) + 1 if value.is_integer() else value + 1}."


class LandscapeBackend:
    """Answers correctly with the landscape probability of the request's decoding.

    ``answer_key`` maps question text to gold answers; the question is located
    inside the rendered prompt by substring match. Each outcome is a Bernoulli
    draw seeded by ``(request.seed, user_text)``, so results do not depend on
    call order or thread interleaving.
    """

    def __init__(self, spec, answer_key):
        self.spec = spec
        self.answer_key = dict(answer_key)
        self._keys = sorted(self.answer_key, key=len, reverse=True)

    def add_answers(self, pairs):
        self.answer_key.update(pairs)
        self._keys = sorted(self.answer_key, key=len, reverse=True)

    def probability(self, decoding):
        return mock_fitness_landscape(decoding, self.spec)

    def generate(self, request, model):
        started = time.monotonic()
        key = _match_key(self._keys, request.user_text)
        if key is None:
            raise ProtocolError("landscape mock: request matches no known question")
        gold = self.answer_key[key]
        rng = derive_rng("landscape", request.seed or 0, request.user_text)
        if rng.random() < self.probability(request.decoding):
            text = f"Working through the problem step by step.\nThe answer is {gold}."
        else:
            text = f"Working through the problem step by step.\n{_wrong_answer(gold)}"
        return _mock_response(request, text, model, started)


class ScriptedBackend:
    """Replays a transcript.

    ``transcript`` is either a list of replies returned in order, or a mapping
    whose keys are matched as substrings of the user text (longest match wins).
    Running past the end of a list, or finding no key, raises
    :class:`ProtocolError`.
    """

    def __init__(self, transcript):
        self._lock = threading.Lock()
        if isinstance(transcript, dict):
            self._mapping = dict(transcript)
            self._keys = sorted(self._mapping, key=len, reverse=True)
            self._sequence = None
        else:
            self._mapping = None
            self._sequence = list(transcript)
            self._pos = 0

    def generate(self, request, model):
        started = time.monotonic()
        if self._mapping is not None:
            key = _match_key(self._keys, request.user_text)
            if key is None:
                raise ProtocolError("scripted mock: no transcript entry for request")
            reply = self._mapping[key]
        else:
            with self._lock:
                if self._pos >= len(self._sequence):
                    raise ProtocolError("scripted mock: transcript exhausted")
                reply = self._sequence[self._pos]
                self._pos += 1
        if isinstance(reply, BaseException):
            raise reply
        return _mock_response(request, reply, model, started)


class MockJudgeBackend:
    """Judge stand-in: 0-100 integer scores hashed from (seed, request text)."""

    def __init__(self, low=40, high=100):
        self.low, self.high = low, high

    def generate(self, request, model):
        started = time.monotonic()
        rng = derive_rng("judge", request.seed or 0, request.user_text)
        scores = rng.integers(self.low, self.high + 1, size=3)
        reply = json.dumps({"logic": int(scores[0]), "creativity": int(scores[1]),
                            "completeness": int(scores[2])})
        return _mock_response(request, reply, model, started)

