"""Knowledge-source clients: live OpenAI-compatible chat API, replay cache, recording.

The knowledge source is either a text document handled elsewhere or an LLM
reached through one of the clients here. Replay mode serves recorded responses
keyed by a content hash of the request, which makes the whole pipeline run
offline and byte-for-byte deterministically.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import (
    CacheMissError,
    ConfigError,
    RateLimitedError,
    TabqaError,
    TransportError,
)

logger = logging.getLogger(__name__)

Message = dict  # {"role": ..., "content": ...}

DEFAULT_MODEL_ID = "gpt-3.5-turbo-1106"
MAX_ATTEMPTS = 5
BACKOFF_BASE = 0.5  # seconds; doubled per retry

# Few-shot counts for greedy decoding, per dataset.
_GREEDY_SHOTS = {"wikitq": 8, "tatqa": 8, "finqa": 4}

# Ensemble sampling profiles: (analyze/augment temperature, n), (sql temperature, n),
# max output tokens. The augmentation and SQL generation steps are sampled; the
# row-wise fill-in step always runs with a single sample.
_ENSEMBLE_PROFILES = {
    "gpt": {"augmentation": (0.6, 3), "sql": (0.4, 2), "max_tokens": 512},
    "llama": {"augmentation": (0.8, 4), "sql": (0.4, 3), "max_tokens": 256},
}


@dataclass(frozen=True)
class GenerationParams:
    """Decoding parameters for one request."""

    temperature: float = 0.0
    top_p: float = 1.0
    max_output_tokens: int = 512
    n_samples: int = 1
    model_id: str = DEFAULT_MODEL_ID
    # Advisory only (shots live in the assembled messages); excluded from cache keys.
    num_shots: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


def default_params(step: str, mode: str, dataset: str, profile: str = "gpt") -> GenerationParams:
    """Decoding defaults per pipeline step and decoding mode.

    Greedy runs use temperature 0 with one sample everywhere; ensemble runs use
    the sampling profile (augmentation steps at 0.6/n=3, SQL at 0.4/n=2 for the
    GPT-class profile).
    """
    if step not in ("analyze", "augment", "sql"):
        raise ValueError(f"unknown step {step!r}")
    if mode not in ("greedy", "ensemble"):
        raise ValueError(f"unknown mode {mode!r}")
    shots = _GREEDY_SHOTS.get(dataset, 8)
    if mode == "greedy":
        return GenerationParams(
            temperature=0.0, top_p=1.0, max_output_tokens=512, n_samples=1, num_shots=shots
        )
    prof = _ENSEMBLE_PROFILES[profile]
    key = "sql" if step == "sql" else "augmentation"
    temperature, n = prof[key]
    return GenerationParams(
        temperature=temperature,
        top_p=1.0,
        max_output_tokens=prof["max_tokens"],
        n_samples=n,
        num_shots=8,
    )


def request_key(params: GenerationParams, messages: list[Message], sample_index: int) -> str:
    """Content hash identifying one generated sample.

    A pure function of (model, decoding params, message sequence, sample index);
    n_samples is excluded so batched and sequential sampling key identically.
    """
    payload = {
        "model_id": params.model_id,
        "temperature": params.temperature,
        "top_p": params.top_p,
        "max_output_tokens": params.max_output_tokens,
        "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
        "sample_index": sample_index,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TranscriptEntry:
    key: str
    response_text: str
    created_at: str
    model_id: str = DEFAULT_MODEL_ID
    sample_index: int = 0

    def to_json_line(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json_line(cls, line: str) -> "TranscriptEntry":
        data = json.loads(line)
        return cls(
            key=data["key"],
            response_text=data["response_text"],
            created_at=data.get("created_at", ""),
            model_id=data.get("model_id", DEFAULT_MODEL_ID),
            sample_index=int(data.get("sample_index", 0)),
        )


def load_transcript(path: str | Path) -> dict[str, str]:
    """Load a JSONL transcript into a key -> response map.

    Re-recorded identical entries are tolerated; the same key with different
    text is a corrupt cache and is rejected.
    """
    cache: dict[str, str] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            entry = TranscriptEntry.from_json_line(line)
            existing = cache.get(entry.key)
            if existing is not None and existing != entry.response_text:
                raise TabqaError(
                    f"{path}:{lineno}: transcript key collision for {entry.key[:12]}…"
                )
            cache[entry.key] = entry.response_text
    return cache


class KnowledgeSource:
    """Base class for anything that can answer chat requests.

    Tracks the number of generated samples issued (used to audit ensemble
    sample budgets).
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._samples_issued = 0

    @property
    def samples_issued(self) -> int:
        with self._lock:
            return self._samples_issued

    def _count(self, n: int) -> None:
        with self._lock:
            self._samples_issued += n

    def complete(self, messages: list[Message], params: GenerationParams) -> list[str]:
        """Return params.n_samples response texts for the message sequence."""
        raise NotImplementedError


class ReplayClient(KnowledgeSource):
    """Serves responses from a recorded transcript; never touches the network."""

    def __init__(self, transcript_path: str | Path):
        super().__init__()
        self.transcript_path = Path(transcript_path)
        if not self.transcript_path.exists():
            raise ConfigError(f"transcript file not found: {self.transcript_path}")
        self._cache = load_transcript(self.transcript_path)

    def __len__(self) -> int:
        return len(self._cache)

    def complete(self, messages: list[Message], params: GenerationParams) -> list[str]:
        out = []
        for i in range(params.n_samples):
            key = request_key(params, messages, i)
            if key not in self._cache:
                tail = messages[-1]["content"] if messages else ""
                raise CacheMissError(
                    f"no transcript entry for key {key[:12]}… "
                    f"(model={params.model_id}, temperature={params.temperature}, "
                    f"sample={i}, task starts {tail[:60]!r})"
                )
            out.append(self._cache[key])
        self._count(params.n_samples)
        return out


class LiveClient(KnowledgeSource):
    """OpenAI-compatible chat-completions client with retry/backoff."""

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        max_in_flight: int = 4,
        request_timeout: float = 60.0,
        sleep=time.sleep,
    ):
        super().__init__()
        if not endpoint:
            raise ConfigError("live mode requires an endpoint URL")
        if not api_key:
            raise ConfigError("live mode requires a credential")
        self._url = endpoint.rstrip("/") + "/chat/completions"
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._client = httpx.Client(timeout=request_timeout)
        self._in_flight = threading.Semaphore(max_in_flight)
        self._sleep = sleep

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict) -> dict:
        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                self._sleep(BACKOFF_BASE * 2 ** (attempt - 1))
            try:
                with self._in_flight:
                    resp = self._client.post(self._url, json=payload, headers=self._headers)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if resp.status_code == 200:
                return resp.json()
            if resp.status_code == 429:
                rate_limited = True
                last_error = TabqaError(f"429: {resp.text[:200]}")
                continue
            if resp.status_code >= 500:
                last_error = TabqaError(f"{resp.status_code}: {resp.text[:200]}")
                continue
            raise TransportError(f"endpoint rejected request: {resp.status_code} {resp.text[:200]}")
        if rate_limited:
            raise RateLimitedError(f"rate limited after {MAX_ATTEMPTS} attempts: {last_error}")
        raise TransportError(f"transport failed after {MAX_ATTEMPTS} attempts: {last_error}")

    def complete(self, messages: list[Message], params: GenerationParams) -> list[str]:
        payload = {
            "model": params.model_id,
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_output_tokens,
            "n": params.n_samples,
        }
        data = self._post(payload)
        texts = [c["message"]["content"] or "" for c in data.get("choices", [])]
        # Endpoints that ignore n get the remaining samples sequentially.
        while len(texts) < params.n_samples:
            extra = self._post({**payload, "n": 1})
            texts.extend(c["message"]["content"] or "" for c in extra.get("choices", [])[:1])
        texts = texts[: params.n_samples]
        self._count(params.n_samples)
        return texts


class RecordingClient(KnowledgeSource):
    """Wraps a live client and appends every sample to a transcript file."""

    def __init__(self, live: LiveClient, transcript_path: str | Path):
        super().__init__()
        self.live = live
        self.transcript_path = Path(transcript_path)
        self.transcript_path.parent.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()
        self._seen: set[str] = set()
        if self.transcript_path.exists():
            self._seen = set(load_transcript(self.transcript_path))

    def complete(self, messages: list[Message], params: GenerationParams) -> list[str]:
        texts = self.live.complete(messages, params)
        now = dt.datetime.now(dt.timezone.utc).isoformat()
        with self._write_lock:
            with self.transcript_path.open("a", encoding="utf-8") as fh:
                for i, text in enumerate(texts):
                    key = request_key(params, messages, i)
                    if key in self._seen:
                        continue
                    entry = TranscriptEntry(
                        key=key,
                        response_text=text,
                        created_at=now,
                        model_id=params.model_id,
                        sample_index=i,
                    )
                    fh.write(entry.to_json_line() + "\n")
                    self._seen.add(key)
        self._count(params.n_samples)
        return texts
