"""
LLM Semantic Sensor - fans a prompt out to k completions and turns each
reply into per-class danger readings in [0, 1]

Three sources share one SampleSet type: live chat-completions requests,
a seeded Beta mock, and a record/replay cache file.
"""

import hashlib
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
import pandas as pd
import requests
from dotenv import load_dotenv
from joblib import Parallel, delayed
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from utils.errors import CacheError, ConfigError, SensorError
from utils.export import export_to_json
from utils.parser import MalformedCompletion, parse_ratings
from utils.validation import require_valid

logger = logging.getLogger(__name__)

# Prompts used in the construction-site and plumbing scenarios
PROMPT_PRESETS = {
    "busy": "The workzone is very busy today, go to your destination.",
    "empty": "The workzone is very empty today, go to your destination.",
    "forklift_off": (
        "Every station is very busy except the forklift, which is off schedule today. "
        "Go to your destination."
    ),
    "plumbing_start": "The plumbing team just started work, go to the destination.",
    "plumbing_end": "The plumbing team just finished their shift and left, go to the destination.",
}


class Provenance(str, Enum):
    LIVE = "live"
    CACHED = "cached"
    MOCK = "mock"


@dataclass(frozen=True)
class Prompt:
    """Natural-language instruction plus the class labels to rate"""

    text: str
    class_names: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if not self.text or not self.text.strip():
            raise ConfigError("invalid_value", "prompt text must be non-empty")
        if not self.class_names:
            raise ConfigError("invalid_value", "prompt needs at least one class name")
        if len(set(self.class_names)) != len(self.class_names):
            raise ConfigError("invalid_value", f"duplicate class names: {list(self.class_names)}")

    @property
    def digest(self) -> str:
        payload = orjson.dumps(
            {"text": self.text, "class_names": list(self.class_names)},
            option=orjson.OPT_SORT_KEYS,
        )
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class SampleSet:
    """k readings per class for one prompt; readings are stored sorted ascending"""

    prompt_digest: str
    per_class: Dict[str, Tuple[float, ...]]
    k: int
    temperature: float
    provenance: Provenance

    def __post_init__(self):
        if self.k < 1:
            raise SensorError("invalid_sample_set", "k must be >= 1")
        for name, readings in self.per_class.items():
            if len(readings) != self.k:
                raise SensorError(
                    "invalid_sample_set", f"class '{name}' has {len(readings)} readings, expected {self.k}"
                )
            if any(not 0.0 <= r <= 1.0 for r in readings):
                raise SensorError("invalid_sample_set", f"class '{name}' has readings outside [0, 1]")

    @property
    def class_names(self) -> Tuple[str, ...]:
        return tuple(self.per_class)

    def readings(self, name: str) -> np.ndarray:
        return np.asarray(self.per_class[name], dtype=np.float64)


@dataclass(frozen=True)
class SensorConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4o-mini"
    k: int = 16
    temperature: float = 1.0
    max_retries: int = 3
    timeout: float = 30.0
    api_key_env: str = "OPENAI_API_KEY"
    batch_mode: str = "independent"
    max_workers: int = 16
    retry_backoff: float = 0.5
    # per-request sleep of the offline transport used for mock timing runs
    synthetic_delay: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("invalid_value", "sensor k must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("invalid_value", "max_retries must be >= 0")
        if self.timeout <= 0:
            raise ConfigError("invalid_value", "timeout must be > 0")
        if self.batch_mode not in ("independent", "single_request"):
            raise ConfigError("invalid_value", f"unknown batch_mode '{self.batch_mode}'")
        if self.max_workers < 1:
            raise ConfigError("invalid_value", "max_workers must be >= 1")
        if self.synthetic_delay < 0:
            raise ConfigError("invalid_value", "synthetic_delay must be >= 0")


def build_rating_prompt(prompt: Prompt) -> str:
    """
    Deterministic rating instruction for the sensor

    Args:
        prompt: Prompt with the user sentence and the labels to rate

    Returns:
        str: system message text
    """
    keys = ", ".join(f'"{name}"' for name in prompt.class_names)
    return (
        "You are a safety sensor for a mobile robot moving through a shared workspace.\n"
        "Given the operator message below, rate how dangerous or disruptive it would be "
        "for the robot to pass close to each obstacle class.\n"
        "Return ONLY a JSON object, with no other text, mapping each class name to a "
        "number between 0 and 1 (0 = no danger, 1 = extreme danger).\n"
        f"Use exactly these keys: {keys}.\n"
        f"Operator message: {prompt.text}"
    )


def build_messages(prompt: Prompt) -> List[Dict[str, str]]:
    return [
        {"role": "system", "content": build_rating_prompt(prompt)},
        {"role": "user", "content": prompt.text},
    ]


class ChatCompletionsTransport:
    """Chat-completions HTTP adapter; override build_payload/extract_contents for other vendors"""

    def __init__(
        self,
        config: SensorConfig,
        session: Optional[requests.Session] = None,
        api_key: Optional[str] = None,
    ):
        load_dotenv()
        self.config = config
        self.api_key = api_key or os.environ.get(config.api_key_env)
        if not self.api_key:
            raise SensorError(
                "credentials", f"environment variable {config.api_key_env} is not set"
            )
        self.session = session or requests.Session()

    def build_payload(self, messages: List[Dict[str, str]], n: int) -> dict:
        payload = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": messages,
        }
        if n > 1:
            payload["n"] = n
        return payload

    def extract_contents(self, body: dict) -> List[str]:
        try:
            return [choice["message"]["content"] for choice in body["choices"]]
        except (KeyError, TypeError) as e:
            raise MalformedCompletion(f"unexpected response body: {e}") from e

    def complete(self, messages: List[Dict[str, str]], n: int = 1) -> List[str]:
        response = self.session.post(
            self.config.endpoint,
            headers={"Authorization": f"Bearer {self.api_key}"},
            json=self.build_payload(messages, n),
            timeout=self.config.timeout,
        )
        response.raise_for_status()
        return self.extract_contents(response.json())


class SyntheticTransport:
    """
    Offline stand-in for the HTTP adapter: sleeps ``delay`` seconds and
    answers with seeded Beta draws, so timing harnesses run without a network
    """

    def __init__(
        self,
        class_names: Sequence[str],
        per_class_params: Mapping[str, Tuple[float, float]],
        seed: int = 7,
        delay: float = 0.0,
    ):
        _check_beta_params(class_names, per_class_params)
        self.class_names = tuple(class_names)
        self.per_class_params = dict(per_class_params)
        self.delay = delay
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    def complete(self, messages: List[Dict[str, str]], n: int = 1) -> List[str]:
        if self.delay > 0:
            time.sleep(self.delay)
        contents = []
        with self._lock:
            for _ in range(n):
                reply = {
                    name: float(self._rng.beta(*self.per_class_params[name]))
                    for name in self.class_names
                }
                contents.append(orjson.dumps(reply).decode())
        return contents


class _ShotFailure(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


def _attempt_shot(transport, messages, class_names, content: Optional[str] = None) -> Dict[str, float]:
    try:
        if content is None:
            content = transport.complete(messages, n=1)[0]
        return parse_ratings(content, class_names)
    except MalformedCompletion as e:
        raise _ShotFailure("malformed_completion", str(e)) from e
    except requests.Timeout as e:
        raise _ShotFailure("timeout", str(e)) from e
    except requests.HTTPError as e:
        status = e.response.status_code if e.response is not None else None
        if status in (401, 403):
            raise SensorError("credentials", f"endpoint rejected credentials (HTTP {status})") from e
        raise _ShotFailure("network", str(e)) from e
    except requests.RequestException as e:
        raise _ShotFailure("network", str(e)) from e


def _run_shot(
    config: SensorConfig,
    transport,
    messages: List[Dict[str, str]],
    class_names: Sequence[str],
    index: int,
    first_content: Optional[str] = None,
) -> Tuple[Dict[str, float], float]:
    started = time.perf_counter()
    retrying = Retrying(
        stop=stop_after_attempt(config.max_retries + 1),
        wait=wait_exponential(multiplier=config.retry_backoff, max=10),
        retry=retry_if_exception_type(_ShotFailure),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )
    content = first_content
    try:
        for attempt in retrying:
            with attempt:
                ratings = _attempt_shot(transport, messages, class_names, content)
            # a pre-fetched content is only tried once
            content = None
    except _ShotFailure as e:
        raise SensorError(
            e.code, f"shot {index} failed after {config.max_retries + 1} attempt(s): {e}"
        ) from e

    elapsed = time.perf_counter() - started
    logger.debug("shot %d done in %.3fs", index, elapsed)
    return ratings, elapsed


def collect_shots(
    config: SensorConfig,
    prompt: Prompt,
    transport=None,
) -> Tuple[List[Dict[str, float]], List[float]]:
    """
    Request k completions and parse each into per-class ratings

    Args:
        config: SensorConfig (k, retries, batch mode)
        prompt: Prompt to rate
        transport: object with ``complete(messages, n)``; defaults to the
            chat-completions adapter

    Returns:
        tuple: (list of k rating dicts, list of k per-shot latencies in seconds)
    """
    transport = transport or ChatCompletionsTransport(config)
    messages = build_messages(prompt)
    class_names = prompt.class_names

    first_contents: List[Optional[str]] = [None] * config.k
    if config.batch_mode == "single_request":
        first_contents = _single_request(config, transport, messages)

    jobs = min(config.k, config.max_workers)
    results = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_run_shot)(config, transport, messages, class_names, i, first_contents[i])
        for i in range(config.k)
    )
    shots = [ratings for ratings, _ in results]
    latencies = [elapsed for _, elapsed in results]
    return shots, latencies


def _single_request(config: SensorConfig, transport, messages) -> List[Optional[str]]:
    retrying = Retrying(
        stop=stop_after_attempt(config.max_retries + 1),
        wait=wait_exponential(multiplier=config.retry_backoff, max=10),
        retry=retry_if_exception_type((requests.Timeout, requests.ConnectionError)),
        reraise=True,
    )
    try:
        for attempt in retrying:
            with attempt:
                contents = transport.complete(messages, n=config.k)
    except requests.RequestException as e:
        raise SensorError("network", f"batched request failed: {e}") from e

    # missing choices are re-issued one by one by the per-shot retry
    padded: List[Optional[str]] = list(contents[: config.k])
    padded += [None] * (config.k - len(padded))
    return padded


def build_sample_set(
    prompt: Prompt,
    shots: Sequence[Mapping[str, float]],
    temperature: float,
    provenance: Provenance,
) -> SampleSet:
    """Collate shots into a SampleSet; sorting makes the result independent of arrival order"""
    per_class = {
        name: tuple(sorted(float(shot[name]) for shot in shots)) for name in prompt.class_names
    }
    return SampleSet(
        prompt_digest=prompt.digest,
        per_class=per_class,
        k=len(shots),
        temperature=temperature,
        provenance=provenance,
    )


def sample_llm(config: SensorConfig, prompt: Prompt, transport=None) -> SampleSet:
    """
    Draw k live sensor readings per class

    Args:
        config: SensorConfig
        prompt: Prompt
        transport: optional adapter override (see collect_shots)

    Returns:
        SampleSet: provenance=live
    """
    logger.info("sampling %d shots from %s", config.k, config.model_name)
    shots, latencies = collect_shots(config, prompt, transport)
    logger.info("sampling done, mean shot latency %.3fs", float(np.mean(latencies)))
    return build_sample_set(prompt, shots, config.temperature, Provenance.LIVE)


def _check_beta_params(class_names: Sequence[str], per_class_params: Mapping[str, Tuple[float, float]]):
    for name in class_names:
        if name not in per_class_params:
            raise SensorError("invalid_config", f"no Beta parameters for class '{name}'")
        a, b = per_class_params[name]
        if a <= 0 or b <= 0:
            raise SensorError("invalid_config", f"Beta parameters for '{name}' must be positive, got {(a, b)}")


def sample_mock(
    seed: Union[int, Sequence[int]],
    prompt: Prompt,
    k: int,
    per_class_params: Mapping[str, Tuple[float, float]],
    temperature: float = 1.0,
) -> SampleSet:
    """
    Seeded Beta(a, b) readings standing in for the LLM

    Args:
        seed: RNG seed, or a sequence of ints for a derived substream
        prompt: Prompt (only its digest and class order are used)
        k: shots per class
        per_class_params: label -> (a, b)

    Returns:
        SampleSet: provenance=mock
    """
    if k < 1:
        raise SensorError("invalid_config", "k must be >= 1")
    _check_beta_params(prompt.class_names, per_class_params)

    rng = np.random.default_rng(seed)
    per_class = {}
    for name in prompt.class_names:
        a, b = per_class_params[name]
        draws = rng.beta(a, b, size=k)
        per_class[name] = tuple(sorted(float(x) for x in draws))

    return SampleSet(
        prompt_digest=prompt.digest,
        per_class=per_class,
        k=k,
        temperature=temperature,
        provenance=Provenance.MOCK,
    )


def cache_store(sample_set: SampleSet, path: Union[str, Path]) -> Path:
    """Record a SampleSet to a JSON cache file"""
    document = {
        "prompt_digest": sample_set.prompt_digest,
        "k": sample_set.k,
        "temperature": sample_set.temperature,
        "per_class": {name: list(values) for name, values in sample_set.per_class.items()},
    }
    try:
        return export_to_json(document, path)
    except ConfigError as e:
        raise CacheError("io", str(e)) from e


def cache_load(path: Union[str, Path], prompt: Prompt) -> SampleSet:
    """
    Replay a recorded SampleSet

    Args:
        path: cache file written by cache_store
        prompt: the prompt the caller is about to use; must match the recording

    Returns:
        SampleSet: provenance=cached
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise CacheError("io", f"cannot read cache {path}: {e}") from e

    try:
        document = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise CacheError("parse", f"cache {path} is not valid JSON: {e}") from e

    require_valid(document, "cache", CacheError, code="parse")

    if document["prompt_digest"] != prompt.digest:
        raise CacheError(
            "digest_mismatch", f"cache {path} was recorded for a different prompt or class list"
        )

    recorded = document["per_class"]
    if set(recorded) != set(prompt.class_names):
        missing = sorted(set(prompt.class_names) - set(recorded))
        extra = sorted(set(recorded) - set(prompt.class_names))
        raise CacheError("parse", f"cache {path} class list differs from the map: missing {missing}, extra {extra}")

    try:
        return SampleSet(
            prompt_digest=document["prompt_digest"],
            per_class={name: tuple(float(v) for v in recorded[name]) for name in prompt.class_names},
            k=document["k"],
            temperature=float(document["temperature"]),
            provenance=Provenance.CACHED,
        )
    except SensorError as e:
        raise CacheError("parse", f"cache {path} holds an invalid sample set: {e}") from e


def measure_shot_latency(
    config: SensorConfig,
    prompt: Prompt,
    ks: Sequence[int],
    runs: int,
    transport=None,
) -> pd.DataFrame:
    """
    Time the sensor fan-out for several shot counts

    Args:
        config: SensorConfig (k is overridden per row)
        prompt: Prompt
        ks: shot counts to measure
        runs: repetitions per shot count
        transport: adapter override, e.g. a SyntheticTransport with a delay

    Returns:
        pd.DataFrame: columns k, runs, mean_s, std_s, mean_per_shot_s,
            amortized_per_shot_s
    """
    if runs < 1 or not ks:
        raise SensorError("empty_measurement", "need at least one run and one shot count")

    transport = transport or ChatCompletionsTransport(config)
    rows = []
    for k in ks:
        shot_config = replace(config, k=k)
        walls, per_shot = [], []
        for _ in range(runs):
            started = time.perf_counter()
            _, latencies = collect_shots(shot_config, prompt, transport)
            walls.append(time.perf_counter() - started)
            per_shot.append(float(np.mean(latencies)))

        mean_wall = float(np.mean(walls))
        rows.append({
            "k": k,
            "runs": runs,
            "mean_s": mean_wall,
            "std_s": float(np.std(walls, ddof=1)) if runs > 1 else 0.0,
            "mean_per_shot_s": float(np.mean(per_shot)),
            "amortized_per_shot_s": mean_wall / k,
        })
        logger.info("k=%d: mean %.4fs over %d runs", k, mean_wall, runs)

    return pd.DataFrame(rows, columns=[
        "k", "runs", "mean_s", "std_s", "mean_per_shot_s", "amortized_per_shot_s",
    ])
