"""Uniform metric contract: native scorers, fixtures, and external
adapter processes speaking a line-delimited JSON protocol.

Scores are oriented higher-is-better everywhere; perplexity is negated
once, at the metric boundary. The adapter wire protocol is documented in
docs/adapter-protocol.md.
"""

from __future__ import annotations

import hashlib
import json
import os
import shlex
import subprocess
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from itertools import count
from pathlib import Path

from reveval.gec_metrics import tokenize
from reveval.ngram_lm import NgramModel

PROTOCOL_VERSION = 1
DEFAULT_HANDSHAKE_TIMEOUT = 30.0
DEFAULT_REQUEST_TIMEOUT = 60.0
STDERR_TAIL_LINES = 20


class Choice(Enum):
    A = "a"
    B = "b"
    TIE = "tie"

    def mirrored(self) -> "Choice":
        if self is Choice.A:
            return Choice.B
        if self is Choice.B:
            return Choice.A
        return Choice.TIE


class MetricKind(Enum):
    NATIVE_PERPLEXITY = "native-ppl"
    EXTERNAL_SCORER = "external-scorer"
    EXTERNAL_CHOOSER = "external-chooser"


class MetricError(Exception):
    """Metric failure; carries the tail of the adapter's stderr if any."""

    def __init__(self, message, stderr_tail: str = ""):
        if stderr_tail:
            message = f"{message}\n--- adapter stderr tail ---\n{stderr_tail}"
        super().__init__(message)
        self.stderr_tail = stderr_tail


@dataclass(frozen=True)
class MetricVerdict:
    choice: Choice
    score_a: float | None = None
    score_b: float | None = None

    def __post_init__(self):
        if self.score_a is not None and self.score_b is not None:
            if self.score_a > self.score_b and self.choice is Choice.B:
                raise ValueError("choice inconsistent with scores")
            if self.score_b > self.score_a and self.choice is Choice.A:
                raise ValueError("choice inconsistent with scores")


@dataclass(frozen=True)
class MetricSpec:
    kind: MetricKind
    params: str = ""
    tie_epsilon: float = 0.0

    def __post_init__(self):
        if self.kind is MetricKind.NATIVE_PERPLEXITY:
            if not self.params:
                raise ValueError("native-ppl needs a model path")
        elif not self.params:
            raise ValueError(f"{self.kind.value} needs an adapter command line")


class Metric:
    """Base contract: scorer metrics implement score(); chooser metrics
    override choose() directly."""

    metric_id = "metric"
    is_scorer = True
    tie_epsilon = 0.0

    def score(self, text: str) -> float:
        raise MetricError(f"{self.metric_id} is not a scorer metric")

    def choose(self, a: str, b: str) -> MetricVerdict:
        if not a or not b:
            raise MetricError("cannot compare empty texts")
        score_a = self.score(a)
        score_b = self.score(b)
        if abs(score_a - score_b) <= self.tie_epsilon:
            choice = Choice.TIE
        elif score_a > score_b:
            choice = Choice.A
        else:
            choice = Choice.B
        return MetricVerdict(choice, score_a, score_b)

    def close(self):
        pass


class NativePerplexityMetric(Metric):
    """Higher score = lower per-token perplexity under the n-gram model."""

    def __init__(self, model: NgramModel, tie_epsilon: float = 0.0):
        self.model = model
        self.tie_epsilon = tie_epsilon
        self.metric_id = f"native-ppl(order={model.order})"

    def score(self, text: str) -> float:
        tokens = tokenize(text).tokens
        if not tokens:
            raise MetricError("cannot score empty text")
        return -self.model.perplexity(tokens)


class RandomChoiceMetric(Metric):
    """Seeded coin flip, deterministic per (a, b) pair across platforms."""

    is_scorer = False

    def __init__(self, seed: int):
        self.seed = seed
        self.metric_id = f"random({seed})"

    def choose(self, a: str, b: str) -> MetricVerdict:
        digest = hashlib.sha256(
            f"{self.seed}\x00{a}\x1f{b}".encode("utf-8")
        ).digest()
        return MetricVerdict(Choice.A if digest[0] & 1 else Choice.B)


class OracleMetric(Metric):
    """Fixture chooser that is told which side is the better one.

    The harness binds ``truth`` to a function mapping (a, b) to a Choice
    before evaluation; inverted oracles flip it.
    """

    is_scorer = False

    def __init__(self, invert: bool = False):
        self.invert = invert
        self.truth = None
        self.metric_id = "oracle-inverted" if invert else "oracle"

    def choose(self, a: str, b: str) -> MetricVerdict:
        if self.truth is None:
            raise MetricError("oracle metric used outside a labeled harness run")
        choice = self.truth(a, b)
        if self.invert:
            choice = choice.mirrored()
        return MetricVerdict(choice)


# ---------------------------------------------------------------------------
# Adapter processes


@dataclass(frozen=True)
class AdapterHandshake:
    protocol_version: int
    mode: str
    metadata: dict


class AdapterHandle:
    """One child process; requests are JSON objects, one per line, matched
    to responses by id. Pipelining is allowed; responses may arrive out of
    order."""

    def __init__(self, command: str, handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT):
        self.command = command
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise MetricError(f"failed to spawn adapter {command!r}: {exc}") from exc
        self._stderr_tail: deque = deque(maxlen=STDERR_TAIL_LINES)
        self._responses: dict = {}
        self._lock = threading.Condition()
        self._closed = False
        self._protocol_error: str | None = None
        self._handshake_line: str | None = None
        self._handshake_event = threading.Event()
        self._ids = count(1)
        threading.Thread(target=self._drain_stderr, daemon=True).start()
        threading.Thread(target=self._drain_stdout, daemon=True).start()
        self.handshake = self._read_handshake(handshake_timeout)

    # -- background readers -------------------------------------------------

    def _drain_stderr(self):
        for line in self._proc.stderr:
            self._stderr_tail.append(line.rstrip("\n"))

    def _drain_stdout(self):
        for line in self._proc.stdout:
            line = line.strip()
            if not line:
                continue
            if self._handshake_line is None:
                self._handshake_line = line
                self._handshake_event.set()
                continue
            try:
                obj = json.loads(line)
                request_id = obj["id"]
            except (ValueError, KeyError, TypeError):
                with self._lock:
                    self._protocol_error = f"malformed response line: {line!r}"
                    self._lock.notify_all()
                break
            with self._lock:
                self._responses[request_id] = obj
                self._lock.notify_all()
        with self._lock:
            self._closed = True
            self._lock.notify_all()
        self._handshake_event.set()

    # -- protocol -------------------------------------------------------------

    def stderr_tail(self) -> str:
        return "\n".join(self._stderr_tail)

    def _read_handshake(self, timeout) -> AdapterHandshake:
        if not self._handshake_event.wait(timeout):
            self.kill()
            raise MetricError(
                f"adapter {self.command!r}: no handshake within {timeout}s",
                self.stderr_tail(),
            )
        line = self._handshake_line
        if line is None:
            self.kill()
            raise MetricError(
                f"adapter {self.command!r} exited before the handshake",
                self.stderr_tail(),
            )
        try:
            obj = json.loads(line)
            version = obj["protocol_version"]
            mode = obj["mode"]
        except (ValueError, KeyError, TypeError):
            self.kill()
            raise MetricError(
                f"adapter {self.command!r}: malformed handshake line: {line!r}",
                self.stderr_tail(),
            )
        if version != PROTOCOL_VERSION:
            self.kill()
            raise MetricError(
                f"adapter {self.command!r}: protocol version {version!r} not"
                f" supported (expected {PROTOCOL_VERSION})",
                self.stderr_tail(),
            )
        if mode not in ("score", "pair"):
            self.kill()
            raise MetricError(
                f"adapter {self.command!r}: unknown mode {mode!r}",
                self.stderr_tail(),
            )
        metadata = {k: v for k, v in obj.items() if k not in ("protocol_version", "mode")}
        return AdapterHandshake(version, mode, metadata)

    def send(self, payload: dict) -> int:
        """Queue one request; returns its id (for pipelined collection)."""
        request_id = next(self._ids)
        line = json.dumps({"id": request_id, **payload}, ensure_ascii=False)
        with self._lock:
            if self._closed or self._proc.poll() is not None:
                raise MetricError(
                    f"adapter {self.command!r} is not running", self.stderr_tail()
                )
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise MetricError(
                f"adapter {self.command!r}: broken pipe: {exc}", self.stderr_tail()
            ) from exc
        return request_id

    def wait(self, request_id: int, timeout: float = DEFAULT_REQUEST_TIMEOUT) -> dict:
        with self._lock:
            ok = self._lock.wait_for(
                lambda: request_id in self._responses
                or self._closed
                or self._protocol_error,
                timeout=timeout,
            )
            if request_id in self._responses:
                return self._responses.pop(request_id)
            if self._protocol_error:
                raise MetricError(
                    f"adapter {self.command!r}: {self._protocol_error}",
                    self.stderr_tail(),
                )
            if self._closed:
                raise MetricError(
                    f"adapter {self.command!r} exited before answering request"
                    f" {request_id}",
                    self.stderr_tail(),
                )
            raise MetricError(
                f"adapter {self.command!r}: request {request_id} timed out after"
                f" {timeout}s",
                self.stderr_tail(),
            )

    def request(self, payload: dict, timeout: float = DEFAULT_REQUEST_TIMEOUT) -> dict:
        return self.wait(self.send(payload), timeout)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.kill()

    def kill(self):
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()


def spawn_adapter(spec, handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT) -> AdapterHandle:
    """Start an adapter from a MetricSpec or a raw command line and verify
    its handshake (and, for typed specs, its declared mode)."""
    command = spec.params if isinstance(spec, MetricSpec) else spec
    handle = AdapterHandle(command, handshake_timeout)
    if isinstance(spec, MetricSpec):
        wanted = {
            MetricKind.EXTERNAL_SCORER: "score",
            MetricKind.EXTERNAL_CHOOSER: "pair",
        }.get(spec.kind)
        if wanted and handle.handshake.mode != wanted:
            handle.close()
            raise MetricError(
                f"adapter declared mode {handle.handshake.mode!r}, expected"
                f" {wanted!r} for {spec.kind.value}"
            )
    return handle


class AdapterMetric(Metric):
    """Metric backed by an adapter process; scorer or chooser depending on
    the adapter's declared mode."""

    def __init__(
        self,
        command: str,
        tie_epsilon: float = 0.0,
        handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
    ):
        self.handle = AdapterHandle(command, handshake_timeout)
        self.tie_epsilon = tie_epsilon
        self.request_timeout = request_timeout
        self.is_scorer = self.handle.handshake.mode == "score"
        self.metric_id = f"adapter({command})"

    @property
    def kind(self) -> MetricKind:
        return (
            MetricKind.EXTERNAL_SCORER if self.is_scorer else MetricKind.EXTERNAL_CHOOSER
        )

    def score(self, text: str) -> float:
        if not self.is_scorer:
            raise MetricError("pair-mode adapter cannot score single texts")
        if not text:
            raise MetricError("cannot score empty text")
        response = self.handle.request({"text": text}, self.request_timeout)
        try:
            return float(response["score"])
        except (KeyError, TypeError, ValueError):
            raise MetricError(
                f"adapter returned no usable score: {response!r}",
                self.handle.stderr_tail(),
            )

    def choose(self, a: str, b: str) -> MetricVerdict:
        if self.is_scorer:
            return super().choose(a, b)
        if not a or not b:
            raise MetricError("cannot compare empty texts")
        response = self.handle.request({"a": a, "b": b}, self.request_timeout)
        try:
            choice = Choice(response["choice"])
        except (KeyError, ValueError, TypeError):
            raise MetricError(
                f"adapter returned no usable choice: {response!r}",
                self.handle.stderr_tail(),
            )
        score_a = response.get("score_a")
        score_b = response.get("score_b")
        return MetricVerdict(
            choice,
            float(score_a) if score_a is not None else None,
            float(score_b) if score_b is not None else None,
        )

    def close(self):
        self.handle.close()


# ---------------------------------------------------------------------------
# Metric spec mini-language


def create_metric(spec: str, tie_epsilon: float = 0.0, **adapter_kwargs) -> Metric:
    """Build a metric from a spec string.

    Forms: ``native-ppl:<model-path>``, ``adapter:<command line>`` (or bare
    ``adapter`` to use $REVEVAL_ADAPTER), ``oracle``, ``oracle:inverted``,
    ``random:<seed>``.
    """
    name, _, params = spec.partition(":")
    if name == "native-ppl":
        if not params:
            raise ValueError("native-ppl needs a model path: native-ppl:<path>")
        path = Path(params)
        if not path.exists():
            raise ValueError(f"model file not found: {path}")
        return NativePerplexityMetric(NgramModel.load(path), tie_epsilon)
    if name == "adapter":
        command = params or os.environ.get("REVEVAL_ADAPTER", "")
        if not command:
            raise ValueError(
                "adapter spec needs a command line (adapter:<cmd>) or"
                " $REVEVAL_ADAPTER"
            )
        return AdapterMetric(command, tie_epsilon, **adapter_kwargs)
    if name == "oracle":
        if params not in ("", "inverted"):
            raise ValueError(f"unknown oracle variant {params!r}")
        return OracleMetric(invert=params == "inverted")
    if name == "random":
        if not params:
            raise ValueError("random needs a seed: random:<seed>")
        return RandomChoiceMetric(int(params))
    raise ValueError(f"unknown metric spec {spec!r}")
