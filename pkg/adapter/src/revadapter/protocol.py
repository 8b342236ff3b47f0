"""Serve loop for the line-delimited JSON adapter protocol.

One handshake line out, then one response per request line until stdin
closes. All diagnostics go to stderr; stdout carries protocol lines only.
"""

from __future__ import annotations

import json
import logging
import sys

from revadapter import PROTOCOL_VERSION

log = logging.getLogger(__name__)


def serve(backend, mode: str, metadata: dict | None = None, stdin=None, stdout=None) -> int:
    """Run until stdin closes.

    ``backend`` exposes ``score(text) -> float`` in score mode or
    ``choose(a, b) -> (choice, score_a, score_b)`` in pair mode.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    handshake = {"protocol_version": PROTOCOL_VERSION, "mode": mode, **(metadata or {})}
    stdout.write(json.dumps(handshake, ensure_ascii=False) + "\n")
    stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            request_id = request["id"]
        except (ValueError, KeyError, TypeError):
            log.error("dropping malformed request line: %r", line[:200])
            continue
        try:
            if mode == "score":
                response = {"id": request_id, "score": backend.score(request["text"])}
            else:
                choice, score_a, score_b = backend.choose(request["a"], request["b"])
                response = {"id": request_id, "choice": choice}
                if score_a is not None:
                    response["score_a"] = score_a
                if score_b is not None:
                    response["score_b"] = score_b
        except Exception as exc:  # answer with an error, keep serving
            log.exception("request %s failed", request_id)
            response = {"id": request_id, "error": str(exc)}
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()
    return 0
