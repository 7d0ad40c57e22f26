"""Polite remote fetching for URL-listed corpora.

Requests are paced to a configurable rate, can be limited to a byte
prefix (Exif lives at the front of a JPEG), retried on transient errors,
and the whole run aborts once too large a share of URLs has failed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import requests

log = logging.getLogger(__name__)

TRANSIENT_STATUS = {500, 502, 503, 504}


class TooManyFailures(RuntimeError):
    """Failure ratio crossed the abort threshold."""


@dataclass
class FetchResult:
    url: str
    data: Optional[bytes] = None
    status: Optional[int] = None
    error: Optional[str] = None
    attempts: int = 0

    @property
    def ok(self) -> bool:
        return self.data is not None


class _RateLimiter:
    def __init__(self, per_second: float):
        if per_second <= 0:
            raise ValueError("rate_limit must be positive")
        self.interval = 1.0 / per_second
        self.next_start = 0.0

    def wait(self) -> None:
        now = time.monotonic()
        if now < self.next_start:
            time.sleep(self.next_start - now)
            now = time.monotonic()
        self.next_start = max(self.next_start, now) + self.interval


def _read_prefix(response: requests.Response, prefix_bytes: Optional[int]) -> bytes:
    if prefix_bytes is None:
        return response.content
    # Stream so a server that ignores Range still costs at most the prefix.
    chunks = []
    got = 0
    for chunk in response.iter_content(chunk_size=min(prefix_bytes, 65536)):
        chunks.append(chunk)
        got += len(chunk)
        if got >= prefix_bytes:
            break
    response.close()
    return b"".join(chunks)[:prefix_bytes]


def fetch_remote(
    urls: Iterable[str],
    rate_limit: float = 5.0,
    prefix_bytes: Optional[int] = None,
    retries: int = 2,
    timeout: float = 10.0,
    failure_ratio: float = 0.5,
    min_checked: int = 8,
    session: Optional[requests.Session] = None,
) -> Iterator[FetchResult]:
    """Fetch each URL in order, yielding one FetchResult per URL.

    retries counts extra attempts after the first, spent only on transient
    failures (connection errors and 5xx). Raises TooManyFailures when,
    after at least min_checked URLs, more than failure_ratio of them have
    failed.
    """
    limiter = _RateLimiter(rate_limit)
    own_session = session is None
    sess = session or requests.Session()
    headers = {}
    if prefix_bytes is not None:
        if prefix_bytes <= 0:
            raise ValueError("prefix_bytes must be positive")
        headers["Range"] = f"bytes=0-{prefix_bytes - 1}"

    done = 0
    failed = 0
    try:
        for url in urls:
            result = FetchResult(url=url)
            for attempt in range(1 + retries):
                result.attempts = attempt + 1
                limiter.wait()
                try:
                    response = sess.get(
                        url, headers=headers, timeout=timeout, stream=prefix_bytes is not None
                    )
                except requests.RequestException as exc:
                    result.error = f"{type(exc).__name__}: {exc}"
                    log.debug("fetch %s attempt %d failed: %s", url, attempt + 1, exc)
                    continue
                result.status = response.status_code
                if response.status_code in TRANSIENT_STATUS:
                    result.error = f"HTTP {response.status_code}"
                    response.close()
                    continue
                if response.status_code >= 400:
                    result.error = f"HTTP {response.status_code}"
                    response.close()
                    break
                result.data = _read_prefix(response, prefix_bytes)
                result.error = None
                break
            done += 1
            if not result.ok:
                failed += 1
                log.warning("fetch failed for %s: %s", url, result.error)
            yield result
            if done >= min_checked and failed / done > failure_ratio:
                raise TooManyFailures(
                    f"{failed}/{done} fetches failed, aborting past "
                    f"{failure_ratio:.0%} threshold"
                )
    finally:
        if own_session:
            sess.close()
