#!/usr/bin/python
# -*- coding: utf-8 -*-
"""Competition endpoint client with retries."""

import asyncio
import functools
import logging
from typing import List, Optional

import aiohttp
import attr

from ..errors import MissingRawFile, ServerUnreachable, SubmissionLimitReached, UnreadablePayload
from .app import HTTP_NOT_FOUND, HTTP_TOO_MANY_REQUESTS, HTTP_UNPROCESSABLE, SUBMITTER_HEADER

_TRANSIENT_ERRORS = (
    TimeoutError,
    asyncio.TimeoutError,
    aiohttp.ClientPayloadError,
    aiohttp.ClientConnectionError,
)
# raised before the request left the client
_CONNECT_ERRORS = (aiohttp.ClientConnectorError,)


def retry_on(retried):
    """Retry endpoint calls on ``retried`` errors.

    Uses linear backoff capped at RETRY_DELAY_MAX seconds and raises
    :class:`ServerUnreachable` once ``http_retries`` attempts failed. Other
    transient errors raise :class:`ServerUnreachable` on the first attempt.
    """

    def decorator(f):

        @functools.wraps(f)
        async def inner(self, *args, **kwargs):
            retries = self.http_retries
            remaining = retries
            last_error = None
            while remaining > 0:
                try:
                    return await f(self, *args, **kwargs)
                except retried as e:
                    remaining -= 1
                    last_error = e
                    self.logger.error(f"{e!r} - retry")
                except _TRANSIENT_ERRORS as e:
                    raise ServerUnreachable(f"{self.endpoint} failed during {f.__name__}, not retried: {e!r}") from e
                if remaining > 0:
                    delay = min(self.BACKOFF_MULTIPLIER * (retries - remaining), self.RETRY_DELAY_MAX)
                    await asyncio.sleep(delay)
            raise ServerUnreachable(f"{self.endpoint} unreachable after {retries} attempts: {last_error!r}")

        return inner

    return decorator


retry = retry_on(_TRANSIENT_ERRORS)


@attr.s
class TaskServerClient:
    """Client for the competition endpoint routes."""

    DEFAULT_HTTP_TIMEOUT = 15  # seconds
    DEFAULT_HTTP_RETRIES = 3
    RETRY_DELAY_MAX = 10  # seconds
    BACKOFF_MULTIPLIER = 0.5

    endpoint = attr.ib(type=str)
    http_timeout = attr.ib(type=float, default=DEFAULT_HTTP_TIMEOUT)
    http_retries = attr.ib(type=int, default=DEFAULT_HTTP_RETRIES)
    session = attr.ib(type=Optional[aiohttp.ClientSession], default=None)
    logger = attr.ib(type=logging.Logger, factory=lambda: logging.getLogger(__name__))

    @endpoint.validator
    def _validate_endpoint(self, attribute, value):
        if not value.startswith(("http://", "https://")):
            raise ValueError("Endpoint must start with http:// or https://")

    def _url(self, path: str) -> str:
        return f"{self.endpoint.rstrip('/')}/{path}"

    async def _ensure_session(self) -> aiohttp.ClientSession:
        if self.session is None or self.session.closed:
            self.session = aiohttp.ClientSession(timeout=aiohttp.ClientTimeout(total=self.http_timeout))
        return self.session

    async def close(self) -> None:
        """Close the client session."""
        if self.session is not None and not self.session.closed:
            await self.session.close()
        self.session = None

    async def __aenter__(self):
        """Open the session on entry."""
        await self._ensure_session()
        return self

    async def __aexit__(self, *exc_info):
        """Close the session on exit."""
        await self.close()

    @staticmethod
    async def _raise_for(response: aiohttp.ClientResponse, subject: str):
        if response.status < 400:
            return
        try:
            message = (await response.json()).get("message", "")
        except (aiohttp.ContentTypeError, ValueError):
            message = await response.text()
        if response.status == HTTP_NOT_FOUND:
            raise MissingRawFile(subject)
        if response.status == HTTP_UNPROCESSABLE:
            raise UnreadablePayload(message)
        if response.status == HTTP_TOO_MANY_REQUESTS:
            raise SubmissionLimitReached(message)
        response.raise_for_status()

    @retry
    async def list_files(self) -> List[dict]:
        """Return the public file listing."""
        session = await self._ensure_session()
        async with session.get(self._url("files")) as r:
            await self._raise_for(r, "files")
            return await r.json()

    @retry
    async def download(self, name: str) -> bytes:
        """Download one public file."""
        session = await self._ensure_session()
        async with session.get(self._url(f"files/{name}")) as r:
            await self._raise_for(r, name)
            return await r.read()

    @retry_on(_CONNECT_ERRORS)
    async def submit(self, payload: bytes, submitter_label: str) -> dict:
        """Send a raw CSV submission and return the submission record."""
        session = await self._ensure_session()
        headers = {SUBMITTER_HEADER: submitter_label, "Content-Type": "text/csv"}
        async with session.post(self._url("submit"), data=payload, headers=headers) as r:
            await self._raise_for(r, "submit")
            record = await r.json()
        self.logger.debug(f"submission {record['id']} admissible={record['admissible']}")
        return record

    @retry
    async def submissions(self) -> List[dict]:
        """Return the full submission history."""
        session = await self._ensure_session()
        async with session.get(self._url("submissions")) as r:
            await self._raise_for(r, "submissions")
            return await r.json()

    @retry
    async def leaderboard(self) -> List[dict]:
        """Return the ranked leaderboard."""
        session = await self._ensure_session()
        async with session.get(self._url("leaderboard")) as r:
            await self._raise_for(r, "leaderboard")
            return await r.json()
