"""HTTP surface of the local competition server."""

import logging
from typing import Optional

import attr
from aiohttp import web

from ..errors import PortUnavailable, SubmissionLimitReached, UnreadablePayload
from ..network import LOCALHOST_IP, BindAddress, port_available
from .state import TaskServerState

logger = logging.getLogger(__name__)

STATE_KEY = web.AppKey("state", TaskServerState)
SUBMITTER_HEADER = "X-Submitter"
DEFAULT_SUBMITTER = "anonymous"

HTTP_NOT_FOUND = 404
HTTP_UNPROCESSABLE = 422
HTTP_TOO_MANY_REQUESTS = 429


def _error(status: int, code: str, message: str) -> web.Response:
    return web.json_response({"error": code, "message": message}, status=status)


async def list_files(request: web.Request) -> web.Response:
    """Return name, size and digest of every public file."""
    return web.json_response(request.app[STATE_KEY].file_listing())


async def get_file(request: web.Request) -> web.Response:
    """Return the raw bytes of one public file."""
    name = request.match_info["name"]
    payload = request.app[STATE_KEY].public_files.get(name)
    if payload is None:
        return _error(HTTP_NOT_FOUND, "NotFound", f"no public file named {name!r}")
    return web.Response(body=payload, content_type="text/csv", charset="utf-8")


async def submit(request: web.Request) -> web.Response:
    """Validate, score and record a raw CSV submission."""
    state = request.app[STATE_KEY]
    label = request.headers.get(SUBMITTER_HEADER, DEFAULT_SUBMITTER).strip() or DEFAULT_SUBMITTER
    payload = await request.read()
    try:
        record = await state.handle_submission(payload, label)
    except UnreadablePayload as e:
        return _error(HTTP_UNPROCESSABLE, e.code, str(e))
    except SubmissionLimitReached as e:
        return _error(HTTP_TOO_MANY_REQUESTS, e.code, str(e))
    return web.json_response(record.to_dict())


async def list_submissions(request: web.Request) -> web.Response:
    """Return the full submission history."""
    return web.json_response([record.to_dict() for record in request.app[STATE_KEY].submissions])


async def get_leaderboard(request: web.Request) -> web.Response:
    """Return the ranked leaderboard."""
    return web.json_response([row.to_dict() for row in request.app[STATE_KEY].leaderboard()])


@web.middleware
async def log_requests(request: web.Request, handler):
    """Log every request at debug level."""
    response = await handler(request)
    logger.debug(f"{request.method} {request.path} -> {response.status}")
    return response


async def _on_shutdown(app: web.Application):
    state = app[STATE_KEY]
    logger.info(f"server shutting down with {len(state.submissions)} recorded submissions")


def create_app(state: TaskServerState) -> web.Application:
    """Build the application with every route under the task's endpoint base."""
    app = web.Application(middlewares=[log_requests], client_max_size=1024**3)
    app[STATE_KEY] = state
    base = state.task.endpoints.base.rstrip("/")
    app.add_routes([
        web.get(f"{base}/files", list_files),
        web.get(f"{base}/files/{{name}}", get_file),
        web.post(f"{base}/submit", submit),
        web.get(f"{base}/submissions", list_submissions),
        web.get(f"{base}/leaderboard", get_leaderboard),
    ])
    app.on_shutdown.append(_on_shutdown)
    return app


@attr.s
class TaskServer:
    """Running server handle."""

    state = attr.ib(type=TaskServerState)
    host = attr.ib(type=str, default=LOCALHOST_IP)
    port = attr.ib(type=int, default=0)
    _runner = attr.ib(type=Optional[web.AppRunner], default=None)

    @property
    def address(self) -> BindAddress:
        """Return the bound address."""
        return BindAddress(self.host, self.port)

    @property
    def endpoint(self) -> str:
        """Return the base URL including the endpoint prefix."""
        return f"{self.address.url}{self.state.task.endpoints.base}"

    async def start(self) -> "TaskServer":
        """Bind and start serving."""
        if self.port and not port_available(self.port, self.host):
            raise PortUnavailable(f"port {self.port} on {self.host} is taken")
        runner = web.AppRunner(create_app(self.state), access_log=None)
        await runner.setup()
        site = web.TCPSite(runner, self.host, self.port)
        try:
            await site.start()
        except OSError as e:
            await runner.cleanup()
            raise PortUnavailable(f"cannot bind {self.host}:{self.port}: {e}") from None
        self._runner = runner
        self.port = runner.addresses[0][1]
        logger.info(f"serving {len(self.state.public_files)} files at {self.endpoint}")
        return self

    async def stop(self):
        """Stop serving; every recorded submission is already on disk."""
        if self._runner is not None:
            await self._runner.cleanup()
            self._runner = None

    async def __aenter__(self):
        """Start on entry."""
        return await self.start()

    async def __aexit__(self, *exc_info):
        """Stop on exit."""
        await self.stop()


async def serve(state: TaskServerState, host: str = LOCALHOST_IP, port: int = 0) -> TaskServer:
    """Start a server for ``state`` and return its handle."""
    return await TaskServer(state, host, port).start()
