"""Provide network related functions."""

import socket
from typing import NamedTuple

import psutil

LOCALHOST_IP = "127.0.0.1"


class BindAddress(NamedTuple):
    """Host and port of a listening service."""

    host: str
    port: int

    @property
    def url(self) -> str:
        """Return the HTTP base URL."""
        return f"http://{self.host}:{self.port}"


def find_free_port(host: str = LOCALHOST_IP) -> int:
    """Ask the OS for an unused TCP port on ``host``."""
    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        s.bind((host, 0))
        return s.getsockname()[1]
    finally:
        s.close()


def port_available(port: int, host: str = LOCALHOST_IP) -> bool:
    """Whether nothing on this machine listens on ``port``."""
    if port == 0:
        return True
    for conn in _listening():
        if conn.laddr and conn.laddr.port == port and conn.laddr.ip in (host, "0.0.0.0", "::"):
            return False
    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        s.bind((host, port))
    except OSError:
        return False
    finally:
        s.close()
    return True


def _listening():
    try:
        return [c for c in psutil.net_connections(kind="tcp") if c.status == psutil.CONN_LISTEN]
    except (psutil.AccessDenied, PermissionError):
        # unprivileged on some platforms; the bind probe still answers
        return []
