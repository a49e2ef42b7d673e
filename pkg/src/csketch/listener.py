"""Plain TCP ingestion: one wire stream per connection.

The listener reads until the stream's end marker (or EOF), feeds the payload
through the store, and answers with a one-line JSON ingest report before
closing the connection. Connections are parsed as they arrive; installs into
the graph stay serialized because a single thread owns the store.
"""

from __future__ import annotations

import json
import socket
import threading

from csketch.store import DataStore, IngestReport


def _read_stream(conn: socket.socket, limit: int = 64 * 1024 * 1024) -> bytes:
    """Read lines up to and including the end marker (or EOF)."""
    lines = []
    total = 0
    with conn.makefile("rb") as reader:
        for line in reader:
            lines.append(line)
            total += len(line)
            if total > limit:
                raise ValueError("stream exceeds size limit")
            if line.strip() == b"E":
                break
    return b"".join(lines)


def serve(
    store: DataStore,
    host: str = "127.0.0.1",
    port: int = 0,
    max_connections: int | None = None,
    stop_event: threading.Event | None = None,
    ready: "list | None" = None,
) -> IngestReport:
    """Accept connections until stopped; returns the cumulative report.

    ``ready`` (if given) receives the bound (host, port) once listening,
    which is how callers learn an ephemeral port.
    """
    total = IngestReport()
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen()
        server.settimeout(0.2)
        if ready is not None:
            ready.append(server.getsockname())
        served = 0
        while max_connections is None or served < max_connections:
            if stop_event is not None and stop_event.is_set():
                break
            try:
                conn, _addr = server.accept()
            except socket.timeout:
                continue
            with conn:
                report = IngestReport()
                try:
                    data = _read_stream(conn)
                    store.ingest_stream(data, "tcp", report)
                except ValueError as exc:
                    report.parse_errors += 1
                    report.diagnostics.append(f"tcp: {exc}")
                if store.sweep_policy == "after-ingest":
                    report.edges_expired = store.graph.expire()
                store.save()
                conn.sendall((json.dumps(report.to_dict()) + "\n").encode())
                served += 1
                total.streams += report.streams
                total.samples += report.samples
                total.gaps += report.gaps
                total.contacts_installed += report.contacts_installed
                total.edges_created += report.edges_created
                total.edges_expired += report.edges_expired
                total.parse_errors += report.parse_errors
                total.diagnostics.extend(report.diagnostics)
    return total
