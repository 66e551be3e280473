"""Command-line entry points: ``cellsim`` (simulator) and ``cellctl`` (controller)."""

from __future__ import annotations

import argparse
import contextlib
import logging
import socket
import sys
from pathlib import Path

from .bridge import BridgePolicy, drive, open_transport, soak
from .controller import DispatchMode, build_controller, dump_matrix
from .geometry import ConfigError, load_geometry
from .simulator import CellSimulator, serve

log = logging.getLogger("prodcell")


class _StdioTransport:
    def recv(self):
        return sys.stdin.readline() or None

    def send(self, line: str) -> None:
        sys.stdout.write(line)
        sys.stdout.flush()


class _SocketTransport:
    def __init__(self, conn: socket.socket):
        self.f = conn.makefile("rw", encoding="utf-8", newline="\n")

    def recv(self):
        return self.f.readline() or None

    def send(self, line: str) -> None:
        self.f.write(line)
        self.f.flush()


def _open_trace(path):
    return open(path, "w", encoding="utf-8") if path else contextlib.nullcontext()


def sim_main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="cellsim", description="Headless production cell simulator.")
    where = p.add_mutually_exclusive_group()
    where.add_argument("--stdio", action="store_true", help="serve one session on stdin/stdout")
    where.add_argument("--listen", type=int, metavar="PORT", help="serve TCP sessions on PORT")
    p.add_argument("--config", help="geometry config file")
    p.add_argument("--max-steps", type=int, help="end the session after N reacts")
    p.add_argument("--trace", help="write received/sent protocol lines to this file")
    args = p.parse_args(argv)
    try:
        geo = load_geometry(args.config)
    except (ConfigError, OSError) as exc:
        print(f"cellsim: {exc}", file=sys.stderr)
        return 2
    with _open_trace(args.trace) as trace:
        if args.listen is None:
            report = serve(_StdioTransport(), CellSimulator(geo), args.max_steps, trace)
            print("\n".join(report.lines()), file=sys.stderr)
            return 1 if report.errors else 0
        with socket.create_server(("127.0.0.1", args.listen)) as server:
            log.info("listening on port %d", args.listen)
            while True:
                conn, _ = server.accept()
                with conn:
                    report = serve(_SocketTransport(conn), CellSimulator(geo),
                                   args.max_steps, trace)
                print("\n".join(report.lines()), file=sys.stderr)


def _ctl_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cellctl", description="Production cell controller.")
    p.add_argument("--dump-matrix", action="store_true",
                   help="print the gate/participation table and exit")
    sub = p.add_subparsers(dest="command")
    for name in ("run", "soak"):
        s = sub.add_parser(name)
        s.add_argument("--connect", default="stdio",
                       help="stdio (spawn simulator), tcp:HOST:PORT, or inproc")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--steps", type=int, default=1000 if name == "run" else 20000)
        s.add_argument("--dispatcher", choices=("seq", "conc"), default="conc")
        s.add_argument("--trace")
        s.add_argument("--config")
        if name == "soak":
            s.add_argument("--report")
            s.add_argument("--min-forged", type=int,
                           help="required forged deliveries (default scales with --steps)")
    return p


def ctl_main(argv=None) -> int:
    p = _ctl_parser()
    args = p.parse_args(argv)
    if args.dump_matrix:
        sys.stdout.write(dump_matrix(build_controller()))
        return 0
    if args.command is None:
        p.print_usage(sys.stderr)
        return 2
    try:
        geo = load_geometry(args.config)
    except (ConfigError, OSError) as exc:
        print(f"cellctl: {exc}", file=sys.stderr)
        return 2
    mode = DispatchMode(args.dispatcher)
    with _open_trace(args.trace) as trace:
        if args.command == "run":
            transport = open_transport(args.connect, args.config, geo)
            try:
                report = drive(build_controller(mode, geo), transport,
                               BridgePolicy(args.seed), args.steps, trace)
            finally:
                transport.close()
        else:
            report = soak(geo, args.steps, args.seed, mode, args.connect, args.config,
                          trace, args.min_forged)
    text = "\n".join(report.lines()) + "\n"
    if getattr(args, "report", None):
        Path(args.report).write_text(text)
    sys.stdout.write(text)
    if report.violations:
        print(f"cellctl: {report.violations[0]}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "sim":
        return sim_main(argv[1:])
    if argv and argv[0] == "ctl":
        return ctl_main(argv[1:])
    print("usage: python -m prodcell.cli {sim|ctl} ...", file=sys.stderr)
    return 2


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    sys.exit(main())
