"""Command-line entry point.

    lacp keygen  --keystore ks.json --agent-id alice
    lacp serve   --listen 127.0.0.1:4800 --keystore ks.json --identity server
    lacp send    --connect 127.0.0.1:4800 --keystore ks.json --identity alice \
                 --to server --tool calculator --params '{"expression":"15*7"}'
    lacp bench   [--iterations N] [--out report.json]
    lacp attack  tamper|replay --connect HOST:PORT --keystore ks.json \
                 --identity alice --to server
    lacp txn-sim --participants 3 --seed 7 --faults drop=0.2,dup=0.2,delay=0.5

The keystore path may also come from the LACP_KEYSTORE environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import envelope as env
from .client import Client, RetryPolicy
from .errors import LacpError
from .harness import attack_replay, attack_tamper, bench_run, make_tcp_target
from .node import Node, default_registry
from .transaction import ReplayGuard
from .transport import TcpClientTransport, TcpServer
from .txnsim import txn_fault_run


def _host_port(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {value!r}")
    return host, int(port)


def _keystore_path(args) -> str:
    path = args.keystore or os.environ.get("LACP_KEYSTORE")
    if not path:
        raise SystemExit("no keystore: pass --keystore or set LACP_KEYSTORE")
    return path


def _add_keystore_flags(parser, with_identity=True):
    parser.add_argument("--keystore", help="keystore JSON path (or LACP_KEYSTORE env)")
    if with_identity:
        parser.add_argument("--identity", required=True,
                            help="agent id of the local signing identity")


def cmd_keygen(args) -> int:
    path = _keystore_path(args)
    if os.path.exists(path):
        store = env.Keystore.load(path)
    else:
        store = env.Keystore()
    if args.agent_id in store:
        raise SystemExit(f"agent id {args.agent_id!r} already present in {path}")
    store.add(env.keygen(args.agent_id))
    store.save(path)
    print(f"added {args.agent_id} to {path}")
    return 0


def cmd_serve(args) -> int:
    store = env.Keystore.load(_keystore_path(args))
    identity = store.get(args.identity)
    if identity is None or not identity.can_sign:
        raise SystemExit(f"identity {args.identity!r} with a private key not in keystore")
    node = Node(identity, store, registry=default_registry(),
                guard=ReplayGuard(args.freshness, args.retention))
    host, port = args.listen
    server = TcpServer(node.frame_handler, host, port)
    print(f"serving on {server.host}:{server.port} as {args.identity}", flush=True)
    server.serve_forever()
    return 0


def cmd_send(args) -> int:
    store = env.Keystore.load(_keystore_path(args))
    identity = store.get(args.identity)
    if identity is None or not identity.can_sign:
        raise SystemExit(f"identity {args.identity!r} with a private key not in keystore")
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as exc:
        raise SystemExit(f"--params is not valid JSON: {exc}")
    host, port = args.connect
    transport = TcpClientTransport(host, port)
    client = Client(identity, store, args.to, transport)
    policy = RetryPolicy(max_attempts=args.attempts,
                         per_attempt_timeout=args.timeout)
    try:
        claims = client.send_act(args.tool, params, policy=policy)
    except LacpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        transport.close()
    print(json.dumps(claims.payload.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    report = bench_run(iterations=args.iterations)
    print(report.render_table())
    if args.out:
        report.save(args.out)
        print(f"report written to {args.out}")
    return 0


def cmd_attack(args) -> int:
    store = env.Keystore.load(_keystore_path(args))
    host, port = args.connect
    target = make_tcp_target(host, port, store, args.identity, args.to)
    report = attack_tamper(target) if args.kind == "tamper" else attack_replay(target)
    print(report.render())
    return 0 if report.passed else 1


def _parse_faults(spec: str) -> dict[str, float]:
    out: dict[str, float] = {}
    if not spec:
        return out
    for part in spec.split(","):
        key, _, value = part.partition("=")
        if key not in ("drop", "dup", "delay"):
            raise SystemExit(f"unknown fault {key!r}; use drop=,dup=,delay=")
        out[key] = float(value)
    return out


def cmd_txn_sim(args) -> int:
    faults = _parse_faults(args.faults)
    failures = 0
    for seed in range(args.seed, args.seed + args.runs):
        report = txn_fault_run(participants=args.participants, seed=seed,
                               drop_rate=faults.get("drop", 0.0),
                               dup_rate=faults.get("dup", 0.0),
                               max_delay=faults.get("delay", 0.0))
        print(report.render())
        if not report.passed:
            failures += 1
    if args.runs > 1:
        print(f"{args.runs - failures}/{args.runs} runs clean")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lacp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create an identity in a keystore file")
    _add_keystore_flags(p, with_identity=False)
    p.add_argument("--agent-id", required=True)
    p.set_defaults(fn=cmd_keygen)

    p = sub.add_parser("serve", help="run a tool-server node")
    p.add_argument("--listen", type=_host_port, default=("127.0.0.1", 4800))
    _add_keystore_flags(p)
    p.add_argument("--freshness", type=float, default=300.0,
                   help="freshness window in seconds")
    p.add_argument("--retention", type=float, default=86_400.0,
                   help="replay-guard retention in seconds")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("send", help="send one signed ACT and print the OBSERVE")
    p.add_argument("--connect", type=_host_port, required=True)
    _add_keystore_flags(p)
    p.add_argument("--to", required=True, help="server agent id")
    p.add_argument("--tool", required=True)
    p.add_argument("--params", default="{}", help="tool params as inline JSON")
    p.add_argument("--attempts", type=int, default=3)
    p.add_argument("--timeout", type=float, default=2.0)
    p.set_defaults(fn=cmd_send)

    p = sub.add_parser("bench", help="size/latency benchmark vs unsecured baseline")
    p.add_argument("--iterations", type=int, default=10_000)
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("attack", help="run an attack simulation against a node")
    p.add_argument("kind", choices=("tamper", "replay"))
    p.add_argument("--connect", type=_host_port, required=True)
    _add_keystore_flags(p)
    p.add_argument("--to", required=True, help="server agent id")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("txn-sim", help="two-phase-commit fault injection runs")
    p.add_argument("--participants", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--faults", default="", help="drop=P,dup=P,delay=SECONDS")
    p.set_defaults(fn=cmd_txn_sim)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("LACP_LOG", "WARNING"),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
