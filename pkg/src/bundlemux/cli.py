"""Operator entry points: the daemon launcher and single-shot tools.

Every tool is a plain control-protocol client; nothing here reaches into
daemon internals. Exit codes: 0 success, 1 protocol/runtime error, 2 usage
error.
"""

import argparse
import json
import logging
import signal
import sys
import threading

from . import cbor
from .aap2.client import Aap2Client
from .aap2.messages import AUTH_LINK_CONTROL, LinkMsg, LinkOp, Status
from .config import load_config
from .errors import BundlemuxError, ConfigError
from .harness import run_scenario
from .node import Node

log = logging.getLogger("bundlemux")

EXIT_OK = 0
EXIT_PROTOCOL = 1
EXIT_USAGE = 2


def _connect_args(parser):
    parser.add_argument("--connect", default="127.0.0.1:4244",
                        help="daemon control address host:port")
    parser.add_argument("--socket", help="daemon control socket path "
                                         "(overrides --connect)")


def _open_client(args) -> Aap2Client:
    if getattr(args, "socket", None):
        return Aap2Client(unix=args.socket)
    host, _, port = args.connect.rpartition(":")
    return Aap2Client(tcp=(host, int(port)))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bundlemux",
        description="Bundle Protocol v7 node and control tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("daemon", help="run a node until signaled")
    p.add_argument("config", help="path to the JSON config file")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("send", help="send one application data unit")
    _connect_args(p)
    p.add_argument("--to", required=True, help="destination EID")
    p.add_argument("--from-agent", required=True, dest="agent",
                   help="local agent id registered as the source endpoint")
    p.add_argument("--secret", default="", help="endpoint shared secret")
    p.add_argument("--lifetime", type=int, help="bundle lifetime in ms")
    p.add_argument("payload", nargs="?", default="-",
                   help="payload file, or - for stdin")

    p = sub.add_parser("recv", help="receive application data units")
    _connect_args(p)
    p.add_argument("--agent", required=True)
    p.add_argument("--secret", default="")
    p.add_argument("--count", type=int, default=1,
                   help="exit after this many ADUs")
    p.add_argument("--hex", action="store_true", help="print payloads as hex")

    p = sub.add_parser("link", help="add or remove a next hop")
    p.add_argument("op", choices=["up", "down"])
    _connect_args(p)
    p.add_argument("--node", required=True, help="next-hop node EID")
    p.add_argument("--cla", required=True, help="CLA address <cla>:<detail>")
    p.add_argument("--secret", required=True, help="admin secret")
    p.add_argument("--direct", action="store_true",
                   help="install a static forwarding rule (skip the BDM)")

    p = sub.add_parser("storage", help="query, delete, or recall stored bundles")
    p.add_argument("verb", choices=["query", "delete", "recall"])
    _connect_args(p)
    p.add_argument("--node-id", help="daemon node EID (defaults to Welcome)")
    p.add_argument("--endpoint", default="sqa", help="storage endpoint demux")
    p.add_argument("--dest", help="destination pattern (\"*\" wildcards)")
    p.add_argument("--source", help="exact source EID")
    p.add_argument("--after", type=int, help="creation time lower bound (ms)")
    p.add_argument("--before", type=int, help="creation time upper bound (ms)")
    p.add_argument("--limit", type=int)
    p.add_argument("--keep", action="store_true",
                   help="recall without deleting the stored copy")
    p.add_argument("--secret", default="storage-tool",
                   help="shared secret for the reply endpoint")
    p.add_argument("--agent", default="sqtool", help="reply endpoint agent id")

    p = sub.add_parser("fib", help="show the forwarding information base")
    p.add_argument("verb", choices=["show"])
    _connect_args(p)
    p.add_argument("--secret", required=True, help="admin secret")
    p.add_argument("--window", type=float, default=0.5,
                   help="seconds to collect notifications")

    p = sub.add_parser("harness", help="multi-node scenario runner")
    harness_sub = p.add_subparsers(dest="harness_command", required=True)
    hp = harness_sub.add_parser("run", help="run one scenario file")
    hp.add_argument("scenario", help="scenario JSON path")
    hp.add_argument("--junit", help="write a JUnit XML report here")

    return parser


def cmd_daemon(args) -> int:
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    node = Node(config)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    node.start()
    log.info("node %s ready (aap2 tcp port %s)", config.node_id, node.aap2_port())
    stop.wait()
    node.stop()
    return EXIT_OK


def cmd_send(args) -> int:
    if args.payload == "-":
        payload = sys.stdin.buffer.read()
    else:
        with open(args.payload, "rb") as handle:
            payload = handle.read()
    client = _open_client(args)
    try:
        response = client.configure(active=True, agent_id=args.agent,
                                    shared_secret=args.secret.encode())
        if response.status != Status.OK:
            print(f"registration failed: {response.status.name} {response.detail}",
                  file=sys.stderr)
            return EXIT_PROTOCOL
        response = client.send_adu(args.to, payload, lifetime_ms=args.lifetime)
        if response.status != Status.OK:
            print(f"send failed: {response.status.name} {response.detail}",
                  file=sys.stderr)
            return EXIT_PROTOCOL
        print(f"sent {len(payload)} bytes to {args.to}", file=sys.stderr)
        return EXIT_OK
    finally:
        client.close()


def cmd_recv(args) -> int:
    client = _open_client(args)
    try:
        response = client.configure(active=False, agent_id=args.agent,
                                    shared_secret=args.secret.encode())
        if response.status != Status.OK:
            print(f"registration failed: {response.status.name} {response.detail}",
                  file=sys.stderr)
            return EXIT_PROTOCOL

        def on_adu(adu):
            if args.hex:
                print(adu.payload.hex())
            else:
                sys.stdout.buffer.write(adu.payload)
                sys.stdout.buffer.flush()
            print(f"from {adu.src} creation {adu.creation}", file=sys.stderr)

        client.serve(on_adu=on_adu, max_calls=args.count)
        return EXIT_OK
    finally:
        client.close()


def cmd_link(args) -> int:
    client = _open_client(args)
    try:
        response = client.configure(active=True, auth=AUTH_LINK_CONTROL,
                                    admin_secret=args.secret.encode())
        if response.status != Status.OK:
            print(f"authorization failed: {response.status.name}", file=sys.stderr)
            return EXIT_PROTOCOL
        if args.op == "up":
            response = client.link_up(args.node, args.cla, direct=args.direct)
        else:
            response = client.link_down(args.node, args.cla)
        if response.status != Status.OK:
            print(f"link {args.op} failed: {response.status.name} "
                  f"{response.detail}", file=sys.stderr)
            return EXIT_PROTOCOL
        print(f"link {args.op}: {args.node} via {args.cla}", file=sys.stderr)
        return EXIT_OK
    finally:
        client.close()


def cmd_storage(args) -> int:
    verbs = {"query": 0, "delete": 1, "recall": 2}
    recv = _open_client(args)
    send = _open_client(args)
    try:
        node_id = args.node_id or recv.node_id
        secret = args.secret.encode()
        response = recv.configure(active=False, agent_id=args.agent,
                                  shared_secret=secret)
        if response.status != Status.OK:
            print(f"reply registration failed: {response.status.name}",
                  file=sys.stderr)
            return EXIT_PROTOCOL
        response = send.configure(active=True, agent_id=args.agent,
                                  shared_secret=secret)
        if response.status != Status.OK:
            print(f"registration failed: {response.status.name}", file=sys.stderr)
            return EXIT_PROTOCOL

        filter_map = {}
        for key, value in ((0, args.dest), (1, args.source), (2, args.after),
                           (3, args.before), (4, args.limit)):
            if value is not None:
                filter_map[key] = value
        body = {0: verbs[args.verb]}
        if filter_map:
            body[1] = filter_map
        if args.keep:
            body[2] = False

        reply_box = []

        def on_adu(adu):
            reply_box.append(cbor.decode(adu.payload))

        response = send.send_adu(node_id + args.endpoint, cbor.encode(body))
        if response.status != Status.OK:
            print(f"command send failed: {response.status.name}", file=sys.stderr)
            return EXIT_PROTOCOL
        recv.serve(on_adu=on_adu, max_calls=1)
        if not reply_box:
            print("no reply from storage endpoint", file=sys.stderr)
            return EXIT_PROTOCOL
        reply = reply_box[0]
        if reply.get(0) != 0:
            print(f"storage error: {reply.get(1)}", file=sys.stderr)
            return EXIT_PROTOCOL
        if args.verb == "query":
            records = reply.get(1, [])
            print(f"{'storage id':16} {'destination':28} {'source':24} "
                  f"{'size':>8} {'lifetime':>10}")
            for record in records:
                print(f"{record.get(0, '')[:16]:16} {record.get(1, ''):28} "
                      f"{record.get(2, ''):24} {record.get(6, 0):>8} "
                      f"{record.get(4, 0):>10}")
            print(f"{len(records)} record(s)", file=sys.stderr)
        else:
            print(f"{args.verb}: {reply.get(1, 0)} bundle(s)", file=sys.stderr)
        return EXIT_OK
    finally:
        send.close()
        recv.close()


def cmd_fib(args) -> int:
    client = _open_client(args)
    try:
        response = client.configure(active=False, auth=AUTH_LINK_CONTROL,
                                    admin_secret=args.secret.encode())
        if response.status != Status.OK:
            print(f"authorization failed: {response.status.name}", file=sys.stderr)
            return EXIT_PROTOCOL
        entries = {}

        def on_notify(msg: LinkMsg):
            connected = msg.op == LinkOp.NOTIFY_UP
            entries[(msg.node_id, msg.cla_address)] = connected

        timer = threading.Timer(args.window, client.stop)
        timer.start()
        try:
            client.serve(on_notify=on_notify)
        finally:
            timer.cancel()
        print(f"{'node':28} {'cla address':32} state")
        for (node_id, address), connected in sorted(entries.items()):
            state = "CONNECTED" if connected else "down"
            print(f"{node_id:28} {address:32} {state}")
        return EXIT_OK
    finally:
        client.close()


def cmd_harness(args) -> int:
    report = run_scenario(args.scenario, junit_path=args.junit)
    status = "PASS" if report["ok"] else "FAIL"
    print(f"{status} {report['name']}")
    for failure in report["failures"]:
        print(f"  - {failure}")
    for node, counters in report["counters"].items():
        print(f"  {node}: {json.dumps(counters, sort_keys=True)}")
    return EXIT_OK if report["ok"] else EXIT_PROTOCOL


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "daemon": cmd_daemon, "send": cmd_send, "recv": cmd_recv,
        "link": cmd_link, "storage": cmd_storage, "fib": cmd_fib,
        "harness": cmd_harness,
    }
    try:
        return handlers[args.command](args)
    except BundlemuxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ConnectionError, OSError) as exc:
        print(f"connection error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
