import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from dotenv import load_dotenv
from loguru import logger as log

from .allocation import download_cost
from .core import SystemParams, parse_gamma
from .errors import CertificateFailed, WpirError
from .leakage import METRICS, rho_maxl, rho_mi
from .net import DEFAULT_TIMEOUT, client_retrieve, serve
from .presets import resolve_allocation
from .scheme import MessageStore, render_table
from .sim import empirical_leakage, run_all
from .tradeoff import DEFAULT_POINTS, default_grid, tradeoff_curve, write_points_csv, write_points_json
from .verify import SUITE_ALIASES, SUITES, run_suites

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_RUNTIME = 3


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 1, 2 is reserved for failed verification"""

    def error(self, message):
        self.print_usage(sys.stderr)
        log.error(message)
        sys.exit(EXIT_USAGE)


def at_least_two(text: str) -> int:
    """argparse type for N and K"""
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer") from None
    if value < 2:
        raise argparse.ArgumentTypeError(f"must be at least 2, got {value}")
    return value


def make_params(args) -> SystemParams:
    gamma = parse_gamma(args.gamma) if args.gamma else ()
    return SystemParams(args.n, args.k, gamma)


def cmd_tradeoff(args) -> int:
    params = make_params(args)
    points = tradeoff_curve(args.metric, params, D_grid=default_grid(params, args.points), full=not args.skip_full)
    write = write_points_csv if args.format == "csv" else write_points_json
    if args.out:
        with open(args.out, "w", newline="") as stream:
            write(points, stream)
        log.info(f"wrote {len(points)} points to {args.out}")
    else:
        write(points, sys.stdout)
    return EXIT_OK


def cmd_table(args) -> int:
    params = make_params(args)
    store = MessageStore.load(Path(args.store)) if args.store else None
    if store is not None and (store.params.N, store.params.K) != (params.N, params.K):
        log.error(f"store {args.store} holds N={store.params.N} K={store.params.K}, not N={params.N} K={params.K}")
        return EXIT_USAGE
    messages = [args.message] if args.message else range(1, params.K + 1)
    print("\n\n".join(render_table(params, k, store) for k in messages))
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suites(args.suite, args.perturb)
    for result in results:
        print(result)
        for line in result.details:
            print(f"    {line}")
    if all(r.passed for r in results):
        return EXIT_OK
    log.error(f"{sum(not r.passed for r in results)} of {len(results)} suites failed")
    return EXIT_VERIFY


def cmd_simulate(args) -> int:
    params = make_params(args)
    a = resolve_allocation(args.alloc, params)
    store = MessageStore.random(params, np.random.default_rng(args.seed))
    report = run_all(a, store, args.trials, args.seed)
    out = report.to_dict()
    out["analytic_D"] = download_cost(a)
    out["leakage"] = {
        metric: {"empirical": empirical_leakage(report, metric), "analytic": (rho_maxl if metric == "maxl" else rho_mi)(a)}
        for metric in METRICS
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_store(args) -> int:
    params = SystemParams(args.n, args.k)
    MessageStore.random(params, np.random.default_rng(args.seed)).save(Path(args.store))
    log.info(f"wrote a random store with K={params.K} messages of L={params.L} symbols to {args.store}")
    return EXIT_OK


def cmd_serve(args) -> int:
    serve(Path(args.store), args.listen)
    return EXIT_OK


def cmd_retrieve(args) -> int:
    # one server per endpoint
    servers = [s.strip() for s in args.servers.split(",") if s.strip()]
    if len(servers) < 2:
        log.error(f"need at least 2 servers, got '{args.servers}'")
        return EXIT_USAGE
    gamma = parse_gamma(args.gamma) if args.gamma else ()
    params = SystemParams(len(servers), args.messages, gamma)
    a = resolve_allocation(args.alloc, params)
    result = client_retrieve(args.k, a, servers, args.seed, args.timeout)
    out = {"k": result.k, "key": str(result.key), "message": result.message.hex(), "symbols": result.symbols, "frames": result.frames_sent}
    print(json.dumps(out))
    return EXIT_OK


def add_params(parser: argparse.ArgumentParser):
    parser.add_argument("--n", "-N", type=at_least_two, help="number of servers", default=os.environ.get("WPIR_N", "3"))
    parser.add_argument("--k", "-K", type=at_least_two, help="number of messages", default=os.environ.get("WPIR_K", "2"))
    parser.add_argument("--gamma", "-g", type=str, help="trust weights a;b;c", default=os.environ.get("WPIR_GAMMA", ""))


def parse_cmdline(argv=None):
    load_dotenv()
    parser = ArgumentParser(prog="wpir", description="Weakly-private information retrieval with escape patterns.")
    parser.add_argument("--log-level", type=str, help="log level", default=os.environ.get("WPIR_LOG_LEVEL", "INFO"))
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    tradeoff = commands.add_parser("tradeoff", help="privacy/download tradeoff curve")
    add_params(tradeoff)
    tradeoff.add_argument("--metric", "-m", choices=METRICS, default="maxl")
    tradeoff.add_argument("--points", "-P", type=int, default=int(os.environ.get("WPIR_POINTS", str(DEFAULT_POINTS))))
    tradeoff.add_argument("--format", "-f", choices=("csv", "json"), default="csv")
    tradeoff.add_argument("--out", "-o", type=str, help="output file, stdout when omitted", default="")
    tradeoff.add_argument("--skip-full", action="store_true", help="leave out the full key space oracle")
    tradeoff.set_defaults(func=cmd_tradeoff)

    table = commands.add_parser("table", help="query/answer table of the code")
    add_params(table)
    table.add_argument("--message", type=int, help="only this message index", default=0)
    table.add_argument("--store", "-s", type=str, help="show answer bytes from this store", default="")
    table.set_defaults(func=cmd_table)

    verify = commands.add_parser("verify", help="certificate batteries")
    verify.add_argument("--suite", choices=[*SUITES, *SUITE_ALIASES, "all"], default="all")
    verify.add_argument("--perturb", action="store_true", help="inject an error, every suite must fail")
    verify.set_defaults(func=cmd_verify)

    simulate = commands.add_parser("simulate", help="Monte Carlo run of the protocol")
    add_params(simulate)
    simulate.add_argument("--alloc", "-a", type=str, help="allocation JSON file or preset", default="uniform-tsc")
    simulate.add_argument("--trials", "-T", type=int, default=int(os.environ.get("WPIR_TRIALS", "100000")))
    simulate.add_argument("--seed", "-S", type=int, default=int(os.environ.get("WPIR_SEED", "0")))
    simulate.set_defaults(func=cmd_simulate)

    store = commands.add_parser("store", help="write a random message store")
    store.add_argument("--n", "-N", type=at_least_two, default=os.environ.get("WPIR_N", "3"))
    store.add_argument("--k", "-K", type=at_least_two, default=os.environ.get("WPIR_K", "2"))
    store.add_argument("--seed", "-S", type=int, default=int(os.environ.get("WPIR_SEED", "0")))
    store.add_argument("--store", "-s", type=str, default=os.environ.get("WPIR_STORE", "store.wpir"))
    store.set_defaults(func=cmd_store)

    server = commands.add_parser("serve", help="run one answer server")
    server.add_argument("--store", "-s", type=str, default=os.environ.get("WPIR_STORE", "store.wpir"))
    server.add_argument("--listen", "-l", type=str, help="host:port", default=os.environ.get("WPIR_LISTEN", "127.0.0.1:9000"))
    server.set_defaults(func=cmd_serve)

    retrieve = commands.add_parser("retrieve", help="retrieve one message from N servers")
    retrieve.add_argument("--k", type=int, help="index of the wanted message", default=1)
    retrieve.add_argument("--messages", "-K", type=at_least_two, help="number of messages", default=os.environ.get("WPIR_K", "2"))
    retrieve.add_argument("--gamma", "-g", type=str, help="trust weights a;b;c", default=os.environ.get("WPIR_GAMMA", ""))
    retrieve.add_argument("--alloc", "-a", type=str, help="allocation JSON file or preset", default="uniform-tsc")
    retrieve.add_argument("--servers", type=str, help="comma separated host:port list", default=os.environ.get("WPIR_SERVERS", ""))
    retrieve.add_argument("--seed", "-S", type=int, default=int(os.environ.get("WPIR_SEED", "0")))
    retrieve.add_argument("--timeout", type=float, default=float(os.environ.get("WPIR_TIMEOUT", str(DEFAULT_TIMEOUT))))
    retrieve.set_defaults(func=cmd_retrieve)

    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_cmdline(argv)
    log.remove()
    log.add(sys.stderr, format="<level>{level:10}</level>| <cyan>{message}</cyan>", level=args.log_level.upper())
    try:
        return args.func(args)
    except CertificateFailed as e:
        log.error(f"certificate failed: {e}")
        return EXIT_VERIFY
    except (WpirError, OSError) as e:
        log.error(f"{type(e).__name__}: {e}")
        log.opt(exception=e).debug("traceback")
        return EXIT_RUNTIME


def cli():
    sys.exit(main())


if __name__ == "__main__":
    cli()
