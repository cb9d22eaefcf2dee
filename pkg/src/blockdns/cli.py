"""Command-line entry point: ``blockdns <command> ...``.

Exit codes
----------
0   success
1   configuration, input or I/O error
2   resolve: NXDOMAIN
3   resolve: TLD not served by any chain
4   resolve: name exists but carries no data of the requested type
5   resolve: name database unavailable
6   ingest: some lines were rejected (use --lenient to accept)
64  command-line usage error
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analytics import GeoTable, build_report, load_domain_list, render_text, write_report
from .config import Config, ConfigError, parse_bind, resolve_config
from .crawler import EndpointUnreachable, aggregate_crawl, crawl, generate_candidates
from .gateway import Gateway, GatewayUnavailable, QType, SnapshotHolder, Status, serve_dns, serve_rest
from .ingest import ingest_stream
from .namedb import ExpiryPolicy, NameDb, SnapshotFormatError
from .nvs import load_tld_list

log = logging.getLogger("blockdns")

EXIT_OK, EXIT_ERROR, EXIT_NXDOMAIN, EXIT_UNSUPPORTED, EXIT_NODATA, EXIT_UNAVAILABLE, EXIT_REJECTS = range(7)
EXIT_USAGE = 64

RESOLVE_EXIT = {
    Status.OK: EXIT_OK,
    Status.NXDOMAIN: EXIT_NXDOMAIN,
    Status.UNSUPPORTED_TLD: EXIT_UNSUPPORTED,
    Status.NO_ADDRESS_DATA: EXIT_NODATA,
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, ensure_ascii=True))
    else:
        print(text)


def _db_path(args, cfg: Config) -> Path:
    path = args.db or cfg.db
    if path is None:
        raise CliError("no database path: pass --db or set 'db' in the config file")
    return Path(path)


def _open_db(args, cfg: Config, create: bool = False) -> NameDb:
    path = _db_path(args, cfg)
    if not path.exists():
        if create:
            return NameDb(cfg.policy or ExpiryPolicy())
        raise CliError(f"database {path} does not exist; run 'blockdns ingest' first")
    try:
        return NameDb.load(path, cfg.policy)
    except SnapshotFormatError as exc:
        raise CliError(f"{path}: {exc}") from None


def _tlds(args, cfg: Config) -> frozenset[str]:
    path = getattr(args, "tld_list", None) or cfg.tld_list
    return load_tld_list(Path(path)) if path else load_tld_list()


def cmd_ingest(args, cfg: Config) -> int:
    db = _open_db(args, cfg, create=True)
    dump = sys.stdin if args.dump == "-" else open(args.dump, encoding="utf-8", errors="surrogateescape")
    with dump:
        report = ingest_stream(dump, db)
    db.snapshot().save(_db_path(args, cfg))
    _emit(args, report.to_dict(), report.summary())
    for line, reason in report.rejects[: args.show_rejects]:
        print(f"  line {line}: {reason}", file=sys.stderr)
    return EXIT_OK if report.rejected == 0 or args.lenient else EXIT_REJECTS


def cmd_resolve(args, cfg: Config) -> int:
    try:
        view = _open_db(args, cfg).snapshot()
    except CliError as exc:
        print(f"blockdns: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    gw = Gateway(lambda: view, routing=cfg.routing, at_height=args.at_height)
    qtype = QType[args.type]
    try:
        result = gw.resolve_exact(args.name, qtype) if args.exact else gw.resolve(args.name.lower(), qtype)
    except GatewayUnavailable as exc:
        print(f"blockdns: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    body = result.to_dict()
    lines = [f"{args.name}: {result.status.value}" + (" (collision)" if result.collision else "")]
    for kind in ("a", "aaaa", "ns", "txt"):
        for item in body["answers"].get(kind, []):
            lines.append(f"  {kind.upper():5} {item}")
    _emit(args, body, "\n".join(lines))
    return RESOLVE_EXIT[result.status]


def _watch(holder: SnapshotHolder, path: Path, cfg: Config, interval: float, stop: threading.Event) -> None:
    """Swap in a fresh snapshot whenever the database file changes."""
    last = path.stat().st_mtime_ns if path.exists() else None
    while not stop.wait(interval):
        try:
            mtime = path.stat().st_mtime_ns
        except FileNotFoundError:
            continue
        if mtime != last:
            try:
                holder.swap(NameDb.load(path, cfg.policy).snapshot())
                last = mtime
                log.info("reloaded %s", path)
            except (OSError, SnapshotFormatError) as exc:
                log.warning("keeping previous snapshot: %s", exc)


def cmd_serve(args, cfg: Config) -> int:
    s = cfg.server
    dns_bind = parse_bind(args.dns) if args.dns else s.dns
    rest_bind = parse_bind(args.rest) if args.rest else s.rest
    if dns_bind is None and rest_bind is None:
        raise CliError("nothing to serve: pass --dns and/or --rest")
    path = _db_path(args, cfg)
    holder = SnapshotHolder()
    if path.exists():
        holder.swap(_open_db(args, cfg).snapshot())
    else:
        log.warning("%s missing; answering SERVFAIL / 503 until it appears", path)
    gw = Gateway(holder.get, routing=cfg.routing, ttl=s.ttl, formerr=s.formerr)

    stop = threading.Event()
    for sig in (signal.SIGTERM, signal.SIGINT):
        signal.signal(sig, lambda *_: stop.set())
    running = []
    try:
        if dns_bind:
            running.append(serve_dns(dns_bind, gw))
        if rest_bind:
            running.append(serve_rest(rest_bind, gw))
    except OSError as exc:
        for r in running:
            r.stop()
        raise CliError(f"cannot bind: {exc}") from None
    interval = args.reload_interval if args.reload_interval is not None else s.reload_interval
    if interval > 0:
        threading.Thread(target=_watch, args=(holder, path, cfg, interval, stop), daemon=True).start()
    for r, kind in zip(running, [k for k, b in (("dns", dns_bind), ("rest", rest_bind)) if b]):
        host, port = r.address
        print(f"serving {kind} on {host}:{port}", flush=True)

    while not stop.wait(0.2):
        pass
    # drain in-flight requests, but never past the drain timeout
    drainer = threading.Thread(target=lambda: [r.stop() for r in running], daemon=True)
    drainer.start()
    drainer.join(s.drain_timeout)
    if drainer.is_alive():
        log.warning("drain timeout of %.1fs reached; exiting with requests in flight", s.drain_timeout)
    return EXIT_OK


def _report(args, cfg: Config):
    view = _open_db(args, cfg).snapshot()
    records = view.active_set() if args.active_only else (r for r in view.records() if not r.deleted)
    top_sites = args.top_sites or cfg.top_sites
    geo = args.geo or cfg.geo
    return build_report(
        records, _tlds(args, cfg),
        alexa=load_domain_list(top_sites) if top_sites else None,
        geo=GeoTable.from_csv(Path(geo)) if geo else None,
        policy_echo={"policy": view.policy.to_dict(), "scope": "active" if args.active_only else "registered",
                     "tips": {c: view.tip(c) for c in ("namecoin", "emercoin")}},
    )


def cmd_stats(args, cfg: Config) -> int:
    report = _report(args, cfg)
    if args.out:
        manifest = write_report(report, args.out)
        if not args.json:
            print(f"wrote {len(manifest['files'])} files to {args.out}")
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True, ensure_ascii=True))
    elif not args.out:
        print(render_text(report))
    return EXIT_OK


def cmd_report(args, cfg: Config) -> int:
    out = Path(args.dir)
    target = out / ("report.json" if args.json else "report.txt")
    if not target.exists():
        raise CliError(f"{target} not found; run 'blockdns stats --out {out}' first")
    sys.stdout.write(target.read_text())
    return EXIT_OK


def _read_list(path: str) -> list[str]:
    lines = Path(path).read_text().splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


def cmd_crawl(args, cfg: Config) -> int:
    c = cfg.crawl
    slds = [s.split(",")[-1].split(".")[0] for s in _read_list(args.slds)]
    candidates = generate_candidates(slds, _read_list(args.tlds))
    done = {"n": 0}

    def progress(_):
        done["n"] += 1
        if args.progress and done["n"] % 1000 == 0:
            print(f"  {done['n']} / {len(candidates)}", file=sys.stderr)

    try:
        results = crawl(
            candidates, args.endpoint or c.endpoint,
            concurrency=args.concurrency or c.concurrency,
            rate_limit=args.rate_limit if args.rate_limit is not None else c.rate_limit,
            timeout=args.timeout or c.timeout, journal=args.journal,
            probe=args.probe or c.probe, allow_external=args.allow_external or c.allow_external,
            on_result=progress,
        )
    except EndpointUnreachable as exc:
        print(f"blockdns: {exc}; rerun with the same --journal to resume", file=sys.stderr)
        return EXIT_UNAVAILABLE
    geo = args.geo or cfg.geo
    summary = aggregate_crawl(results, GeoTable.from_csv(Path(geo)) if geo else None)
    body = summary.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    text = (f"candidates={summary.candidates} registered={summary.registered} ips={summary.total_ips} "
            f"private={summary.private_ips} public={summary.public_ips} "
            f"unique_public={summary.unique_public_ips} errors={summary.errors}")
    if summary.per_country:
        text += "\ncountries: " + " ".join(f"{k}={v}" for k, v in summary.per_country.items())
    _emit(args, body, text)
    return EXIT_OK


def cmd_export(args, cfg: Config) -> int:
    view = _open_db(args, cfg).snapshot()
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        for line in view.export_ndjson():
            out.write(line + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_synth(args, cfg: Config) -> int:
    from . import synth

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "measurement":
        (out / "dump.ndjson").write_text("\n".join(synth.measurement_shape(args.seed).lines()) + "\n")
        (out / "top_sites.csv").write_text(
            "".join(f"{i + 1},{d}\n" for i, d in enumerate(synth.top_site_list())))
    elif args.kind == "crawl":
        w = synth.crawl_world(args.seed)
        (out / "dump.ndjson").write_text("\n".join(w.dump.lines()) + "\n")
        (out / "slds.txt").write_text("\n".join(w.slds) + "\n")
        (out / "tlds.txt").write_text("\n".join(w.tlds) + "\n")
        (out / "geo.csv").write_text("\n".join(w.geo_csv) + "\n")
    else:
        (out / "dump.ndjson").write_text("\n".join(synth.random_dump(args.names, args.seed).lines()) + "\n")
    print(f"wrote {args.kind} fixture to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blockdns", description="Blockchain name ingestion, resolution and measurement.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="YAML config file (default: $BLOCKDNS_CONFIG)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, db=True):
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        if db:
            sp.add_argument("--db", help="database snapshot path")
        return sp

    sp = common(sub.add_parser("ingest", help="apply a name-operation dump to the database"))
    sp.add_argument("dump", help="NDJSON dump, or - for stdin")
    sp.add_argument("--lenient", action="store_true", help="exit 0 even if lines were rejected")
    sp.add_argument("--show-rejects", type=int, default=20, metavar="N")
    sp.set_defaults(func=cmd_ingest)

    sp = common(sub.add_parser("resolve", help="resolve one name"))
    sp.add_argument("name")
    sp.add_argument("--type", choices=[q.name for q in QType], default="A", type=str.upper)
    sp.add_argument("--exact", action="store_true", help="match the on-chain name byte for byte")
    sp.add_argument("--at-height", type=int)
    sp.set_defaults(func=cmd_resolve)

    sp = sub.add_parser("serve", help="run the DNS and/or REST gateway")
    sp.add_argument("--db")
    sp.add_argument("--dns", metavar="HOST:PORT")
    sp.add_argument("--rest", metavar="HOST:PORT")
    sp.add_argument("--reload-interval", type=float, metavar="SECONDS",
                    help="poll the database file and swap in new snapshots")
    sp.set_defaults(func=cmd_serve)

    sp = common(sub.add_parser("stats", help="compute measurement tables"))
    sp.add_argument("--out", help="write report files to this directory")
    sp.add_argument("--active-only", action="store_true", help="restrict to names active at the chain tip")
    sp.add_argument("--top-sites", help="top-site list (one domain or rank,domain per line)")
    sp.add_argument("--geo", help="CIDR,country CSV")
    sp.add_argument("--tld-list", help="public suffix list (default: bundled)")
    sp.set_defaults(func=cmd_stats)

    sp = common(sub.add_parser("report", help="print a report written by 'stats --out'"), db=False)
    sp.add_argument("dir")
    sp.set_defaults(func=cmd_report)

    sp = common(sub.add_parser("crawl", help="sweep SLD x TLD candidates through a REST gateway"), db=False)
    sp.add_argument("--slds", required=True, help="SLD or domain list, one per line")
    sp.add_argument("--tlds", required=True, help="TLD list, one per line")
    sp.add_argument("--endpoint", help="gateway base URL, e.g. http://127.0.0.1:8053")
    sp.add_argument("--journal", help="NDJSON journal for resumable sweeps")
    sp.add_argument("--concurrency", type=int)
    sp.add_argument("--rate-limit", type=float, help="max requests per second")
    sp.add_argument("--timeout", type=float)
    sp.add_argument("--probe", action="store_true", help="HTTP GET / on resolved addresses")
    sp.add_argument("--allow-external", action="store_true")
    sp.add_argument("--geo", help="CIDR,country CSV")
    sp.add_argument("--out", help="write the summary JSON here")
    sp.add_argument("--progress", action="store_true")
    sp.set_defaults(func=cmd_crawl)

    sp = sub.add_parser("export", help="write the database back out as an NDJSON dump")
    sp.add_argument("--db")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("synth", help="generate a synthetic fixture")
    sp.add_argument("kind", choices=["measurement", "crawl", "random"])
    sp.add_argument("outdir")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--names", type=int, default=10_000)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"blockdns: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except CliError as exc:
        print(f"blockdns: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"blockdns: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
