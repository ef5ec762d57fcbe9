"""``tagdrive`` command line.

Exit codes: 0 success, 2 usage error, 3 scenario/data error, 4 service unreachable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from pathlib import Path

from . import __version__
from .activation import (PurchaseSecret, SerialRegistry, activate, generate_secret, provision_disc,
                         seeded_entropy)
from .content import DEFAULT_SECTOR_SIZE, SealedImage, open_content, seal_content, split_sectors
from .controller import run_scenario
from .errors import ServiceUnreachable, TagDriveError
from .model import DEFAULT_WIDTH, CodeDatabase, Disc, VisibleSerial, parse_code
from .scenario import disc_to_dict, load_scenario
from .storage import load_codedb, load_registry, save_codedb, save_registry
from .trace import to_csv, to_vcd

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_UNREACHABLE = 0, 2, 3, 4


def _pinned_entropy(code, fallback):
    """Entropy source whose first draw reproduces ``code`` exactly."""
    first = [True]

    def draw(n):
        if first[0]:
            first[0] = False
            return (code.value << (n * 8 - code.width)).to_bytes(n, "big")
        return fallback(n)
    return draw


def cmd_provision(args) -> int:
    path = Path(args.registry)
    if args.n < 0:
        raise _Usage("-n must be >= 0")
    if args.code and len(args.code) != args.n:
        raise _Usage("--code must be given exactly N times")
    if path.exists():
        reg = load_registry(path)
        if reg.width != args.width:
            raise TagDriveError(f"registry width is {reg.width}, not {args.width}")
    else:
        reg = SerialRegistry(args.width)
    if args.n == 0:
        return EXIT_OK
    entropy = seeded_entropy(args.seed) if args.seed is not None else secrets.token_bytes
    pinned = [parse_code(c, args.width) for c in args.code or []]
    discs = []
    for i in range(args.n):
        secret = generate_secret(entropy)
        src = _pinned_entropy(pinned[i], entropy) if pinned else entropy
        serial, tag, _ = provision_disc(reg, args.width, secret, src, now=args.now)
        print(f"{serial}\t{secret}")
        discs.append(disc_to_dict(Disc(serial, tag)))
    save_registry(reg, path)
    if args.tags_out:
        with open(args.tags_out, "w", encoding="utf-8", newline="\n") as f:
            json.dump(discs, f, indent=2)
            f.write("\n")
    return EXIT_OK


def cmd_activate(args) -> int:
    serial = VisibleSerial(args.serial)
    secret = PurchaseSecret(args.secret)
    if args.url:
        from .service import fetch_blob
        blob = fetch_blob(args.url, serial)
        width = args.width
    else:
        reg_path = args.registry or os.environ.get("TAGDRIVE_REGISTRY")
        if not reg_path:
            raise _Usage("give --url or --registry (or set TAGDRIVE_REGISTRY)")
        reg = load_registry(reg_path)
        entry = reg.get(serial)
        if entry is None:
            raise TagDriveError(f"serial {serial} is not in the registry")
        blob = entry.blob
        width = reg.width
    db_path = Path(args.db)
    db = load_codedb(db_path) if db_path.exists() else CodeDatabase(width or DEFAULT_WIDTH)
    db = activate(blob, secret, db, serial, now=args.now)
    save_codedb(db, db_path)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import ActivationService, parse_bind
    reg_path = args.registry or os.environ.get("TAGDRIVE_REGISTRY")
    bind = args.bind or os.environ.get("TAGDRIVE_BIND", "127.0.0.1:8080")
    if not reg_path:
        raise _Usage("give --registry or set TAGDRIVE_REGISTRY")
    try:
        host, port = parse_bind(bind)
    except ValueError as exc:
        raise _Usage(str(exc))
    reg = load_registry(reg_path)
    svc = ActivationService(reg, (host, port), registry_path=reg_path)
    print(f"serving {len(reg)} serials on {svc.url}", flush=True)
    try:
        svc.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        svc.httpd.server_close()
    return EXIT_OK


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    trace = run_scenario(sc.events, sc.db, sc.config, sc.seed)
    prefix = args.output
    for suffix, text in ((".csv", to_csv(trace)), (".vcd", to_vcd(trace))):
        with open(prefix + suffix, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return EXIT_OK


def cmd_seal(args) -> int:
    code = parse_code(args.code, args.width)
    data = Path(args.input).read_bytes()
    rand = seeded_entropy(args.seed) if args.seed is not None else os.urandom
    img = seal_content(split_sectors(data, args.sector_size), code, VisibleSerial(args.serial),
                       args.sector_size, rand)
    Path(args.output).write_bytes(img.to_bytes())
    return EXIT_OK


def cmd_open(args) -> int:
    code = parse_code(args.code, args.width)
    img = SealedImage.from_bytes(Path(args.image).read_bytes())
    sectors = open_content(img, code, VisibleSerial(args.serial))
    Path(args.output).write_bytes(b"".join(sectors))
    return EXIT_OK


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tagdrive", description="RFID-authenticated drive simulator and activation tools")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("provision", help="mint serial/code pairs into a registry")
    sp.add_argument("-n", type=int, required=True)
    sp.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    sp.add_argument("--registry", default=os.environ.get("TAGDRIVE_REGISTRY"), required="TAGDRIVE_REGISTRY" not in os.environ)
    sp.add_argument("--seed", type=int, help="deterministic entropy, for fixtures only")
    sp.add_argument("--code", action="append", help="pin the tag code of each disc in order")
    sp.add_argument("--now", type=int, help="provision timestamp (epoch seconds)")
    sp.add_argument("--tags-out", help="write the minted discs (with tag codes) to this JSON file")
    sp.set_defaults(func=cmd_provision)

    sp = sub.add_parser("activate", help="unlock a blob and add its code to the local database")
    sp.add_argument("--serial", required=True)
    sp.add_argument("--secret", required=True)
    sp.add_argument("--db", required=True)
    sp.add_argument("--url")
    sp.add_argument("--registry")
    sp.add_argument("--width", type=int, help="width for a new database when using --url")
    sp.add_argument("--now", type=int)
    sp.set_defaults(func=cmd_activate)

    sp = sub.add_parser("serve", help="run the activation service")
    sp.add_argument("--registry")
    sp.add_argument("--bind")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("run", help="replay a scenario and write PREFIX.csv / PREFIX.vcd")
    sp.add_argument("scenario")
    sp.add_argument("-o", "--output", required=True, metavar="PREFIX")
    sp.set_defaults(func=cmd_run)

    for name, func in (("seal", cmd_seal), ("open", cmd_open)):
        sp = sub.add_parser(name, help=f"{name} a content image")
        sp.add_argument("--code", required=True)
        sp.add_argument("--serial", required=True)
        sp.add_argument("--width", type=int, default=DEFAULT_WIDTH)
        sp.add_argument("-o", "--output", required=True)
        if name == "seal":
            sp.add_argument("input")
            sp.add_argument("--sector-size", type=int, default=DEFAULT_SECTOR_SIZE)
            sp.add_argument("--seed", type=int, help="deterministic nonces, for fixtures only")
        else:
            sp.add_argument("image")
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"tagdrive: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ServiceUnreachable as exc:
        print(f"tagdrive: service unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except (TagDriveError, OSError) as exc:
        print(f"tagdrive: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
