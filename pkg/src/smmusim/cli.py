"""``smmusim`` command line: run scenario scripts and lint device trees."""

import argparse
import sys
import warnings

from . import dts
from .dma import standard_channels
from .errors import DtsError
from .scenario import EXIT_ASSERT, EXIT_OK, EXIT_PARSE, find_bundled, run_script


def _cmd_run(args):
    trace_file = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        if trace_file is not None:
            sink = lambda line: trace_file.write(line + "\n")  # noqa: E731
        elif args.quiet:
            sink = None
        else:
            sink = lambda line: print(line)  # noqa: E731
        result = run_script(args.script, sink)
    finally:
        if trace_file is not None:
            trace_file.close()
    if result.message:
        print(result.message, file=sys.stderr)
    return result.status


def _cmd_dts_check(args):
    try:
        root = dts.load_dts(find_bundled(args.file, "dts"))
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_PARSE
    except dts.ParseError as exc:
        print(f"{args.file}:{exc}", file=sys.stderr)
        return EXIT_PARSE
    status = EXIT_OK
    nodes = dts.phandle_map(root)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", dts.MasterMismatchWarning)
            pairs = dts.resolve_masters(root)
        print(f"mmu-masters: {len(pairs)} bindings")
        for b in pairs:
            print(f"  phandle 0x{b.device_phandle:x} -> StreamID 0x{b.stream_id:04x} "
                  f"({nodes[b.device_phandle].name})")
        for note in dts.master_diagnostics(root):
            print(f"warning: {note}")
    except DtsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_ASSERT
    known = {c.base: c.name for c in standard_channels()}
    for node in root.iter_nodes():
        if node.name.startswith("dma@"):
            state = "enabled" if dts.is_channel_enabled(node) else "disabled"
            label = known.get(dts.reg_base(node), "?")
            print(f"channel {node.name} ({label}): {state}")
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="smmusim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario script")
    run.add_argument("script")
    run.add_argument("--trace", metavar="FILE", help="write the trace to FILE instead of stdout")
    run.add_argument("--quiet", action="store_true", help="suppress trace output")
    run.set_defaults(func=_cmd_run)

    d = sub.add_parser("dts", help="device-tree utilities")
    dsub = d.add_subparsers(dest="dts_command", required=True)
    check = dsub.add_parser("check", help="parse a .dts file and report SMMU masters and DMA channels")
    check.add_argument("file")
    check.set_defaults(func=_cmd_dts_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
