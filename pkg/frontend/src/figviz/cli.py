"""Command line entry: render signal/spectrum heatmaps from simulator CSVs."""

from __future__ import annotations

import argparse
import sys

from .render import SchemaError, plot_signal, plot_spectrum


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="figviz",
                                     description="plot simulator CSV outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sig = sub.add_parser("signal", help="observable surface heatmap")
    p_sig.add_argument("--csv", required=True)
    p_sig.add_argument("--summary", default=None,
                       help="oracle summary JSON (enables gap-normalized axes)")
    p_sig.add_argument("--out", required=True)
    p_sig.add_argument("--raw-axes", action="store_true",
                       help="plot raw frequencies instead of gap units")

    p_spec = sub.add_parser("spectrum", help="power spectrum heatmap")
    p_spec.add_argument("--csv", required=True)
    p_spec.add_argument("--summary", default=None)
    p_spec.add_argument("--out", required=True)
    p_spec.add_argument("--overlay", default="",
                        help="comma list from: target,pair,twophoton")
    p_spec.add_argument("--raw-axes", action="store_true")
    p_spec.add_argument("--max-ridge-bins", type=float, default=None,
                        help="fail when any overlay sits further than this "
                             "many bins from the measured ridge")

    args = parser.parse_args(argv)
    try:
        if args.command == "signal":
            out = plot_signal(args.csv, args.out, summary_path=args.summary,
                              raw_axes=args.raw_axes)
            print(f"wrote {out}")
            return 0
        overlays = tuple(x for x in args.overlay.split(",") if x)
        unknown = [x for x in overlays if x not in ("target", "pair", "twophoton")]
        if unknown:
            print(f"unknown overlay kinds: {unknown}", file=sys.stderr)
            return 2
        out, distances = plot_spectrum(args.csv, args.out,
                                       summary_path=args.summary,
                                       overlays=overlays,
                                       raw_axes=args.raw_axes)
        for kind, dist in distances.items():
            print(f"overlay {kind}: max ridge distance {dist:.2f} bins")
        print(f"wrote {out}")
        if args.max_ridge_bins is not None:
            bad = {k: d for k, d in distances.items() if d > args.max_ridge_bins}
            if bad:
                print(f"ridge check failed: {bad}", file=sys.stderr)
                return 3
        return 0
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
