"""``cvqkd-sweep`` entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric/physicality failure
(the file is still written, failing rows are flagged), 4 I/O failure.
"""
from __future__ import annotations

import json
import sys
from typing import Optional, Sequence

from .sweep import ConfigError, NoCrossingError, parse_config, render, run_sweep, sweep_crossing, write_atomic

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config, ns = parse_config(argv)
    except ConfigError as exc:
        print(f"cvqkd-sweep: configuration error in {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for key, value in sorted(config.header().items()):
        print(f"# {key}={json.dumps(value)}", file=sys.stderr)

    result = run_sweep(config)
    text = render(result, config.output_format)
    try:
        if config.output_path:
            write_atomic(config.output_path, text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"cvqkd-sweep: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO

    failed = [row for row in result.rows if row["status"] != "ok"]
    for row in failed:
        print(f"cvqkd-sweep: d={row['distance_km']:g} km {row['status']}", file=sys.stderr)

    if ns.find_crossing:
        try:
            d = sweep_crossing(config, result)
            print(f"zero crossing: {d:.1f} km", file=sys.stderr)
        except NoCrossingError as exc:
            print(f"zero crossing: {exc}", file=sys.stderr)
        except (RuntimeError, ValueError) as exc:
            print(f"cvqkd-sweep: crossing search failed: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
    return EXIT_NUMERIC if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
