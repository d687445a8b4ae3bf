#!/usr/bin/python

DOCUMENTATION = r"""
---
module: shop_cli
short_description: Single entry point for every shopdsl stage
description:
    - Dispatches C(shopdsl <command> ...) to the command module of the same name.
    - Exit codes are 0 on success, 1 on a validation or domain failure and 2 on a usage error.
version_added: "1.0.0"
"""

EXAMPLES = r"""
- name: Synthesize, run and score FT06
  shopdsl synth ft06 --out scenarios/ft06 && shopdsl pipeline scenarios/ft06 --out runs
"""

import sys
import typing as t

from plugins.modules import (
    shop_abstract,
    shop_adapt,
    shop_constraints,
    shop_eval,
    shop_ground,
    shop_pipeline,
    shop_solve,
    shop_synth,
)

COMMANDS: dict[str, t.Callable[[t.Sequence[str] | None], int]] = {
    "synth": shop_synth.main,
    "adapt": shop_adapt.main,
    "abstract": shop_abstract.main,
    "constraints": shop_constraints.main,
    "solve": shop_solve.main,
    "ground": shop_ground.main,
    "pipeline": shop_pipeline.main,
    "eval": shop_eval.main,
}

USAGE = "usage: shopdsl {" + ",".join(COMMANDS) + "} [options]"


def main(argv: t.Sequence[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    if not args or args[0] in ("-h", "--help"):
        print(USAGE, file=sys.stdout if args else sys.stderr)
        return 0 if args else 2
    command = COMMANDS.get(args[0])
    if command is None:
        print(f"shopdsl: unknown command {args[0]!r}\n{USAGE}", file=sys.stderr)
        return 2
    return command(args[1:])


if __name__ == "__main__":
    raise SystemExit(main())
