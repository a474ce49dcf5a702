"""Write every fixture document set to fixtures/v1/<name>/ through the CLI."""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from bmot.cli import main as cli  # noqa: E402
from bmot.closed_form import FIXTURES  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default=os.path.normpath(os.path.join(os.path.dirname(__file__), "..", "fixtures", "v1")))
    args = ap.parse_args(argv)
    for name in FIXTURES:
        out = os.path.join(args.root, name)
        code = cli(["fixtures", "--name", name, "--out", out])
        print(f"{name}: {out} (exit {code})")
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
