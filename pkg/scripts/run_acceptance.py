"""Run the acceptance criteria and print one line each; exit 1 if any fails."""

import os
import sys
import warnings

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

import test_acceptance as acc  # noqa: E402


def main():
    warnings.simplefilter("ignore")
    ok = [acc.__dict__[f"criterion_{n}"]()[0] for n in range(1, 9)]
    print(f"{sum(ok)}/8 criteria pass")
    return 0 if all(ok) else 1


if __name__ == "__main__":
    sys.exit(main())
