"""Scratch probe: full observable set for gap-family candidates."""

import json
import sys

sys.path.insert(0, "tools")
from tune_layout import evaluate  # noqa: E402


def run(params):
    print(json.dumps(params))
    evaluate(params, verbose=True)


if __name__ == "__main__":
    for arg in sys.argv[1:]:
        run(json.loads(arg))
