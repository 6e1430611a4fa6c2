"""Run the acceptance suite and print one PASS/FAIL line per criterion.

    python3 scripts/run_acceptance.py            # all eight
    python3 scripts/run_acceptance.py -k "1 or 6"
"""
import argparse
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("-k", help="only criteria matching this pytest -k expression (numbers are fine)")
    args = ap.parse_args()
    cmd = [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider"]
    if args.k:
        expr = " or ".join(f"criterion_{w}" if w.isdigit() else w for w in args.k.split(" or "))
        cmd += ["-k", expr]
    res = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    lines = [l for l in res.stdout.splitlines() if l.startswith("criterion ")]
    seen = set()
    for l in lines:
        if l not in seen:
            seen.add(l)
            print(l)
    if not lines:
        print(res.stdout[-2000:], res.stderr[-2000:], sep="\n")
    return res.returncode


if __name__ == "__main__":
    sys.exit(main())
