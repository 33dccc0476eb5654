"""Run every CLI command on the bundled scenarios; outputs go to out/<scenario>/."""
import os
import sys
import time

from tieq import cli

HERE = os.path.dirname(os.path.abspath(__file__))
PLAN = [
    ("canonical", ["solve", "simulate", "fiscal", "sweep"]),
    ("lrp", ["fiscal"]),           # k* sits on the edge of I: stationary path only
    ("time_consistent", ["solve", "simulate", "fiscal"]),
    ("linear_oracle", ["oracle", "verify"]),
]


def main(root="out"):
    bad = 0
    for name, cmds in PLAN:
        sc = os.path.join(HERE, "scenarios", name + ".toml")
        out = os.path.join(root, name)
        for cmd in cmds:
            t0 = time.time()
            code = cli.main([cmd, "--scenario", sc, "--out", out])
            print(f"{name:16s} {cmd:9s} exit {code}  {time.time() - t0:6.1f}s")
            bad += code != 0
    # verify re-reads the CSVs written by solve
    code = cli.main(["verify", "--scenario", os.path.join(HERE, "scenarios", "canonical.toml"),
                     "--out", os.path.join(root, "canonical")])
    print(f"{'canonical':16s} {'verify':9s} exit {code}")
    return 1 if bad or code else 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
