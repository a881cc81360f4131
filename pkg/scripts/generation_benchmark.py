"""Throughput and peak memory of dataset generation for increasing image counts.

Each count runs in a fresh interpreter so the reported peak RSS belongs to that run.

    python scripts/generation_benchmark.py --checkpoint ckpt.sqf --config run.yaml --counts 100 1000 10000
"""

import argparse
import subprocess
import sys
import tempfile
import time

# VmHWM rather than ru_maxrss, which would include the parent's peak from before exec.
WRAPPER = (
    "import re, sys\n"
    "from seqforge.cli import main\n"
    "rc = main(sys.argv[1:])\n"
    "hwm = re.search(r'VmHWM:\\s+(\\d+)', open('/proc/self/status').read()).group(1)\n"
    "print('PEAK_RSS_KB', hwm)\n"
    "sys.exit(rc)\n"
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--config", required=True)
    ap.add_argument("--counts", type=int, nargs="+", default=[100, 1000])
    ap.add_argument("--grayscale", action="store_true")
    args = ap.parse_args()

    print("count  seconds  images/s  peak_rss_mb")
    for count in args.counts:
        with tempfile.TemporaryDirectory() as out:
            cmd = [sys.executable, "-c", WRAPPER, "generate", "--config", args.config,
                   "--checkpoint", args.checkpoint, "--count", str(count), "--out", out]
            if args.grayscale:
                cmd.append("--grayscale")
            start = time.perf_counter()
            proc = subprocess.run(cmd, capture_output=True, text=True)
            elapsed = time.perf_counter() - start
            if proc.returncode:
                sys.exit(proc.stderr)
            peak = int(proc.stdout.split("PEAK_RSS_KB")[-1].split()[0])
            print(f"{count:5d}  {elapsed:7.1f}  {count / elapsed:8.1f}  {peak / 1024:11.1f}", flush=True)


if __name__ == "__main__":
    main()
