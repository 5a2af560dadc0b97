#!/usr/bin/env python3
"""Plot mean confirmation latency against n from a `pod bench` CSV.

usage: plot_bench.py bench.csv [out.png]
"""
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main() -> None:
    if len(sys.argv) not in (2, 3):
        sys.exit(__doc__.strip())
    src = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) == 3 else src.rsplit(".", 1)[0] + ".png"
    df = pd.read_csv(src)
    if (df["schema_version"] != 1).any():
        sys.exit(f"{src}: unsupported schema_version")

    fig, ax = plt.subplots(figsize=(6, 4))
    for profile, g in df.sort_values("n").groupby("profile"):
        err = [g["mean_ms"] - g["ci95_lo_ms"], g["ci95_hi_ms"] - g["mean_ms"]]
        ax.errorbar(g["n"], g["mean_ms"], yerr=err, marker="o", capsize=3, label=profile)
    ax.set_xlabel("replicas (n)")
    ax.set_ylabel("write-to-confirmation latency (ms)")
    ax.set_ylim(bottom=0)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
