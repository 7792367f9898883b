#!/usr/bin/env python3
"""Plot Hits@k against the shot count from sweep report files.

Usage:
    python scripts/plot_shot_sweep.py workdir/report_icicle_N*.json --out sweep.png
"""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("reports", nargs="+")
    parser.add_argument("--out", default="sweep.png")
    args = parser.parse_args()

    rows = []
    for raw in args.reports:
        payload = json.loads(Path(raw).read_text(encoding="utf-8"))
        rows.append((payload["config"]["N_shots"], payload["splits"]))
    rows.sort()
    shots = [n for n, _ in rows]

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
    for ax, split_kind, title in zip(axes, ("train", "new"), ("seen documents", "unseen documents")):
        for key, label, style in (
            ("hits_at_1", "Hits@1 (ctx)", "o-"),
            ("hits_at_10", "Hits@10 (ctx)", "s-"),
            ("noise_hits_at_1", "Hits@1 (noise)", "^--"),
        ):
            ys = [splits.get(split_kind, {}).get(key) for _, splits in rows]
            if all(y is None for y in ys):
                continue
            ax.plot(shots, ys, style, label=label)
        ax.set_title(title)
        ax.set_xlabel("in-context shots N")
        ax.set_xscale("log")
        ax.set_xticks(shots, [str(n) for n in shots])
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("fraction")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
