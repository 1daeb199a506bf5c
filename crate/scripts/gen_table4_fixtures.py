#!/usr/bin/env python3
"""Generate judgment fixtures that reproduce the published novelty-coverage table.

For each (system, paper) cell the smallest item set is found whose C, I, M, W
and weighted score round (half-up, 2 decimals) to the published values.
Output goes to crates/core/tests/fixtures/coverage/.
"""
import json
import math
from pathlib import Path

SYSTEMS = ["paper2code", "autop2c", "r1", "gpt5", "nerfify"]
PAPERS = ["mip-nerf", "bionerf", "pynerf", "tensorf", "tetra-nerf",
          "e-nerf", "stylenerf", "inerf", "signerf", "mcnerf"]
TITLES = ["Mip-NeRF", "BioNeRF", "PyNeRF", "TensoRF", "Tetra-NeRF",
          "E-NeRF", "StyleNeRF", "iNeRF", "SigNeRF", "MCNeRF"]

TABLE = """
0.83 0.17 0.00 0.83 0.85 0.17 0.17 0.66 0.25 0.20 0.67 0.17 0.16 0.67 0.58 0.50 0.30 0.20 0.60 0.58 1.00 0.00 0.00 1.00 1.00
0.30 0.40 0.30 0.40 0.35 0.10 0.30 0.60 0.10 0.15 0.70 0.20 0.10 0.70 0.75 0.80 0.10 0.10 0.80 0.82 1.00 0.00 0.00 1.00 1.00
0.50 0.30 0.20 0.60 0.58 0.00 0.10 0.90 0.10 0.03 0.30 0.60 0.10 0.70 0.68 0.40 0.30 0.30 0.80 0.52 1.00 0.00 0.00 0.90 0.97
0.20 0.30 0.50 0.30 0.12 0.10 0.20 0.70 0.15 0.28 0.60 0.20 0.20 0.70 0.65 0.70 0.10 0.20 0.75 0.72 1.00 0.00 0.00 0.95 0.98
0.13 0.25 0.63 0.20 0.22 0.00 0.13 0.88 0.00 0.08 0.63 0.25 0.13 0.70 0.72 0.50 0.25 0.25 0.60 0.58 1.00 0.00 0.00 1.00 1.00
0.38 0.25 0.38 0.60 0.48 0.00 0.13 0.88 0.00 0.05 0.63 0.25 0.13 0.80 0.72 0.50 0.25 0.25 0.75 0.60 1.00 0.00 0.00 0.95 1.00
0.30 0.40 0.30 0.46 0.28 0.00 0.10 0.90 0.00 0.00 0.50 0.30 0.20 0.64 0.62 0.40 0.30 0.30 0.55 0.52 1.00 0.00 0.00 1.00 0.98
0.70 0.20 0.10 0.80 0.75 0.00 0.10 0.90 0.00 0.05 0.60 0.30 0.10 0.70 0.68 0.50 0.30 0.20 0.60 0.58 1.00 0.00 0.00 1.00 0.97
0.38 0.38 0.24 0.50 0.52 0.00 0.13 0.87 0.00 0.08 0.63 0.25 0.12 0.75 0.72 0.50 0.25 0.25 0.63 0.58 1.00 0.00 0.00 1.00 1.00
0.00 0.13 0.88 0.20 0.15 0.00 0.25 0.75 0.10 0.08 0.50 0.38 0.13 0.80 0.74 0.75 0.25 0.00 0.85 0.95 1.00 0.00 0.00 1.00 0.95
"""

W_MIN = 0.05
PARTIAL_LEVELS = [0.2, 0.4, 0.6, 0.8]


def cents(x):
    """Half-up rounding to hundredths, as integer cents."""
    return math.floor(x * 100 + 0.5 + 1e-9)


def counts(C, I, M, n):
    for c in range(n + 1):
        if cents(c / n) != C:
            continue
        for i in range(n - c + 1):
            if cents(i / n) == I and cents((n - c - i) / n) == M:
                yield c, i, n - c - i


def w_split(W, n):
    for p in range(1, n + 1):
        for k in range(p + 1):
            if cents(k / p) == W:
                return k, p
    return None


def solve_weights(levels, target):
    """Weights in [W_MIN, 1] with sum(w*s)/sum(w) == target, or None."""
    pos = [s - target for s in levels if s > target + 1e-12]
    neg = [target - s for s in levels if s < target - 1e-12]
    ap, an = sum(pos), sum(neg)
    if not pos and not neg:
        return [1.0] * len(levels)
    if not pos or not neg:
        return None
    if W_MIN * ap > an or W_MIN * an > ap:
        return None
    scale_pos = min(1.0, an / ap)
    scale_neg = min(1.0, ap / an)
    return [scale_pos if s > target + 1e-12 else scale_neg if s < target - 1e-12 else 1.0 for s in levels]


def score_plan(c, i, m, S):
    target = S / 100
    for lp in PARTIAL_LEVELS:
        for low in range(c + 1):
            levels = [0.8] * low + [1.0] * (c - low) + [lp] * i + [0.0] * m
            candidates = [
                solve_weights(levels, target),
                [W_MIN if s > target else 1.0 for s in levels],
                [1.0 if s > target else W_MIN for s in levels],
            ]
            for w in candidates:
                if w is None:
                    continue
                got = sum(a * b for a, b in zip(w, levels)) / sum(w)
                if cents(got) == S:
                    return levels, w
    return None


def cell(C, I, M, W, S):
    for n in range(1, 201):
        ws = w_split(W, n)
        if ws is None:
            continue
        for c, i, m in counts(C, I, M, n):
            plan = score_plan(c, i, m, S)
            if plan is None:
                continue
            levels, weights = plan
            k, p = ws
            statuses = ["correct"] * c + ["incorrect-partial"] * i + ["missing"] * m
            items = []
            for j in range(n):
                item = {
                    "id": f"n{j + 1}",
                    "description": f"novel component {j + 1}",
                    "w": weights[j],
                    "status": statuses[j],
                    "level": levels[j],
                }
                if j < p:
                    theta = float(j + 1)
                    item["theta"] = theta
                    item["theta_hat"] = theta * (1.02 if j < k else 1.5)
                items.append(item)
            return items
    raise SystemExit(f"no fixture for {C} {I} {M} {W} {S}")


def main():
    root = Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures/coverage"
    rows = [[round(float(v) * 100) for v in line.split()] for line in TABLE.strip().splitlines()]
    papers_dir = root / "papers"
    papers_dir.mkdir(parents=True, exist_ok=True)
    for pid, title in zip(PAPERS, TITLES):
        (papers_dir / f"{pid}.md").write_text(f"---\nid: {pid}\n---\n# {title}\n\n## References\n")
    expected = {}
    for si, system in enumerate(SYSTEMS):
        sdir = root / system
        sdir.mkdir(parents=True, exist_ok=True)
        manifest = []
        for pi, pid in enumerate(PAPERS):
            C, I, M, W, S = rows[pi][5 * si:5 * si + 5]
            items = cell(C, I, M, W, S)
            (sdir / f"{pid}.json").write_text(json.dumps(items, indent=1) + "\n")
            manifest.append({"id": pid, "paper_md": f"../papers/{pid}.md",
                             "judgments": f"{pid}.json", "psnr_target": 25.0})
            expected.setdefault(system, {})[pid] = [v / 100 for v in (C, I, M, W, S)]
        (sdir / "bench.json").write_text(json.dumps(manifest, indent=1) + "\n")
    (root / "expected.json").write_text(json.dumps(expected, indent=1) + "\n")


if __name__ == "__main__":
    main()
