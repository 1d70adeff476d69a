#!/usr/bin/env python3
"""Print the result tables of an existing run directory.

Reads report.json and every eval_*.json produced by the pipeline and
prints single-feature baselines, model comparisons, feature importance,
and the miss rate by Bluetooth signal strength. Nothing is recomputed;
this is a viewer for artifacts on disk.

    python3 scripts/summarize_run.py --dir run
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from wifi_proximity import fileio
from wifi_proximity.models import feature_importance, load_model


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dir", default="run", help="run directory to summarize")
    args = p.parse_args(argv)
    d = Path(args.dir)

    report = fileio.read_json(d / "report.json", fileio.SCHEMA_REPORT)
    print(f"{report['n']} candidates ({report['positive_fraction']:.1%} "
          f"positive), {report['n_train']} train / {report['n_test']} test")

    print("\nsingle-feature thresholds (test split)")
    rows = sorted(report["single_features"].items(),
                  key=lambda kv: kv[1]["test_auc"], reverse=True)
    for name, row in rows:
        print(f"{name:>16}  auc {row['test_auc']:.3f}  f1 {row['test_f1']:.3f}  "
              f"{row['direction']}")

    print("\nmodel evaluations (test split)")
    for key in sorted(report["featuresets"]):
        row = report["featuresets"][key]
        print(f"{row['featureset']:>12} {row['kind']:>16}  "
              f"auc {row['test_auc']:.3f}  f1 {row['test_f1']:.3f}")

    for eval_path in sorted(d.glob("eval_*.json")):
        doc = fileio.read_json(eval_path, fileio.SCHEMA_EVAL)
        model_path = d / eval_path.name.replace("eval_", "model_")
        if model_path.exists():
            model, _ = load_model(model_path)
            imp = feature_importance(model)
            top = sorted(imp.items(), key=lambda kv: kv[1], reverse=True)[:6]
            print(f"\n{doc['featureset']} {doc['kind']}: top feature importance")
            for name, weight in top:
                print(f"{name:>16}  {weight:.3f}")
        bins = doc["test"].get("miss_rate_by_bt_rssi") or []
        if bins:
            print(f"\n{doc['featureset']} {doc['kind']}: miss rate by bluetooth rssi")
            for b in bins:
                bar = "#" * int(round(40 * b["miss_rate"]))
                print(f"[{b['lo']:4.0f}, {b['hi']:4.0f})  n={b['n']:<7d} "
                      f"{b['miss_rate']:6.1%}  {bar}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
