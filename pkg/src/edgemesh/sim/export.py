"""Write a simulation record to disk: CSVs, summary and a three-panel figure."""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import MetricsRecord  # noqa: E402

log = logging.getLogger(__name__)

METRICS_COLUMNS = ["slot", "node_id", "battery_pct", "cpu_pct", "workloads", "generated", "processed", "mean_proc_ms"]
EVENT_COLUMNS = ["slot", "time_ms", "node_id", "kind", "peer", "battery_pct"]
FILES = ("metrics.csv", "events.csv", "summary.json", "figure.png")


def _num(x) -> str:
    if x is None:
        return ""
    return f"{x:.6f}".rstrip("0").rstrip(".")


def write_metrics(record: MetricsRecord, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in record.rows:
            w.writerow(
                [r.slot, r.node_id, _num(r.battery_pct), _num(r.cpu_pct), r.workloads,
                 r.generated, r.processed, _num(r.mean_proc_ms)]
            )


def write_events(record: MetricsRecord, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in record.events:
            w.writerow([e.slot, e.time_ms, e.node_id, e.kind, e.peer or "", _num(e.battery_pct)])


def read_metrics(path: Path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_metrics(rows: List[dict], path: Path, title: str = "") -> None:
    """Battery, CPU and workload count per node against slot, one panel each."""
    series: Dict[str, Dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        s = series[row["node_id"]]
        s["slot"].append(int(row["slot"]))
        s["battery_pct"].append(float(row["battery_pct"]))
        s["cpu_pct"].append(float(row["cpu_pct"]))
        s["workloads"].append(int(row["workloads"]))

    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    panels = [
        ("battery_pct", "Battery state of charge (%)"),
        ("cpu_pct", "CPU utilization (%)"),
        ("workloads", "Number of workloads"),
    ]
    for ax, (key, label) in zip(axes, panels):
        for node_id in sorted(series):
            s = series[node_id]
            if key == "workloads":
                ax.step(s["slot"], s[key], where="post", label=node_id)
            else:
                ax.plot(s["slot"], s[key], label=node_id)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    if series:
        axes[0].legend(loc="best")
    axes[-1].set_xlabel("slot")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def export_results(record: MetricsRecord, out_dir) -> Dict[str, Path]:
    """Write metrics.csv, events.csv, summary.json and figure.png into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in FILES}
    write_metrics(record, paths["metrics.csv"])
    write_events(record, paths["events.csv"])
    paths["summary.json"].write_text(json.dumps(record.summary(), indent=2, sort_keys=True) + "\n")
    plot_metrics(read_metrics(paths["metrics.csv"]), paths["figure.png"], record.scenario)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return paths


def report(in_dir) -> dict:
    """Redraw figure.png from an existing metrics.csv and return the stored summary."""
    src = Path(in_dir)
    rows = read_metrics(src / "metrics.csv")
    summary_path = src / "summary.json"
    summary = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    plot_metrics(rows, src / "figure.png", summary.get("scenario", ""))
    return summary
