import argparse
from pathlib import Path

from robust_stream.cli import dumps, write_series


def parser(desc, trials=20):
    ap = argparse.ArgumentParser(description=desc)
    ap.add_argument("--trials", type=int, default=trials)
    ap.add_argument("--out", default=None, help="directory for per-trial CSV series (optional)")
    return ap


def save(out, name, result):
    if out is None:
        return
    d = Path(out) / name
    d.mkdir(parents=True, exist_ok=True)
    for key, pts in result.series.items():
        write_series(d / f"{key}.csv", pts)
    (d / "summary.json").write_text(dumps(result.summary))
