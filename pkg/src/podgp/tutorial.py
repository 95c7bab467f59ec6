"""Deterministic regeneration of the tutorial walkthrough outputs.

Every step goes through the command-line entry point, so the tutorial also
exercises the CLI end to end. Relative paths are used throughout so that
manifests do not depend on where the assets are written.
"""

from __future__ import annotations

import contextlib
import hashlib
import io
import os
from pathlib import Path

from .models import generate_dataset, save_dataset

__all__ = ["TUTORIAL_STEPS", "generate_tutorial_assets", "read_checksums"]

CHECKSUM_FILE = "CHECKSUMS.sha256"

# (command line, description); run in order inside the asset directory
TUTORIAL_STEPS = (
    ("sample --space isr3d --n 512 --out design_512.csv", "512-point Sobol' design on the bundled space"),
    ("train --data-inputs inputs.csv --data-responses responses.csv --time-grid timegrid.csv --space isr3d "
     "--snapshots 48 --qoi area --out model.podgp", "surrogate from the 64-run dataset"),
    ("report --model model.podgp --out model_header.txt", "model metadata"),
    ("predict --model model.podgp --data-inputs design_512.csv --out predictions.csv", "surrogate predictions"),
    ("cv --data-inputs inputs.csv --data-responses responses.csv --time-grid timegrid.csv --space isr3d "
     "--folds 4 --reps 2 --out cv", "cross-validation"),
    ("pod-sweep --data-inputs inputs.csv --data-responses responses.csv --time-grid timegrid.csv "
     "--counts 4,8,16,32 --reps 5 --out pod_sweep.csv", "POD error versus snapshot count"),
    ("uq --model model.podgp --n 10000 --threshold 1.585 --direction below --report-days 5,10,15,20,30 "
     "--qoi area --out uq", "forward propagation with a 50% area-loss threshold"),
    ("sa --model model.podgp --n-base 1024 --reps 5 --out sobol.csv", "Sobol' indices of the surrogate"),
)


@contextlib.contextmanager
def _inside(path):
    old = Path.cwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(old)


@contextlib.contextmanager
def _fixed_epoch():
    old = os.environ.get("SOURCE_DATE_EPOCH")
    os.environ["SOURCE_DATE_EPOCH"] = "0"
    try:
        yield
    finally:
        if old is None:
            del os.environ["SOURCE_DATE_EPOCH"]
        else:
            os.environ["SOURCE_DATE_EPOCH"] = old


def generate_tutorial_assets(out_dir):
    """Regenerate the example dataset and every walkthrough output.

    Returns a mapping from relative file name to SHA-256 digest, which is
    also written to ``CHECKSUMS.sha256`` in ``out_dir``.

    Raises
    ------
    RuntimeError
        A walkthrough step exited with a nonzero status.
    """
    from .cli import main

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = generate_dataset(64)
    save_dataset(ds, out / "inputs.csv", out / "responses.csv", out / "timegrid.csv")
    with _inside(out), _fixed_epoch(), contextlib.redirect_stdout(io.StringIO()):
        for line, _ in TUTORIAL_STEPS:
            status = main([*line.split(), "--workers", "1", "--quiet"])
            if status != 0:
                raise RuntimeError(f"tutorial step failed with status {status}: podgp {line}")
    digests = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != CHECKSUM_FILE:
            digests[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    (out / CHECKSUM_FILE).write_text("".join(f"{h}  {n}\n" for n, h in digests.items()))
    return digests


def read_checksums(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            h, name = line.split(None, 1)
            out[name.strip()] = h
    return out
