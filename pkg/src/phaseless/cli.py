"""Command line driver.

``phaseless <verb> --config run.cfg --out DIR``. Each verb reads what the
previous one wrote into ``DIR`` and writes its own product there.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio, pipeline
from .config import ConfigError, PipelineConfig, dump_config, load_config
from .forward import ForwardSolveError
from .inversion import InversionError
from .metrics import compute_metrics
from .retrieval import synthesize_usc

log = logging.getLogger("phaseless")

FILES = {
    "intensity": "intensity.bin",
    "intensity_clean": "intensity_clean.bin",
    "phasemap": "phasemap.bin",
    "boundary": "boundary.bin",
    "medium": "medium.bin",
    "diagnostics": "diagnostics.txt",
    "metrics": "metrics.txt",
}


class LockError(RuntimeError):
    pass


@contextlib.contextmanager
def output_lock(out: Path):
    """Exclusive lockfile inside ``out`` for the duration of a command."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / ".lock"
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise LockError(f"{out} is in use (remove {path} if stale)") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            path.unlink()


def _need(out: Path, key: str) -> Path:
    p = out / FILES[key]
    if not p.exists():
        raise FileNotFoundError(f"missing input {p}; run the previous stage first")
    return p


def cmd_simulate(cfg: PipelineConfig, out: Path) -> None:
    clean, noisy = pipeline.simulate(cfg)
    fileio.write_intensity(out / FILES["intensity_clean"], clean)
    fileio.write_intensity(out / FILES["intensity"], noisy)


def cmd_retrieve(cfg: PipelineConfig, out: Path) -> None:
    data = fileio.read_intensity(_need(out, "intensity"))
    fileio.write_phasemap(out / FILES["phasemap"], pipeline.retrieve(data, cfg))


def cmd_propagate(cfg: PipelineConfig, out: Path) -> None:
    pmap = fileio.read_phasemap(_need(out, "phasemap"))
    fileio.write_boundary(out / FILES["boundary"], pipeline.boundary_from_phasemap(pmap, cfg))


def _write_history(out: Path, records, chosen: int, grid) -> None:
    snap = out / "snapshots"
    snap.mkdir(exist_ok=True)
    from .medium import Medium
    lines = ["# n i k max_c q_iterations q_residual forward_iterations change"]
    for r in records:
        fileio.write_medium(snap / f"c_{r.n:02d}_{r.i:02d}.bin", Medium(grid, r.c))
        lines.append(f"{r.n} {r.i} {r.k:.6f} {r.c.max():.6f} {r.q_iterations} "
                     f"{r.q_residual:.3e} {r.forward_iterations} {r.change:.3e}")
    lines.append(f"# chosen {records[chosen].n} {records[chosen].i}")
    (out / FILES["diagnostics"]).write_text("\n".join(lines) + "\n")


def cmd_invert(cfg: PipelineConfig, out: Path) -> None:
    bd = fileio.read_boundary(_need(out, "boundary"))
    est, records, chosen = pipeline.invert(bd, cfg)
    fileio.write_medium(out / FILES["medium"], est)
    _write_history(out, records, chosen, bd.grid)


def cmd_metrics(cfg: PipelineConfig, out: Path) -> None:
    est = fileio.read_medium(_need(out, "medium"))
    m = compute_metrics(pipeline.true_medium(cfg), est, cfg.support_threshold)
    text = m.report()
    (out / FILES["metrics"]).write_text(text)
    sys.stdout.write(text)


def cmd_pipeline(cfg: PipelineConfig, out: Path) -> None:
    (out / "run.cfg").write_text(dump_config(cfg))
    for step in (cmd_simulate, cmd_retrieve, cmd_propagate, cmd_invert, cmd_metrics):
        log.info("running %s", step.__name__[4:])
        step(cfg, out)


def export_medium_slice(path: Path, c: np.ndarray, grid, axis: str, index: int) -> None:
    ax = {"x1": 2, "x2": 1, "x3": 0}[axis]
    if not 0 <= index < c.shape[ax]:
        raise IndexError(f"slice index {index} outside 0..{c.shape[ax] - 1}")
    sl = np.take(c, index, axis=ax)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(sl.tolist())


def export_medium_vtk(path: Path, c: np.ndarray, grid) -> None:
    n1, n2, n3 = grid.n
    h = grid.spacing
    header = ["# vtk DataFile Version 3.0", "dielectric coefficient", "ASCII",
              "DATASET STRUCTURED_POINTS", f"DIMENSIONS {n1} {n2} {n3}",
              f"ORIGIN {grid.box.lo[0]} {grid.box.lo[1]} {grid.box.lo[2]}",
              f"SPACING {h[0]} {h[1]} {h[2]}", f"POINT_DATA {grid.size}",
              "SCALARS c double 1", "LOOKUP_TABLE default"]
    with open(path, "w") as fh:
        fh.write("\n".join(header) + "\n")
        np.savetxt(fh, c.ravel(), fmt="%.10g")


def export_phasemap_rows(path: Path, pmap, k: float, start: int, stop: int) -> None:
    n = pmap.plane.n * pmap.plane.n
    if not 0 <= start < stop <= n:
        raise IndexError(f"pixel range [{start}, {stop}) outside 0..{n}")
    from .grid import WavenumberGrid
    usc = synthesize_usc(pmap, WavenumberGrid(k, k + 1.0, 1))[-1].values.ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re_usc", "im_usc"])
        for j in range(start, stop):
            w.writerow([j, repr(usc[j].real), repr(usc[j].imag)])


def cmd_export(cfg: PipelineConfig, out: Path, args) -> None:
    if args.what == "medium":
        med = fileio.read_medium(_need(out, "medium"))
        if args.format == "vtk":
            export_medium_vtk(out / "medium.vtk", med.c, med.grid)
        else:
            idx = args.index if args.index is not None else med.c.shape[{"x1": 2, "x2": 1, "x3": 0}[args.axis]] // 2
            export_medium_slice(out / f"medium_{args.axis}_{idx}.csv", med.c, med.grid, args.axis, idx)
    else:
        pmap = fileio.read_phasemap(_need(out, "phasemap"))
        export_phasemap_rows(out / f"usc_{args.start}_{args.stop}.csv", pmap, args.k,
                             args.start, args.stop)


COMMANDS = {"simulate": cmd_simulate, "retrieve": cmd_retrieve, "propagate": cmd_propagate,
            "invert": cmd_invert, "pipeline": cmd_pipeline, "metrics": cmd_metrics}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phaseless", description=__doc__.split("\n")[0])
    p.add_argument("verb", choices=sorted(list(COMMANDS) + ["export"]))
    p.add_argument("--config", type=Path, help="key = value run file (defaults if omitted)")
    p.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="noise seed override")
    p.add_argument("--verbose", action="store_true")
    ex = p.add_argument_group("export")
    ex.add_argument("--what", choices=("medium", "phasemap"), default="medium")
    ex.add_argument("--format", choices=("csv", "vtk"), default="csv")
    ex.add_argument("--axis", choices=("x1", "x2", "x3"), default="x2")
    ex.add_argument("--index", type=int)
    ex.add_argument("--k", type=float, default=82.25)
    ex.add_argument("--start", type=int, default=4800)
    ex.add_argument("--stop", type=int, default=5100)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        out = args.out if args.out is not None else Path(cfg.out_dir)
        with output_lock(out):
            if args.verb == "export":
                cmd_export(cfg, out, args)
            else:
                COMMANDS[args.verb](cfg, out)
    except (ConfigError, fileio.FormatError, FileNotFoundError, IndexError, LockError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ForwardSolveError, InversionError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
