"""Command-line front end.

Subcommands::

    simulate       write a photon stream or lidar cube file
    sketch         one-pass online sketching of a stream or cube
    fit            per-pixel parameter estimation to a results CSV
    rep            REP efficiency curves (FIM-based)
    contour        Monte-Carlo RMSE / detection grids
    starved        photon-starved RMSE-ratio grid
    ifft-compare   sketched SMLE vs iFFT RMSE-ratio grid
    clt            circular-mean error histograms vs the Gaussian limit
    pulse-width    wide vs narrow pulse coarse binning vs SMLE

Experiment subcommands read a flat ``key = value`` config file (see the
shipped ``configs/``); every config key can be overridden by a CLI flag of
the same name.  All outputs are CSV files with self-describing headers;
plots are a thin optional layer rendered from the CSVs.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io as skio
from .estimate import (circular_mean, coarse_bin, coarse_em,
                       coarse_matched_filter, em_fit, ifft_estimate,
                       matched_filter, max_peak, smle_fit)
from .experiments import (ExperimentConfig, build_irf, compression, run_clt,
                          run_contour, run_ifft_compare, run_pulse_width,
                          run_rep, run_starved, write_csv)
from .simulate import sample_photons, simulate_cube
from .sketch import SketchState, random_frequencies, truncated_frequencies

_EXPERIMENTS = {
    "rep": run_rep,
    "contour": run_contour,
    "starved": run_starved,
    "ifft-compare": run_ifft_compare,
    "clt": run_clt,
    "pulse-width": run_pulse_width,
}

_CSV_NAMES = {
    "rep": "rep.csv",
    "contour": "contour.csv",
    "starved": "starved.csv",
    "ifft-compare": "ifft_compare.csv",
    "clt": "clt_summary.csv",
    "pulse-width": "pulse_width.csv",
}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    for f in fields(ExperimentConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name,
                       default=None, help=argparse.SUPPRESS)
    p.add_argument("--no-plot", action="store_true",
                   help="skip the PNG rendering step")


def _load_config(args, experiment: str) -> ExperimentConfig:
    overrides = {f.name: getattr(args, f.name, None)
                 for f in fields(ExperimentConfig)}
    overrides["experiment"] = experiment
    if args.config:
        return ExperimentConfig.from_file(args.config, overrides)
    return ExperimentConfig.from_mapping(
        {k: v for k, v in overrides.items() if v is not None})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sketchlidar", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a stream or cube file")
    _add_config_flags(sim)
    sim.add_argument("--out", help="output path (default <out-dir>/stream.skl or cube.skc)")
    sim.set_defaults(func=cmd_simulate)

    sk = sub.add_parser("sketch", help="online sketching of a stream or cube")
    sk.add_argument("input", help="stream (.skl) or cube (.skc) file")
    sk.add_argument("--scheme", choices=["truncated", "random"], default="truncated")
    sk.add_argument("--m", type=int, required=True, help="number of complex measurements")
    sk.add_argument("--seed", type=int, default=0, help="random-scheme draw seed")
    sk.add_argument("--irf", help="pulse spec, needed by the random scheme")
    sk.add_argument("--out", help="output sketch file or directory (cubes)")
    sk.add_argument("--out-dir", default="out")
    sk.add_argument("--chunk", type=int, default=1 << 20,
                    help="stamps per read; memory stays O(m + chunk)")
    sk.set_defaults(func=cmd_sketch)

    fit = sub.add_parser("fit", help="per-pixel estimation to CSV")
    fit.add_argument("input", nargs="+",
                     help="sketch file(s), or one stream/cube file")
    fit.add_argument("--method", required=True,
                     choices=["smle", "circular-mean", "matched-filter", "em",
                              "coarse+mf", "coarse+em", "ifft", "max-peak"])
    fit.add_argument("--K", type=int, default=1)
    fit.add_argument("--irf", required=True, help="pulse spec (gaussian:<s>, file:<p>, short, long)")
    fit.add_argument("--T", type=int, help="needed when --irf is parametric")
    fit.add_argument("--two-m", type=int, default=16,
                     help="coarse methods: number of cells (equivalent real measurements)")
    fit.add_argument("--weighting", default="cue",
                     choices=["cue", "identity", "fixed", "two-step"])
    fit.add_argument("--init", default="auto", choices=["auto", "cm", "grid"])
    fit.add_argument("--grid-size", type=int, default=16)
    fit.add_argument("--peak-offset-correction", action="store_true",
                     help="subtract the band-limited pulse peak (asymmetric pulses)")
    fit.add_argument("--out", default="results.csv")
    fit.set_defaults(func=cmd_fit)

    for name in _EXPERIMENTS:
        ep = sub.add_parser(name, help=f"run the {name} experiment")
        _add_config_flags(ep)
        ep.set_defaults(func=cmd_experiment, experiment=name)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_config(args, "simulate")
    irf = build_irf(cfg.irf, cfg.T)
    params = cfg.params(cfg.sbr[0])
    out_dir = Path(cfg.out_dir)
    if cfg.rows > 0 and cfg.cols > 0:
        scene = [[params] * cfg.cols for _ in range(cfg.rows)]
        cube = simulate_cube(scene, irf, n_bar=cfg.n_bar, seed=cfg.seed,
                             fixed_n=cfg.fixed_n)
        out = Path(args.out) if args.out else out_dir / "cube.skc"
        out.parent.mkdir(parents=True, exist_ok=True)
        skio.write_cube(out, cube)
        print(f"wrote {out}: {cube.n_r}x{cube.n_c} pixels, T={cube.T}, "
              f"mean photons/pixel {cube.mean_count():.1f}, "
              f"configured SBR {params.sbr:.3g}")
    else:
        n = int(cfg.n[0])
        stream = sample_photons(params, irf, n, seed=cfg.seed)
        out = Path(args.out) if args.out else out_dir / "stream.skl"
        out.parent.mkdir(parents=True, exist_ok=True)
        skio.write_stream(out, stream)
        print(f"wrote {out}: n={stream.n}, T={stream.T}, "
              f"configured SBR {params.sbr:.3g}")
    return 0


def _make_freqs(scheme, T, m, seed, irf_spec):
    if not 1 <= m <= T - 1:
        raise ValueError(f"m must lie in [1, T-1] = [1, {T - 1}], got {m}")
    if scheme == "truncated":
        return truncated_frequencies(T, m)
    if not irf_spec:
        raise ValueError("the random scheme needs --irf for its sampling law")
    return random_frequencies(T, m, build_irf(irf_spec, T), seed=seed)


def cmd_sketch(args) -> int:
    path = Path(args.input)
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == skio.MAGIC_STREAM:
        T, n, _ = skio.read_stream_header(path)
        freqs = _make_freqs(args.scheme, T, args.m, args.seed, args.irf)
        state = SketchState(freqs)
        for chunk in skio.iter_stream_stamps(path, chunk_size=args.chunk):
            state.add(chunk)
        out = Path(args.out) if args.out else Path(args.out_dir) / "sketch.skz"
        out.parent.mkdir(parents=True, exist_ok=True)
        skio.write_sketch(out, state.finalize())
        print(f"wrote {out}: m={args.m}, n={n}, "
              f"compression {compression(2 * args.m, T, n):.4g}")
    elif magic == skio.MAGIC_CUBE:
        cube = skio.read_cube(path)
        freqs = _make_freqs(args.scheme, cube.T, args.m, args.seed, args.irf)
        out_dir = Path(args.out) if args.out else Path(args.out_dir) / "sketches"
        out_dir.mkdir(parents=True, exist_ok=True)
        from .sketch import sketch_from_histogram
        for i in range(cube.n_r):
            for j in range(cube.n_c):
                sk = sketch_from_histogram(cube.counts[i, j], freqs)
                skio.write_sketch(out_dir / f"sketch_{i:04d}_{j:04d}.skz", sk)
        print(f"wrote {cube.n_r * cube.n_c} sketches to {out_dir}")
    else:
        raise skio.FormatError(f"unrecognized magic {magic!r}", 0)
    return 0


def _fit_row(i, j, n_pixel, method, res=None, depth=None):
    row = {"i": i, "j": j, "method": method, "n": n_pixel}
    if res is not None:
        K = res.params.K
        row["K"] = K
        for k, a in enumerate(res.params.alphas):
            row[f"alpha_{k}"] = a
        for k, t in enumerate(res.params.depths, start=1):
            row[f"t_{k}"] = t
            row[f"intensity_{k}"] = res.params.alphas[k] * n_pixel
        row.update(loss=res.loss, iterations=res.iterations,
                   converged=res.converged, init_method=res.init_method)
    else:
        row.update(K=1, alpha_0="", alpha_1="", t_1=depth, intensity_1="",
                   loss="", iterations=0, converged=True, init_method="")
    return row


def cmd_fit(args) -> int:
    inputs = [Path(p) for p in args.input]
    for p in inputs:
        if not p.exists():
            raise OSError(f"input file not found: {p}")
    with open(inputs[0], "rb") as f:
        magic = f.read(4)
    sketch_methods = {"smle", "circular-mean", "ifft"}
    rows = []
    if magic == skio.MAGIC_SKETCH:
        if args.method not in sketch_methods:
            raise ValueError(
                f"method {args.method} works on full data; got sketch input")
        sketches = [skio.read_sketch(p) for p in inputs]
        T = sketches[0].T
        irf = build_irf(args.irf, args.T or T)
        for idx, sk in enumerate(sketches):
            if args.method == "smle":
                res = smle_fit(sk, irf, K=args.K, weighting=args.weighting,
                               init=args.init, grid_size=args.grid_size)
                rows.append(_fit_row(0, idx, sk.n, "smle", res=res))
            elif args.method == "circular-mean":
                rows.append(_fit_row(0, idx, sk.n, "circular-mean",
                                     depth=circular_mean(sk)))
            else:
                rows.append(_fit_row(0, idx, sk.n, "ifft",
                                     depth=ifft_estimate(
                                         sk, irf,
                                         correct_offset=args.peak_offset_correction)))
        two_m = 2 * sketches[0].m
        n_mean = np.mean([sk.n for sk in sketches])
        print(f"compression max(2m/T, 2m/n) = "
              f"{compression(two_m, T, n_mean):.4g} (2m={two_m})")
    else:
        if args.method in sketch_methods:
            raise ValueError(
                f"method {args.method} needs sketch input; got full data")
        if len(inputs) != 1:
            raise ValueError("full-data methods take exactly one input file")
        if magic == skio.MAGIC_STREAM:
            stream = skio.read_stream(inputs[0])
            hists = {(0, 0): stream.histogram()}
            T = stream.T
        elif magic == skio.MAGIC_CUBE:
            cube = skio.read_cube(inputs[0])
            T = cube.T
            hists = {(i, j): cube.counts[i, j]
                     for i in range(cube.n_r) for j in range(cube.n_c)}
        else:
            raise skio.FormatError(f"unrecognized magic {magic!r}", 0)
        irf = build_irf(args.irf, args.T or T)
        for (i, j), hist in hists.items():
            n_pixel = int(hist.sum())
            if n_pixel == 0:
                continue
            if args.method == "matched-filter":
                rows.append(_fit_row(i, j, n_pixel, args.method,
                                     depth=matched_filter(hist, irf)))
            elif args.method == "max-peak":
                rows.append(_fit_row(i, j, n_pixel, args.method,
                                     depth=max_peak(hist)))
            elif args.method == "em":
                res = em_fit(hist, irf, K=args.K)
                rows.append(_fit_row(i, j, n_pixel, args.method, res=res))
            else:
                stamps = np.repeat(np.arange(T), hist)
                ch = coarse_bin(stamps, args.two_m, T=T)
                if args.method == "coarse+mf":
                    rows.append(_fit_row(i, j, n_pixel, args.method,
                                         depth=coarse_matched_filter(ch, irf)))
                else:
                    res = coarse_em(ch, irf, K=args.K)
                    rows.append(_fit_row(i, j, n_pixel, args.method, res=res))
    write_csv(args.out, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args, args.experiment)
    runner = _EXPERIMENTS[args.experiment]
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.experiment == "clt":
        summary, errors = runner(cfg)
        write_csv(out_dir / "clt_summary.csv", summary)
        write_csv(out_dir / "clt_errors.csv", errors)
        rows = summary
    else:
        rows = runner(cfg)
        write_csv(out_dir / _CSV_NAMES[args.experiment], rows)
    print(f"wrote {out_dir / _CSV_NAMES[args.experiment]} ({len(rows)} rows)")
    if not args.no_plot:
        _render_plots(args.experiment, cfg, out_dir)
    return 0


# ---------------------------------------------------------------------------
# plotting: a thin presentation layer over the CSVs

def _render_plots(experiment, cfg, out_dir: Path):
    import csv as _csv

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    def load(name):
        with open(out_dir / name) as f:
            return list(_csv.DictReader(f))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    if experiment == "rep":
        rows = load("rep.csv")
        for scheme in sorted({r["scheme"] for r in rows}):
            for sbr in sorted({float(r["sbr"]) for r in rows}):
                pts = [(int(r["two_m"]), float(r["rep"])) for r in rows
                       if r["scheme"] == scheme and float(r["sbr"]) == sbr]
                pts.sort()
                ax.plot([p[0] for p in pts], [max(p[1], 1e-4) for p in pts],
                        marker="o", label=f"{scheme}, SBR={sbr:g}")
        ax.set_yscale("log")
        ax.set_xlabel("real measurements 2m")
        ax.set_ylabel("REP [%]")
        ax.legend(fontsize=8)
        target = "rep.png"
    elif experiment == "contour":
        rows = load("contour.csv")
        methods = ["smle", "ifft", "coarse", "mf"]
        for meth in methods:
            for sbr in sorted({float(r["sbr"]) for r in rows}):
                pts = sorted((int(r["two_m"]), float(r[f"rmse_{meth}"]))
                             for r in rows if float(r["sbr"]) == sbr)
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=".",
                        label=f"{meth}, SBR={sbr:g}")
        ax.set_yscale("log")
        ax.set_xlabel("real measurements 2m")
        ax.set_ylabel("RMSE [bins]")
        ax.legend(fontsize=7)
        target = "contour.png"
    elif experiment in ("starved", "ifft-compare"):
        rows = load(_CSV_NAMES[experiment])
        ns = sorted({int(r["n"]) for r in rows})
        sbrs = sorted({float(r["sbr"]) for r in rows})
        grid = np.full((len(sbrs), len(ns)), np.nan)
        for r in rows:
            grid[sbrs.index(float(r["sbr"])), ns.index(int(r["n"]))] = float(r["ratio"])
        pcm = ax.pcolormesh(ns, sbrs, grid, shading="nearest", cmap="RdBu_r",
                            vmin=0.0, vmax=2.0)
        ax.set_yscale("log")
        ax.set_xlabel("photon count n")
        ax.set_ylabel("SBR")
        fig.colorbar(pcm, ax=ax, label="RMSE ratio R")
        target = f"{experiment.replace('-', '_')}.png"
    elif experiment == "clt":
        errors = load("clt_errors.csv")
        summary = load("clt_summary.csv")
        plt.close(fig)
        ns = sorted({int(r["n"]) for r in summary})
        fig, axes = plt.subplots(1, len(ns), figsize=(3.2 * len(ns), 3.2))
        axes = np.atleast_1d(axes)
        for ax_i, n in zip(axes, ns):
            errs = [float(r["error"]) for r in errors if int(r["n"]) == n]
            ax_i.hist(errs, bins=40, density=True, alpha=0.7)
            s = next(float(r["std_predicted"]) for r in summary if int(r["n"]) == n)
            x = np.linspace(min(errs), max(errs), 200)
            ax_i.plot(x, np.exp(-0.5 * (x / s) ** 2) / (s * np.sqrt(2 * np.pi)), "r")
            ax_i.set_title(f"n={n}")
        target = "clt.png"
    else:  # pulse-width
        rows = load("pulse_width.csv")
        rows.sort(key=lambda r: float(r["sbr"]))
        x = [float(r["sbr"]) for r in rows]
        for col in ("rmse_smle", "rmse_coarse_narrow", "rmse_coarse_wide"):
            ax.plot(x, [float(r[col]) for r in rows], marker="o", label=col)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("SBR")
        ax.set_ylabel("RMSE [bins]")
        ax.legend(fontsize=8)
        target = "pulse_width.png"
    fig.tight_layout()
    fig.savefig(out_dir / target, dpi=120)
    plt.close(fig)


if __name__ == "__main__":
    raise SystemExit(main())
