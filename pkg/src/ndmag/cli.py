"""Command-line front end: ``ndmag <command> [options]``.

Every command writes its outputs plus a ``config.json`` echo of the fully
resolved options into ``--out-dir``.  Options can also come from a JSON file
given with ``--config``; explicit flags win over config values.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import gpr, io, modelfit, physics, pipeline
from .errors import DatasetFormatError, InvalidParameterError, NdmagError

DEFAULT_B0_GRID = "200,600,1000,1500,2000,2500"


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _log_grid(text):
    vals = _float_list(text)
    if len(vals) != 3 or vals[0] <= 0 or vals[1] <= 0 or vals[2] < 1 or vals[2] != int(vals[2]):
        raise argparse.ArgumentTypeError(f"expected 'min,max,count' with positive bounds, got {text!r}")
    return np.geomspace(vals[0], vals[1], int(vals[2]))


def _range(text):
    vals = _float_list(text)
    if len(vals) != 3 or vals[2] <= 0 or vals[1] < vals[0]:
        raise argparse.ArgumentTypeError(f"expected 'start,stop,step' with step > 0, got {text!r}")
    n = int(math.floor((vals[1] - vals[0]) / vals[2] + 1e-9)) + 1
    return vals[0] + vals[2] * np.arange(n)


# argument groups


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values (keys are option names)")
    p.add_argument("--out-dir", default="ndmag-out", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="seed for every randomized step")
    p.add_argument("--threads", type=int, default=1, help="worker threads for batch work")


def _add_physics(p):
    g = p.add_argument_group("spectrum model")
    g.add_argument("--D-MHz", dest="D_MHz", type=float, default=physics.ZERO_FIELD_SPLITTING_MHZ)
    g.add_argument("--E-s-MHz", dest="E_s_MHz", type=float, default=physics.NdeModelParams.E_s)
    g.add_argument(
        "--gamma", type=float, default=physics.GYROMAGNETIC_RATIO_KHZ_PER_UT, help="kHz/uT"
    )
    g.add_argument("--linewidth-MHz", dest="linewidth_MHz", type=float, default=5.0)
    g.add_argument("--amplitude", type=float, default=0.3, help="Lorentzian amplitude C")
    g.add_argument("--na", type=float, default=physics.DEFAULT_NUMERICAL_APERTURE)
    g.add_argument("--freq-min-MHz", dest="freq_min_MHz", type=float, default=physics.DEFAULT_FREQ_MIN_MHZ)
    g.add_argument("--freq-max-MHz", dest="freq_max_MHz", type=float, default=physics.DEFAULT_FREQ_MAX_MHZ)
    g.add_argument("--freq-points", type=int, default=physics.DEFAULT_FREQ_POINTS)


def _physics_from(args):
    params = physics.NdeModelParams.with_numerical_aperture(
        args.na,
        D=args.D_MHz,
        E_s=args.E_s_MHz,
        gamma=args.gamma,
        delta_nu_minus=args.linewidth_MHz,
        delta_nu_plus=args.linewidth_MHz,
        C_minus=args.amplitude,
        C_plus=args.amplitude,
    )
    if args.freq_points < 3 or not args.freq_max_MHz > args.freq_min_MHz:
        raise InvalidParameterError("frequency grid needs >= 3 points and max > min")
    freqs = np.linspace(args.freq_min_MHz, args.freq_max_MHz, args.freq_points)
    return params, freqs


def _require_dir(path, what):
    if not Path(path).is_dir():
        raise NdmagError(f"{what} directory not found: {path}")


def _require_file(path, what):
    if not Path(path).is_file():
        raise NdmagError(f"{what} file not found: {path}")


def _echo_config(args):
    skip = {"func", "config_values"}
    resolved = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(value, np.ndarray):
            value = value.tolist()
        resolved[key] = value
    io.atomic_write_text(Path(args.out_dir) / "config.json", json.dumps(resolved, indent=1) + "\n")


# commands


def cmd_synth(args):
    params, freqs = _physics_from(args)
    if args.fields:
        fields = np.asarray(args.fields, dtype=float)
    else:
        if args.n < 1:
            raise InvalidParameterError("--n must be >= 1")
        fields = np.linspace(args.b_min, args.b_max, args.n)
        if args.midpoints:
            fields = 0.5 * (fields[:-1] + fields[1:])
    if fields.size == 0 or np.any(fields < 0):
        raise InvalidParameterError("field values must be non-negative and non-empty")
    children = np.random.SeedSequence(args.seed).spawn(fields.size)
    spectra = []
    for b, child in zip(fields, children):
        s = physics.synthesize_spectrum(
            float(b), params, freqs, integration_time=args.integration_time
        )
        if args.shift_MHz:
            s = physics.resample(physics.apply_frequency_shift(s, args.shift_MHz), freqs)
        if args.photons is not None:
            s = physics.add_shot_noise(s, args.photons, child)
        spectra.append(s)
    io.write_dataset(args.out_dir, spectra, fields)
    print(f"wrote {len(spectra)} spectra to {args.out_dir}")


def cmd_train(args):
    _require_dir(args.dataset, "dataset")
    ds = io.read_dataset(args.dataset)
    if np.any(~np.isfinite(ds.fields)):
        raise DatasetFormatError("training needs a true field for every spectrum", args.dataset)
    grid = ds.spectra[0].frequencies
    for name, s in zip(ds.files, ds.spectra):
        if s.frequencies.shape != grid.shape or not np.allclose(s.frequencies, grid, rtol=0, atol=1e-9):
            raise DatasetFormatError(f"{name}: frequency grid differs from the first spectrum", args.dataset)
    X = np.array([gpr.preprocess(s) for s in ds.spectra])
    y = ds.fields
    if (args.theta is None) != (args.beta_inv is None):
        raise InvalidParameterError("--theta and --beta-inv must be given together")
    if args.theta is not None:
        hp = gpr.KernelHyperparams(args.theta, args.beta_inv)
        cv = gpr.cv_loss(X, y, hp, args.folds, args.seed) if y.size >= args.folds else math.nan
    else:
        theta_grid = args.theta_grid if args.theta_grid is not None else gpr.DEFAULT_THETA_GRID
        beta_grid = args.beta_inv_grid if args.beta_inv_grid is not None else gpr.DEFAULT_BETA_INV_GRID
        hp = gpr.optimize_hyperparams(X, y, theta_grid, beta_grid, args.folds, args.seed)
        cv = gpr.cv_loss(X, y, hp, args.folds, args.seed)
    scale = gpr.calibrate_stddev(X, y, hp, args.folds, args.seed) if args.calibrate_stddev else 1.0
    model = gpr.GprModel(X, y, hp, grid, scale)
    out = Path(args.out_dir)
    io.atomic_write_text(out / "model.json", json.dumps(model.to_dict(), indent=1) + "\n")
    summary = {
        "theta": hp.theta,
        "beta_inv_uT2": hp.beta_inv,
        "cv_loss_uT2": cv,
        "folds": args.folds,
        "n_train": model.n_train,
        "stddev_scale": scale,
    }
    io.write_record(out / "train_summary.txt", summary)
    print(f"theta={io.fmt(hp.theta)} beta_inv_uT2={io.fmt(hp.beta_inv)} cv_loss_uT2={io.fmt(cv)}")


def _load_model(path):
    _require_file(path, "model")
    return gpr.GprModel.load(path)


def cmd_predict(args):
    model = _load_model(args.model)
    _require_dir(args.dataset, "dataset")
    ds = io.read_dataset(args.dataset)
    for name, s in zip(ds.files, ds.spectra):
        try:
            model.check_grid(s)
        except NdmagError as exc:
            raise DatasetFormatError(f"{name}: {exc}", args.dataset) from None
    mean, std = model.predict_many(np.array([gpr.preprocess(s) for s in ds.spectra]))
    rows = [
        (name, b, m, sd, m - b) for name, b, m, sd in zip(ds.files, ds.fields, mean, std)
    ]
    io.write_table(
        Path(args.out_dir) / "predictions.csv",
        ["file", "true_field_uT", "predicted_uT", "stddev_uT", "error_uT"],
        rows,
    )
    print(f"predicted {len(rows)} spectra")


def _best_fit(spectrum, params, grid):
    results = [modelfit.fit_spectrum(spectrum, params, b0) for b0 in grid]
    good = [r for r in results if r.converged]
    pool = good or results
    best = min(r.residual_norm for r in pool)
    band = best * (1 + modelfit.TIE_RTOL) + 1e-300
    return min((r for r in pool if r.residual_norm <= band), key=lambda r: r.B_hat)


def cmd_fit_model(args):
    params, _ = _physics_from(args)
    _require_dir(args.dataset, "dataset")
    ds = io.read_dataset(args.dataset)
    grid = args.b0_grid
    if not grid or any(b <= 0 for b in grid):
        raise InvalidParameterError("--b0-grid needs positive starting fields")
    with ThreadPoolExecutor(max_workers=max(args.threads, 1)) as pool:
        results = list(pool.map(lambda s: _best_fit(s, params, grid), ds.spectra))
    out = Path(args.out_dir)
    rows = []
    for name, b, r in zip(ds.files, ds.fields, results):
        io.atomic_write_text(out / "fits" / (Path(name).stem + ".fit.txt"), r.to_record())
        rows.append((name, b, r.B_hat, r.B_stderr, r.B_hat - b, r.residual_norm, r.iterations, r.converged))
    io.write_table(
        out / "fit_results.csv",
        [
            "file",
            "true_field_uT",
            "B_hat_uT",
            "B_stderr_uT",
            "error_uT",
            "residual_norm",
            "iterations",
            "converged",
        ],
        rows,
    )
    n_ok = sum(r.converged for r in results)
    print(f"fitted {len(results)} spectra, {n_ok} converged")


def cmd_image(args):
    model = _load_model(args.model)
    out = Path(args.out_dir)
    wire = None
    if args.dataset:
        _require_dir(args.dataset, "dataset")
        ds = io.read_dataset(args.dataset)
        if ds.positions is None:
            raise DatasetFormatError("imaging dataset needs x_um,y_um manifest columns", args.dataset)
        xs, ys = np.unique(ds.positions[:, 0]), np.unique(ds.positions[:, 1])
        if xs.size * ys.size != len(ds):
            raise DatasetFormatError("pixel positions do not form a full grid", args.dataset)
        grid = [[None] * xs.size for _ in ys]
        for (x, y), s in zip(ds.positions, ds.spectra):
            grid[int(np.searchsorted(ys, y))][int(np.searchsorted(xs, x))] = s
        pixel_area = float(np.diff(xs).mean() * np.diff(ys).mean()) if xs.size > 1 and ys.size > 1 else args.pixel_area_um2
        fmap = pipeline.predict_map(model, grid, xs, ys, pixel_area)
    else:
        params, _ = _physics_from(args)
        if model.frequencies is not None:
            freqs = model.frequencies
        else:
            freqs = np.linspace(args.freq_min_MHz, args.freq_max_MHz, args.freq_points)
        wire = pipeline.WireModel(args.current_A, args.x0_um, args.z0_um, args.bias_uT)
        pitch = math.sqrt(args.pixel_area_um2)
        xs = pipeline.pixel_coordinates(args.nx, pitch)
        ys = pipeline.pixel_coordinates(args.ny, pitch)
        column_fields = pipeline.wire_field_magnitude(xs, wire)
        fields = np.tile(column_fields, args.ny)
        flat = pipeline.noisy_spectra(fields, params, freqs, args.photons, args.seed, args.integration_time)
        grid = [flat[j * args.nx : (j + 1) * args.nx] for j in range(args.ny)]
        fmap = pipeline.predict_map(model, grid, xs, ys, args.pixel_area_um2)

    io.atomic_write_text(out / "field_map.csv", io.format_grid(fmap.field_uT))
    io.atomic_write_text(out / "field_map_stddev.csv", io.format_grid(fmap.stddev_uT))
    meta = {
        "nx": fmap.nx,
        "ny": fmap.ny,
        "pixel_area_um2": fmap.pixel_area_um2,
        "x_um": ";".join(io.fmt(v) for v in fmap.x_um),
        "y_um": ";".join(io.fmt(v) for v in fmap.y_um),
    }
    profile = pipeline.average_along_y(fmap)
    mean_sd = fmap.stddev_uT.mean(axis=0) / math.sqrt(fmap.ny)
    io.write_table(
        out / "profile.csv",
        ["x_um", "B_mean_uT", "B_stderr_uT"],
        profile,
    )
    current = args.current_A if wire is not None else args.fit_current_A
    if current:
        sigma = [math.hypot(se, sd) for (_, _, se), sd in zip(profile, mean_sd)]
        fit_profile = [(x, b, s) for (x, b, _), s in zip(profile, sigma)]
        fitted = pipeline.fit_wire(fit_profile, current, args.bias_uT)
        io.write_record(out / "wire_fit.txt", fitted.to_dict())
        meta["wire_fit"] = "wire_fit.txt"
    else:
        meta["wire_fit"] = "skipped"
    io.write_record(out / "field_map_meta.txt", meta)
    print(
        f"map {fmap.nx}x{fmap.ny}: mean {io.fmt(float(fmap.field_uT.mean()))} uT, "
        f"wire fit {meta['wire_fit']}"
    )


def cmd_analyze(args):
    out = Path(args.out_dir)
    did = False
    reports = []
    if args.samples:
        _require_file(args.samples, "samples")
        table = io.read_table(args.samples, required=("t_s", "sigma_uT"))
        has_bins = "field_bin_low_uT" in table and "field_bin_high_uT" in table
        keys = (
            list(zip(table["field_bin_low_uT"], table["field_bin_high_uT"]))
            if has_bins
            else [(math.nan, math.nan)] * table["t_s"].size
        )
        groups = {}
        for key, t, s in zip(keys, table["t_s"], table["sigma_uT"]):
            groups.setdefault(key, []).append((t, s))
        reports += [pipeline.accuracy_report(k, v) for k, v in groups.items()]
        did = True
    if args.simulate:
        params, freqs = _physics_from(args)
        train_fields = np.linspace(args.b_min, args.b_max, args.train_n)
        test_fields = 0.5 * (train_fields[:-1] + train_fields[1:])[:: args.test_stride]
        edges = pipeline.field_bin_edges(args.b_max, args.bin_width_uT)
        bins = list(zip(edges[:-1], edges[1:]))
        sim = pipeline.simulate_accuracy(
            args.times,
            bins,
            train_fields=train_fields,
            test_fields=test_fields,
            pixels=args.pixels,
            photons_per_second=args.photons_per_second,
            params=params,
            frequencies=freqs,
            seed=args.seed,
        )
        io.write_table(
            out / "sigma_samples.csv",
            ["field_bin_low_uT", "field_bin_high_uT", "t_s", "sigma_uT"],
            [(r.field_bin[0], r.field_bin[1], t, s) for r in sim for t, s in r.sigma_samples],
        )
        reports += sim
        did = True
    if reports:
        io.write_table(
            out / "accuracy.csv",
            ["field_bin_low_uT", "field_bin_high_uT", "n_samples", "eta_uT_per_sqrtHz", "zeta_uT"],
            [tuple(r.to_dict().values()) for r in reports],
        )
        for r in reports:
            print(
                f"bin {io.fmt(r.field_bin[0])}-{io.fmt(r.field_bin[1])} uT: "
                f"eta={io.fmt(r.eta)} uT/sqrt(Hz) zeta={io.fmt(r.zeta)} uT"
            )
    if args.predictions:
        sets = {}
        for name, path, col in (("gpr", args.predictions, "predicted_uT"), ("model", args.fits, "B_hat_uT")):
            if not path:
                continue
            _require_file(path, name)
            table = io.read_table(path, required=("true_field_uT", col))
            ok = np.isfinite(table[col]) & np.isfinite(table["true_field_uT"])
            sets[name] = (table["true_field_uT"][ok], np.abs(table[col][ok] - table["true_field_uT"][ok]))
        hist = pipeline.error_histograms(sets, args.bin_width_uT, args.bars)
        io.write_table(
            out / "histograms.csv",
            ["estimator", "field_bin_low_uT", "field_bin_high_uT", "abs_error_low_uT", "abs_error_high_uT", "count"],
            hist.rows(),
        )
        io.write_table(
            out / "histogram_means.csv",
            ["estimator", "field_bin_low_uT", "field_bin_high_uT", "mean_abs_error_uT"],
            [
                (name, hist.field_edges[i], hist.field_edges[i + 1], m)
                for name, means in hist.means.items()
                for i, m in enumerate(means)
            ],
        )
        did = True
    if not did:
        raise InvalidParameterError("nothing to analyze: give --samples, --simulate or --predictions")


def cmd_shift_scan(args):
    model = _load_model(args.model)
    _require_dir(args.dataset, "dataset")
    ds = io.read_dataset(args.dataset)
    if np.any(~np.isfinite(ds.fields)):
        raise DatasetFormatError("shift scan needs a true field for every spectrum", args.dataset)
    scan = pipeline.shift_scan(model, ds.spectra, ds.fields, args.shifts)
    out = Path(args.out_dir)
    io.write_table(out / "shift_scan.csv", ["shift_MHz", "mean_abs_error_uT"], zip(scan.shifts, scan.errors))
    io.write_record(
        out / "shift_scan_summary.txt",
        {"best_shift_MHz": scan.best_shift, "min_mean_abs_error_uT": float(scan.errors.min())},
    )
    print(f"best shift {io.fmt(scan.best_shift)} MHz")


# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ndmag",
        description="Synthetic nanodiamond-ensemble magnetometry: spectra, GPR, model fits, imaging.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    p = sub.add_parser("synth", help="synthesize a dataset of spectra")
    _add_common(p)
    _add_physics(p)
    p.add_argument("--b-min", type=float, default=6.0, help="lowest field, uT")
    p.add_argument("--b-max", type=float, default=2286.0, help="highest field, uT")
    p.add_argument("--n", type=int, default=751, help="number of fields")
    p.add_argument("--midpoints", action="store_true", help="use the midpoints of the field grid")
    p.add_argument("--fields", type=_float_list, help="explicit comma-separated fields, uT")
    p.add_argument("--photons", type=float, help="photons per point (omit for noiseless)")
    p.add_argument("--integration-time", type=float, default=1.0, help="s")
    p.add_argument("--shift-MHz", dest="shift_MHz", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)
    subparsers["synth"] = p

    p = sub.add_parser("train", help="train a GPR model on a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--theta", type=float, help="fixed theta (skips the CV grid)")
    p.add_argument("--beta-inv", type=float, help="fixed beta_inv, uT^2")
    p.add_argument("--theta-grid", type=_log_grid, help="min,max,count (log spaced)")
    p.add_argument("--beta-inv-grid", type=_log_grid, help="min,max,count (log spaced)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument(
        "--calibrate-stddev",
        action="store_true",
        help="rescale predictive stddev to match cross-validated errors",
    )
    p.set_defaults(func=cmd_train)
    subparsers["train"] = p

    p = sub.add_parser("predict", help="predict fields for a dataset")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_predict)
    subparsers["predict"] = p

    p = sub.add_parser("fit-model", help="fit the physical spectrum model to every spectrum")
    _add_common(p)
    _add_physics(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--b0-grid", type=_float_list, default=_float_list(DEFAULT_B0_GRID))
    p.set_defaults(func=cmd_fit_model)
    subparsers["fit-model"] = p

    p = sub.add_parser("image", help="field map of a wire (synthetic) or an imaging dataset")
    _add_common(p)
    _add_physics(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", help="imaging dataset with x_um,y_um columns")
    p.add_argument("--current-A", dest="current_A", type=float, default=0.8)
    p.add_argument("--x0-um", dest="x0_um", type=float, default=0.0)
    p.add_argument("--z0-um", dest="z0_um", type=float, default=130.0)
    p.add_argument("--bias-uT", dest="bias_uT", type=float, default=912.8)
    p.add_argument("--nx", type=int, default=17)
    p.add_argument("--ny", type=int, default=22)
    p.add_argument("--pixel-area-um2", dest="pixel_area_um2", type=float, default=pipeline.DEFAULT_PIXEL_AREA_UM2)
    p.add_argument("--photons", type=float, help="photons per point (omit for noiseless)")
    p.add_argument("--integration-time", type=float, default=1.0)
    p.add_argument("--fit-current-A", dest="fit_current_A", type=float, default=0.0,
                   help="known current for the wire fit of a loaded dataset")
    p.set_defaults(func=cmd_image)
    subparsers["image"] = p

    p = sub.add_parser("analyze", help="accuracy/sensitivity fits and error histograms")
    _add_common(p)
    _add_physics(p)
    p.add_argument("--samples", help="CSV with t_s,sigma_uT[,field_bin_low_uT,field_bin_high_uT]")
    p.add_argument("--simulate", action="store_true", help="run the integration-time protocol")
    p.add_argument("--times", type=_float_list, default=_float_list("1,2,4,8,16"))
    p.add_argument("--photons-per-second", type=float, default=1e6)
    p.add_argument("--train-n", type=int, default=200)
    p.add_argument("--test-stride", type=int, default=2)
    p.add_argument("--pixels", type=int, default=10)
    p.add_argument("--b-min", type=float, default=100.0)
    p.add_argument("--b-max", type=float, default=2286.0)
    p.add_argument("--bin-width-uT", dest="bin_width_uT", type=float, default=500.0)
    p.add_argument("--predictions", help="predictions.csv from 'predict'")
    p.add_argument("--fits", help="fit_results.csv from 'fit-model'")
    p.add_argument("--bars", type=int, default=10)
    p.set_defaults(func=cmd_analyze)
    subparsers["analyze"] = p

    p = sub.add_parser("shift-scan", help="prediction error versus training-data frequency shift")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--shifts", type=_range, default=_range("-10,10,1"), help="start,stop,step in MHz (write --shifts=-10,10,1)")
    p.set_defaults(func=cmd_shift_scan)
    subparsers["shift-scan"] = p

    return parser, subparsers


def _load_config(path, subparser):
    try:
        values = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise NdmagError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(values, dict):
        raise DatasetFormatError("config must be a JSON object", path)
    actions = {a.dest: a for a in subparser._actions}
    resolved = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        # keys of a config.json echo that are not options
        if dest == "config" or (dest == "command" and value == subparser.prog.split()[-1]):
            continue
        if dest not in actions or dest == "help":
            raise DatasetFormatError(f"unknown option {key!r}", path)
        action = actions[dest]
        if action.type is not None and isinstance(value, (str, int, float)) and not isinstance(value, bool):
            value = action.type(str(value) if action.type in (_float_list, _log_grid, _range) else value)
        elif action.type in (_float_list,) and isinstance(value, list):
            value = [float(v) for v in value]
        resolved[dest] = value
    return resolved


def _apply_config(argv, subparsers):
    """Load ``--config`` into the subcommand defaults before the real parse."""
    command = next((a for a in argv if not a.startswith("-")), None)
    if command not in subparsers:
        return
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[argv.index(command) + 1 :])
    if not known.config:
        return
    sp = subparsers[command]
    try:
        values = _load_config(known.config, sp)
    except (NdmagError, argparse.ArgumentTypeError) as exc:
        print(f"ndmag {command}: error: {exc}", file=sys.stderr)
        raise SystemExit(1) from None
    for action in sp._actions:
        if action.dest in values:
            action.required = False
    sp.set_defaults(**values)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subparsers = build_parser()
    try:
        _apply_config(argv, subparsers)
    except SystemExit as exc:
        return exc.code
    args = parser.parse_args(argv)
    try:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        args.func(args)
        _echo_config(args)
    except (NdmagError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"ndmag {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
