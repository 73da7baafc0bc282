"""Command-line front end.

Every command writes plot-ready CSV/JSON files plus ``manifest.json``
recording inputs (with checksums), resolved parameters, seed and code
version.  ``excursor replay manifest.json --out DIR`` reruns a command and
reproduces its data files byte for byte.

Options may also come from ``--config FILE`` holding ``key = value`` lines
with the flag names; explicit flags win.
"""
import argparse
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from ._rng import RNG_NAME, RNG_VERSION
from .cluster import ahc, export_dendrogram
from .features import FeatureSpec, canonical_kind, density_curve
from .ingest import load_price_table, synth, synth_price_table, table_to_series, write_price_table
from .matrices import PsiMatrix, build_psi, partition, symmetrize
from .paircorr import InsufficientFeatures, canonical_estimator, xi_pipeline
from .spectral import moments
from .theory import (
    gaussian_peak_density,
    gaussian_trough_density,
    gaussian_upcross_density,
    iid_peak_density,
    iid_upcross_density,
)

DATA_FILES = "data_files"


class CommandError(RuntimeError):
    pass


def _write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _float_list(text):
    """``"-1,0,1"`` or ``"start:stop:step"`` (stop inclusive)."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if ":" in text:
        a, b, step = (float(v) for v in text.split(":"))
        n = int(round((b - a) / step))
        return [round(a + k * step, 12) for k in range(n + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


def _feature_kind(name):
    return canonical_kind(name)


def _load_series(args):
    table = load_price_table(args.input, date_column=args.date_column, delimiter=args.delimiter)
    return table_to_series(table)


# ---- commands -------------------------------------------------------------

def cmd_synth(args):
    groups = args.groups
    series = synth(args.kind, args.n, args.count, args.seed, width=args.width,
                   groups=groups, loading=args.loading)
    table = synth_price_table(series)
    path = os.path.join(args.out, "prices.csv")
    tmp = path + ".partial"
    write_price_table(table, tmp)
    os.replace(tmp, path)
    return [path], []


def _theory_rows(kind, grid, m, band):
    """Gaussian baseline on the same grid as the empirical curve."""
    from scipy import integrate

    if kind == "upcross":
        return gaussian_upcross_density(np.asarray(grid), m)
    dens = gaussian_peak_density if kind == "peak" else gaussian_trough_density
    out = []
    for t in grid:
        if band == "cumulative":
            lo, hi = (t, np.inf) if kind == "peak" else (-np.inf, t)
        else:
            lo, hi = t, t + band
        val = integrate.quad(lambda u: dens(u, m), lo, hi)[0]
        out.append(val if band == "cumulative" else val / band)
    return np.array(out)


def cmd_density(args):
    series = _load_series(args)
    grid = _float_list(args.theta)
    kinds = [_feature_kind(k) for k in args.feature.split(",")]
    rows = ["label,feature,curve,theta,density,error"]
    failed = []
    for s in series:
        m = moments(s)
        for kind in kinds:
            band = "cumulative" if kind == "upcross" or args.band == "cumulative" else float(args.band)
            emp = density_curve(s, kind, grid, band)
            for t, v, e in zip(emp.theta, emp.density, emp.error):
                rows.append(f"{s.label},{kind},empirical,{t:.12g},{v:.12g},{e:.12g}")
            try:
                th = _theory_rows(kind, grid, m, band)
            except ValueError as exc:
                failed.append(f"{s.label}/{kind}: gaussian theory: {exc}")
                th = None
            if th is not None:
                for t, v in zip(grid, th):
                    rows.append(f"{s.label},{kind},gaussian,{t:.12g},{v:.12g},")
            if kind == "upcross":
                iid = iid_upcross_density(np.asarray(grid))
            elif band == "cumulative":
                sign = 1.0 if kind == "peak" else -1.0
                iid = iid_peak_density(sign * np.asarray(grid))
            else:
                iid = None
            if iid is not None:
                for t, v in zip(grid, iid):
                    rows.append(f"{s.label},{kind},iid,{t:.12g},{v:.12g},")
    moms = {s.label: moments(s).to_dict() for s in series}
    out_csv = os.path.join(args.out, "density.csv")
    out_json = os.path.join(args.out, "moments.json")
    _write_atomic(out_csv, "\n".join(rows) + "\n")
    _write_atomic(out_json, json.dumps(moms, indent=1, sort_keys=True) + "\n")
    return [out_csv, out_json], failed


def _pairs(args, labels):
    if args.pairs:
        pairs = []
        for item in args.pairs.split(","):
            a, _, b = item.partition(":")
            for lab in (a, b):
                if lab and lab not in labels:
                    raise CommandError(f"unknown market {lab!r}")
            pairs.append((a, b or None))
        return pairs
    return [(lab, None) for lab in labels]


def cmd_tpcf(args):
    series = _load_series(args)
    by_label = {s.label: s for s in series}
    kind_a = _feature_kind(args.feature)
    kind_b = _feature_kind(args.cross_feature) if args.cross_feature else None
    chunks, failed = [], []
    for theta in _float_list(args.theta):
        spec_a = FeatureSpec(kind_a, theta)
        spec_b = FeatureSpec(kind_b, theta) if kind_b else None
        for a, b in _pairs(args, list(by_label)):
            try:
                curve = xi_pipeline(by_label[a], by_label[b] if b else None, spec_a, spec_b,
                                    tau_max=args.tau_max, estimator=args.estimator,
                                    realizations=args.realizations, seed=args.seed,
                                    rr_mode=args.rr_mode)
            except InsufficientFeatures as exc:
                failed.append(f"{a}:{b or a} theta={theta}: {exc}")
                continue
            text = curve.to_csv(header=False)
            chunks.append("".join(f"{theta:.12g},{line}\n" for line in text.splitlines()))
    path = os.path.join(args.out, "tpcf.csv")
    _write_atomic(path, "theta,lag,xi,err,n_d,n_r,estimator,labels\n" + "".join(chunks))
    return [path], failed


def _tau_mode(value):
    return "max" if str(value) == "max" else int(value)


def _psi_for(args, series, window_id=None):
    kind_a = _feature_kind(args.feature)
    kind_b = _feature_kind(args.cross_feature) if args.cross_feature else None
    theta = _float_list(args.theta)[0]
    return build_psi(series, kind_a, kind_b, theta, tau_mode=_tau_mode(args.tau),
                     tau_window=args.tau_max, estimator=args.estimator,
                     realizations=args.realizations, seed=args.seed, rr_mode=args.rr_mode,
                     window_id=window_id)


def _write_psi(psi, out, stem):
    paths = []
    for suffix, text in ((".csv", psi.to_csv()), (".json", psi.to_json() + "\n"),
                         ("_long.csv", psi.to_long_csv())):
        p = os.path.join(out, stem + suffix)
        _write_atomic(p, text)
        paths.append(p)
    return paths


def cmd_psi(args):
    series = _load_series(args)
    psi = _psi_for(args, series)
    failed = [f"{a}:{b}: {why}" for a, b, why in psi.missing]
    return _write_psi(psi, args.out, "psi"), failed


def cmd_ahc(args):
    with open(args.input) as fh:
        psi = PsiMatrix.from_json(fh.read())
    if not psi.complete:
        raise CommandError("Psi has undefined elements; cannot cluster")
    sym = np.allclose(psi.values, psi.values.T, rtol=0, atol=1e-12)
    if not sym:
        psi = symmetrize(psi)
    dendro = ahc(psi)
    p_json = os.path.join(args.out, "dendrogram.json")
    p_nwk = os.path.join(args.out, "dendrogram.nwk")
    _write_atomic(p_json, export_dendrogram(dendro, "merge-list-json") + "\n")
    _write_atomic(p_nwk, export_dendrogram(dendro, "newick") + "\n")
    return [p_json, p_nwk], []


def cmd_partition(args):
    series = _load_series(args)
    kind_a = _feature_kind(args.feature)
    kind_b = _feature_kind(args.cross_feature) if args.cross_feature else None
    theta = _float_list(args.theta)[0]
    try:
        psis, delta = partition(series, args.window, kind_a, kind_b, theta,
                                tau_mode=_tau_mode(args.tau), tau_window=args.tau_max,
                                estimator=args.estimator, realizations=args.realizations,
                                seed=args.seed, rr_mode=args.rr_mode)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    paths = []
    for name, text in (("lambda.csv", delta.lambda_csv()), ("delta.csv", delta.to_csv()),
                       ("delta_long.csv", delta.to_long_csv()),
                       ("delta.json", delta.to_json() + "\n")):
        p = os.path.join(args.out, name)
        _write_atomic(p, text)
        paths.append(p)
    if args.save_windows:
        for psi in psis:
            paths += _write_psi(psi, args.out, f"psi_w{psi.window_id:03d}")
    return paths, []


COMMANDS = {
    "synth": cmd_synth,
    "density": cmd_density,
    "tpcf": cmd_tpcf,
    "psi": cmd_psi,
    "ahc": cmd_ahc,
    "partition": cmd_partition,
}


# ---- argument handling ----------------------------------------------------

def _common(p, needs_input=True):
    p.add_argument("--config", help="key = value file with option defaults")
    if needs_input:
        p.add_argument("--input", required=True, help="input file")
        p.add_argument("--date-column", default="date")
        p.add_argument("--delimiter", default=",")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "json"], default="csv",
                   help="accepted for compatibility; both formats are always written")


def _pair_opts(p, theta_default):
    p.add_argument("--feature", default="pk", help="pk, tr or up")
    p.add_argument("--cross-feature", default=None, help="second feature for cross analyses")
    p.add_argument("--theta", default=theta_default, help="list 'a,b' or range 'a:b:step'")
    p.add_argument("--tau-max", type=int, default=10)
    p.add_argument("--estimator", default="natural", type=canonical_estimator,
                   help="natural, hamilton or ls")
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--rr-mode", choices=["monte-carlo", "analytic"], default="monte-carlo")


def build_parser():
    parser = argparse.ArgumentParser(prog="excursor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic price table")
    _common(p, needs_input=False)
    p.add_argument("--kind", choices=["white", "smoothed", "factor"], default="factor")
    p.add_argument("--n", type=int, default=6511, help="number of returns per market")
    p.add_argument("--count", type=int, default=47)
    p.add_argument("--width", type=float, default=None)
    p.add_argument("--groups", type=int, default=1)
    p.add_argument("--loading", type=float, default=0.5)

    p = sub.add_parser("density", help="empirical and theoretical one-point densities")
    _common(p)
    p.add_argument("--feature", default="pk,up")
    p.add_argument("--theta", default="-3:3:0.25")
    p.add_argument("--band", default="0.25", help="'cumulative' or a bin width")

    p = sub.add_parser("tpcf", help="feature pair correlation curves")
    _common(p)
    _pair_opts(p, "-1,0,1")
    p.add_argument("--pairs", default=None, help="'A:B,C' (C alone = auto)")

    p = sub.add_parser("psi", help="market x market Psi matrix")
    _common(p)
    _pair_opts(p, "0")
    p.add_argument("--tau", default="max", help="'max' or a fixed separation")

    p = sub.add_parser("ahc", help="Ward clustering of a Psi matrix (JSON from 'psi')")
    _common(p)

    p = sub.add_parser("partition", help="per-window lambda_max trace and Delta matrix")
    _common(p)
    _pair_opts(p, "0")
    p.add_argument("--tau", default="max")
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--save-windows", action="store_true")

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


def _read_config(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise CommandError(f"{path}: expected 'key = value', got {line!r}")
            values[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return values


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        conf = _read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, val in conf.items():
            if key not in known:
                raise CommandError(f"unknown config key {key!r}")
            action = known[key]
            if action.type is not None:
                val = action.type(val)
            elif isinstance(action, argparse._StoreTrueAction):
                val = val.lower() in ("1", "true", "yes", "on")
            defaults[key] = val
        sub.set_defaults(**defaults)
        for a in sub._actions:
            if a.dest in defaults:
                a.required = False
        args = parser.parse_args(argv)
    return args


def _params(args):
    skip = {"out", "config", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def run(args):
    os.makedirs(args.out, exist_ok=True)
    if getattr(args, "input", None):
        args.input = os.path.abspath(args.input)
    params = _params(args)
    inputs = []
    if getattr(args, "input", None):
        inputs.append({"path": os.path.abspath(args.input), "sha256": _sha256(args.input)})
    written, failed = COMMANDS[args.command](args)
    manifest = {
        "command": args.command,
        "parameters": params,
        "inputs": inputs,
        "seed": args.seed,
        "rng": f"{RNG_NAME} ({RNG_VERSION})",
        "version": __version__,
        DATA_FILES: {os.path.basename(p): _sha256(p) for p in written},
        "failed": failed,
    }
    _write_atomic(os.path.join(args.out, "manifest.json"),
                  json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return written, failed


def replay(manifest_path, out):
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    args = argparse.Namespace(command=manifest["command"], out=out, config=None,
                              **manifest["parameters"])
    for item in manifest["inputs"]:
        if _sha256(item["path"]) != item["sha256"]:
            raise CommandError(f"input {item['path']} changed since the manifest was written")
    return run(args)


def main(argv=None):
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        if args.command == "replay":
            written, failed = replay(args.manifest, args.out)
        else:
            written, failed = run(args)
    except (CommandError, ValueError, OSError) as exc:
        cmd = getattr(locals().get("args"), "command", "excursor")
        print(f"excursor {cmd}: error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    if failed:
        print(f"{len(failed)} item(s) failed:", file=sys.stderr)
        for item in failed:
            print(f"  {item}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
