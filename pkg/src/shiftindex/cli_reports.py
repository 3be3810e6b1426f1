"""Command line front end: ``shiftindex {psi,index,sweep,certify}``.

A run is described by one key-value config file (``key = value`` per
line, ``#`` comments, values are Python literals or bare strings).  The
accepted keys are listed in :data:`SCHEMA`; anything else is an error.
Results go to ``<out>/report.json`` (deterministic: no timings, sorted
keys) and ``<out>/timings.json``; sweeps also write ``<out>/sweeps/*.csv``.
The exit code is 0 iff every verdict passes.
"""
import argparse
import ast
import configparser
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from filelock import FileLock, Timeout

from . import chern_numeric as cn
from . import lambda_ring as lr
from . import torus_model as tm
from .crossed_symbol import PhaseSamples, check_elliptic, multiply

COMMANDS = ("psi", "index", "sweep", "certify")


def _int_list(v):
    if isinstance(v, int):
        return [v]
    if not isinstance(v, (list, tuple)) or not all(isinstance(x, int) for x in v):
        raise ValueError("expected an integer or a list of integers")
    return list(v)


# key -> (converter, default, commands using it, description)
SCHEMA: Dict[str, tuple] = {
    "seed": (int, 0, COMMANDS, "random seed (probes, random sample sets)"),
    "threads": (int, 1, COMMANDS, "FFT worker threads"),
    "d_max": (int, 8, ("psi",), "degree cutoff for the psi checks"),
    "dim_bounds": (_int_list, [3, 5], ("psi",), "dimension bounds for closed forms"),
    "expected_fixture": (str, "", ("psi",), "JSON file with expected psi term lists"),
    "test_map": (str, "degree", ("index", "sweep", "certify"),
                 "degree | scalar | constant"),
    "degree": (int, 1, ("index", "sweep", "certify"), "degree of the test map"),
    "N": (int, 2, ("index", "sweep", "certify"), "coefficient dimension"),
    "bump_width": (float, 2.5, ("index", "sweep"), "ball radius of the collapse map cross-check"),
    "radii": (_int_list, [8, 12, 16], ("index", "sweep"), "window radii for the analytic index"),
    "resolutions": (_int_list, [16, 32], ("index", "sweep"), "torus grid sizes M"),
    "trace_power": (int, 4, ("index", "sweep"), "trace power m"),
    "probe_spacing": (int, 4, ("index", "sweep"), "probe colouring period"),
    "symbol_torus_M": (int, 16, ("index",), "torus grid for the transverse-class integral"),
    "symbol_sphere_degree": (int, 71, ("index",), "sphere rule degree for that integral"),
    "certificate_M": (int, 16, ("index", "certify"), "torus grid of the ellipticity certificate"),
    "certificate_sphere_degree": (int, 7, ("index", "certify"), "sphere rule of the certificate"),
    "margin_samples": (int, 10000, ("index", "certify"), "sphere samples for the D1 margin"),
    "tol_analytic": (float, 0.1, ("index", "sweep"), "allowed analytic gap"),
    "tol_topological": (float, 1e-3, ("index", "sweep"), "allowed topological / oracle gap"),
    "tol_symbol_index": (float, 1e-2, ("index",), "allowed gap of the transverse-class integral"),
    "tol_residual": (float, 1e-10, ("index", "certify"), "allowed symbol-inverse residual"),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    values: Dict[str, Any] = field(default_factory=dict)
    source: str = ""

    def __getattr__(self, name):
        values = self.__dict__.get("values", {})
        if name in values:
            return values[name]
        raise AttributeError(name)

    def as_dict(self):
        return {"command": self.command, **{k: self.values[k] for k in sorted(self.values)}}


def _parse_value(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw.strip()


def parse_config(text: str, command: str, source: str = "<config>") -> RunConfig:
    """Parse and validate a config document for ``command``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#",), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text, source=source)
    except configparser.Error as exc:
        # shift reported line numbers back past the injected header
        msg = str(exc).replace("[line ", "[config line ")
        raise ConfigError(f"{source}: parse error: {msg}") from None
    lines = {}
    for i, line in enumerate(text.splitlines(), start=1):
        key = line.split("=", 1)[0].strip()
        if "=" in line and key and not key.startswith("#"):
            lines.setdefault(key, i)
    values = {k: v[1] for k, v in SCHEMA.items() if command in v[2]}
    for key, raw in parser.items("run"):
        where = f"{source}:{lines.get(key, '?')}: field {key!r}"
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown key")
        conv, _, cmds, _ = SCHEMA[key]
        if command not in cmds:
            raise ConfigError(f"{where}: not used by command {command!r}")
        try:
            val = conv(_parse_value(raw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        values[key] = val
    cfg = RunConfig(command=command, values=values, source=source)
    _validate(cfg, lines, source)
    return cfg


def _validate(cfg: RunConfig, lines, source):
    v = cfg.values

    def fail(key, msg):
        raise ConfigError(f"{source}:{lines.get(key, '?')}: field {key!r}: {msg}")

    if v.get("threads", 1) < 1:
        fail("threads", "must be >= 1")
    if cfg.command == "psi":
        if v["d_max"] < 0:
            fail("d_max", "must be >= 0")
        return
    if v["test_map"] not in ("degree", "scalar", "constant"):
        fail("test_map", "must be degree, scalar or constant")
    if v["test_map"] == "degree" and v["degree"] not in (-2, -1, 0, 1, 2):
        fail("degree", "band-limited test maps exist for degrees -2..2")
    if v["test_map"] == "degree" and v["degree"] != 0 and v["N"] < 2:
        fail("N", "nonzero degree needs N >= 2")
    if v["test_map"] == "scalar" and v["N"] != 1:
        fail("N", "the scalar test map has N = 1")
    if v["N"] < 1:
        fail("N", "must be positive")
    if cfg.command in ("index", "sweep"):
        if not v["radii"]:
            fail("radii", "empty sweep list")
        if not v["resolutions"]:
            fail("resolutions", "empty sweep list")
        if v["trace_power"] < 4:
            fail("trace_power", "must be >= 4")
        if min(v["radii"]) < v["trace_power"] + 2:
            fail("radii", f"radius below trace_power * bandwidth + 2 = {v['trace_power'] + 2}")
        if any(M % 2 or M < 8 for M in v["resolutions"]):
            fail("resolutions", "grid sizes must be even and >= 8")
        if v["probe_spacing"] < 2:
            fail("probe_spacing", "must be >= 2")
    if cfg.command in ("index", "certify"):
        if v["certificate_M"] < 2:
            fail("certificate_M", "must be >= 2")
        if v["margin_samples"] < 1:
            fail("margin_samples", "must be positive")
    if cfg.command == "index":
        if v["symbol_torus_M"] % 2 or v["symbol_torus_M"] < 8:
            fail("symbol_torus_M", "must be even and >= 8")


# ---------------------------------------------------------------------------
# reports


@dataclass
class RunReport:
    config: dict
    stages: Dict[str, dict] = field(default_factory=dict)
    verdicts: Dict[str, bool] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())

    def to_json(self) -> str:
        body = {"config": self.config, "stages": self.stages, "verdicts": self.verdicts,
                "passed": self.passed}
        return json.dumps(_plain(body), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        return cls(config=data["config"], stages=data["stages"], verdicts=data["verdicts"])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


class _Timer:
    def __init__(self, report: RunReport, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.name] = time.perf_counter() - self.t


# ---------------------------------------------------------------------------
# commands


def _psi_expected(cfg):
    expected = {3: lr.psi_closed_form(3).to_terms(), 5: lr.psi_closed_form(5).to_terms()}
    if cfg.expected_fixture:
        with open(cfg.expected_fixture) as fh:
            data = json.load(fh)
        expected = {int(k): v for k, v in data.items()}
    return expected


def _term_diff(got, want):
    gk = {json.dumps(t, sort_keys=True) for t in got}
    wk = {json.dumps(t, sort_keys=True) for t in want}
    return sorted(wk - gk), sorted(gk - wk)


def cmd_psi(cfg: RunConfig, out=sys.stdout) -> RunReport:
    """Exact psi checks: series, gamma form, closed forms, multiplicativity, ch psi = Td."""
    rep = RunReport(config=cfg.as_dict())
    d = cfg.d_max
    with _Timer(rep, "psi_series"):
        ser = lr.psi_series(max(d, 0))
        closed = all(ser[k] == lr.Fraction((-1) ** (k + 1), k * (k + 1)) for k in range(1, d + 1))
    rep.stages["psi_series"] = {"coefficients": [str(c) for c in ser.coeffs]}
    rep.verdicts["psi_series_closed_form"] = closed
    with _Timer(rep, "psi_in_gamma"):
        pg = lr.psi_in_gamma(d)
    rep.stages["psi_in_gamma"] = {"expansion": str(pg)}
    reference = lr.psi_gamma_reference()
    ok_gamma = all(pg.degree_part(w) == reference.degree_part(w) for w in range(min(d, 3) + 1))
    rep.verdicts["psi_in_gamma_low_degree"] = ok_gamma
    expected = _psi_expected(cfg)
    closed_ok = True
    closed_stage = {}
    for D in cfg.dim_bounds:
        with _Timer(rep, f"psi_in_exterior_{D}"):
            terms = lr.psi_in_exterior(D).to_terms()
        closed_stage[str(D)] = {"expression": str(lr.lambda_from_terms(terms)), "terms": terms}
        if D in expected:
            missing, extra = _term_diff(terms, expected[D])
            if missing or extra:
                closed_ok = False
                print(f"psi_in_exterior({D}) differs from the expected terms", file=out)
                for t in missing:
                    print(f"  - expected {t}", file=out)
                for t in extra:
                    print(f"  + computed {t}", file=out)
    rep.stages["psi_in_exterior"] = closed_stage
    rep.verdicts["psi_closed_forms"] = closed_ok
    with _Timer(rep, "multiplicativity"):
        mult = lr.verify_psi_multiplicative(min(d, 8))
    rep.stages["multiplicativity"] = {"d_max": mult.d_max, "multiplicative": mult.multiplicative,
                                      "stable": mult.stable}
    rep.verdicts["psi_multiplicative_and_stable"] = mult.ok
    with _Timer(rep, "chern_equals_todd"):
        diff = lr.chern_of(lr.psi_in_exterior(2 * d), d) - lr.todd_symmetric(d)
    rep.stages["chern_equals_todd"] = {"d_max": d, "difference_terms": len(diff.terms)}
    rep.verdicts["chern_psi_equals_todd"] = diff.is_zero()
    for D, st in closed_stage.items():
        print(f"psi(E) for dim <= {D}: {st['expression']}", file=out)
    return rep


def _test_map(cfg):
    if cfg.test_map == "degree":
        return tm.degree_test_map(cfg.degree, cfg.N), cfg.degree
    if cfg.test_map == "scalar":
        return tm.scalar_test_map(), 0
    return tm.MultiplierF.constant(np.eye(cfg.N)), 0


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic, nearly uniform points on S^2."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + 5 ** 0.5) * i
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _certify(cfg, f, rep):
    m = tm.d1_margin(fibonacci_sphere(cfg.margin_samples))
    rep.stages["d1_margin"] = {"margin": m.margin, "min_singular_value": m.min_singular_value,
                               "samples": m.sample_count}
    rep.verdicts["d1_margin_positive"] = m.margin > 0
    sy = tm.example_symbols(f)
    sphere = cn.SphereQuadrature.lebedev(cfg.certificate_sphere_degree)
    samples = PhaseSamples.product(cfg.certificate_M, sphere.nodes)
    cert = check_elliptic(sy["D"], sy["B"], tm.cat_shift(), samples)
    rep.stages["ellipticity"] = {"residual": cert.residual,
                                 "min_singular_value": cert.min_singular_value,
                                 "sample_count": cert.sample_count, "grid": samples.label}
    rep.verdicts["symbol_inverse_residual"] = cert.residual < cfg.tol_residual
    return sy


def cmd_certify(cfg: RunConfig, out=sys.stdout) -> RunReport:
    rep = RunReport(config=cfg.as_dict())
    f, _ = _test_map(cfg)
    with _Timer(rep, "certify"):
        _certify(cfg, f, rep)
    print(f"residual {rep.stages['ellipticity']['residual']:.3e}, "
          f"D1 margin {rep.stages['d1_margin']['margin']:.6f}", file=out)
    return rep


def _oracle_applicable(f):
    return f.N == 2


def cmd_index(cfg: RunConfig, out=sys.stdout) -> RunReport:
    """Three independent index estimates for one test map."""
    rep = RunReport(config=cfg.as_dict())
    f, declared = _test_map(cfg)
    with _Timer(rep, "certify"):
        sy = _certify(cfg, f, rep)
    with _Timer(rep, "analytic"):
        an = tm.analytic_index(f, cfg.radii, cfg.trace_power, cfg.probe_spacing, seed=cfg.seed,
                               workers=cfg.threads)
    rep.stages["analytic_index"] = {
        "value": an.value, "per_radius": an.per_radius, "tail": an.tail,
        "imag_residual": an.imag_residual, "nearest_integer": an.nearest_integer, "gap": an.gap,
        "window_too_small": an.window_too_small, "diagnostics": an.diagnostics}
    topo, orac = {}, {}
    with _Timer(rep, "topological"):
        for M in cfg.resolutions:
            grid = cn.TorusGrid(M)
            topo[M] = cn.topological_index_f(f, grid)
            if _oracle_applicable(f):
                orac[M] = cn.degree_oracle(tm.su2_normalize(f), grid)
    Mtop = max(cfg.resolutions)
    rep.stages["topological_index"] = {str(M): e.as_dict() for M, e in topo.items()}
    rep.stages["degree_oracle"] = ({str(M): e.as_dict() for M, e in orac.items()}
                                   if orac else {"applicable": False})
    with _Timer(rep, "transverse_class"):
        tg = cn.TorusGrid(cfg.symbol_torus_M)
        sq = cn.SphereQuadrature.lebedev(cfg.symbol_sphere_degree)
        # sigma = sigma(D0) sigma(D1), the factorized form of the example symbol
        g = tm.cat_shift()
        sigma = multiply(sy["D0"], sy["D1"], g)
        sigma_inv = multiply(sy["D1_inv"], sy["D0_inv"], g)
        ni = cn.nice_index(sigma, tg, sq, sigma_inv)
        ni1 = cn.nice_index(sy["D1"], tg, sq, sy["D1_inv"])
    rep.stages["transverse_class"] = {"sigma": ni.as_dict(), "sigma1": ni1.as_dict()}
    report = cn.IndexReport.build(an.value, topo[Mtop].value,
                                  {"radii": cfg.radii, "M": Mtop, "declared_degree": declared})
    rep.stages["index_report"] = report.as_dict()
    target = topo[Mtop].nearest_integer
    rep.verdicts["analytic_rounds_to_common_integer"] = (an.nearest_integer == target
                                                        and an.gap < cfg.tol_analytic)
    rep.verdicts["topological_within_tolerance"] = topo[Mtop].gap < cfg.tol_topological
    if orac:
        rep.verdicts["degree_oracle_agrees"] = (orac[Mtop].nearest_integer == target
                                                and orac[Mtop].gap < cfg.tol_topological)
    rep.verdicts["declared_degree"] = target == declared
    rep.verdicts["transverse_class_agrees"] = (ni.nearest_integer == target
                                               and ni.gap < cfg.tol_symbol_index)
    rep.verdicts["transverse_class_sigma1_zero"] = abs(ni1.value) < 1e-6
    print(f"analytic {an.value:+.6f}  topological {topo[Mtop].value:+.6f}  "
          + (f"oracle {orac[Mtop].value:+.6f}  " if orac else "")
          + f"transverse {ni.value:+.4f}", file=out)
    return rep


def cmd_sweep(cfg: RunConfig, out_dir: Optional[str] = None, out=sys.stdout) -> RunReport:
    """Convergence tables: analytic estimate vs R and topological vs M."""
    rep = RunReport(config=cfg.as_dict())
    f, declared = _test_map(cfg)
    with _Timer(rep, "analytic"):
        an = tm.analytic_index(f, cfg.radii, cfg.trace_power, cfg.probe_spacing, seed=cfg.seed,
                               workers=cfg.threads)
    rows_r = [{"R": r, "estimate": an.per_radius[r], "gap": abs(an.per_radius[r] - declared)}
              for r in sorted(an.per_radius)]
    rows_m = []
    with _Timer(rep, "topological"):
        for M in cfg.resolutions:
            e = cn.topological_index_f(f, cn.TorusGrid(M))
            rows_m.append({"M": M, "estimate": e.value, "gap": abs(e.value - declared)})
    rep.stages["radius_sweep"] = {"rows": rows_r, "extrapolated": an.value}
    rep.stages["resolution_sweep"] = {"rows": rows_m}
    rep.verdicts["analytic_extrapolated"] = abs(an.value - declared) < cfg.tol_analytic
    rep.verdicts["topological_finest"] = rows_m[-1]["gap"] < cfg.tol_topological
    if out_dir is not None:
        sdir = os.path.join(out_dir, "sweeps")
        os.makedirs(sdir, exist_ok=True)
        _write_csv(os.path.join(sdir, "radius.csv"), ["R", "estimate", "gap"], rows_r)
        _write_csv(os.path.join(sdir, "resolution.csv"), ["M", "estimate", "gap"], rows_m)
    for row in rows_r:
        print(f"R={row['R']:3d}  {row['estimate']:+.6f}", file=out)
    for row in rows_m:
        print(f"M={row['M']:3d}  {row['estimate']:+.9f}", file=out)
    return rep


def _write_csv(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=header)
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(float(r[k])) if isinstance(r[k], float) else r[k] for k in header})
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    ap = argparse.ArgumentParser(prog="shiftindex", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH", help="key = value config file")
    ap.add_argument("--out", metavar="DIR", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    return ap


def run(argv: Optional[List[str]] = None, out=sys.stdout) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    source = "<defaults>"
    try:
        if args.config:
            source = args.config
            with open(args.config) as fh:
                text = fh.read()
        cfg = parse_config(text, args.command, source)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.values["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        cfg.values["threads"] = args.threads
    os.makedirs(args.out, exist_ok=True)
    lock = FileLock(os.path.join(args.out, ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        print(f"error: output directory {args.out} is in use by another run", file=sys.stderr)
        return 3
    try:
        t0 = time.perf_counter()
        if cfg.command == "psi":
            rep = cmd_psi(cfg, out)
        elif cfg.command == "index":
            rep = cmd_index(cfg, out)
        elif cfg.command == "sweep":
            rep = cmd_sweep(cfg, args.out, out)
        else:
            rep = cmd_certify(cfg, out)
        rep.timings["total"] = time.perf_counter() - t0
        with open(os.path.join(args.out, "report.json"), "w") as fh:
            fh.write(rep.to_json())
        with open(os.path.join(args.out, "timings.json"), "w") as fh:
            json.dump(rep.timings, fh, indent=2, sort_keys=True)
    finally:
        lock.release()
    for name, ok in sorted(rep.verdicts.items()):
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=out)
    return 0 if rep.passed else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
