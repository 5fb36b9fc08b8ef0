"""Command-line driver for the spectrum, convergence and lumping experiments.

Usage::

    iga-duallump <spectrum|converge-dynamics|converge-eigen|lumping-demo>
                 [--config FILE] [--model M] [--degree P] [--elements E[,E...]]
                 [--scheme S[,S...]] [--passes R] [--out DIR] [--dt X]

Values are resolved as built-in defaults < config file < command-line flags.
The config file holds one ``key = value`` per line; ``#`` starts a comment.
Each run writes CSV tables and ``manifest.json`` into the output directory.
The number of worker processes comes from ``IGA_DUALLUMP_WORKERS`` (default 1).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed inline assertion.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import benchmarks as bm
from .assembly import BoundarySpec, assemble_operators
from .dual_basis import approximate_inverse, dual_inverse
from .dynamics import FieldSampler
from .errors import ConfigurationError, NumericalError, StabilityError
from .export import write_dense_csv, write_json, write_sparsity_csv, write_table
from .geometry import affine_map
from .spectral import (
    convergence_rate,
    eigenvalue_error,
    fraction_within,
    mode_l2_error,
    normalized_spectrum,
    rigid_mode_count,
    solve_operator_pair,
    write_spectrum_csv,
)
from .spline_core import SplineSpace, make_open_knot_vector

log = logging.getLogger("iga_duallump")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSERT = 0, 2, 3, 4
WORKERS_ENV = "IGA_DUALLUMP_WORKERS"
COMMANDS = ("spectrum", "converge-dynamics", "converge-eigen", "lumping-demo")

# Approximate inverse for p=2 on three unit elements, in closed form.
REFERENCE_KNOTS = (0, 0, 0, 1, 2, 3, 3, 3)
REFERENCE_INVERSE = np.array([
    [11 / 2, -19 / 12, 2 / 9, 0, 0],
    [-19 / 12, 265 / 72, -7 / 6, 13 / 36, 0],
    [2 / 9, -7 / 6, 65 / 27, -7 / 6, 2 / 9],
    [0, 13 / 36, -7 / 6, 265 / 72, -19 / 12],
    [0, 0, 2 / 9, -19 / 12, 11 / 2],
])

DEFAULTS = {
    "spectrum": dict(model="beam", degree=5, elements=(500,), scheme=bm.SCHEMES),
    "converge-dynamics": dict(model="beam-plate", degree=3, elements=(8, 16, 32, 64), scheme=("petrov-lumped",)),
    "converge-eigen": dict(model="beam", degree=3, elements=(32, 64, 128, 256), scheme=("petrov-lumped",)),
    "lumping-demo": dict(model="beam", degree=2, elements=(25,), scheme=("petrov-lumped",)),
}
MODEL_ALIASES = {"beam-like-plate": "beam-plate", "strip": "beam-plate", "annular-plate": "annulus"}
KEYS = ("model", "degree", "elements", "scheme", "passes", "out", "dt", "mode", "normalization",
        "safety", "expect_rate_min", "expect_rate_max")


@dataclass
class RunConfig:
    experiment: str
    model: str
    degree: int
    elements: tuple
    scheme: tuple
    passes: int = 0
    out: str = "results"
    dt: float | None = None
    mode: int | None = None
    normalization: str | None = None
    safety: float = 0.9
    expect_rate_min: float | None = None
    expect_rate_max: float | None = None
    notes: list = field(default_factory=list)

    def validate(self) -> "RunConfig":
        exp = self.experiment
        self.model = MODEL_ALIASES.get(self.model, self.model)
        if exp == "converge-dynamics" and self.model == "beam":
            self.model = "beam-plate"
        allowed = bm.DYNAMICS_MODELS if exp == "converge-dynamics" else bm.EIGEN_MODELS
        if exp == "lumping-demo":
            allowed = ("beam", "bar")
        if self.model not in allowed:
            raise ConfigurationError(f"field 'model': {self.model!r} not valid for {exp}; use {', '.join(allowed)}")
        lo = 1 if self.model == "bar" else 2
        if not lo <= self.degree <= 5:
            raise ConfigurationError(f"field 'degree': {self.degree} outside [{lo}, 5] for model {self.model}")
        if not self.elements or any(n < 1 for n in self.elements):
            raise ConfigurationError("field 'elements': need positive element counts")
        if exp in ("converge-dynamics", "converge-eigen") and len(self.elements) < 3:
            raise ConfigurationError("field 'elements': convergence runs need at least 3 meshes")
        for s in self.scheme:
            bm.parse_scheme(s, self.passes if s.startswith("petrov") else 0)
        if self.passes < 0:
            raise ConfigurationError("field 'passes': must be >= 0")
        if self.passes and not any(s.startswith("petrov") for s in self.scheme):
            raise ConfigurationError("field 'passes': corrector passes need a petrov scheme")
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError("field 'dt': must be positive")
        if not 0 < self.safety <= 1:
            raise ConfigurationError("field 'safety': must lie in (0, 1]")
        if self.normalization not in (None, "eigenvalue", "frequency"):
            raise ConfigurationError("field 'normalization': use eigenvalue or frequency")
        if self.mode is not None and self.mode < 1:
            raise ConfigurationError("field 'mode': must be >= 1")
        return self


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` pairs; diagnostics name the line."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        if not value:
            raise ConfigurationError(f"{source}:{lineno}: empty value for {key!r}")
        try:
            out[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def _int_list(value: str) -> tuple:
    return tuple(int(v) for v in value.replace(" ", "").split(",") if v)


def _convert(key: str, value):
    if not isinstance(value, str):
        return value
    if key in ("degree", "passes", "mode"):
        return int(value)
    if key in ("dt", "safety", "expect_rate_min", "expect_rate_max"):
        return float(value)
    if key == "elements":
        return _int_list(value)
    if key == "scheme":
        return tuple(s.strip() for s in value.split(",") if s.strip())
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="iga-duallump",
        description="Spectra, convergence studies and lumping demos for dual-basis mass lumping.",
        epilog="Precedence: built-in defaults < --config file < command-line flags.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value file (# comments)")
    p.add_argument("--model")
    p.add_argument("--degree", type=int)
    p.add_argument("--elements", help="comma-separated element counts")
    p.add_argument("--scheme", help="comma-separated: " + ", ".join(bm.SCHEMES))
    p.add_argument("--passes", type=int, help="corrector passes for petrov schemes")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dt", type=float, help="time step override")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS[args.command])
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
        values.update(parse_config_text(text, args.config))
    for key in ("model", "degree", "elements", "scheme", "passes", "out", "dt"):
        v = getattr(args, key)
        if v is not None:
            try:
                values[key] = _convert(key, v)
            except ValueError as exc:
                raise ConfigurationError(f"flag --{key}: {exc}") from None
    return RunConfig(experiment=args.command, **values).validate()


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be >= 1")
    return n


def _map(fn, tasks):
    """Run tasks in input order, in a process pool if more than one worker."""
    n = min(worker_count(), len(tasks))
    if n <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str = ""


# ---------------------------------------------------------------- spectrum

def _spectrum_task(task):
    model, p, n, scheme, passes, norm, out = task
    prob = bm.EIGEN_PROBLEMS[model]()
    test, lump = bm.parse_scheme(scheme, passes if scheme.startswith("petrov") else 0)
    ops = prob.operators(p, n, test)
    ops = ops.lumped() if lump else ops
    res = solve_operator_pair(ops, imag_policy="real")
    ref = prob.reference(res.n_dof)
    suffix = f"_r{test.passes}" if test.is_petrov and test.passes else ""
    path = Path(out) / f"spectrum_{model}_p{p}_n{n}_{scheme}{suffix}.csv"
    write_spectrum_csv(path, res, ref, norm)
    ratios = normalized_spectrum(res, ref, norm)[:, 1]
    return dict(
        file=path.name, scheme=scheme, n_ele=n, n_dof=res.n_dof, n_complex=res.n_complex,
        rigid=rigid_mode_count(res) if ref.n_rigid else 0, expected_rigid=ref.n_rigid,
        within_1pct=fraction_within(ratios, 0.01), within_5pct=fraction_within(ratios, 0.05),
    )


def cmd_spectrum(cfg: RunConfig):
    norm = cfg.normalization or ("frequency" if cfg.model == "bar" else "eigenvalue")
    if cfg.model == "bar":
        for n in cfg.elements:
            cfg.notes.append(f"{n} elements of degree {cfg.degree} give {n + cfg.degree} basis functions")
    tasks = [(cfg.model, cfg.degree, n, s, cfg.passes, norm, cfg.out) for n in cfg.elements for s in cfg.scheme]
    results = _map(_spectrum_task, tasks)
    checks = [
        Assertion(f"rigid modes {r['file']}", r["rigid"] == r["expected_rigid"],
                  f"{r['rigid']} found, {r['expected_rigid']} expected")
        for r in results
    ]
    for r in results:
        if r["n_complex"]:
            cfg.notes.append(f"{r['file']}: {r['n_complex']} eigenvalues with non-negligible imaginary part, real parts kept")
    return [r["file"] for r in results], checks, {"spectra": results}


# ------------------------------------------------------- converge-dynamics

def _dynamics_task(task):
    model, p, n, scheme, passes, dt, safety = task
    prob = bm.DYNAMICS_PROBLEMS[model]()
    try:
        run = bm.run_dynamics_case(prob, p, n, scheme, passes, dt, safety)
        return dict(asdict(run), status="ok")
    except StabilityError as exc:
        return dict(n_ele=n, error=float("nan"), dt=exc.dt, dt_rule=float("nan"), dt_limit=float("nan"),
                    n_steps=0, status=f"unstable: {exc}")


def _rates(h, e):
    local = [float("nan")] + [float(np.log(e[k - 1] / e[k]) / np.log(h[k - 1] / h[k])) for k in range(1, len(e))]
    return local


def _fit(ns, errs):
    pairs = [(1.0 / n, e) for n, e in zip(ns, errs) if np.isfinite(e) and e > 0]
    return convergence_rate(pairs) if len(pairs) >= 3 else float("nan")


def _rate_checks(cfg: RunConfig, label: str, rate: float) -> list:
    checks = []
    if cfg.expect_rate_min is not None:
        checks.append(Assertion(f"{label} rate >= {cfg.expect_rate_min}", bool(rate >= cfg.expect_rate_min), f"{rate:.4f}"))
    if cfg.expect_rate_max is not None:
        checks.append(Assertion(f"{label} rate <= {cfg.expect_rate_max}", bool(rate <= cfg.expect_rate_max), f"{rate:.4f}"))
    return checks


def cmd_converge_dynamics(cfg: RunConfig):
    files, checks, summary = [], [], {}
    for scheme in cfg.scheme:
        tasks = [(cfg.model, cfg.degree, n, scheme, cfg.passes, cfg.dt, cfg.safety) for n in cfg.elements]
        runs = _map(_dynamics_task, tasks)
        errs = [r["error"] for r in runs]
        rate = _fit(cfg.elements, errs)
        local = _rates([1.0 / n for n in cfg.elements], errs)
        path = Path(cfg.out) / f"converge_dynamics_{cfg.model}_p{cfg.degree}_{scheme}.csv"
        rows = [(r["n_ele"], 1.0 / r["n_ele"], r["dt"], r["n_steps"], r["error"], lr, rate, r["status"])
                for r, lr in zip(runs, local)]
        write_table(path, ["n_ele", "h", "dt", "n_steps", "l2_error", "local_rate", "fitted_rate", "status"], rows)
        files.append(path.name)
        summary[scheme] = dict(rate=rate, runs=runs)
        checks += [Assertion(f"{scheme} n={r['n_ele']} stable", r["status"] == "ok", r["status"]) for r in runs]
        checks += _rate_checks(cfg, scheme, rate)
    return files, checks, summary


# ---------------------------------------------------------- converge-eigen

def _eigen_task(task):
    model, p, n, scheme, passes, mode = task
    prob = bm.EIGEN_PROBLEMS[model]()
    test, lump = bm.parse_scheme(scheme, passes if scheme.startswith("petrov") else 0)
    ops = prob.operators(p, n, test)
    base = ops
    ops = ops.lumped() if lump else ops
    res = solve_operator_pair(ops, imag_policy="real")
    ref = prob.reference(res.n_dof)
    idx = ref.n_rigid + mode - 1
    sampler = FieldSampler(base.trial, base.gmap, p + 3)
    return dict(n_ele=n, index=idx, eig_error=eigenvalue_error(res, ref, idx),
                mode_error=mode_l2_error(res, ref, idx, base, sampler))


def cmd_converge_eigen(cfg: RunConfig):
    mode = cfg.mode or (10 if cfg.model == "beam" else 1)
    cfg.notes.append(f"mode {mode} counts flexible modes only (rigid-body modes skipped)")
    files, checks, summary = [], [], {}
    for scheme in cfg.scheme:
        runs = _map(_eigen_task, [(cfg.model, cfg.degree, n, scheme, cfg.passes, mode) for n in cfg.elements])
        h = [1.0 / n for n in cfg.elements]
        ee = [r["eig_error"] for r in runs]
        me = [r["mode_error"] for r in runs]
        re_, rm = _fit(cfg.elements, ee), _fit(cfg.elements, me)
        path = Path(cfg.out) / f"converge_eigen_{cfg.model}_p{cfg.degree}_{scheme}_mode{mode}.csv"
        rows = [(n, hh, a, b, re_, rm) for n, hh, a, b in zip(cfg.elements, h, ee, me)]
        write_table(path, ["n_ele", "h", "eigenvalue_error", "mode_error", "eigenvalue_rate", "mode_rate"], rows)
        files.append(path.name)
        summary[scheme] = dict(eigenvalue_rate=re_, mode_rate=rm, runs=runs)
        checks += _rate_checks(cfg, f"{scheme} eigenvalue", re_)
    return files, checks, summary


# ------------------------------------------------------------ lumping-demo

def cmd_lumping_demo(cfg: RunConfig):
    out = Path(cfg.out)
    p, n = cfg.degree, cfg.elements[0]
    space = make_open_knot_vector(0.0, 1.0, n, p)
    files, checks, bandwidths = [], [], {}
    for r in range(4):
        inv = dual_inverse(space, r)
        bandwidths[r] = inv.bandwidth
        path = out / f"inverse_p{p}_n{n}_r{r}.csv"
        write_sparsity_csv(path, inv.csr)
        files.append(path.name)
        expected = min(p * (2 * r + 1), space.dim - 1)  # saturates on coarse meshes
        checks.append(Assertion(f"bandwidth r={r}", inv.bandwidth == expected,
                                f"measured {inv.bandwidth}, expected {expected}"))

    spec = bm.STEEL_BEAM if cfg.model == "beam" else bm.UNIT_BAR
    test, _ = bm.parse_scheme("petrov-consistent" if cfg.scheme[0].startswith("petrov") else "galerkin-consistent",
                              cfg.passes if cfg.scheme[0].startswith("petrov") else 0)
    ops = assemble_operators(space, test, affine_map(1.0), spec, BoundarySpec.uniform("pinned", 1))
    lumped = ops.lumped()
    for name, mat in (("mass_consistent", ops.M), ("mass_lumped", lumped.M),
                      ("mass_lumped_inverse", lumped.mass_inverse().explicit())):
        path = out / f"{name}_p{p}_n{n}.csv"
        write_sparsity_csv(path, mat)
        files.append(path.name)

    ref = approximate_inverse(SplineSpace(2, REFERENCE_KNOTS)).toarray()
    path = out / "reference_inverse_p2_three_elements.csv"
    write_dense_csv(path, ref)
    files.append(path.name)
    dev = float(np.abs(ref - REFERENCE_INVERSE).max())
    checks.append(Assertion("three-element p=2 inverse", dev <= 1e-12, f"max deviation {dev:.3e}"))
    blocks = lumped.mass_inverse().block_sizes
    return files, checks, {"bandwidths": bandwidths, "lumped_blocks": blocks}


HANDLERS = {
    "spectrum": cmd_spectrum,
    "converge-dynamics": cmd_converge_dynamics,
    "converge-eigen": cmd_converge_eigen,
    "lumping-demo": cmd_lumping_demo,
}


def _versions() -> dict:
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__, "package": pkg}


def run(cfg: RunConfig) -> int:
    """Execute one experiment and write its manifest; returns the exit code."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status, error = "ok", None
    files, checks, summary = [], [], {}
    try:
        files, checks, summary = HANDLERS[cfg.experiment](cfg)
    except ConfigurationError as exc:
        status, error = "config-error", str(exc)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        status, error = "numerical-failure", str(exc)
    missing = [f for f in files if not (out / f).exists()]
    if missing:
        checks.append(Assertion("listed files exist", False, ", ".join(missing)))
    manifest = {
        "experiment": cfg.experiment,
        "config": {k: v for k, v in asdict(cfg).items() if k != "notes"},
        "notes": cfg.notes,
        "versions": _versions(),
        "workers": worker_count(),
        "wall_time_s": time.perf_counter() - t0,
        "files": files,
        "assertions": [asdict(c) for c in checks],
        "status": status,
        "error": error,
        "summary": summary,
    }
    write_json(out / "manifest.json", manifest)
    for c in checks:
        log.info("%s %s %s", "PASS" if c.passed else "FAIL", c.name, c.detail)
    if status == "config-error":
        print(f"configuration error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    if status == "numerical-failure":
        print(f"numerical failure: {error}", file=sys.stderr)
        return EXIT_NUMERICAL
    if not all(c.passed for c in checks):
        failed = [c.name for c in checks if not c.passed]
        print(f"assertion failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        worker_count()
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
