"""Command-line front end.

    qhalfline <deficiency|distribution|risk|povm-check|kraus-equiv> --config FILE [--key value]...

The config file holds ``key = value`` lines (an optional ``[run]`` header is
allowed). Values given on the command line win over the file, which wins over
the built-in defaults. ``QHALFLINE_OUTDIR`` overrides the output directory
unless ``--outdir`` is given explicitly.

Exit codes: 0 success, 2 configuration error, 3 inconclusive deficiency
classification, 4 a checked property failed.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InconclusiveClassification, QHalfLineError
from .grid import WHOLE_LINE, make_grid, nyquist_momentum_grid
from .measurement import (
    GAUSSIAN,
    HARD,
    OUTCOME_SIGN,
    KrausPovm,
    ModelParams,
    Window,
    kraus_family,
    odd_ground_state,
    run_distribution,
)
from .operators import STANDARD_SPECS, deficiency_indices
from .povm import (
    COMPLETENESS_TOL,
    ELEMENT_TOL,
    DeviationSpec,
    build_povm,
    check_invariants,
    covariance_defect,
    identity_kernel,
    ones_kernel,
    optimal_kernel,
    random_gram_kernel,
    random_state,
    risk,
)

log = logging.getLogger("qhalfline")

EXIT_OK, EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_PROPERTY = 0, 2, 3, 4
ENV_OUTDIR = "QHALFLINE_OUTDIR"
COMMANDS = ("deficiency", "distribution", "risk", "povm-check", "kraus-equiv")


def _floats(text: str) -> tuple[float, ...]:
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(t) for t in items)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


DEFAULTS: dict[str, tuple[Callable[[str], object], str]] = {
    "outdir": (str, "."),
    "seed": (int, "0"),
    "L": (float, "20"),
    "n": (_positive_int, "1024"),
    # model
    "m": (float, "1"),
    "omega": (float, "1"),
    "g": (float, "1"),
    "p_true": (float, "2"),
    "M_probe": (float, "1"),
    "potential": (_choice("harmonic", "quartic", "flat"), "harmonic"),
    "window": (_choice(GAUSSIAN, HARD), GAUSSIAN),
    "window_width": (float, "0"),
    # distribution
    "omegas": (_floats, "1"),
    "span": (float, "8"),
    "dp": (float, "0"),
    "error_tolerance": (float, "1e-2"),
    # deficiency
    "gammas": (_floats, "1"),
    "deficiency_length": (float, "40"),
    # risk
    "risk_n": (_positive_int, "1024"),
    "states": (_positive_int, "1"),
    "kernels": (_positive_int, "20"),
    "sigmas": (_floats, "0.5,1,2"),
    "fiber_dim": (_positive_int, "1"),
    # povm-check
    "check_n": (_positive_int, "256"),
    "kernel": (_choice("ones", "optimal", "random", "identity"), "ones"),
    "shifts": (_positive_int, "10"),
    # kraus-equiv
    "kraus_n": (_positive_int, "256"),
    "equivalence_tolerance": (float, "1e-10"),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def model(self) -> ModelParams:
        width = self["window_width"] or None
        return ModelParams(
            m=self["m"],
            omega=self["omega"],
            g=self["g"],
            p_true=self["p_true"],
            M_probe=self["M_probe"],
            potential=self["potential"],
            window=Window(self["window"], width),
        )


def load_config(path: str | None, overrides: dict[str, str], environ=os.environ) -> RunConfig:
    raw = {k: v for k, (_, v) in DEFAULTS.items()}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            raw.update(parser[section])
    if ENV_OUTDIR in environ and "outdir" not in overrides:
        raw["outdir"] = environ[ENV_OUTDIR]
    raw.update(overrides)
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
    values = {}
    for key, (conv, _) in DEFAULTS.items():
        try:
            values[key] = conv(str(raw[key]).strip())
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key!r}: {raw[key]!r} ({exc})") from exc
    cfg = RunConfig(values)
    try:
        cfg.model()
        make_grid("half-line", cfg["L"], cfg["n"])
    except QHalfLineError as exc:
        raise ConfigurationError(str(exc)) from exc
    return cfg


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows, footer=()) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        for key, value in footer:
            fh.write(f"# {key}={_fmt(value)}\n")
    log.info("wrote %s", path)
    return path


def cmd_deficiency(cfg: RunConfig, out: Path) -> int:
    rows = []
    for gamma in cfg["gammas"]:
        for op in STANDARD_SPECS:
            rep = deficiency_indices(op, gamma=gamma, length=cfg["deficiency_length"])
            rows.append((gamma, op.label, rep.n_plus, rep.n_minus, rep.classification, rep.extension_family or ""))
    write_csv(
        out / "deficiency.csv",
        ("gamma", "operator", "n_plus", "n_minus", "classification", "extension_family"),
        rows,
    )
    return EXIT_OK


def cmd_distribution(cfg: RunConfig, out: Path) -> int:
    base = cfg.model()
    summary, worst = [], 0.0
    for omega in cfg["omegas"]:
        params = replace(base, omega=omega)
        res = run_distribution(params, cfg["L"], cfg["n"], dp=cfg["dp"] or None, span=cfg["span"])
        err = res.abs_error
        worst = max(worst, res.max_error)
        write_csv(
            out / f"distribution_omega_{omega:g}.csv",
            ("p", "measured_density", "analytic_density", "abs_error"),
            zip(res.p, res.measured, res.analytic, err),
            footer=(("mean", res.mean), ("variance", res.variance), ("peak_low", res.peak_low), ("peak_high", res.peak_high)),
        )
        summary.append(
            (omega, res.dp, res.mean, res.variance, res.variance / (params.m * omega), res.peak_low, res.peak_high, res.max_error)
        )
    write_csv(
        out / "distribution_summary.csv",
        ("omega", "dp", "mean", "variance", "variance_over_m_omega", "peak_low", "peak_high", "max_abs_error"),
        summary,
    )
    if worst > cfg["error_tolerance"]:
        log.error("max abs error %.3g exceeds %.3g", worst, cfg["error_tolerance"])
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_risk(cfg: RunConfig, out: Path) -> int:
    rng = np.random.default_rng(cfg["seed"])
    grid = make_grid(WHOLE_LINE, cfg["L"], cfg["risk_n"])
    mgrid = nyquist_momentum_grid(grid)
    d = cfg["fiber_dim"]
    rows, ok = [], True
    for s in range(cfg["states"]):
        psi = random_state(grid, d, rng)
        povms = [("optimal", build_povm(optimal_kernel(psi), mgrid, grid))]
        povms += [(f"random_{k}", build_povm(random_gram_kernel(grid.n, d, rng), mgrid, grid)) for k in range(cfg["kernels"])]
        for sigma in cfg["sigmas"]:
            dev = DeviationSpec(sigma)
            risks = [risk(povm, psi, dev) for _, povm in povms]
            best = int(np.argmin(risks))
            ok &= best == 0 and all(r > risks[0] + 1e-10 for r in risks[1:])
            rows += [(s, sigma, kid, r, k == best) for k, ((kid, _), r) in enumerate(zip(povms, risks))]
    write_csv(out / "risk.csv", ("state_id", "sigma_w", "kernel_id", "risk", "is_optimal_min"), rows)
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_povm_check(cfg: RunConfig, out: Path) -> int:
    rng = np.random.default_rng(cfg["seed"])
    grid = make_grid(WHOLE_LINE, cfg["L"], cfg["check_n"])
    mgrid = nyquist_momentum_grid(grid)
    kind = cfg["kernel"]
    if kind == "ones":
        kernel = ones_kernel(grid.n)
    elif kind == "identity":
        kernel = identity_kernel(grid.n)
    elif kind == "random":
        kernel = random_gram_kernel(grid.n, cfg["fiber_dim"], rng)
    else:
        kernel = optimal_kernel(random_state(grid, cfg["fiber_dim"], rng))
    povm = build_povm(kernel, mgrid, grid)
    inv = check_invariants(povm, range(mgrid.count))
    cov = max(covariance_defect(povm, k * mgrid.dp) for k in range(1, cfg["shifts"] + 1))
    rows = [
        ("hermiticity", inv["hermiticity"], ELEMENT_TOL, inv["hermiticity"] <= ELEMENT_TOL),
        ("min_eigenvalue", inv["min_eigenvalue"], -ELEMENT_TOL, inv["min_eigenvalue"] >= -ELEMENT_TOL),
        ("completeness", povm.completeness_residual(), COMPLETENESS_TOL, povm.completeness_residual() <= COMPLETENESS_TOL),
        ("covariance", cov, ELEMENT_TOL, cov < ELEMENT_TOL),
    ]
    write_csv(out / "povm_check.csv", ("property", "value", "tolerance", "pass"), rows)
    return EXIT_OK if all(r[3] for r in rows) else EXIT_PROPERTY


def cmd_kraus_equiv(cfg: RunConfig, out: Path) -> int:
    params = cfg.model()
    half = make_grid("half-line", cfg["L"], cfg["kraus_n"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, psi = odd_ground_state(params, half)
        mgrid = nyquist_momentum_grid(psi.grid)
        kraus = KrausPovm(kraus_family(params, psi, mgrid, fiber_normalized=True))
        optimal = build_povm(optimal_kernel(psi), mgrid, psi.grid)
    rows, worst = [], 0.0
    for j, p in enumerate(mgrid.points):
        dev = float(np.max(np.abs(kraus.element(j) - optimal.element(j))))
        worst = max(worst, dev)
        rows.append((j, p / (OUTCOME_SIGN * params.g), p, dev))
    write_csv(
        out / "kraus_equiv.csv",
        ("outcome", "probe_momentum", "p", "max_deviation"),
        rows,
        footer=(("outcome_sign", OUTCOME_SIGN), ("max_deviation", worst)),
    )
    return EXIT_OK if worst < cfg["equivalence_tolerance"] else EXIT_PROPERTY


HANDLERS = {
    "deficiency": cmd_deficiency,
    "distribution": cmd_distribution,
    "risk": cmd_risk,
    "povm-check": cmd_povm_check,
    "kraus-equiv": cmd_kraus_equiv,
}


def _parse_overrides(extra: list[str]) -> dict[str, str]:
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigurationError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(extra):
            value = extra[i + 1]
            i += 2
        else:
            raise ConfigurationError(f"missing value for {tok}")
        out[key.replace("-", "_")] = value
    return out


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="qhalfline", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("-v", "--verbose", action="store_true")
    args, extra = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _parse_overrides(extra))
    except ConfigurationError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    try:
        return HANDLERS[args.command](cfg, Path(cfg["outdir"]))
    except InconclusiveClassification as exc:
        log.error("%s", exc)
        return EXIT_INCONCLUSIVE
    except QHalfLineError as exc:
        # invalid parameter combinations surface here, before any file is written
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
