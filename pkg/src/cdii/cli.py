"""Command-line entry point.

Commands wire phantoms -> forward data -> reconstruction -> evaluation with
a flat key=value configuration (file via --config, overridden by --key value
pairs).  Every key has a default matching the four-mode reference protocol;
unknown keys are rejected.  Exit codes: 0 success, 2 configuration error,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys

import numpy as np

from . import field as fd
from . import forward as fw
from . import network, optim, recon
from .errors import FormatError, NumericError
from .rng import Rng

DEFAULTS: dict[str, str] = {
    "phantom": "fourmode",      # fourmode | bump | shepplogan | constant:<c>
    "nx": "128",
    "ny": "128",
    "delta": "0.0",
    "seed.sample": "0",
    "seed.init": "1",
    "seed.noise": "2",
    "seed.denoise": "3",
    "n1": "10000",
    "n2": "4000",
    "gamma": "100.0",
    "zeta": "0.01",
    "depth": "9",
    "width": "10",
    "activation": "tanh",
    "lr": "8e-4",
    "epochs": "5000",
    "schedule": "",             # e.g. 0:8e-4,3000:1e-4
    "method": "nn",            # nn | baseline
    "denoise": "auto",         # auto | on | off
    "denoise.epochs": "4000",
    "denoise.lr": "3e-3",
    "train_on_denoised": "0",
    "eps_floor": "1e-6",
    "track_error": "0",
    "resample": "0",
    "partial": "",             # x0,x1,y0,y1
    "baseline.iters": "30",
    "baseline.stop": "fixed",  # fixed | oracle
    "baseline.sigma0": "1.0",
    "baseline.clamp": "1e-3,1e3",
    "out": "run",
    "data": "",
}


class ConfigError(ValueError):
    pass


def load_config(path: str | None, overrides: list[tuple[str, str]]) -> dict[str, str]:
    cfg = dict(DEFAULTS)

    def set_kv(key: str, value: str, where: str):
        if key not in cfg:
            raise ConfigError(f"{where}: unknown configuration key {key!r}")
        cfg[key] = value

    if path:
        try:
            with open(path) as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            set_kv(key.strip(), value.strip(), f"{path}: line {lineno}")
    for key, value in overrides:
        set_kv(key, value, "command line")
    return cfg


def _parse_float(cfg, key) -> float:
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number: {cfg[key]!r}") from exc


def _parse_int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not an integer: {cfg[key]!r}") from exc


def _parse_phantom(text: str) -> fd.PhantomKind:
    if text == "fourmode":
        return fd.FourMode()
    if text == "bump":
        return fd.DiscontinuousBump()
    if text == "shepplogan":
        return fd.SheppLogan()
    if text.startswith("constant:"):
        try:
            return fd.Constant(float(text.split(":", 1)[1]))
        except ValueError as exc:
            raise ConfigError(f"phantom: bad constant value in {text!r}") from exc
    raise ConfigError(f"phantom: unknown kind {text!r}")


def _parse_schedule(text: str) -> tuple[tuple[int, float], ...]:
    if not text:
        return ()
    pairs = []
    for part in text.split(","):
        if ":" not in part:
            raise ConfigError(f"schedule: expected epoch:lr, got {part!r}")
        e, _, r = part.partition(":")
        try:
            pairs.append((int(e), float(r)))
        except ValueError as exc:
            raise ConfigError(f"schedule: bad entry {part!r}") from exc
    return tuple(pairs)


def _parse_partial(text: str):
    if not text:
        return None
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"partial: bad rectangle {text!r}") from exc
    if len(parts) != 4:
        raise ConfigError("partial: rectangle needs x0,x1,y0,y1")
    return parts


def _parse_bool(cfg, key) -> bool:
    v = cfg[key]
    if v in ("0", "1"):
        return v == "1"
    raise ConfigError(f"{key}: expected 0 or 1, got {v!r}")


def _net_spec(cfg) -> network.MlpSpec:
    return network.default_spec(_parse_int(cfg, "depth"), _parse_int(cfg, "width"),
                                cfg["activation"])


def _resolved_lines(cfg: dict[str, str]) -> dict[str, str]:
    return dict(sorted(cfg.items()))


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: dict[str, str]) -> int:
    outdir = cfg["out"]
    os.makedirs(outdir, exist_ok=True)
    nx, ny = _parse_int(cfg, "nx"), _parse_int(cfg, "ny")
    sigma = fd.make_phantom(_parse_phantom(cfg["phantom"]), nx, ny)
    g = fw.DirichletData()
    u = fw.solve_conductivity_pde(sigma)
    a = fw.current_magnitude(sigma, u)
    a_noisy = fw.add_noise(a, fw.NoiseSpec(_parse_float(cfg, "delta"), _parse_int(cfg, "seed.noise")))
    fd.write_grid(sigma, os.path.join(outdir, "sigma_true.grid"))
    fd.write_grid(u, os.path.join(outdir, "u_true.grid"))
    fd.write_grid(a, os.path.join(outdir, "a_true.grid"))
    fd.write_grid(a_noisy, os.path.join(outdir, "a_noisy.grid"))
    with open(os.path.join(outdir, "run.txt"), "w") as fh:
        for key, value in _resolved_lines(cfg).items():
            fh.write(f"{key}={value}\n")
    print(f"wrote sigma_true/u_true/a_true/a_noisy grids to {outdir}")
    return 0


def _load_data(cfg):
    datadir = cfg["data"] or cfg["out"]
    path = os.path.join(datadir, "a_noisy.grid")
    if not os.path.exists(path):
        raise FileNotFoundError(f"data file not found: {path}")
    a_noisy = fd.read_grid(path)
    sigma_true = u_true = a_true = None
    for name in ("sigma_true", "u_true", "a_true"):
        p = os.path.join(datadir, f"{name}.grid")
        if os.path.exists(p):
            grid = fd.read_grid(p)
            if not grid.same_shape(a_noisy):
                raise FormatError(f"{p}: shape differs from a_noisy.grid")
            if name == "sigma_true":
                sigma_true = grid
            elif name == "u_true":
                u_true = grid
            else:
                a_true = grid
    return a_noisy, sigma_true, u_true, a_true


def _denoise_flag(cfg) -> bool:
    mode = cfg["denoise"]
    if mode == "auto":
        return _parse_float(cfg, "delta") > 0.0
    if mode in ("on", "off"):
        return mode == "on"
    raise ConfigError(f"denoise: expected auto/on/off, got {mode!r}")


def cmd_reconstruct(cfg: dict[str, str]) -> int:
    a_noisy, sigma_true, u_true, _ = _load_data(cfg)
    g = fw.DirichletData()
    partial = _parse_partial(cfg["partial"])
    method = cfg["method"]
    if method == "nn":
        adam = optim.AdamConfig(lr=_parse_float(cfg, "lr"), epochs=_parse_int(cfg, "epochs"),
                                schedule=_parse_schedule(cfg["schedule"]))
        ncfg = recon.NnConfig(
            net=_net_spec(cfg), n1=_parse_int(cfg, "n1"), n2=_parse_int(cfg, "n2"),
            gamma=_parse_float(cfg, "gamma"), zeta=_parse_float(cfg, "zeta"), adam=adam,
            seeds=recon.SeedSet(_parse_int(cfg, "seed.sample"), _parse_int(cfg, "seed.init"),
                                _parse_int(cfg, "seed.noise"), _parse_int(cfg, "seed.denoise")),
            denoise=_denoise_flag(cfg), denoise_epochs=_parse_int(cfg, "denoise.epochs"),
            denoise_lr=_parse_float(cfg, "denoise.lr"),
            train_on_denoised=_parse_bool(cfg, "train_on_denoised"),
            eps_floor=_parse_float(cfg, "eps_floor"), track_error=_parse_bool(cfg, "track_error"),
            resample=_parse_bool(cfg, "resample"))
        result = recon.reconstruct_nn(a_noisy, g, ncfg, subdomain=partial, sigma_true=sigma_true)
    elif method == "baseline":
        a_used = a_noisy
        if _denoise_flag(cfg):
            a_used = recon.denoise(a_noisy, network.default_spec(),
                                   _parse_int(cfg, "denoise.epochs"),
                                   _parse_int(cfg, "seed.denoise"), _parse_float(cfg, "denoise.lr"))
        nx, ny = a_noisy.nx, a_noisy.ny
        s0 = cfg["baseline.sigma0"]
        if s0.startswith("file:"):
            sigma0 = fd.read_grid(s0[len("file:"):])
        else:
            sigma0 = fd.GridField(nx, ny, np.full((ny, nx), _parse_float(cfg, "baseline.sigma0")))
        clamp = cfg["baseline.clamp"].split(",")
        if len(clamp) != 2:
            raise ConfigError("baseline.clamp: expected lo,hi")
        bcfg = recon.BaselineConfig(sigma0, _parse_int(cfg, "baseline.iters"),
                                    cfg["baseline.stop"], _parse_float(cfg, "eps_floor"),
                                    (float(clamp[0]), float(clamp[1])))
        result = recon.baseline_iterate(a_used, g, bcfg, sigma_true=sigma_true)
        result.denoised = a_used is not a_noisy
    else:
        raise ConfigError(f"method: expected nn or baseline, got {method!r}")
    if u_true is not None:
        result.errors["e_u"] = fd.relative_l2_error(result.u_hat, u_true)
    recon.write_run_dir(result, cfg["out"], config_lines=_resolved_lines(cfg))
    for key, value in result.errors.items():
        print(f"{key} = {value:.6g}")
    print(f"floored_frac = {result.floored_frac:.6g}")
    print(f"outputs in {cfg['out']}")
    return 0


def cmd_evaluate(args) -> int:
    est = fd.read_grid(args.estimate)
    truth = fd.read_grid(args.truth)
    mask = fd.read_mask(args.mask) if args.mask else None
    err = fd.relative_l2_error(est, truth, mask)
    print(f"e_l2 = {err:.17g}")
    out = args.csv or "eval.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimate", "truth", "mask", "e_l2"])
        writer.writerow([args.estimate, args.truth, args.mask or "", f"{err:.17g}"])
    return 0


def cmd_denoise(cfg: dict[str, str]) -> int:
    a_noisy, _, _, a_true = _load_data(cfg)
    a_hat = recon.denoise(a_noisy, network.default_spec(), _parse_int(cfg, "denoise.epochs"),
                          _parse_int(cfg, "seed.denoise"), _parse_float(cfg, "denoise.lr"))
    os.makedirs(cfg["out"], exist_ok=True)
    out = os.path.join(cfg["out"], "a_denoised.grid")
    fd.write_grid(a_hat, out)
    recon.write_pgm(a_hat, os.path.join(cfg["out"], "a_denoised.pgm"))
    if a_true is not None:
        print(f"e(noisy)    = {fd.relative_l2_error(a_noisy, a_true):.6g}")
        print(f"e(denoised) = {fd.relative_l2_error(a_hat, a_true):.6g}")
    print(f"wrote {out}")
    return 0


_SWEEP_AXES = ("n1", "n2", "gamma", "zeta", "delta", "depth", "width")


def cmd_sweep(args, cfg: dict[str, str]) -> int:
    axes: list[tuple[str, list[str]]] = []
    for spec in args.axis:
        key, _, values = spec.partition("=")
        if key not in _SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {_SWEEP_AXES}, got {key!r}")
        axes.append((key, values.split(",")))
    if not axes:
        raise ConfigError("sweep needs at least one --axis key=v1,v2,...")
    outdir = cfg["out"]
    os.makedirs(outdir, exist_ok=True)
    rows = []
    keys = [k for k, _ in axes]
    for combo in itertools.product(*(v for _, v in axes)):
        cell = dict(cfg)
        cell.update(dict(zip(keys, combo)))
        cell_name = "_".join(f"{k}{v}" for k, v in zip(keys, combo))
        cell["out"] = os.path.join(outdir, cell_name)
        try:
            nx, ny = _parse_int(cell, "nx"), _parse_int(cell, "ny")
            sigma = fd.make_phantom(_parse_phantom(cell["phantom"]), nx, ny)
            g = fw.DirichletData()
            u = fw.solve_conductivity_pde(sigma)
            a = fw.current_magnitude(sigma, u)
            os.makedirs(cell["out"], exist_ok=True)
            fd.write_grid(sigma, os.path.join(cell["out"], "sigma_true.grid"))
            fd.write_grid(u, os.path.join(cell["out"], "u_true.grid"))
            fd.write_grid(a, os.path.join(cell["out"], "a_true.grid"))
            a_noisy = fw.add_noise(a, fw.NoiseSpec(_parse_float(cell, "delta"),
                                                   _parse_int(cell, "seed.noise")))
            fd.write_grid(a_noisy, os.path.join(cell["out"], "a_noisy.grid"))
            cell["data"] = cell["out"]
            cmd_reconstruct(cell)
            with open(os.path.join(cell["out"], "run.txt")) as fh:
                run_lines = dict(line.strip().split("=", 1) for line in fh if "=" in line)
            rows.append(list(combo) + [run_lines.get("result.e_sigma", ""),
                                       run_lines.get("result.e_u", ""), ""])
        except Exception as exc:  # per-cell failures recorded, sweep continues
            rows.append(list(combo) + ["", "", f"{type(exc).__name__}: {exc}"])
    table = os.path.join(outdir, "table.csv")
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys + ["e_sigma", "e_u", "error"])
        writer.writerows(rows)
    print(f"wrote {table} ({len(rows)} cells)")
    return 0


def cmd_theorycheck(args) -> int:
    rng = Rng(args.seed)
    probes = network.probe_grid(21)
    sup_pass = lip_pass = layer_pass = 0
    for trial in range(args.trials):
        depth = 2 + int(rng.uniform(1)[0] * 8)  # layers in 2..9
        width = 5 + int(rng.uniform(1)[0] * 16)  # width in 5..20
        spec = network.default_spec(depth, width)
        theta = network.init_params(spec, seed=1000 + trial)
        _, _, ok_sup = network.check_gradient_sup_bound(spec, theta, probes)
        theta2 = theta + (rng.uniform(theta.size) - 0.5) * 0.2
        _, _, ok_lip = network.check_param_lipschitz(spec, theta, theta2, probes)
        ok_layers = all(m <= b for m, b in network.layer_gradient_sups(spec, theta, probes))
        sup_pass += ok_sup
        lip_pass += ok_lip
        layer_pass += ok_layers
    print(f"gradient sup-norm bound:   {sup_pass}/{args.trials} pass")
    print(f"parameter Lipschitz bound: {lip_pass}/{args.trials} pass")
    print(f"per-layer gradient bound:  {layer_pass}/{args.trials} pass")
    if min(sup_pass, lip_pass, layer_pass) < args.trials:
        return 4
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cdii", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "reconstruct", "denoise"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
    p = sub.add_parser("evaluate")
    p.add_argument("estimate")
    p.add_argument("truth")
    p.add_argument("--mask", default=None)
    p.add_argument("--csv", default=None)
    p = sub.add_parser("sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--axis", action="append", default=[])
    p = sub.add_parser("theorycheck")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    if argv is None:
        argv = sys.argv[1:]
    args, extra = parser.parse_known_args(argv)

    overrides = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            parser.error(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, _, value = key.partition("=")
            overrides.append((key, value))
            i += 1
        else:
            if i + 1 >= len(extra):
                parser.error(f"missing value for --{key}")
            overrides.append((key, extra[i + 1]))
            i += 2

    try:
        if args.command == "theorycheck":
            if overrides:
                raise ConfigError("theorycheck takes no configuration keys")
            return cmd_theorycheck(args)
        if args.command == "evaluate":
            if overrides:
                raise ConfigError("evaluate takes no configuration keys")
            return cmd_evaluate(args)
        cfg = load_config(getattr(args, "config", None), overrides)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg)
        if args.command == "denoise":
            return cmd_denoise(cfg)
        if args.command == "sweep":
            return cmd_sweep(args, cfg)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, FormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
