"""Command-line entry point: gen-data, train, sample, eval, selfcheck.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 I/O error.

CSV column orders:

    train loss CSV     step, cfm_term, kl_term, align_term, intra_term, inter_term, total
    sample summary     index, flux, half_light_radius, peaks, z_1..z_dZ   (traversals add grid)
    eval metrics       metric, mean, sd, repeats
    eval latent        u1..u_d, mu_1..mu_n
    eval latent corr   aux, mu_1..mu_dZ   (signed Pearson correlations)
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import checkpoint, container, halos, metrics, morphology, sampler, selfcheck
from . import config as cfgmod
from . import flow
from .rng import stream

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _sibling(path, suffix):
    return os.path.splitext(path)[0] + suffix


def _load_config(path):
    return cfgmod.load(path) if path else cfgmod.RunConfig()


# --- gen-data ----------------------------------------------------------------------

def cmd_gen_data(args):
    cfg = _load_config(args.config)
    d = cfg.data
    cat = halos.build_catalog(d.seed, d.n, d.side, d.halo)
    halos.write_catalog(cat, args.out)
    merger = cat.factors["merger"].mean()
    print(f"n={len(cat)} side={cat.side} "
          f"logM=[{cat.meta['u_min'][0]:.4f}, {cat.meta['u_max'][0]:.4f}] "
          f"c=[{cat.meta['u_min'][1]:.4f}, {cat.meta['u_max'][1]:.4f}] "
          f"merger_fraction={merger:.4f}")
    return EXIT_OK


# --- train -------------------------------------------------------------------------

_RESUME_FIXED = ("data", "model", "sample", "eval")


def _check_resume_compatible(ckpt_cfg, cfg):
    a, b = ckpt_cfg.to_dict(), cfg.to_dict()
    for section in _RESUME_FIXED:
        if a[section] != b[section]:
            raise UsageError(f"--resume: config section {section!r} differs from the checkpoint")
    ta = {k: v for k, v in a["train"].items() if k not in ("steps", "checkpoint_interval")}
    tb = {k: v for k, v in b["train"].items() if k not in ("steps", "checkpoint_interval")}
    if ta != tb:
        raise UsageError("--resume: train settings other than steps/checkpoint_interval differ")


def cmd_train(args):
    if args.resume:
        state, ckpt_cfg = checkpoint.load(args.resume)
        cfg = _load_config(args.config) if args.config else ckpt_cfg
        _check_resume_compatible(ckpt_cfg, cfg)
    else:
        cfg, state = _load_config(args.config), None
    catalog = halos.read_catalog(args.catalog)
    train_idx, _ = flow.split_indices(len(catalog), cfg.train.holdout, cfg.train.seed)
    train_cat = catalog.subset(train_idx)
    interval = cfg.train.checkpoint_interval

    def on_step(st):
        if interval and st.step % interval == 0 and st.step < cfg.train.steps:
            checkpoint.save(args.out, st, cfg)

    state = flow.train(train_cat, cfg.model, cfg.train, state=state, on_step=on_step)
    checkpoint.save(args.out, state, cfg)
    loss_csv = args.loss_csv or _sibling(args.out, "_loss.csv")
    _write_csv(loss_csv, flow.TRACE_COLUMNS,
               [[int(r[0]), *r[1:]] for r in state.trace_array()])
    last = state.trace_array()[-1] if state.trace else None
    msg = f"step={state.step} tau2={cfg.train.tau2_value():.6g}"
    if last is not None:
        msg += f" total={last[-1]:.6f}"
    print(msg)
    return EXIT_OK


# --- sample ------------------------------------------------------------------------

def _sample_request(args, cfg, d):
    if args.traverse is not None and (args.rec_mode or args.aux):
        raise UsageError("--traverse cannot be combined with --rec-mode or --aux")
    if args.grid is not None and args.traverse is None:
        raise UsageError("--grid requires --traverse")
    if args.from_prior and (args.traverse is not None or args.rec_mode or args.aux):
        raise UsageError("--from-prior cannot be combined with other sampling modes")
    if args.aux is not None and len(args.aux) != d:
        raise UsageError(f"--aux needs exactly d={d} values")
    if args.traverse is not None:
        if not 0 <= args.traverse < d:
            raise UsageError(f"--traverse dimension must be in [0, {d})")
        return "traverse"
    if args.aux is not None or args.rec_mode:
        return "controlled"
    return "prior" if args.from_prior else "encode"


def cmd_sample(args):
    state, cfg = checkpoint.load(args.checkpoint)
    scfg = cfg.sample
    K = args.K if args.K is not None else scfg.K
    seed = args.seed if args.seed is not None else scfg.seed
    solver = sampler.SolverSpec(args.method or scfg.method, args.n_ode or scfg.n_ode)
    d = cfg.model.d
    mode = _sample_request(args, cfg, d)
    catalog = halos.read_catalog(args.catalog)
    train_idx, _ = flow.split_indices(len(catalog), cfg.train.holdout, cfg.train.seed)
    train_cat = catalog.subset(train_idx)
    model = state.model
    request = {"mode": mode, "K": K, "seed": seed, "method": solver.method, "n_ode": solver.n_ode,
               "checkpoint_step": state.step}
    extra_cols, extra = [], None
    if mode == "encode":
        images, z, idx = sampler.sample(model, train_cat, K, solver, seed)
    elif mode == "prior":
        images, z, idx = sampler.sample_prior(model, train_cat, K, solver, seed,
                                              cfg.train.prior(d, cfg.model.d_Z))
    elif mode == "controlled":
        rec_mode = args.rec_mode or "center"
        mu = sampler.posterior_means(model, train_cat)
        z_aux = np.array(args.aux) if args.aux is not None else np.median(mu[:, :d], axis=0)
        images, z, idx = sampler.sample_controlled(model, train_cat, z_aux, rec_mode, K, solver,
                                                   seed, scfg.tail_quantile, mu=mu)
        request.update(rec_mode=rec_mode, aux=[float(a) for a in z_aux],
                       tail_quantile=scfg.tail_quantile)
    else:
        n_grid = args.grid if args.grid is not None else 8
        if n_grid < 1:
            raise UsageError("--grid must be >= 1")
        grid = np.linspace(0.0, 1.0, n_grid)
        mu = sampler.posterior_means(model, train_cat)
        z_rec = sampler.typical_rec(model, train_cat, mu)
        base = np.median(mu[:, :d], axis=0)
        images, z = sampler.traverse(model, args.traverse, grid, z_rec, base, solver, seed,
                                     train_cat.side)
        idx = np.arange(n_grid)
        extra_cols, extra = ["grid"], grid
        request.update(traverse=args.traverse, grid=[float(g) for g in grid])
    container.write(args.out, {"images": images, "z": z, "index": np.asarray(idx, dtype=np.float64)},
                    {"kind": "samples", "side": train_cat.side, "request": request})
    stats = morphology.summarize(halos.unscale_pixels(images, catalog.meta))
    header = ["index", "flux", "half_light_radius", "peaks"] + extra_cols + \
        [f"z_{k + 1}" for k in range(z.shape[1])]
    rows = []
    for i in range(images.shape[0]):
        row = [int(idx[i]), stats[i, 0], stats[i, 1], int(stats[i, 2])]
        if extra is not None:
            row.append(float(extra[i]))
        rows.append(row + list(z[i]))
    _write_csv(args.summary or _sibling(args.out, ".csv"), header, rows)
    print(f"mode={mode} images={images.shape[0]} mean_flux={stats[:, 0].mean():.6g} "
          f"mean_peaks={stats[:, 2].mean():.4f}")
    return EXIT_OK


# --- eval ------------------------------------------------------------------------------

def _read_samples(path):
    arrays, meta = container.read(path)
    if meta.get("kind") != "samples" or "images" not in arrays:
        raise container.HeaderError(f"{path}: not a sample dump")
    return arrays["images"]


def cmd_eval(args):
    if bool(args.samples) == bool(args.generate):
        raise UsageError("give exactly one of --samples or --generate")
    state, cfg = checkpoint.load(args.checkpoint)
    ecfg = cfg.eval
    catalog = halos.read_catalog(args.catalog)
    train_idx, hold_idx = flow.split_indices(len(catalog), cfg.train.holdout, cfg.train.seed)
    held = catalog.subset(hold_idx)
    if args.generate:
        images, _, _ = sampler.sample(state.model, catalog.subset(train_idx), cfg.sample.K,
                                      cfg.sample.solver, cfg.sample.seed)
    else:
        images = _read_samples(args.samples)
    X = images.reshape(images.shape[0], -1)
    if X.shape[1] != held.flat.shape[1]:
        raise UsageError(f"sample dimension {X.shape[1]} does not match catalog "
                         f"dimension {held.flat.shape[1]}")
    repeats = args.repeats or ecfg.repeats
    report = metrics.metric_suite(X, held.flat, repeats, ecfg.subsample, ecfg.seed, ecfg.reg)
    report.write_csv(args.out)
    if args.noise_baseline:
        N = stream(ecfg.seed, "noise-baseline").standard_normal(X.shape)
        metrics.metric_suite(N, held.flat, repeats, ecfg.subsample, ecfg.seed,
                             ecfg.reg).write_csv(args.noise_baseline)
    mu, _ = state.model.encode(held.flat)
    n_rep = min(ecfg.n_report, mu.shape[1])
    table, corr = metrics.latent_aux_report(mu, held.u, n_rep)
    latent = args.latent_out or _sibling(args.out, "_latent.csv")
    _write_csv(latent, metrics.latent_report_header(held.u.shape[1], n_rep), table)
    _write_csv(_sibling(latent, "_corr.csv"), ["aux"] + [f"mu_{k + 1}" for k in range(mu.shape[1])],
               [[f"u{j + 1}", *corr[j]] for j in range(corr.shape[0])])
    for name, m, s, r in report.rows():
        print(f"{name}: {m:.6g} +/- {s:.3g} ({r} repeats)")
    return EXIT_OK


def cmd_selfcheck(args):
    results = selfcheck.run_all()
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


# --- driver ------------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="dlcfm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-data", help="build a synthetic halo catalog")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train encoder and vector field")
    t.add_argument("--config")
    t.add_argument("--catalog", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--loss-csv")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="generate images from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--summary")
    s.add_argument("--aux", type=float, nargs="+")
    s.add_argument("--rec-mode", choices=("center", "tail"))
    s.add_argument("--traverse", type=int)
    s.add_argument("--grid", type=int)
    s.add_argument("--from-prior", action="store_true")
    s.add_argument("--K", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--method", choices=sampler.METHODS)
    s.add_argument("--n-ode", type=int)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="distances to the held-out split and latent report")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--catalog", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--samples")
    e.add_argument("--generate", action="store_true")
    e.add_argument("--repeats", type=int)
    e.add_argument("--latent-out")
    e.add_argument("--noise-baseline")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("selfcheck", help="run the built-in oracle checks")
    c.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, cfgmod.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, metrics.SinkhornConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, container.ContainerError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
