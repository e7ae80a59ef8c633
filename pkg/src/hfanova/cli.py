"""Command-line front end: ``hfanova {fit,anova,dist,test,simulate}``.

Every subcommand reads one run-config JSON (``--config``). Paths inside it
are resolved relative to the config file::

    {"model": "model.json",
     "data": "dataset.csv",                      # fit / anova / test
     "weights": {"mode": "ssr", "varrho": 1.5},  # or "identity"
     "test": "test.json",                        # file name or inline object
     "dist": {"components": ["sst", "ssr", "sse"], "points": 201,
              "x_max": null, "omega_max": null, "omega_points": 201},
     "simulate": {"N": 1},
     "seed": 0,
     "out": "results",
     "tolerances": {"tail_tol": 1e-6, "cdf_tol": 1e-6}}

Output files (column order fixed):

* fit: ``beta_hat.csv`` (k, beta_1..beta_p), ``estimability.json``
* anova: ``components.csv`` (k, sst_k, sse_k, ssr_k, E_sst_k, E_sse_k, E_ssr_k),
  ``anova_summary.json``
* dist: ``cdf_<c>.csv`` (x, cdf), ``cf_<c>.csv`` (omega, re_cf, im_cf),
  ``dist_summary.json``
* test: ``test_result.json``
* simulate: ``dataset.csv`` (k, y_1..y_n), or ``dataset_0000.csv``... when
  ``N > 1``, plus ``manifest.json``

On failure the exit code is nonzero and stderr carries one JSON object
``{"error": <class>, "module": <module>, "message": ...}``. Exit code 2
means bad input (config, schema, dimensions), 3 a numerical failure.
"""

from __future__ import annotations

import functools
import json
import sys
import warnings
from pathlib import Path

import click
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .anova import expected_components, sum_squares
from .distributions import CDF_TOL, cdf, cf, component_spec
from .errors import DimensionError, HfanovaError, ValidationError
from .estimation import DEFAULT_TAIL_TOL, gls_fit
from .io import (load_model, model_hash, read_block, read_json, test_spec_from_dict,
                 write_block, write_json, write_table)
from .simulation import sample_datasets
from .spectral import CoefficientBlock
from .testing import run_test
from .weights import WeightPlan, build_weights, identity_weights

INPUT_ERRORS = (ValidationError, DimensionError, click.ClickException, OSError, KeyError, TypeError)
ENV = "HFANOVA_"


class RunConfig:
    """Parsed run config plus command-line overrides."""

    def __init__(self, path, out=None, seed=None, kmax=None):
        self.path = Path(path)
        self.root = self.path.parent
        doc = read_json(self.path)
        if not isinstance(doc, dict):
            raise ValidationError("run config must be a JSON object")
        self.doc = doc
        if "model" not in doc:
            raise ValidationError("run config needs a 'model' entry")
        self.model_doc = read_json(self.resolve(doc["model"]))
        self.kmax = kmax
        self.model = load_model(self.resolve(doc["model"]), kmax)
        self.seed = seed if seed is not None else doc.get("seed", doc.get("simulate", {}).get("seed"))
        self.out = Path(out) if out is not None else self.resolve(doc.get("out", "hfanova_out"))
        tol = doc.get("tolerances", {})
        self.tail_tol = float(tol.get("tail_tol", DEFAULT_TAIL_TOL))
        self.cdf_tol = float(tol.get("cdf_tol", CDF_TOL))

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def section(self, name: str, default=None):
        value = self.doc.get(name, default)
        if isinstance(value, str) and name != "weights":
            return read_json(self.resolve(value))
        return value

    def data(self) -> CoefficientBlock:
        if "data" not in self.doc:
            raise ValidationError("run config needs a 'data' entry for this command")
        block = read_block(self.resolve(self.doc["data"]))
        K = self.model.K_max
        if block.K_max < K:
            raise DimensionError(f"data has {block.K_max} frequencies, model needs K_max={K}")
        if block.d != self.model.n:
            raise DimensionError(f"data has {block.d} components, model has n={self.model.n}")
        return CoefficientBlock(block.data[:K], self.model.basis)

    def weights(self):
        plan = self.doc.get("weights", {"mode": "ssr"})
        if plan == "identity":
            return identity_weights(self.model.lam)
        if not isinstance(plan, dict):
            raise ValidationError("'weights' must be an object or the string 'identity'")
        return build_weights(self.model.lam, WeightPlan.from_dict(plan), self.tail_tol)

    def output(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name


def _origin(exc: BaseException) -> str:
    """Innermost package module on the traceback, else the exception's own module."""
    origin = type(exc).__module__.rsplit(".", 1)[-1]
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith(__package__ + "."):
            origin = name.rsplit(".", 1)[-1]
        tb = tb.tb_next
    return origin


def _error_payload(exc: BaseException) -> dict:
    payload = {
        "error": type(exc).__name__,
        "module": _origin(exc),
        "message": exc.format_message() if isinstance(exc, click.ClickException) else str(exc),
    }
    for attr in ("k", "bound", "achieved"):
        val = getattr(exc, attr, None)
        if val is not None:
            payload[attr] = val
    return payload


def _common(fn):
    @click.option("--config", "config", required=True, envvar=ENV + "CONFIG",
                  type=click.Path(dir_okay=False), help="Run-config JSON.")
    @click.option("--out", envvar=ENV + "OUT", type=click.Path(file_okay=False), default=None,
                  help="Output directory (overrides the config).")
    @click.option("--seed", envvar=ENV + "SEED", type=click.IntRange(0, 2 ** 64 - 1), default=None,
                  help="Unsigned 64-bit seed (overrides the config).")
    @click.option("--kmax", envvar=ENV + "KMAX", type=click.IntRange(min=1), default=None,
                  help="Truncation level K_max (overrides the model file).")
    @click.option("--threads", envvar=ENV + "THREADS", type=click.IntRange(min=1), default=None,
                  help="Thread cap for the linear-algebra backend.")
    @functools.wraps(fn)
    def wrapper(config, out, seed, kmax, threads):
        run = RunConfig(config, out, seed, kmax)
        with threadpool_limits(limits=threads), warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fn(run)
        for w in caught:
            click.echo(f"warning: {w.message}", err=True)

    return wrapper


@click.group()
@click.version_option(__version__, prog_name="hfanova")
def cli():
    """Functional ANOVA in coefficient space."""


@cli.command()
@_common
def fit(run: RunConfig):
    """GLS estimate per frequency and the estimability check."""
    res = gls_fit(run.model, run.data(), run.tail_tol)
    write_block(run.output("beta_hat.csv"), res.beta_hat, prefix="beta")
    write_json(run.output("estimability.json"), {"K_max": run.model.K_max,
                                                 **res.estimability.to_dict()})


@cli.command()
@_common
def anova(run: RunConfig):
    """Transformed sums of squares and their expectations."""
    W = run.weights()
    vc = sum_squares(run.model, W, run.data())
    ex = expected_components(run.model, W)
    rows = np.column_stack([np.arange(1, run.model.K_max + 1), vc.per_k(), ex.per_k()])
    write_table(run.output("components.csv"),
                ["k", "sst_k", "sse_k", "ssr_k", "E_sst_k", "E_sse_k", "E_ssr_k"],
                ([int(r[0]), *r[1:]] for r in rows))
    write_json(run.output("anova_summary.json"), {
        "K_max": run.model.K_max,
        "observed": {"sst": vc.sst, "sse": vc.sse, "ssr": vc.ssr},
        "expected": {"sst": ex.E_sst, "sse": ex.E_sse, "ssr": ex.E_ssr},
        "tails": vc.tails,
        "expected_tails": ex.tails,
        "clamped_terms": vc.clamped,
        "weight_plan": W.plan.to_dict() if W.plan is not None else "identity",
        "weight_conditions": W.conditions.to_dict() if W.conditions is not None else None,
    })


@cli.command()
@_common
def dist(run: RunConfig):
    """CDF and characteristic-function grids of the components."""
    opts = run.section("dist", {}) or {}
    comps = opts.get("components", ["sst", "ssr", "sse"])
    W = run.weights()
    summary = {}
    for which in comps:
        spec = component_spec(run.model, W, which)
        m, sd = spec.mean(), float(np.sqrt(spec.variance()))
        x_max = opts.get("x_max") or (m + 8.0 * sd if spec.size else 1.0)
        x = np.linspace(float(opts.get("x_min", 0.0)), float(x_max), int(opts.get("points", 201)))
        om_max = opts.get("omega_max") or (10.0 / spec.max_weight if spec.size and spec.max_weight > 0 else 10.0)
        om = np.linspace(0.0, float(om_max), int(opts.get("omega_points", 201)))
        F = cdf(spec, x, tol=run.cdf_tol)
        phi = cf(spec, om)
        write_table(run.output(f"cdf_{which}.csv"), ["x", "cdf"], zip(x, F))
        write_table(run.output(f"cf_{which}.csv"), ["omega", "re_cf", "im_cf"],
                    zip(om, phi.real, phi.imag))
        summary[which] = spec.summary()
    write_json(run.output("dist_summary.json"), summary)


@cli.command("test")
@_common
def test_cmd(run: RunConfig):
    """Linear hypothesis test K beta = C at level alpha."""
    doc = run.section("test")
    if doc is None:
        raise ValidationError("run config needs a 'test' entry")
    spec = test_spec_from_dict(doc, run.model.basis, run.model.p)
    res = run_test(run.model, run.data(), spec)
    write_json(run.output("test_result.json"), res.to_dict())


@cli.command()
@_common
def simulate(run: RunConfig):
    """Draw datasets from the model with a fixed seed."""
    if run.seed is None:
        raise ValidationError("simulate needs a seed (--seed, HFANOVA_SEED or config 'seed')")
    N = int((run.section("simulate", {}) or {}).get("N", 1))
    if N < 1:
        raise ValidationError("simulate.N must be at least 1")
    Y = sample_datasets(run.model, int(run.seed), N)
    files = ["dataset.csv"] if N == 1 else [f"dataset_{i:04d}.csv" for i in range(N)]
    for name, block in zip(files, Y):
        write_block(run.output(name), CoefficientBlock(block, run.model.basis))
    write_json(run.output("manifest.json"), {
        "seed": int(run.seed),
        "N": N,
        "K_max": run.model.K_max,
        "model_hash": model_hash(run.model_doc),
        "kmax_override": run.kmax,
        "generator": "Philox, SeedSequence(seed, spawn_key=(k,)) per frequency",
        "files": files,
        "version": __version__,
    })


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="hfanova", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        sys.stderr.write(json.dumps({"error": "Abort", "module": "cli", "message": "aborted"}) + "\n")
        return 1
    except INPUT_ERRORS as exc:
        sys.stderr.write(json.dumps(_error_payload(exc)) + "\n")
        return 2
    except (HfanovaError, ArithmeticError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(json.dumps(_error_payload(exc)) + "\n")
        return 3
    except ValueError as exc:
        sys.stderr.write(json.dumps(_error_payload(exc)) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
