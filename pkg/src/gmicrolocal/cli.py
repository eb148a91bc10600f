"""Scenario runner: one subcommand per harness, deterministic output bundles.

Usage: python -m gmicrolocal KIND [--scenario FILE] [--out DIR] [--grid G] ...
Exit status: 0 all pass flags true, 1 some check failed, 2 invalid input or error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .calculus import (expand_adjoint, expand_compose, expand_transpose, parametrix)
from .config import DEFAULT
from .fixtures import (FIXTURES, MOLLIFIER_SCALE, NET_CATALOG, SYMBOL_LABELS, build_fixture,
                       build_symbol, fixture_catalog)
from .harness import CRITERIA, run_criterion
from .hyperbolic import (CURVE_HEADER, CauchyProblem, ConormalPresent, HamiltonianField,
                         bicharacteristic_lift, flow_batch, spacetime_transport, solve_cauchy,
                         verify_propagation, wf_restrict_predict)
from .io import dumps, expansion_to_json, fmt_float, mlgf_bytes
from .nets import EpsilonGrid, classify_scale, sample_net
from .quantize import (GridSpec, ResolutionWarning, kernel_certificate, quantize_kn,
                       split_proper_smoothing)
from .symbols import (ConeGrid, SamplingBox, build_proper_cutoff, estimate_order,
                      microellipticity_report, microsupport_estimate)
from .wavefront import (CellDecomposition, WFConfig, WF_HEADER, _fmt_keys, ginf_verdict,
                        singsupp_estimate, verify_microlocality, verify_noncharacteristic,
                        wavefront_estimate)

KINDS = ["classify", "symbol-order", "ellipticity", "microsupport", "compose", "adjoint",
         "transpose", "parametrix", "apply", "kernel", "wavefront", "singsupp", "ginf",
         "microlocality", "noncharacteristic", "flow", "propagate", "restrict", "verify-all"]

WORKERS_ENV = "GMICROLOCAL_WORKERS"


class ValidationError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass
class ScenarioSpec:
    kind: str
    inputs: Dict = field(default_factory=dict)
    config: Dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "out"

    def as_dict(self):
        return {"kind": self.kind, "inputs": self.inputs, "config": self.config,
                "seed": self.seed, "out_dir": self.out_dir}


def _is_pow2(v):
    return isinstance(v, int) and v > 0 and v & (v - 1) == 0


def validate(spec: ScenarioSpec) -> ScenarioSpec:
    if spec.kind not in KINDS:
        raise ValidationError("kind", f"unknown kind {spec.kind!r}")
    c = spec.config
    if "grid" in c and c["grid"] is not None:
        if not _is_pow2(c["grid"]) or not 64 <= c["grid"] <= 1024:
            raise ValidationError("config.grid", "must be a power of two in [64, 1024]")
    if c.get("cells") is not None and (not isinstance(c["cells"], int) or c["cells"] < 1):
        raise ValidationError("config.cells", "must be a positive integer")
    if c.get("sectors") is not None and (not isinstance(c["sectors"], int) or c["sectors"] < 4):
        raise ValidationError("config.sectors", "must be an integer >= 4")
    if c.get("eps") is not None:
        try:
            EpsilonGrid.parse(str(c["eps"]))
        except Exception as e:
            raise ValidationError("config.eps", f"expected 'a:b' with at least 6 levels ({e})")
    if c.get("max_l") is not None and (not isinstance(c["max_l"], int) or c["max_l"] < 3):
        raise ValidationError("config.max_l", "must be an integer >= 3")
    if c.get("trunc") is not None and (not isinstance(c["trunc"], int) or not 1 <= c["trunc"] <= 12):
        raise ValidationError("config.trunc", "must be an integer in [1, 12]")
    if not isinstance(spec.seed, int):
        raise ValidationError("seed", "must be an integer")
    inp = spec.inputs
    for key in ("symbol", "symbol_b"):
        if inp.get(key) is not None and inp[key] not in SYMBOL_LABELS:
            raise ValidationError(f"inputs.{key}", f"unknown symbol {inp[key]!r}")
    if inp.get("fixture") is not None and inp["fixture"] not in FIXTURES:
        raise ValidationError("inputs.fixture", f"unknown fixture {inp['fixture']!r}")
    for i, lab in enumerate(inp.get("nets") or []):
        if lab not in {c.label for c in NET_CATALOG}:
            raise ValidationError(f"inputs.nets[{i}]", f"unknown net {lab!r}")
    if inp.get("times") is not None:
        if not all(isinstance(t, (int, float)) and math.isfinite(t) for t in inp["times"]):
            raise ValidationError("inputs.times", "must be finite numbers")
    return spec


# ----------------------------------------------------------------------------
# bundle

class Bundle:
    def __init__(self, out: Path):
        self.out = out
        self.files: Dict[str, bytes] = {}

    def text(self, name, s: str):
        self.files[name] = s.encode()

    def json(self, name, obj):
        self.text(name, dumps(obj) + "\n")

    def csv(self, name, header, rows):
        lines = [",".join(header)]
        for r in rows:
            if isinstance(r, dict):
                r = [r.get(h, "") for h in header]
            lines.append(",".join(fmt_float(v) if isinstance(v, float) else str(v) for v in r))
        self.text(name, "\n".join(lines) + "\n")

    def raw(self, name, b: bytes):
        self.files[name] = b

    def write(self):
        self.out.mkdir(parents=True, exist_ok=True)
        for name, data in sorted(self.files.items()):
            p = self.out / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(data)


def _grid(spec, default="1:8"):
    return EpsilonGrid.parse(str(spec.config.get("eps") or default))


def _symbol(spec, key="symbol", default="bracket"):
    return build_symbol(spec.inputs.get(key) or default)


def _fixture(spec, default="delta1d"):
    name = spec.inputs.get("fixture") or default
    n = FIXTURES[name].n or 1
    G = spec.config.get("grid") or (256 if n == 1 else 128)
    return build_fixture(name, GridSpec(n, G), _grid(spec))


def _cells_cones(spec, u):
    cells = CellDecomposition(u.spec, spec.config.get("cells"))
    cones = ConeGrid(u.spec.n, spec.config.get("sectors") or 16)
    return cells, cones


def _wfconfig(spec):
    return WFConfig(L=spec.config.get("max_l"))


def _box(n):
    return SamplingBox([math.pi] * n, [math.pi] * n, 8)


# ----------------------------------------------------------------------------
# scenario kinds: each returns a dict of named pass flags

def k_classify(spec, b: Bundle):
    grid = _grid(spec, "1:12")
    labels = spec.inputs.get("nets") or [c.label for c in NET_CATALOG]
    cases = {c.label: c for c in NET_CATALOG}
    rows, flags = [], {}
    for lab in labels:
        cls = classify_scale(sample_net(cases[lab].fn, grid))
        flags[lab] = cls.tag == cases[lab].tag
        rows.append([lab, cases[lab].tag, cls.tag, float(cls.fit.slope)])
    b.csv("classes.csv", ["label", "expected", "tag", "slope"], rows)
    return flags


def k_symbol_order(spec, b):
    a = _symbol(spec)
    m = estimate_order(a, _box(a.n), _grid(spec))
    b.json("order.json", {"symbol": a.label, "declared": a.order, "estimated": m})
    return {"order_within_declared": m <= a.order + DEFAULT.order_tol}


def k_ellipticity(spec, b):
    a = _symbol(spec)
    cones = ConeGrid(a.n, spec.config.get("sectors") or (16 if a.n == 2 else 2))
    rep = microellipticity_report(a, [_box(a.n)], cones, _grid(spec))
    b.csv("ellipticity.csv", ["box_id", "sector_id", "verdict", "s_slope", "r_slope"], rep.rows())
    return {"computed": True}


def k_microsupport(spec, b):
    a = _symbol(spec, default="cone_e2")
    cones = ConeGrid(a.n, spec.config.get("sectors") or (16 if a.n == 2 else 2))
    est = microsupport_estimate(a, [_box(a.n)], cones, _grid(spec))
    b.csv("microsupport.csv", ["box_id", "sector_id", "verdict", "s_slope", "r_slope"], est.rows())
    return {"computed": True}


def k_compose(spec, b):
    a, c = _symbol(spec, default="xi"), _symbol(spec, "symbol_b", "x")
    ex = expand_compose(a, c, spec.config.get("trunc") or 4)
    b.json("expansion.json", expansion_to_json(ex))
    return {"computed": True}


def k_adjoint(spec, b):
    ex = expand_adjoint(_symbol(spec, default="x_xi"), spec.config.get("trunc") or 4)
    b.json("expansion.json", expansion_to_json(ex))
    return {"computed": True}


def k_transpose(spec, b):
    ex = expand_transpose(_symbol(spec, default="x_xi"), spec.config.get("trunc") or 4)
    b.json("expansion.json", expansion_to_json(ex))
    return {"computed": True}


def k_parametrix(spec, b):
    a = _symbol(spec, default="one_plus_xi2")
    r = spec.config.get("trunc") or 4
    p = parametrix(a, r, grid=_grid(spec))
    b.json("parametrix.json", {"expansion": expansion_to_json(p.expansion),
                               "truncated": p.truncated_symbol.to_dict(),
                               "excision_radius": p.excision_radius,
                               "residual_order": p.residual_order_estimate})
    return {"residual_order": p.residual_order_estimate <= -a.order - r + DEFAULT.residual_order_tol}


def k_apply(spec, b):
    u = _fixture(spec)
    a = _symbol(spec, default="bracket" if u.spec.n == 1 else "bracket2")
    v = quantize_kn(a, u)
    b.raw("input.mlgf", mlgf_bytes(u))
    b.raw("output.mlgf", mlgf_bytes(v))
    return {"finite": bool(np.all(np.isfinite(v.data)))}


def k_kernel(spec, b):
    a = _symbol(spec, default="gauss_xi")
    G = spec.config.get("grid") or 64
    gs = GridSpec(a.n, G)
    grid = _grid(spec)
    proper, smooth = split_proper_smoothing(a, build_proper_cutoff(math.pi / 4, a.n), gs, grid)
    ok, info = kernel_certificate(smooth)
    b.json("certificate.json", {"symbol": a.label, "G": G, "certified": ok, "details": info})
    return {"smoothing_part_certified": ok}


def k_wavefront(spec, b):
    u = _fixture(spec)
    cells, cones = _cells_cones(spec, u)
    est = wavefront_estimate(u, cells, cones, _wfconfig(spec))
    b.csv("wf.csv", WF_HEADER, est.rows())
    return {"computed": True}


def k_singsupp(spec, b):
    u = _fixture(spec)
    cells, cones = _cells_cones(spec, u)
    sing = singsupp_estimate(u, cells, cones, _wfconfig(spec))
    b.json("singsupp.json", {"cells": [list(c) for c in sing]})
    return {"computed": True}


def k_ginf(spec, b):
    G = spec.config.get("grid") or 512
    grid = _grid(spec, "1:10")
    names = [spec.inputs["fixture"]] if spec.inputs.get("fixture") else ["lorentzian_slow",
                                                                           "lorentzian_fast"]
    expect = {"lorentzian_slow": True, "lorentzian_fast": False}
    flags, out = {}, {}
    for name in names:
        n = FIXTURES[name].n or 1
        rep = ginf_verdict(build_fixture(name, GridSpec(n, G), grid), 6)
        out[name] = rep.as_dict()
        flags[name] = rep.verdict == expect.get(name, rep.verdict)
    b.json("ginf.json", out)
    return flags


def k_microlocality(spec, b):
    u = _fixture(spec, "heaviside2d")
    a = _symbol(spec, default="cone_e2" if u.spec.n == 2 else "bracket")
    cells, cones = _cells_cones(spec, u)
    r = verify_microlocality(a, u, cells, cones, _wfconfig(spec))
    b.json("microlocality.json", r)
    return {"containment": r["pass"]}


def k_noncharacteristic(spec, b):
    u = _fixture(spec, "heaviside2d")
    a = _symbol(spec, default="xi1" if u.spec.n == 2 else "bracket")
    cells, cones = _cells_cones(spec, u)
    r = verify_noncharacteristic(a, u, cells, cones, _wfconfig(spec))
    b.json("noncharacteristic.json", r)
    return {"first_inclusion": r["first_inclusion"], "second_inclusion": r["second_inclusion"]}


def k_flow(spec, b):
    fld = HamiltonianField(_symbol(spec, default="speed_variable"))
    fld.validate()
    x0 = float(spec.inputs.get("x0", 1.0))
    xi0 = float(spec.inputs.get("xi0", 5.0))
    times = spec.inputs.get("times") or [1.0]
    T = float(max(times, key=abs))
    curve = bicharacteristic_lift(fld, [x0], [xi0], (0.0, T), 1e-3, 101)
    _, _, err = flow_batch(fld, [[x0]], [[xi0]], T, 1e-3)
    b.csv("curves.csv", CURVE_HEADER, curve.rows())
    b.json("flow.json", {"richardson_error": err, "lift_residual": curve.residual})
    return {"lift_residual": curve.residual <= 1e-8, "richardson": err <= DEFAULT.richardson_tol}


def k_propagate(spec, b):
    u = _fixture(spec)
    P = _symbol(spec, default="speed_constant")
    times = spec.inputs.get("times") or [1.0]
    cells, cones = _cells_cones(spec, u)
    reps = verify_propagation(CauchyProblem(P, u, record_times=times), cells, cones, _wfconfig(spec))
    b.json("propagation.json", [r.as_dict() for r in reps])
    return {f"t={r.t:g}": r.passed for r in reps}


def k_restrict(spec, b):
    t0 = float(spec.inputs.get("t0", 1.0))
    G = spec.config.get("grid") or 128
    grid = _grid(spec)
    g = build_fixture("delta1d", GridSpec(1, G), grid)
    P = build_symbol("speed_constant")
    u = spacetime_transport(g, P)
    wf_st = wavefront_estimate(u, CellDecomposition(u.spec, spec.config.get("cells")),
                               ConeGrid(2, spec.config.get("sectors") or 16), _wfconfig(spec))
    flags = {}
    try:
        pred = wf_restrict_predict(wf_st, t0)
    except ConormalPresent as e:
        b.json("restrict.json", {"t0": t0, "conormal": str(e)})
        return {"no_conormal": False}
    sol = solve_cauchy(CauchyProblem(P, g, record_times=[t0]))
    cells1 = CellDecomposition(g.spec, spec.config.get("cells"))
    cones1 = ConeGrid(1, 16)
    direct = wavefront_estimate(sol.states[0], cells1, cones1, _wfconfig(spec))
    from .wavefront import dilate
    flags["contains_direct"] = direct.singular <= dilate(pred, cells1, cones1)
    b.json("restrict.json", {"t0": t0, "predicted": _fmt_keys(pred),
                             "direct": _fmt_keys(direct.singular)})
    b.csv("wf_spacetime.csv", WF_HEADER, wf_st.rows())
    return flags


def _criterion_job(args):
    n, seed = args
    return run_criterion(n, seed=seed)


def k_verify_all(spec, b):
    numbers = spec.inputs.get("criteria") or sorted(CRITERIA)
    workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    jobs = [(n, spec.seed) for n in numbers]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_criterion_job, jobs))
    else:
        results = [_criterion_job(j) for j in jobs]
    flags = {}
    for r in results:
        d = f"criterion_{r.number:02d}"
        b.json(f"{d}/result.json", r.summary())
        for name, content in sorted(r.artifacts.items()):
            b.text(f"{d}/{name}", content)
        flags[f"criterion_{r.number}"] = r.passed
        print(r.line(), file=sys.stderr)
    return flags


HANDLERS: Dict[str, Callable] = {
    "classify": k_classify, "symbol-order": k_symbol_order, "ellipticity": k_ellipticity,
    "microsupport": k_microsupport, "compose": k_compose, "adjoint": k_adjoint,
    "transpose": k_transpose, "parametrix": k_parametrix, "apply": k_apply, "kernel": k_kernel,
    "wavefront": k_wavefront, "singsupp": k_singsupp, "ginf": k_ginf,
    "microlocality": k_microlocality, "noncharacteristic": k_noncharacteristic, "flow": k_flow,
    "propagate": k_propagate, "restrict": k_restrict, "verify-all": k_verify_all,
}


def manifest(spec: ScenarioSpec) -> dict:
    scen = spec.as_dict()
    scen.pop("out_dir")   # location only; keeps bundles in different directories identical
    return {"scenario": scen, "version": __version__, "numpy": np.__version__,
            "thresholds": DEFAULT.as_dict(), "wavefront_defaults": WFConfig().as_dict(),
            "mollifier_scale": MOLLIFIER_SCALE, "fixtures": fixture_catalog(),
            "symbols": SYMBOL_LABELS}


def run_scenario(spec: ScenarioSpec, timing: bool = False) -> Dict[str, bool]:
    """Validate, dispatch, write the bundle; returns the pass flags."""
    validate(spec)
    np.random.seed(spec.seed)
    b = Bundle(Path(spec.out_dir))
    t = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        flags = HANDLERS[spec.kind](spec, b)
    flags = {k: bool(v) for k, v in flags.items()}
    man = manifest(spec)
    if timing:
        man["wall_seconds"] = round(time.perf_counter() - t, 3)
    b.json("manifest.json", man)
    b.json("summary.json", {"kind": spec.kind, "pass": all(flags.values()), "checks": flags})
    b.write()
    return flags


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmicrolocal", description=__doc__.splitlines()[0])
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--scenario", help="JSON scenario file; flags override its fields")
    p.add_argument("--out", help="output directory")
    p.add_argument("--grid", type=int)
    p.add_argument("--cells", type=int)
    p.add_argument("--sectors", type=int)
    p.add_argument("--eps", help="epsilon levels as a:b, eps_j = 2^-j")
    p.add_argument("--max-l", type=int, dest="max_l")
    p.add_argument("--trunc", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--fixture", choices=fixture_catalog())
    p.add_argument("--symbol", choices=SYMBOL_LABELS)
    p.add_argument("--symbol-b", dest="symbol_b", choices=SYMBOL_LABELS)
    p.add_argument("--times", type=float, nargs="+")
    p.add_argument("--t0", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--xi0", type=float)
    p.add_argument("--criteria", type=int, nargs="+", help="subset for verify-all")
    p.add_argument("--timing", action="store_true", help="record wall time in the manifest")
    return p


def spec_from_args(args) -> ScenarioSpec:
    data = {}
    if args.scenario:
        try:
            data = json.loads(Path(args.scenario).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError("scenario", str(e))
        if not isinstance(data, dict):
            raise ValidationError("scenario", "must be a JSON object")
        if data.get("kind", args.kind) != args.kind:
            raise ValidationError("kind", f"file says {data['kind']!r}, command says {args.kind!r}")
    cfg = dict(data.get("config") or {})
    for k in ("grid", "cells", "sectors", "eps", "max_l", "trunc"):
        if getattr(args, k) is not None:
            cfg[k] = getattr(args, k)
    inp = dict(data.get("inputs") or {})
    for k in ("fixture", "symbol", "symbol_b", "times", "t0", "x0", "xi0", "criteria"):
        if getattr(args, k) is not None:
            inp[k] = getattr(args, k)
    seed = args.seed if args.seed is not None else data.get("seed", 0)
    out = args.out or data.get("out_dir") or f"out/{args.kind}"
    return ScenarioSpec(args.kind, inp, cfg, seed, out)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        flags = run_scenario(spec, args.timing)
    except ValidationError as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # module errors surface with their type
        print(f"error in {args.kind}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    ok = all(flags.values())
    print(json.dumps({"kind": spec.kind, "pass": ok, "checks": flags}, sort_keys=True))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
