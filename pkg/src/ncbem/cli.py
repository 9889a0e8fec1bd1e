"""Command line front end.

    ncbem solve CONFIG [--output-dir DIR] [--order p0|p1] ...
    ncbem validate CONFIG
    ncbem oracle NAME [key=value ...]
    ncbem --seed-scenario NAME          # print a ready-made config

Precedence for settings: command-line flags, then the config file, then
built-in defaults.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError, NcbemError
from .geometry import RegionGroup, patch_from_dict
from .mesh import mesh_quality
from .model import SCENARIOS, MeshSpec, Model, build_scenario
from .operators import P0, QuadratureOrders, ShapeFunctionSpace, build_block_system

log = logging.getLogger("ncbem")

SCHEMA = 1
_MODULE_OF = {"config error": "cli", "geometry error": "geometry", "linking error": "conformity",
              "mesh error": "mesh", "assembly error": "operators", "solver error": "solver",
              "evaluation error": "post", "oracle error": "oracles"}


@dataclass
class RunConfig:
    scenario: dict = None             # {"name", "density", "params"}
    patches: list = None              # custom: [{"patch": {...}, "mesh": {...}}]
    groups: list = None               # custom: [RegionGroup dicts]
    capacitance: tuple = None
    mesh_variant: str = None
    space: str = P0
    quadrature: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=lambda: {"report": "report.json"})
    samples: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        if d.get("schema") != SCHEMA:
            raise ConfigError(f"config needs \"schema\": {SCHEMA}")
        known = {"schema", "scenario", "patches", "groups", "capacitance", "mesh_variant", "space",
                 "quadrature", "tolerances", "outputs", "samples", "comment"}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys {extra}")
        if ("scenario" in d) == ("patches" in d):
            raise ConfigError("config needs exactly one of \"scenario\" or \"patches\"")
        cfg = cls(scenario=d.get("scenario"), patches=d.get("patches"), groups=d.get("groups"),
                  capacitance=tuple(d["capacitance"]) if d.get("capacitance") else None,
                  mesh_variant=d.get("mesh_variant"), space=d.get("space", P0),
                  quadrature=dict(d.get("quadrature", {})), tolerances=dict(d.get("tolerances", {})),
                  outputs=dict(d.get("outputs", {"report": "report.json"})),
                  samples=[list(map(float, p)) for p in d.get("samples", [])])
        if cfg.patches is not None and not cfg.groups:
            raise ConfigError("custom patch lists need a \"groups\" list")
        if any(len(p) != 3 for p in cfg.samples):
            raise ConfigError("samples must be 3-vectors")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from None
        return cls.from_dict(data)

    def orders(self) -> QuadratureOrders:
        try:
            return QuadratureOrders(**self.quadrature)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"quadrature: {exc}") from None

    def build_model(self, strict=True) -> Model:
        tol = {k: self.tolerances.get(k) for k in ("tol_gap", "tol_cpp")}
        extra = set(self.tolerances) - set(tol)
        if extra:
            raise ConfigError(f"unknown tolerances {sorted(extra)}")
        if self.scenario is not None:
            sc = dict(self.scenario)
            params = dict(sc.get("params", {}))
            if self.mesh_variant is not None:
                if sc.get("name") != "Bushing":
                    raise ConfigError("mesh_variant applies to the Bushing scenario only")
                params["variant"] = self.mesh_variant
            s = build_scenario(sc.get("name"), sc.get("density"), **params)
            for name, spec in sc.get("meshing", {}).items():
                if name not in s.meshing:
                    raise ConfigError(f"meshing override for unknown patch {name!r}")
                s.meshing[name] = MeshSpec.from_dict(spec)
            cap = self.capacitance or s.capacitance
            return Model(s.items, s.meshing, cap, name=s.name, strict=strict, **tol)
        groups = {}
        for gd in self.groups:
            try:
                g = RegionGroup.from_dict(gd)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad group {gd}: {exc}") from None
            groups[g.id] = g
        items, meshing = [], {}
        for k, entry in enumerate(self.patches):
            try:
                p = patch_from_dict(entry["patch"])
                spec = MeshSpec.from_dict(entry["mesh"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad patch entry {k}: {exc}") from None
            if p.group not in groups:
                raise ConfigError(f"patch {p.name!r} references undefined group {p.group!r}")
            items.append((p, groups[p.group]))
            meshing[p.name] = spec
        return Model(items, meshing, self.capacitance, name="custom", strict=strict, **tol)


def seed_config(name: str, density=None, variant=None) -> dict:
    """A ready-to-run config for a built-in scenario."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    defaults = {"TwoSpheres": 12, "Bushing": 1.0, "SphericalCapacitor": 8, "SingleSphere": 8}
    cfg = {"schema": SCHEMA,
           "scenario": {"name": name, "density": defaults[name] if density is None else density},
           "space": P0,
           "quadrature": {"regular": 4, "singular": 5},
           "outputs": {"report": "report.json", "vtk": f"{name.lower()}.vtk",
                       "csv": f"{name.lower()}_sigma.csv"}}
    if name == "Bushing":
        cfg["mesh_variant"] = variant or "conforming"
    if name == "SingleSphere":
        cfg["samples"] = [[2.0, 0.0, 0.0], [5.0, 0.0, 0.0], [100.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    if name == "TwoSpheres":
        cfg["samples"] = [[0.0, 0.0, 0.0], [0.0, 0.5, 0.0]]
    return cfg


def _apply_flags(cfg: RunConfig, args):
    if getattr(args, "order", None):
        cfg.space = args.order
    if getattr(args, "quad_order_regular", None):
        cfg.quadrature["regular"] = args.quad_order_regular
    if getattr(args, "quad_order_singular", None):
        cfg.quadrature["singular"] = args.quad_order_singular
    if getattr(args, "mesh_variant", None):
        cfg.mesh_variant = args.mesh_variant
    return cfg


def _dump(obj, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    os.replace(tmp, path)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def compare_reports(current: dict, baseline: dict) -> dict:
    """Relative differences of region charges against a baseline report."""
    out = {}
    for gid, entry in current.get("regions", {}).items():
        base = baseline.get("regions", {}).get(gid)
        if base is None:
            continue
        q, q0 = entry["charge"], base["charge"]
        out[gid] = {"charge": q, "baseline_charge": q0,
                    "relative_difference": abs(q - q0) / abs(q0) if q0 != 0 else None}
    res = {"regions": out}
    if "capacitance" in current and "capacitance" in baseline:
        c, c0 = current["capacitance"]["value"], baseline["capacitance"]["value"]
        res["capacitance"] = {"value": c, "baseline": c0, "relative_difference": abs(c - c0) / abs(c0)}
    return res


def run_solve(cfg: RunConfig, output_dir=".", compare=None) -> dict:
    """Full pipeline.  All files are written only after every stage succeeded."""
    from .post import eval_samples, export_csv, export_vtk, report
    from .solver import solve_dense

    baseline = None
    if compare:
        try:
            with open(compare) as fh:
                baseline = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read baseline report {compare}: {exc}") from None
    orders = cfg.orders()
    model = cfg.build_model()
    try:
        space = ShapeFunctionSpace(model.linked, cfg.space)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    log.info("model %s: %d elements, %d DOFs", model.name, model.n_elements, space.n_dofs)
    system = build_block_system(model, space, orders)
    solution = solve_dense(system)
    samples = eval_samples(solution, model, space, cfg.samples) if cfg.samples else None
    rep = report(solution, model, space, system, samples)
    rep["config"] = {"space": cfg.space, "quadrature": orders.to_dict(),
                     "mesh_variant": cfg.mesh_variant}
    if baseline is not None:
        rep["comparison"] = compare_reports(rep, baseline)
    rep["version"] = __version__
    rep["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    os.makedirs(output_dir, exist_ok=True)
    outs = cfg.outputs
    written = []
    if outs.get("vtk"):
        written += export_vtk(model, solution, space, os.path.join(output_dir, outs["vtk"]), samples)
    if outs.get("csv"):
        written.append(export_csv(model, solution, space, os.path.join(output_dir, outs["csv"])))
    if outs.get("matrix"):
        system.dump(os.path.join(output_dir, outs["matrix"]))
        written.append(os.path.join(output_dir, outs["matrix"]))
    path = os.path.join(output_dir, outs.get("report") or "report.json")
    _dump(rep, path)
    log.info("wrote %s", ", ".join(written + [path]))
    return rep


def run_validate(cfg: RunConfig) -> dict:
    model = cfg.build_model(strict=False)
    L = model.linked
    findings = [f.to_dict() for f in L.findings]
    for f in findings:
        f["patch"] = model.meshes[f["mesh"]].name
    quality = {}
    for m in model.meshes:
        q = mesh_quality(m)
        quality[m.name] = q.to_dict() if hasattr(q, "to_dict") else q.__dict__
    return {"model": model.summary(),
            "no_partner": sum(f["kind"] == "no_partner" for f in findings),
            "ambiguous": sum(f["kind"] == "ambiguous" for f in findings),
            "findings": findings,
            "hanging_nodes": sum(1 for h in L.hanging if not h.snapped),
            "mesh_quality": quality}


def _parse_kv(items):
    out = {}
    for it in items:
        if "=" not in it:
            raise ConfigError(f"oracle parameter {it!r} is not key=value")
        k, v = it.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def run_oracle(name: str, params: dict) -> dict:
    from . import oracles
    table = {
        "sphere": lambda R=1.0, eps0=1.0: {"value": oracles.sphere_capacitance(R, eps0)},
        "two_spheres": lambda R=1.0, center_distance=3.0, terms=30, eps0=1.0:
            oracles.two_sphere_capacitance(R, center_distance, int(terms), eps0).to_dict(),
        "layered_capacitor": lambda a=1.0, b=1.5, c=2.0, eps1=5.0, eps2=1.0:
            {"value": oracles.layered_spherical_capacitor(a, b, c, eps1, eps2),
             "radial_ode": oracles.layered_capacitor_radial(a, b, c, eps1, eps2)},
        "galerkin_entry": lambda a, b, tol=1e-9:
            oracles.brute_force_galerkin_entry(np.array(a, float), np.array(b, float), tol=tol).to_dict(),
    }
    if name not in table:
        raise ConfigError(f"unknown oracle {name!r}; choose from {', '.join(sorted(table))}")
    try:
        return {"oracle": name, "params": params, **table[name](**params)}
    except TypeError as exc:
        raise ConfigError(f"oracle {name}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"oracle {name}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncbem", description="Non-conforming Galerkin BEM electrostatics")
    ap.add_argument("--version", action="version", version=f"ncbem {__version__}")
    ap.add_argument("--seed-scenario", metavar="NAME", choices=SCENARIOS,
                    help="print a ready-made config for a built-in scenario and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config")
    common.add_argument("--output-dir", default=".")
    common.add_argument("--order", choices=("p0", "p1"))
    common.add_argument("--quad-order-regular", type=int, metavar="N")
    common.add_argument("--quad-order-singular", type=int, metavar="N")
    common.add_argument("--mesh-variant", choices=("conforming", "nonconforming"))

    s = sub.add_parser("solve", parents=[common], help="mesh, link, assemble, solve and export")
    s.add_argument("--compare", metavar="REPORT", help="baseline report for charge differences")
    sub.add_parser("validate", parents=[common], help="dry run: mesh and link, report findings")
    o = sub.add_parser("oracle", help="evaluate a reference value")
    o.add_argument("name")
    o.add_argument("params", nargs="*", metavar="key=value")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed_scenario:
            variant = getattr(args, "mesh_variant", None)
            json.dump(seed_config(args.seed_scenario, variant=variant), sys.stdout, indent=2)
            sys.stdout.write("\n")
            return 0
        if args.command is None:
            ap.print_usage(sys.stderr)
            return 2
        if args.command == "oracle":
            out = run_oracle(args.name, _parse_kv(args.params))
            json.dump(out, sys.stdout, indent=2, default=_jsonable)
            sys.stdout.write("\n")
            return 0
        cfg = _apply_flags(RunConfig.load(args.config), args)
        if args.command == "validate":
            out = run_validate(cfg)
            json.dump(out, sys.stdout, indent=2, sort_keys=True, default=_jsonable)
            sys.stdout.write("\n")
            return 0
        rep = run_solve(cfg, args.output_dir, args.compare)
        summary = {"capacitance": rep.get("capacitance", {}).get("value"), "alpha": rep["alpha"],
                   "dofs": rep["dofs"]["total"]}
        json.dump(summary, sys.stdout, default=_jsonable)
        sys.stdout.write("\n")
        return 0
    except NcbemError as exc:
        err = {"error": exc.category, "module": _MODULE_OF.get(exc.category, "ncbem"),
               "type": type(exc).__name__, "message": str(exc)}
        findings = getattr(exc, "findings", None)
        if findings:
            err["findings"] = [f.to_dict() for f in findings[:50]]
        json.dump(err, sys.stderr, default=_jsonable)
        sys.stderr.write("\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
