"""Command-line front end.

Exit codes: 0 ok, 1 construction failure, 2 verification failure, 3 bad input.
Errors are reported on stderr as one JSON object.
"""
import argparse
import csv
import json
import sys

from .bundles import TAU_ISO, algebraize_isomorphism, bundle_from_map
from .catalog import load_complex, make_oracle
from .errors import (BadInput, CertificateMismatch, InvalidCertificate, NotInjectiveOnFibers, PwregError)
from .extend import TAU_DEN, FitConfig
from .grassmann import OSC_BOUND, TAU_PROJ, TAU_RANK
from .pipeline import (GLUE_TOL, SUBDIVISION_BOUND, PiecewiseRegularMap, Target, approximate_complex, certify)
from .polyalg import fmt_q
from .simplicial import barycentric_subdivide, induced_stratification
from .sphere import CHART_MARGIN

EXIT_OK, EXIT_CONSTRUCTION, EXIT_VERIFY, EXIT_INPUT = 0, 1, 2, 3
VERIFY_ERRORS = (CertificateMismatch, InvalidCertificate, NotInjectiveOnFibers)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadInput(message)


def _dump(obj, path):
    text = json.dumps(obj, sort_keys=True, indent=1) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise BadInput(f"cannot read {path!r}: {exc}") from exc


def _config(args):
    cfg = FitConfig(degree_cap=args.degree_cap, cert_pitch=args.pitch)
    if args.degree_cap < cfg.degree_start:
        cfg.degree_start = args.degree_cap
    return cfg


def _tolerances(args):
    return {"tau_rank": TAU_RANK, "tau_proj": TAU_PROJ, "tau_den": TAU_DEN, "tau_iso": TAU_ISO,
            "chart_margin": CHART_MARGIN, "oscillation_bound": OSC_BOUND, "subdivision_bound": SUBDIVISION_BOUND,
            "gluing_tol": GLUE_TOL, "degree_cap": args.degree_cap, "subdiv_cap": args.subdiv_cap,
            "pitch": args.pitch, "component_pitch": args.component_pitch, "eps": getattr(args, "eps", None),
            "seed": args.seed, "jobs": args.jobs}


def _report(title, cert, tolerances, extra=()):
    lines = [title]
    if cert is not None:
        c = cert.to_json()
        lines += [f"  eps_target        {c['eps_target']}",
                  f"  eps_achieved      {c['eps_achieved']:.6g}",
                  f"  boundary_exact    {sum(c['boundary_exact'].values())}/{len(c['boundary_exact'])}",
                  f"  subdivision_depth {c['subdivision_depth']}",
                  f"  components        {c['stratum_component_report'].get('components')} "
                  f"(splits {c['stratum_component_report'].get('splits')})",
                  f"  gluing_jump       {c['gluing_jump']:.3g}",
                  f"  valid             {c['valid']}"]
        if c["rank_margins"]:
            lines.append(f"  min rank margin   {min(c['rank_margins'].values()):.6g}")
        if c["unit_norm_exact"]:
            lines.append(f"  unit_norm_exact   {all(c['unit_norm_exact'].values())}")
    lines += list(extra)
    lines.append("config")
    lines += [f"  {k:<18}{v}" for k, v in sorted(tolerances.items())]
    return "\n".join(lines) + "\n"


def _emit_report(args, text):
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


def _rebuild_oracle(art, override=None, seed=None):
    meta = art.get("oracle") or {}
    spec = override or meta.get("spec")
    if not spec:
        raise BadInput("artifact records no oracle; pass --oracle")
    domain = meta.get("domain")
    K = load_complex(domain) if domain else PiecewiseRegularMap.from_json(art).complex
    target = Target.from_json(art["target"])
    return make_oracle(spec, target, K, meta.get("seed", 0) if seed is None else seed)


# -- commands --------------------------------------------------------------------

def cmd_approximate(args):
    K = load_complex(args.input)
    target = Target.parse(args.target)
    f = make_oracle(args.oracle, target, K, args.seed)
    pm = approximate_complex(K, f, args.eps, _config(args), subdiv_cap=args.subdiv_cap, jobs=args.jobs,
                             component_pitch=args.component_pitch)
    art = pm.to_json()
    art["oracle"] = {"spec": args.oracle, "seed": args.seed, "domain": args.input}
    # the worker count never changes the result, so it stays out of the artifact
    art["config"] = {k: v for k, v in _tolerances(args).items() if k != "jobs"}
    _dump(art, args.out)
    _emit_report(args, _report("approximate", pm.certificate, art["config"]))
    return EXIT_OK if pm.certificate.valid else EXIT_VERIFY


def cmd_verify(args):
    art = _load_json(args.input)
    try:
        pm = PiecewiseRegularMap.from_json(art)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadInput(f"malformed artifact: {exc}") from exc
    f = _rebuild_oracle(art, args.oracle, args.seed if args.oracle else None)
    pitch = args.pitch
    cert = certify(pm, f, pitch, component_pitch=args.component_pitch, strict=True)
    stored = pm.certificate
    extra = []
    if stored is not None:
        extra.append(f"  stored eps        {stored.eps_achieved:.6g} at pitch {stored.pitch}")
        if stored.pitch == pitch and abs(stored.eps_achieved - cert.eps_achieved) > 1e-12 * max(1, stored.eps_achieved):
            raise CertificateMismatch("recomputed eps_achieved differs from the stored value", field="eps_achieved",
                                      stored=stored.eps_achieved, recomputed=cert.eps_achieved)
    if not cert.eps_achieved < pm.eps:
        raise CertificateMismatch(f"eps_achieved {cert.eps_achieved:.3g} >= {pm.eps}", field="eps_achieved")
    if args.out:
        _dump({"certificate": cert.to_json()}, args.out)
    _emit_report(args, _report("verify", cert, _tolerances(args), extra))
    return EXIT_OK


def cmd_stratify(args):
    K = load_complex(args.input)
    S = induced_stratification(K)
    _dump(S.to_json(), args.out)
    _emit_report(args, "\n".join(S.describe()) + "\n")
    return EXIT_OK


def cmd_subdivide(args):
    K = load_complex(args.input)
    K2 = barycentric_subdivide(K, args.iterations)
    _dump({"ambient_dim": K2.ambient_dim, "vertices": [[fmt_q(c) for c in v] for v in K2.vertices],
           "simplices": [list(s) for s in K2.maximal()]}, args.out)
    return EXIT_OK


def _morphism_oracle(spec, n_out, n_in, field):
    import numpy as np
    from .fmatrix import field_dim
    d = field_dim(field)
    name, _, param = spec.partition(":")
    M = np.zeros((n_out, n_in, d))
    if name == "identity":
        for i in range(min(n_out, n_in)):
            M[i, i, 0] = 1.0
    elif name == "matrix":
        try:
            vals = [float(v) for v in param.split(",")]
            M[..., 0] = np.array(vals).reshape(n_out, n_in)
        except ValueError as exc:
            raise BadInput(f"bad morphism matrix {param!r}: {exc}") from exc
    else:
        raise BadInput(f"unknown morphism {spec!r}; use identity or matrix:a,b,...")
    return lambda X: np.broadcast_to(M, (len(X),) + M.shape)


def cmd_bundle_iso(args):
    a, b = _load_json(args.input), _load_json(args.target_bundle)
    xi = bundle_from_map(PiecewiseRegularMap.from_json(a))
    eta = bundle_from_map(PiecewiseRegularMap.from_json(b))
    A = _morphism_oracle(args.morphism, eta.n, xi.n, xi.field)
    sigma = algebraize_isomorphism(xi, eta, A, pitch=args.pitch)
    out = sigma.to_json()
    out["config"] = {k: v for k, v in _tolerances(args).items() if k != "jobs"}
    _dump(out, args.out)
    c = sigma.certificate
    _emit_report(args, _report("bundle-iso", None, out["config"],
                               [f"  sigma_min         {c['sigma_min']:.6g}",
                                f"  orientation_flips {c['orientation_flips']}",
                                f"  valid             {c['valid']}"]))
    return EXIT_OK


def cmd_report(args):
    art = _load_json(args.input)
    rows = []
    for sid, p in sorted(art["per_simplex"].items()):
        margin = art["certificate"]["rank_margins"].get(sid) if art.get("certificate") else None
        rows.append({"simplex": sid, "dim": sid.count("-"), "mode": p.get("mode", "chart"),
                     "chart": json.dumps(p.get("chart"), sort_keys=True) if "chart" in p else "",
                     "rank_margin": margin})
    fh = open(args.csv, "w", newline="") if args.csv not in (None, "-") else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=["simplex", "dim", "mode", "chart", "rank_margin"])
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


COMMANDS = {"approximate": cmd_approximate, "verify": cmd_verify, "stratify": cmd_stratify,
            "subdivide": cmd_subdivide, "bundle-iso": cmd_bundle_iso, "report": cmd_report}


def build_parser():
    p = _Parser(prog="pwreg", description="Piecewise regular approximation of maps into Grassmannians and spheres.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--input", required=True, help="complex JSON, builtin:<name>, or artifact JSON")
        sp.add_argument("--out", default=None, help="output path (default stdout)")
        sp.add_argument("--report", default=None, help="report path (default stderr)")
        sp.add_argument("--degree-cap", type=int, default=20)
        sp.add_argument("--subdiv-cap", type=int, default=6)
        sp.add_argument("--pitch", type=int, default=32)
        sp.add_argument("--component-pitch", type=int, default=8)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("approximate")
    common(a)
    a.add_argument("--target", required=True, help="grassmann:F:n:r or sphere:n")
    a.add_argument("--oracle", required=True, help="constant | rotation[:rate] | radial | mobius | wave[:amp] | pl:<table>")
    a.add_argument("--eps", type=float, required=True)
    v = sub.add_parser("verify")
    common(v)
    v.add_argument("--oracle", default=None, help="override the oracle recorded in the artifact")
    s = sub.add_parser("stratify")
    common(s)
    d = sub.add_parser("subdivide")
    common(d)
    d.add_argument("--iterations", type=int, default=1)
    b = sub.add_parser("bundle-iso")
    common(b)
    b.add_argument("--target", dest="target_bundle", required=True, help="artifact of the target bundle")
    b.add_argument("--morphism", default="identity", help="identity or matrix:a,b,... (row-major, real)")
    r = sub.add_parser("report")
    r.add_argument("--input", required=True)
    r.add_argument("--csv", default="-")
    return p


def _validate(args):
    for name in ("degree_cap", "subdiv_cap", "pitch", "component_pitch", "jobs"):
        val = getattr(args, name, None)
        if val is not None and val < (1 if name in ("pitch", "component_pitch", "jobs") else 0):
            raise BadInput(f"--{name.replace('_', '-')} out of range: {val}")
    if getattr(args, "eps", None) is not None and not args.eps > 0:
        raise BadInput("--eps must be positive")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        return COMMANDS[args.command](args)
    except BadInput as exc:
        sys.stderr.write(json.dumps(exc.to_json(), sort_keys=True) + "\n")
        return EXIT_INPUT
    except VERIFY_ERRORS as exc:
        sys.stderr.write(json.dumps(exc.to_json(), sort_keys=True) + "\n")
        return EXIT_VERIFY
    except PwregError as exc:
        sys.stderr.write(json.dumps(exc.to_json(), sort_keys=True) + "\n")
        return EXIT_CONSTRUCTION
    except ValueError as exc:
        sys.stderr.write(json.dumps({"error": "BadInput", "message": str(exc), "details": {}}, sort_keys=True) + "\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
