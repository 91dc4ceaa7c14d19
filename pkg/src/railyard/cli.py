"""Command-line front end.

Exit status: 0 success, 1 verification failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import (CircuitError, QuantumCircuit, basis_state, pad_with_identities, parse_circuit,
                      random_state, space_gadgets)
from .dynamics import EXACT_AVERAGE, MONTE_CARLO, ProtocolConfig, run_protocol
from .hamiltonian import (FULL_CLOCK, ClockSpace, HamiltonianError, assemble, build_h3s, build_h23,
                          export_operator, load_operator)
from .layout import LayoutError, build_layout_3local, build_layout_qutrit, close_cycle, enumerate_legal_graph
from . import walk as W
from . import verify as V

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest(command: str, args: argparse.Namespace, started: str) -> dict:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k not in ("func",)}
    return {
        "command": command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "started": started,
        "finished": _now(),
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_circuit(path: Path) -> QuantumCircuit:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read circuit file: {exc}") from None
    return parse_circuit(text)


def _set_threads(args) -> None:
    if getattr(args, "threads", None):
        os.environ["RAILYARD_THREADS"] = str(args.threads)


def _build(circuit: QuantumCircuit, model: str, cycle: bool, pad: bool):
    """Layout, the circuit it was built for, and its Hamiltonian terms."""
    if model == "3local":
        c = pad_with_identities(circuit, 3, 1) if pad else circuit
        layout = build_layout_3local(c)
        if cycle:
            layout = close_cycle(layout)
        return layout, c, build_h3s(c, layout)
    c = pad_with_identities(space_gadgets(circuit), 9, 2) if pad else circuit
    layout = build_layout_qutrit(c)  # qutrit layouts are always cycles
    return layout, layout.circuit, build_h23(layout.circuit, layout)


def _warn_no_cnot(circuit: QuantumCircuit, model: str) -> None:
    if model == "qutrit" and circuit.n_cnot == 0:
        print("warning: circuit has no CNOT; the qutrit layout is a plain cycle without gadgets",
              file=sys.stderr)


# ---------------------------------------------------------------------------
# commands

def cmd_compile(args) -> int:
    started = _now()
    circuit = _read_circuit(args.circuit)
    _warn_no_cnot(circuit, args.model)
    layout, _, terms = _build(circuit, args.model, args.cycle, args.pad)
    H = assemble(terms)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.circuit).stem
    man = _manifest("compile", args, started)
    lay_path = out / f"{stem}.layout.json"
    op_path = out / f"{stem}.operator.txt"
    _write_json(lay_path, {"manifest": man, "layout": layout.to_json()})
    export_operator(H, op_path, {"manifest": man, "model": args.model, "topology": layout.topology})
    print(json.dumps({"layout": str(lay_path), "operator": str(op_path), "dim": H.dim,
                      "nnz": H.nnz, "terms": len(terms)}, sort_keys=True))
    return EXIT_OK


def cmd_protocol(args) -> int:
    started = _now()
    _set_threads(args)
    if args.tau_max is not None and not args.tau_max > 0:
        raise UsageError("--tau-max must be positive")
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    circuit = _read_circuit(args.circuit)
    _warn_no_cnot(circuit, args.model)
    cfg = ProtocolConfig(args.tau_max, args.samples, args.seed,
                         EXACT_AVERAGE if args.exact else MONTE_CARLO)
    res = run_protocol(circuit, cfg, args.model, threads=args.threads)
    payload = res.to_json()
    if args.out:
        _write_json(Path(args.out), {"manifest": _manifest("protocol", args, started), "result": payload})
    print(json.dumps(payload, sort_keys=True))
    print(f"p_success = {res.success_probability:.6f}  conditional_fidelity = "
          f"{res.conditional_fidelity:.12f}", file=sys.stderr)
    return EXIT_OK


def cmd_walk(args) -> int:
    started = _now()
    lemma = args.lemma or (1 if args.topology == W.LINE else 2)
    try:
        spec = W.WalkSpec(args.topology, args.L, args.start)
    except W.WalkError as exc:
        raise UsageError(str(exc)) from None
    if lemma == 1 and args.topology != W.LINE:
        raise UsageError("lemma 1 concerns the line")
    if lemma == 2:
        if args.topology != W.CYCLE:
            raise UsageError("lemma 2 concerns the cycle")
        try:
            spec.require_lemma_length()
        except W.WalkError as exc:
            raise UsageError(str(exc)) from None
    if args.tau_max is not None and not args.tau_max > 0:
        raise UsageError("--tau-max must be positive")
    if lemma == 1:
        tmax = args.tau_max or 1e4 * args.L
        decades = max(np.log10(tmax / args.L), 0.0)
        taus = [args.L * 10 ** (k / 4) for k in range(int(np.floor(decades * 4 + 1e-9)) + 1)]
        rep = W.check_lemma1(args.L, taus, args.start)
        rows = rep.rows()
        report = {"lemma": 1, "L": args.L, "start": args.start, "C": rep.C, "decays": rep.decays,
                  "tv_final": rep.tv[-1]}
    else:
        rep = W.check_lemma2(args.L, args.tau_max, args.start)
        rows = rep.rows()
        report = {"lemma": 2, "L": args.L, "start": args.start, "p_success": rep.p_success,
                  "bound": rep.bound, "margin": rep.margin, "region": rep.region,
                  "doubled_sites": list(W.doubled_sites(args.L, args.start))}
    man = _manifest("walk", args, started)
    text = W.to_csv(rows)
    if args.out:
        Path(args.out).write_text("# " + json.dumps(man, sort_keys=True) + "\n" + text)
    else:
        sys.stdout.write(text)
    print(json.dumps(report, sort_keys=True), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _expected_restriction(layout, graph) -> np.ndarray:
    if layout.model == "qutrit":
        return graph.adjacency
    n = len(graph)
    if layout.topology == "cycle":
        return np.eye(n) - 0.5 * graph.adjacency
    return np.diag(0.5 * graph.degrees) - 0.5 * graph.adjacency


def cmd_verify(args) -> int:
    started = _now()
    circuit = _read_circuit(args.circuit)
    _warn_no_cnot(circuit, args.model)
    layout, built_for, terms = _build(circuit, args.model, args.cycle, args.pad)
    graph = enumerate_legal_graph(layout)
    H = assemble(terms)
    checks: list[tuple[str, bool, str]] = []
    if args.operator:
        try:
            H, _ = load_operator(args.operator, check=False)
        except (OSError, ValueError) as exc:
            checks.append(("operator dump readable", False, str(exc)))
            H = None
        else:
            herr = H.hermitian_error()
            checks.append(("operator is Hermitian", herr <= 1e-12, f"{herr:.2e}"))
        if H is not None and H.dim != assemble(terms).dim:
            checks.append(("operator dimension", False, f"{H.dim} vs {assemble(terms).dim}"))
            H = None
    if H is not None:
        if args.model == "3local":
            worst = 0.0
            for t in terms:
                M = t.op.dense()
                worst = max(worst, float(np.abs(M @ M - M).max()), float(np.abs(M - M.conj().T).max()))
            checks.append(("every term is a projector", worst <= 1e-12, f"{worst:.2e}"))
        rng = np.random.default_rng(args.seed)
        expect = _expected_restriction(layout, graph)
        worst_r = worst_i = 0.0
        for _ in range(args.phi0_samples):
            basis = V.embed_legal_basis(graph, built_for, random_state(rng, layout.n))
            try:
                worst_r = max(worst_r, float(np.abs(V.restrict(H, basis) - expect).max()))
            except V.VerificationError:
                worst_r = float("inf")
            worst_i = max(worst_i, V.check_invariance(H, basis))
        checks.append(("restriction matches the legal-graph form", worst_r <= 1e-12, f"{worst_r:.2e}"))
        checks.append(("legal subspace invariant", worst_i <= 1e-10, f"{worst_i:.2e}"))
        if args.model == "3local":
            hist = V.history_state(graph, built_for, basis_state(layout.n))
            res = V.check_frustration_free(H, hist)
            checks.append(("history state has zero energy", res <= 1e-10, f"{res:.2e}"))
        else:
            checks.append(("legal graph is a necklace", graph.is_necklace(),
                           f"ring {graph.ring_length}, pendants {len(graph.pendants)}"))
        if args.full_space_max_dim and args.model == "3local":
            full_dim = (2 ** layout.n) * int(np.prod([s.dim for s in layout.sites]))
            if full_dim <= args.full_space_max_dim:
                Hf = assemble(build_h3s(built_for, layout, FULL_CLOCK))
                fs = ClockSpace(layout, FULL_CLOCK)
                idx = [fs.index(w, p) for w in range(2 ** layout.n) for p in layout.positions]
                d = float(np.abs(Hf.csr[idx][:, idx].toarray() - H.dense()).max())
                checks.append(("full clock agrees on the one-train sector", d == 0.0, f"{d:.2e}"))
    ok = all(c[1] for c in checks)
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name} ({detail})")
    if args.out:
        _write_json(Path(args.out), {"manifest": _manifest("verify", args, started),
                                     "checks": [{"name": n, "pass": p, "detail": d} for n, p, d in checks],
                                     "pass": ok})
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="railyard", description="Railroad-switch circuit Hamiltonians")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def circuit_args(sp):
        sp.add_argument("circuit", type=Path)
        sp.add_argument("--model", choices=("3local", "qutrit"), default="3local")

    c = sub.add_parser("compile", help="write layout JSON and an operator dump")
    circuit_args(c)
    c.add_argument("--cycle", action="store_true", help="close the 3local clock into a cycle (qutrit layouts always are)")
    c.add_argument("--pad", action="store_true", help="pad with identities first")
    c.add_argument("--out", default=".", help="output directory")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("protocol", help="run the random-time measurement protocol")
    circuit_args(r)
    r.add_argument("--tau-max", type=float, default=None)
    r.add_argument("--samples", type=int, default=1000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--exact", action="store_true", help="closed-form time average")
    r.add_argument("--threads", type=int, default=None)
    r.add_argument("--out", default=None, help="JSON output file")
    r.set_defaults(func=cmd_protocol)

    w = sub.add_parser("walk", help="line and cycle quantum-walk checks")
    w.add_argument("--topology", choices=(W.LINE, W.CYCLE), default=W.LINE)
    w.add_argument("--L", type=int, required=True)
    w.add_argument("--start", type=int, default=1)
    w.add_argument("--tau-max", type=float, default=None)
    w.add_argument("--lemma", type=int, choices=(1, 2), default=None)
    w.add_argument("--out", default=None, help="CSV output file")
    w.set_defaults(func=cmd_walk)

    v = sub.add_parser("verify", help="structural checks on a compiled Hamiltonian")
    circuit_args(v)
    v.add_argument("--cycle", action="store_true")
    v.add_argument("--pad", action="store_true")
    v.add_argument("--operator", type=Path, default=None, help="check this operator dump instead")
    v.add_argument("--full-space-max-dim", type=int, default=1 << 14)
    v.add_argument("--phi0-samples", type=int, default=5)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--threads", type=int, default=None)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CircuitError, LayoutError, HamiltonianError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
