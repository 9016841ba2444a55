"""Command-line front end: experiment orchestration and CSV/JSON emission.

Subcommands: gates, mult, tmr-sweep, nn, degradation, ecc
(verify|inject|overhead), dump-netlist. A JSON config file may supply
any flag value (underscore key names, one section per subcommand plus
shared top-level keys); explicit flags win. Exit codes: 0 success, 1
configuration error, 2 uncorrectable-ECC abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import analytics
from .analytics import (
    CSV_SCHEMA,
    DEGRADATION_SCHEMA,
    NnModelParams,
    degradation_point,
    estimate_p_mult,
    nn_failure_probability,
    rows_to_csv,
    rows_to_json,
    sweep,
)
from .crossbar import Crossbar, GateKind, GATE_ARITY, gate_eval
from .ecc import (
    BlockGeometry,
    EccCostModel,
    UncorrectableEccError,
    encode,
    verify_and_correct,
    wrap_function_with_ecc,
)
from .faults import FaultConfig, FaultStream
from .microcode import build_full_adder, build_multiplier, dump_program
from .tmr import MODES, TmrPlan, VOTINGS

SHARED_KEYS = {"seed", "out", "format", "jobs"}
OUT_DIR_ENV = "PIMREL_OUT_DIR"


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x != ""]
    except ValueError as e:
        raise ConfigError(f"bad numeric list {text!r}: {e}") from e


def _mode_list(text: str, default_voting: str) -> list[TmrPlan]:
    plans = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        mode, _, voting = item.partition(":")
        if mode not in MODES:
            raise ConfigError(f"unknown tmr mode {mode!r} (choose from {MODES})")
        voting = voting or default_voting
        if voting not in VOTINGS:
            raise ConfigError(f"unknown voting {voting!r} (choose from {VOTINGS})")
        plans.append(TmrPlan(mode, voting))
    return plans


def _build_parser() -> _Parser:
    p = _Parser(prog="pimrel", description=__doc__)
    p.add_argument("--config", help="JSON config file; flags override its values")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("-o", "--out", default=None, help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--jobs", type=int, default=None)

    sub.add_parser("gates", help="exhaustive gate truth-table self check")

    sp = sub.add_parser("mult", help="multiplication with fault injection")
    common(sp)
    sp.add_argument("--bits", type=int, default=None)
    sp.add_argument("--a", type=int, default=None)
    sp.add_argument("--b", type=int, default=None)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--p-gate", type=float, default=None)
    sp.add_argument("--p-write", type=float, default=None)
    sp.add_argument("--tmr", choices=MODES, default=None)
    sp.add_argument("--voting", choices=VOTINGS, default=None)

    sp = sub.add_parser("tmr-sweep", help="failure probability over a p_gate x mode grid")
    common(sp)
    sp.add_argument("--bits", type=int, default=None)
    sp.add_argument("--p-gate", default=None, help="comma list, e.g. 1e-3,1e-4")
    sp.add_argument("--modes", default=None, help="comma list of mode[:voting]")
    sp.add_argument("--voting", choices=VOTINGS, default=None)
    sp.add_argument("--trials", type=int, default=None)

    sp = sub.add_parser("nn", help="network misclassification probability from p_mult")
    common(sp)
    sp.add_argument("--p-mult", default=None, help="comma list of p_mult values")
    sp.add_argument("--from-csv", default=None, help="take p_mult from a sweep CSV")
    sp.add_argument("--p-mask", type=float, default=None)
    sp.add_argument("--mults-per-sample", type=float, default=None)

    sp = sub.add_parser("degradation", help="expected corrupted weights over time")
    common(sp)
    sp.add_argument("--p-input", default=None, help="comma list")
    sp.add_argument("--batches", default=None, help="comma list (aliases: --T)")
    sp.add_argument("--T", dest="batches", default=None, help=argparse.SUPPRESS)
    sp.add_argument("--ecc", choices=("none", "diagonal", "both"), default=None)
    sp.add_argument("--weight-count", type=float, default=None)
    sp.add_argument("--block-side", type=int, default=None)
    sp.add_argument("--bits-per-weight", type=int, default=None)

    sp = sub.add_parser("ecc", help="diagonal-parity encode/verify/correct tools")
    common(sp)
    sp.add_argument("action", choices=("verify", "inject", "overhead"))
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--m", type=int, default=None)
    sp.add_argument("--banks", type=int, choices=(2, 3), default=None)
    sp.add_argument("--density", type=float, default=None, help="random fill probability")
    sp.add_argument("--flips", type=int, default=None, help="bits to flip before verify")
    sp.add_argument("--bits", type=int, default=None, help="multiplier width (overhead)")
    sp.add_argument("--rows", type=int, default=None, help="parallel rows (overhead)")

    sp = sub.add_parser("dump-netlist", help="print a micro-program as text")
    common(sp)
    sp.add_argument("--program", choices=("adder", "mult"), default=None)
    sp.add_argument("--bits", type=int, default=None)

    return p


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path!r} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _known_keys(parser: _Parser, command: str) -> set[str]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            sp = action.choices[command]
            return {a.dest for a in sp._actions if a.dest != "help"}
    return set()


class Resolver:
    """Flag > config-section > default, with unknown config keys rejected."""

    def __init__(self, parser: _Parser, args: argparse.Namespace, config: dict):
        self.args = args
        command = args.command
        known = _known_keys(parser, command)
        sections = {"gates", "mult", "tmr-sweep", "nn", "degradation", "ecc", "dump-netlist"}
        for key in config:
            if key not in sections and key not in SHARED_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
        section = config.get(command, {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section {command!r} must be an object")
        for key in section:
            if key not in known:
                raise ConfigError(f"unknown config key {command}.{key!r}")
        self.section = section
        self.shared = {k: v for k, v in config.items() if k in SHARED_KEYS}

    def get(self, key: str, default=None):
        val = getattr(self.args, key, None)
        if val is not None:
            return val
        if key in self.section:
            return self.section[key]
        if key in self.shared:
            return self.shared[key]
        return default

    def config_snapshot(self) -> dict:
        # jobs/out/format only affect how results are produced or stored,
        # never their values; keep them out so reruns hash identically
        skip = {"config", "jobs", "out", "format"}
        snap = {k: v for k, v in self.shared.items() if k not in skip}
        snap[self.args.command] = {
            k: v for k, v in self.section.items() if k not in skip
        }
        snap["argv"] = {
            k: v for k, v in vars(self.args).items() if v is not None and k not in skip
        }
        return snap


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
        return
    if not os.path.dirname(out_path):
        out_dir = os.environ.get(OUT_DIR_ENV, "")
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            out_path = os.path.join(out_dir, out_path)
    with open(out_path, "w") as fh:
        fh.write(text)


def _emit_rows(rows: list[dict], schema, res: Resolver) -> None:
    seed = res.get("seed", 0)
    fmt = res.get("format", "csv")
    snapshot = res.config_snapshot()
    if fmt == "json":
        text = rows_to_json(rows, schema, seed, snapshot)
    else:
        text = rows_to_csv(rows, schema, seed, snapshot)
    _emit(text, res.get("out"))


# -- subcommand bodies ---------------------------------------------------------


def _cmd_gates(res: Resolver) -> int:
    failures = 0
    for kind in GateKind:
        arity = GATE_ARITY[kind]
        cases = 1 << arity
        vecs = [
            np.array([(case >> i) & 1 for case in range(cases)], dtype=np.uint8)
            for i in range(arity)
        ]
        got = gate_eval(kind, vecs)
        if kind is GateKind.NOT:
            want = 1 - vecs[0]
        elif kind is GateKind.NOR2:
            want = 1 - np.maximum(vecs[0], vecs[1])
        elif kind is GateKind.NAND2:
            want = 1 - vecs[0] * vecs[1]
        elif kind is GateKind.OR2:
            want = np.maximum(vecs[0], vecs[1])
        else:
            want = 1 - (vecs[0] + vecs[1] + vecs[2] >= 2).astype(np.uint8)
        ok = bool(np.array_equal(got, want))
        print(f"{'PASS' if ok else 'FAIL'} {kind.value}: {cases} cases")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1


def _cmd_mult(res: Resolver) -> int:
    bits = int(res.get("bits", 8))
    seed = int(res.get("seed", 0))
    plan = TmrPlan(res.get("tmr", "none"), res.get("voting", "min3"))
    p_gate = float(res.get("p_gate", 0.0))
    p_write = float(res.get("p_write", 0.0))
    a, b = res.get("a"), res.get("b")
    trials = int(res.get("trials", 1))

    if a is not None and b is not None:
        from .tmr import load_tmr_inputs, required_columns, run_tmr

        prog = build_multiplier(bits)
        cfg = FaultConfig(p_gate=p_gate, p_write=p_write, seed=seed, inject_indirect=False)
        n = max(256, required_columns(prog, plan))
        xbar = Crossbar(n)
        stream = FaultStream.from_config(cfg)
        load_tmr_inputs(prog, xbar, [0], {"a": int(a), "b": int(b)}, plan)
        result = run_tmr(prog, xbar, [0], stream, plan)
        product = int(result.words("product")[0])
        correct = product == int(a) * int(b)
        row = {
            "experiment": "mult",
            "mode": plan.mode,
            "voting": "none" if plan.mode == "none" else plan.voting,
            "bit_width": bits,
            "p_gate": p_gate,
            "p_input": 0.0,
            "trials": 1,
            "failures": 0 if correct else 1,
            "p_hat": 0.0 if correct else 1.0,
            "ci_lo": "",
            "ci_hi": "",
            "cycles": result.cycles,
            "area_cells": result.area_cells,
            "seed": seed,
        }
        print(f"{a} * {b} = {product} ({'correct' if correct else 'INCORRECT'})")
        _emit_rows([row], CSV_SCHEMA, res)
        return 0

    mc = estimate_p_mult(bits, p_gate, trials, plan, seed, p_write=p_write)
    _emit_rows([mc.row("mult")], CSV_SCHEMA, res)
    return 0


def _cmd_tmr_sweep(res: Resolver) -> int:
    bits = int(res.get("bits", 8))
    seed = int(res.get("seed", 0))
    trials = int(res.get("trials", 20000))
    jobs = int(res.get("jobs", 1))
    p_gates = _float_list(res.get("p_gate", "1e-3,3e-4,1e-4"))
    plans = _mode_list(res.get("modes", "none,serial"), res.get("voting", "min3"))
    if not p_gates or not plans:
        _emit_rows([], CSV_SCHEMA, res)
        return 0
    rows = sweep(bits, p_gates, plans, trials, seed, jobs=jobs)
    _emit_rows(rows, CSV_SCHEMA, res)
    return 0


def _cmd_nn(res: Resolver) -> int:
    seed = int(res.get("seed", 0))
    params = NnModelParams(
        p_mask=float(res.get("p_mask", 3e-4)),
        mults_per_sample=float(res.get("mults_per_sample", 612e6)),
    )
    rows = []
    from_csv = res.get("from_csv")
    if from_csv:
        src = _read_csv_rows(from_csv)
        for row in src:
            p_mult = float(row["p_hat"])
            rows.append(
                {
                    "experiment": "nn",
                    "mode": row.get("mode", ""),
                    "voting": row.get("voting", ""),
                    "bit_width": row.get("bit_width", ""),
                    "p_gate": row.get("p_gate", ""),
                    "p_input": "",
                    "trials": "",
                    "failures": "",
                    "p_hat": nn_failure_probability(params, p_mult),
                    "ci_lo": nn_failure_probability(params, float(row["ci_lo"] or 0)),
                    "ci_hi": nn_failure_probability(params, float(row["ci_hi"] or 1)),
                    "cycles": "",
                    "area_cells": "",
                    "seed": seed,
                }
            )
    else:
        for p_mult in _float_list(res.get("p_mult", "")):
            rows.append(
                {
                    "experiment": "nn",
                    "mode": "analytic",
                    "voting": "",
                    "bit_width": "",
                    "p_gate": "",
                    "p_input": "",
                    "trials": "",
                    "failures": "",
                    "p_hat": nn_failure_probability(params, p_mult),
                    "ci_lo": "",
                    "ci_hi": "",
                    "cycles": "",
                    "area_cells": "",
                    "seed": seed,
                }
            )
    _emit_rows(rows, CSV_SCHEMA, res)
    return 0


def _cmd_degradation(res: Resolver) -> int:
    seed = int(res.get("seed", 0))
    p_inputs = _float_list(res.get("p_input", "1e-9"))
    batches = _float_list(res.get("batches", "1e3"))
    ecc_sel = res.get("ecc", "both")
    eccs = ("none", "diagonal") if ecc_sel == "both" else (ecc_sel,)
    weight_count = float(res.get("weight_count", 62.4e6))
    block_side = int(res.get("block_side", 16))
    bits_pw = int(res.get("bits_per_weight", 32))
    rows = []
    for ecc in eccs:
        for p_input in p_inputs:
            for t in batches:
                params = NnModelParams(
                    p_input=p_input,
                    batches=t,
                    weight_count=weight_count,
                    block_side=block_side,
                    bits_per_weight=bits_pw,
                )
                point = degradation_point(params, ecc)
                rows.append(
                    {
                        "experiment": "degradation",
                        "mode": "baseline" if ecc == "none" else "ecc-diagonal",
                        "p_input": p_input,
                        "batches": t,
                        "expected_corrupted": point.expected_corrupted,
                        "weight_count": weight_count,
                        "block_side": block_side,
                        "bits_per_weight": bits_pw,
                        "clamped": point.clamped,
                        "seed": seed,
                    }
                )
    _emit_rows(rows, DEGRADATION_SCHEMA, res)
    return 0


def _cmd_ecc(res: Resolver) -> int:
    action = res.args.action
    seed = int(res.get("seed", 0))
    n = int(res.get("n", 64))
    m = int(res.get("m", 16))
    banks_n = int(res.get("banks", 3))
    density = float(res.get("density", 0.5))
    geom = BlockGeometry(n, m)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))

    if action in ("verify", "inject"):
        xbar = Crossbar(n)
        xbar.cells[:] = (rng.random((n, n)) < density).astype(np.uint8)
        banks = encode(xbar, geom, banks_n)
        flips = int(res.get("flips", 0)) if action == "inject" else 0
        flat = rng.choice(n * n, size=flips, replace=False) if flips else []
        for pos in flat:
            xbar.cells[pos // n, pos % n] ^= 1
        report = verify_and_correct(xbar, banks, geom)
        payload = {
            "action": action,
            "n": n,
            "m": m,
            "banks": banks_n,
            "flips_injected": int(flips),
            "status": report.status(),
            "corrected": report.corrected,
            "ambiguous": report.ambiguous,
            "uncorrectable_blocks": report.uncorrectable,
            "blocks_checked": report.blocks_checked,
            "verify_cycles": report.verify_cycles,
            "seed": seed,
        }
        _emit(json.dumps(payload, indent=2, default=str) + "\n", res.get("out"))
        return 0

    # overhead: run the multiplier wrapped with parity maintenance
    bits = int(res.get("bits", 8))
    rows_n = int(res.get("rows", 32))
    prog = build_multiplier(bits)
    side = max(n, prog.span, rows_n)
    side += (-side) % m  # keep block alignment
    geom = BlockGeometry(side, m)
    xbar = Crossbar(side)
    banks = encode(xbar, geom, banks_n)
    from .microcode import load_inputs

    cfg = FaultConfig(seed=seed)
    stream = FaultStream.from_config(cfg)
    a = stream.rng.integers(0, 1 << bits, size=rows_n, dtype=np.uint64)
    b = stream.rng.integers(0, 1 << bits, size=rows_n, dtype=np.uint64)
    row_ids = np.arange(rows_n)
    load_inputs(prog, xbar, row_ids, {"a": a, "b": b})
    # loading changed the data; re-encode so the run starts from a valid state
    banks = encode(xbar, geom, banks_n)
    flips = int(res.get("flips", 0))
    for pos in rng.choice(side * side, size=flips, replace=False) if flips else []:
        xbar.cells[pos // side, pos % side] ^= 1
    try:
        run = wrap_function_with_ecc(prog, xbar, row_ids, banks, geom, stream)
    except UncorrectableEccError as e:
        payload = {
            "action": "overhead",
            "status": "uncorrectable-abort",
            "uncorrectable_blocks": e.report.uncorrectable,
            "seed": seed,
        }
        _emit(json.dumps(payload, indent=2, default=str) + "\n", res.get("out"))
        return 2
    ok = bool(np.all(run.result.words("product") == a * b))
    payload = {
        "action": "overhead",
        "status": "ok" if ok else "incorrect-output",
        "bits": bits,
        "rows": rows_n,
        "verify_status": run.verify_report.status(),
        "corrected": run.verify_report.corrected,
        "program_cycles": run.program_cycles,
        "ecc_cycles": run.ecc_cycles,
        "overhead_ratio": run.overhead_ratio,
        "total_cycles": run.total_cycles,
        "seed": seed,
    }
    _emit(json.dumps(payload, indent=2, default=str) + "\n", res.get("out"))
    return 0


def _cmd_dump_netlist(res: Resolver) -> int:
    which = res.get("program", "mult")
    bits = int(res.get("bits", 8))
    prog = build_full_adder() if which == "adder" else build_multiplier(bits)
    _emit(dump_program(prog), res.get("out"))
    return 0


def _read_csv_rows(path: str) -> list[dict]:
    import csv as _csv

    try:
        with open(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as e:
        raise ConfigError(f"cannot read {path!r}: {e}") from e
    reader = _csv.DictReader(lines)
    return list(reader)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args.config)
        res = Resolver(parser, args, config)
        handler = {
            "gates": _cmd_gates,
            "mult": _cmd_mult,
            "tmr-sweep": _cmd_tmr_sweep,
            "nn": _cmd_nn,
            "degradation": _cmd_degradation,
            "ecc": _cmd_ecc,
            "dump-netlist": _cmd_dump_netlist,
        }[args.command]
        return handler(res)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
