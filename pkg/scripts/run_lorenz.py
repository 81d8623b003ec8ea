#!/usr/bin/env python3
"""End-to-end demo: compile the chaotic-oscillator program, route it onto
the small machine profile, and simulate both the routed hardware and the
polynomial reference, writing CSV traces next to this script's output dir.

Usage: python3 scripts/run_lorenz.py [out_dir]
"""

import sys
from pathlib import Path

from autopatch import build_circuit, compile_source, lucidac_spec, normalize
from autopatch.bitstream import encode
from autopatch.router import format_report, route_design
from autopatch.sim import SimSettings, build_dynamics, emit_traces, max_abs_deviation, run, run_reference


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("lorenz_out")
    source = (Path(__file__).resolve().parent.parent / "programs" / "lorenz.odedsl").read_text()

    program = compile_source(source)
    system = normalize(program)
    graph = build_circuit(system, program)
    design = route_design(graph, lucidac_spec())
    print(format_report(design.report))

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "lorenz.acfg").write_bytes(encode(design.config))

    settings = SimSettings(dt=1e-3, t_end=100.0)
    model = build_dynamics(design.config)
    trace = run(model, model.initial, settings)
    files = emit_traces(trace, program, out_dir)
    print(f"wrote {', '.join(str(f) for f in files)}")
    print("peaks:", {name: round(v, 6) for name, v in sorted(trace.peaks.items())})

    exact = build_dynamics(design.config, lane_weights=design.lane_weight_map())
    short = SimSettings(dt=1e-3, t_end=10.0)
    deviation = max_abs_deviation(run(exact, exact.initial, short), run_reference(system, short))
    print(f"bypass-vs-reference deviation over [0, 10]: {deviation:.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
