"""Regenerate the scripted-provider fixtures for the design stories.

Runs the full design loop against a rule-based authoring provider,
recording every prompt/response exchange, then freezes the exchanges as
transcript fixtures and verifies that a scripted replay reproduces the
run byte-for-byte.  Rerun this whenever anything feeding the prompts
changes (part fixtures, templates, bounds, optimizer internals): replay
is keyed on prompt hashes, so a drifted prompt shows up as a missing
transcript entry, not a silent divergence.

Usage: python3 scripts/record_transcripts.py [--out-dir PKG_FIXTURES]
"""

from __future__ import annotations

import argparse
import json
import re
import shutil
import sys
import tempfile
from pathlib import Path

from analogkit.fixtures.circuits import build_store
from analogkit.pipeline import design_loop
from analogkit.simbridge import BackendConfig
from analogkit.sizing import BOConfig
from analogkit.strategy import (DesignSpec, MetricTarget, ScriptedProvider,
                                spec_to_dict, transcript_entry)

# One shared optimizer budget keeps the stories quick and reproducible.
BO = BOConfig(n_init=20, n_iter=30, budget=2000, seed=11)

TWO_STAGE = """\
ANALYSIS:
Eighty decibels of differential gain is beyond a single simple stage, so
cascade two: a differential pair with a mirror load senses the inputs,
and a common-source stage supplies the remaining gain.  Two stages need
pole splitting, so bridge them with a series RC, and add a current
reference to set the tail bias.
STRATEGY:
- block: stage-1
  input: differential input pair
  load: pmos current mirror
- block: stage-2
  type: common source amplifier
- block: bias
  function: bias generation
- block: compensation
  type: miller compensation
"""

TELESCOPIC = """\
ANALYSIS:
The previous two-stage attempt topped out below the gain requirement, so
the first stage itself must contribute more: stacking cascodes on the
input pair multiplies its output resistance without adding a third pole.
Keep the common-source second stage, the RC bridge, and the current
reference.
STRATEGY:
- block: stage-1
  input: differential input pair
  load: cascoded pmos mirror
  gain: high
- block: stage-2
  type: common source amplifier
- block: bias
  function: bias generation
- block: compensation
  type: miller compensation
"""

LATCH = """\
ANALYSIS:
Sub-millivolt offset at sub-nanosecond decision speed rules out a static
preamplifier chain: a clocked regenerative latch gives that speed with
no standing current, and a differential input pair keeps the sensed
offset low.
STRATEGY:
- block: stage-1
  family: latch comparator
  input: differential input pair
"""


class Author:
    """Deterministic stand-in for a live model during recording."""

    def __init__(self, strategies: list[str], tie_pick: str = ""):
        self.strategies = list(strategies)
        self.tie_pick = tie_pick

    def complete(self, prompt: str) -> str:
        if "Convert the circuit block description below" in prompt:
            desc = re.search(r"description: (.+)\ntriplets:\s*$",
                             prompt).group(1)
            return "\n".join(
                f"<_, {k.strip()}, {v.strip()}>"
                for k, v in (pair.split("=", 1)
                             for pair in desc.split(";")))
        if "CANDIDATES:" in prompt:
            return self.tie_pick
        # strategy request: fewshot count tells us which attempt this is
        attempt = prompt.count("EXAMPLE\n") - 1
        return self.strategies[min(attempt, len(self.strategies) - 1)]


class Recorder:
    def __init__(self, inner):
        self.inner = inner
        self.log: list[dict] = []

    def complete(self, prompt: str) -> str:
        response = self.inner.complete(prompt)
        record = transcript_entry(prompt, response)
        record["prompt"] = prompt  # for human inspection only
        self.log.append(record)
        return response


def opamp_spec() -> DesignSpec:
    return DesignSpec(
        circuit_class="operational amplifier",
        targets=(MetricTarget("dm gain", ">", 80.0, "dB"),
                 MetricTarget("cmrr", ">", 80.0, "dB"),
                 MetricTarget("psrr", ">", 80.0, "dB"),
                 MetricTarget("gbw", ">", 1e7, "Hz"),
                 MetricTarget("pm", ">", 60.0, "deg")),
        environment={"load capacitance": "100p", "supply": "1.8"})


def comparator_spec() -> DesignSpec:
    return DesignSpec(
        circuit_class="comparator",
        targets=(MetricTarget("offset voltage", "<", 5e-4, "V"),
                 MetricTarget("propagation delay", "<", 2e-9, "s"),
                 MetricTarget("power", "<", 1.5e-4, "W")),
        environment={"supply": "1.2", "clock": "500e6"})


STORIES = {
    "opamp_design": (
        opamp_spec,
        BackendConfig(kind="synthetic", model="surrogate_opamp"),
        lambda: Author([TWO_STAGE, TELESCOPIC]),
    ),
    "comparator_design": (
        comparator_spec,
        BackendConfig(kind="synthetic", model="surrogate_comparator"),
        lambda: Author([LATCH], tie_pick="strong_arm_latch"),
    ),
}


def run_story(name, spec, backend, provider, workdir) -> dict:
    store = build_store()
    report = design_loop(spec, store, provider, backend, BO,
                         Path(workdir) / name, max_attempts=3)
    if report.status != "met":
        raise SystemExit(f"{name}: authoring run ended {report.status} "
                         f"({report.reason}); refusing to freeze")
    files = {}
    for path in sorted((Path(workdir) / name).rglob("*")):
        if path.is_file():
            files[str(path.relative_to(Path(workdir) / name))] = \
                path.read_bytes()
    return files


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out-dir",
        default=str(Path(__file__).resolve().parents[1]
                    / "src" / "analogkit" / "fixtures"))
    args = parser.parse_args(argv)
    fixtures = Path(args.out_dir)

    workdir = Path(tempfile.mkdtemp(prefix="record_"))
    try:
        for name, (spec_fn, backend, author_fn) in STORIES.items():
            spec = spec_fn()
            recorder = Recorder(author_fn())
            recorded = run_story(name, spec, backend, recorder,
                                 workdir / "record")

            transcript_path = fixtures / "transcripts" / f"{name}.json"
            with open(transcript_path, "w", encoding="utf-8") as fh:
                json.dump(recorder.log, fh, indent=2, sort_keys=True)
                fh.write("\n")

            spec_name = name.replace("_design", "_spec")
            with open(fixtures / "specs" / f"{spec_name}.json", "w",
                      encoding="utf-8") as fh:
                json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)
                fh.write("\n")

            replayed = run_story(name, spec,
                                 backend, ScriptedProvider(transcript_path),
                                 workdir / "replay")
            if recorded != replayed:
                diff = [k for k in recorded
                        if recorded[k] != replayed.get(k)]
                raise SystemExit(f"{name}: replay diverged in {diff}")
            print(f"{name}: {len(recorder.log)} exchanges frozen, "
                  "replay byte-identical")
    finally:
        shutil.rmtree(workdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
