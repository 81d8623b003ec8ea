"""Three-stage switch fabric: geometry, greedy routing, blocking analysis.

The fabric is a classic input/middle/output block hierarchy.  Within a
stage every block is a full crossbar of `inputs_per_block x
outputs_per_block` switches; the stage ratio e = outputs/inputs makes a
block a concentrator (e < 1), an expander (e > 1), or square.  Inter-stage
wiring is the standard one: output link j of input block i lands on input
i of middle block j, and output link k of middle block j lands on input j
of output block k.  Extra output-stage inputs beyond the number of middle
blocks are unconnected spares.

Every inter-stage link carries at most one route, and every fabric output
terminates at most one route; a fabric input may source any number of
routes (fan-out happens inside its input block).  Routing is greedy
first-fit over middle blocks with no rearrangement: for an analog program
a blocked request means the program cannot be patched at all, so the
interesting output is the blocking verdict itself.
"""

from __future__ import annotations

import copy
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class StageSpec:
    blocks: int
    inputs_per_block: int
    outputs_per_block: int

    def __post_init__(self):
        if min(self.blocks, self.inputs_per_block, self.outputs_per_block) < 1:
            raise ValueError("stage dimensions must be positive")

    @property
    def expansion_ratio(self) -> float:
        """outputs/inputs; < 1 concentrator, > 1 expander, 1 square."""
        return self.outputs_per_block / self.inputs_per_block

    def switch_count(self) -> int:
        return self.blocks * self.inputs_per_block * self.outputs_per_block


@dataclass(frozen=True)
class FabricSpec:
    input: StageSpec
    middle: StageSpec
    output: StageSpec

    def check_wirable(self) -> None:
        """Verify the stages can be joined by the standard wiring; extra
        middle/output-stage inputs beyond that are unconnected spares."""
        if self.input.outputs_per_block > self.middle.blocks:
            raise ValueError("input blocks have more output links than middle blocks")
        if self.input.blocks > self.middle.inputs_per_block:
            raise ValueError("middle blocks have fewer inputs than there are input blocks")
        if self.middle.outputs_per_block > self.output.blocks:
            raise ValueError("middle blocks have more output links than output blocks")
        if self.middle.blocks > self.output.inputs_per_block:
            raise ValueError("output blocks have fewer inputs than there are middle blocks")

    @property
    def total_inputs(self) -> int:
        return self.input.blocks * self.input.inputs_per_block

    @property
    def total_outputs(self) -> int:
        return self.output.blocks * self.output.outputs_per_block


def simstar_spec() -> FabricSpec:
    """The 320-in/512-out production geometry: twenty 16x20 input blocks,
    twenty 20x32 middle blocks, thirty-two 22x16 output blocks."""
    return FabricSpec(
        input=StageSpec(20, 16, 20),
        middle=StageSpec(20, 20, 32),
        output=StageSpec(32, 22, 16),
    )


def switch_count(spec: FabricSpec) -> int:
    """Total crosspoint switches over all three stages."""
    return spec.input.switch_count() + spec.middle.switch_count() + spec.output.switch_count()


@dataclass(frozen=True)
class RoutedPath:
    input: int
    output: int
    middle_block: int


@dataclass(frozen=True)
class Blocked:
    """No middle block had both hops free; lists the blocks that were
    unusable for this request."""

    saturated_middle_blocks: tuple[int, ...]


class OutputBusyError(Exception):
    pass


class FabricState:
    """Live link occupancy and routes of one fabric.

    Mutating methods (`route_request`, `route_fanout`, `remove_route`)
    either commit completely or leave the state untouched.
    """

    def __init__(self, spec: FabricSpec):
        spec.check_wirable()
        self.spec = spec
        # in_mid[i][j]: link from input block i to middle block j is carrying a route
        self.in_mid = [[False] * spec.middle.blocks for _ in range(spec.input.blocks)]
        # mid_out[j][b]: link from middle block j to output block b is carrying a route
        self.mid_out = [[False] * spec.output.blocks for _ in range(spec.middle.blocks)]
        self.output_used = [False] * spec.total_outputs
        self.routes: list[RoutedPath] = []

    def input_block(self, input: int) -> int:
        if not 0 <= input < self.spec.total_inputs:
            raise IndexError(f"input {input} outside [0, {self.spec.total_inputs})")
        return input // self.spec.input.inputs_per_block

    def output_block(self, output: int) -> int:
        if not 0 <= output < self.spec.total_outputs:
            raise IndexError(f"output {output} outside [0, {self.spec.total_outputs})")
        return output // self.spec.output.outputs_per_block

    def route_request(self, input: int, output: int):
        """Route input -> output through the lowest free middle block.

        Returns a RoutedPath, or Blocked (state unchanged) when every
        middle block lacks a free link on one of the two hops.
        """
        ib = self.input_block(input)
        ob = self.output_block(output)
        if self.output_used[output]:
            raise OutputBusyError(f"output {output} already carries a route")
        if ob >= self.spec.middle.outputs_per_block:
            return Blocked(())  # no middle block has a link to this output block
        in_links = self.in_mid[ib]
        saturated = []
        # only the first input.outputs_per_block middle blocks are wired to
        # this input block (equal to middle.blocks in the usual geometry)
        for j in range(min(self.spec.middle.blocks, self.spec.input.outputs_per_block)):
            if in_links[j] or self.mid_out[j][ob]:
                saturated.append(j)
                continue
            in_links[j] = True
            self.mid_out[j][ob] = True
            self.output_used[output] = True
            path = RoutedPath(input, output, j)
            self.routes.append(path)
            return path
        return Blocked(tuple(saturated))

    def remove_route(self, path: RoutedPath) -> None:
        """Tear a route down, freeing its links and output."""
        self.routes.remove(path)
        self.in_mid[self.input_block(path.input)][path.middle_block] = False
        self.mid_out[path.middle_block][self.output_block(path.output)] = False
        self.output_used[path.output] = False

    def route_fanout(self, input: int, outputs: list[int]):
        """Route one input to several outputs as repeated unicast paths.

        All-or-nothing: on any Blocked the paths routed so far are torn
        down again and the Blocked result is returned.
        """
        done: list[RoutedPath] = []
        for output in outputs:
            result = self.route_request(input, output)
            if isinstance(result, Blocked):
                for path in reversed(done):
                    self.remove_route(path)
                return result
            done.append(result)
        return done

    def check_invariants(self) -> None:
        """Assert capacity and conservation invariants (test hook)."""
        used_outputs = sum(self.output_used)
        assert len(self.routes) == used_outputs, "routes != occupied outputs"
        in_busy = sum(sum(row) for row in self.in_mid)
        out_busy = sum(sum(row) for row in self.mid_out)
        assert in_busy == len(self.routes) == out_busy, "link occupancy out of step with routes"
        seen = set()
        for path in self.routes:
            key = (self.input_block(path.input), path.middle_block)
            assert key not in seen, f"link {key} carries two routes"
            seen.add(key)

    def snapshot(self):
        return copy.deepcopy((self.in_mid, self.mid_out, self.output_used, self.routes))


@dataclass(frozen=True)
class ExperimentResult:
    blocked_fraction: float
    mean_routed: float


def blocking_experiment(spec: FabricSpec, load: int, trials: int, seed: int) -> ExperimentResult:
    """Monte Carlo blocking estimate under random request sequences.

    Each trial starts from an empty fabric and issues `load` requests, each
    pairing a uniformly random input with a fresh output drawn (without
    replacement) from the outputs not yet requested this trial; a blocked
    request still consumes its output draw.  Trials are seeded
    independently from (seed, trial index), so results are reproducible
    and trial-parallelizable.  Reports the fraction of trials suffering at
    least one block and the mean number of routed requests per trial.
    """
    if not 0 <= load <= spec.total_outputs:
        raise ValueError(f"load {load} outside [0, {spec.total_outputs}]")
    if trials < 1:
        raise ValueError("need at least one trial")
    blocked_trials = 0
    routed_total = 0
    for trial in range(trials):
        rng = random.Random(f"{seed}:{trial}")
        state = FabricState(spec)
        unused = list(range(spec.total_outputs))
        blocked = False
        for _ in range(load):
            input = rng.randrange(spec.total_inputs)
            k = rng.randrange(len(unused))
            output = unused[k]
            unused[k] = unused[-1]
            unused.pop()
            result = state.route_request(input, output)
            if isinstance(result, Blocked):
                blocked = True
            else:
                routed_total += 1
        if blocked:
            blocked_trials += 1
    return ExperimentResult(blocked_trials / trials, routed_total / trials)
