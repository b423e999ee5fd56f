"""Property oracles and the weighted objective.

The built-in scorers are cheap descriptor formulas with the same ranges and
directions as SA (1 easy .. 10 hard) and QED (0 .. 1). They are stand-ins
for running the pipeline without a chemistry toolkit, not chemistry.

External oracles are child processes speaking a line protocol: one
canonical molecule string per input line, one reply per line in the same
order (a float or ``NA``), flushed after each batch. Anything that does not
produce a number scores 0 and is tallied as a failure.
"""

from __future__ import annotations

import math
import queue
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from latentmol.errors import ConfigError, OracleUnavailable, UnknownProperty
from latentmol.molgraph import MolGraph, canonical_string, descriptors


def pseudo_sa(graph: MolGraph) -> float:
    d = descriptors(graph)
    raw = 1.0 + 0.3 * d.ring_count + 0.08 * d.heavy_atoms + 0.5 * d.branch_index
    return min(max(raw, 1.0), 10.0)


def pseudo_qed(graph: MolGraph) -> float:
    d = descriptors(graph)
    return math.exp(-((d.heavy_atoms - 23) ** 2) / 200.0) * math.exp(-((d.ring_count - 2) ** 2) / 8.0)


BUILTINS = {
    "pseudoSA": pseudo_sa,
    "pseudoQED": pseudo_qed,
    "heavy_atoms": lambda g: float(descriptors(g).heavy_atoms),
    "ring_count": lambda g: float(descriptors(g).ring_count),
}


@dataclass(frozen=True)
class OracleSpec:
    name: str
    builtin: str | None = None
    command: tuple[str, ...] | None = None
    batch_size: int = 64
    timeout: float = 30.0

    def __post_init__(self):
        if (self.builtin is None) == (self.command is None):
            raise ConfigError(f"oracle {self.name!r} needs exactly one of builtin or command")
        if self.builtin is not None and self.builtin not in BUILTINS:
            raise ConfigError(f"unknown builtin oracle {self.builtin!r}; choose from {sorted(BUILTINS)}")
        if self.command is not None and not self.command:
            raise ConfigError(f"oracle {self.name!r} has an empty command")
        if self.batch_size < 1 or not self.timeout > 0:
            raise ConfigError(f"oracle {self.name!r}: batch_size and timeout must be positive")

    @property
    def kind(self) -> str:
        return "builtin" if self.builtin is not None else "external"

    @classmethod
    def parse(cls, data: Mapping) -> "OracleSpec":
        data = dict(data)
        command = data.pop("command", None)
        if isinstance(command, str):
            command = shlex.split(command)
        try:
            return cls(command=tuple(command) if command is not None else None, **data)
        except TypeError as exc:
            raise ConfigError(f"bad oracle spec {data}: {exc}") from None

    def as_dict(self) -> dict:
        out: dict = {"name": self.name}
        if self.builtin is not None:
            out["builtin"] = self.builtin
        else:
            out["command"] = list(self.command)
            out["batch_size"] = self.batch_size
            out["timeout"] = self.timeout
        return out


class ExternalOracle:
    """One child process, started on first use and reused across batches."""

    def __init__(self, spec: OracleSpec):
        self.spec = spec
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue | None = None

    def _start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                list(self.spec.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleUnavailable(f"cannot start oracle {self.spec.name!r}: {exc}") from None
        lines: queue.Queue = queue.Queue()
        stdout = self._proc.stdout

        def pump():
            for line in stdout:
                lines.put(line)
            lines.put(None)

        threading.Thread(target=pump, daemon=True).start()
        self._lines = lines

    def _dead(self) -> None:
        code = self._proc.wait()
        self._proc = None
        raise OracleUnavailable(f"oracle {self.spec.name!r} exited with status {code}")

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None

    def _kill(self) -> None:
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def score_batch(self, molecules: Sequence[str]) -> tuple[list[float], int]:
        if self._proc is None:
            self._start()
        try:
            self._proc.stdin.write("".join(m + "\n" for m in molecules))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._dead()
        values, failures = [], 0
        for k in range(len(molecules)):
            try:
                line = self._lines.get(timeout=self.spec.timeout)
            except queue.Empty:
                # the child is now out of step with us; restart it for the next batch
                self._kill()
                rest = len(molecules) - k
                return values + [0.0] * rest, failures + rest
            if line is None:
                self._dead()
            try:
                value = float(line.strip())
                if not math.isfinite(value):
                    raise ValueError
            except ValueError:
                value, failures = 0.0, failures + 1
            values.append(value)
        return values, failures

    def score(self, molecules: Sequence[str]) -> tuple[list[float], int]:
        values, failures = [], 0
        b = self.spec.batch_size
        for s in range(0, len(molecules), b):
            v, f = self.score_batch(molecules[s : s + b])
            values.extend(v)
            failures += f
        return values, failures


@dataclass
class Scores:
    values: dict[str, np.ndarray]
    failures: dict[str, int] = field(default_factory=dict)

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        return np.stack([self.values[n] for n in names], axis=1)

    def records(self) -> list[dict[str, float]]:
        names = list(self.values)
        n = len(self.values[names[0]]) if names else 0
        return [{k: float(self.values[k][i]) for k in names} for i in range(n)]


class OracleHub:
    """Scores molecule lists with every configured oracle.

    External oracles get one child process per worker; batches are dealt
    round-robin to workers and results merged by position.
    """

    def __init__(self, specs: Sequence[OracleSpec], workers: int = 1):
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate oracle names in {names}")
        self.specs = list(specs)
        self.workers = max(1, int(workers))
        self._children: dict[str, list[ExternalOracle]] = {}

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def _external(self, spec: OracleSpec, molecules: Sequence[str]) -> tuple[np.ndarray, int]:
        children = self._children.setdefault(spec.name, [ExternalOracle(spec) for _ in range(self.workers)])
        values = np.zeros(len(molecules))
        empty = [i for i, m in enumerate(molecules) if not m]
        todo = [i for i, m in enumerate(molecules) if m]
        b = spec.batch_size
        batches = [todo[s : s + b] for s in range(0, len(todo), b)]

        def run(w: int) -> int:
            fails = 0
            for k in range(w, len(batches), len(children)):
                got, f = children[w].score_batch([molecules[i] for i in batches[k]])
                values[batches[k]] = got
                fails += f
            return fails

        if len(children) == 1 or len(batches) <= 1:
            failures = sum(run(w) for w in range(len(children)))
        else:
            with ThreadPoolExecutor(max_workers=len(children)) as pool:
                failures = sum(pool.map(run, range(len(children))))
        return values, failures + len(empty)

    def score(self, graphs: Sequence[MolGraph]) -> Scores:
        out = Scores({})
        strings: list[str] | None = None
        for spec in self.specs:
            if spec.builtin is not None:
                fn = BUILTINS[spec.builtin]
                out.values[spec.name] = np.array([fn(g) for g in graphs], dtype=np.float64)
                out.failures[spec.name] = 0
            else:
                if strings is None:
                    strings = [canonical_string(g) if len(g) else "" for g in graphs]
                out.values[spec.name], out.failures[spec.name] = self._external(spec, strings)
        return out

    def score_matrix(self, graphs: Sequence[MolGraph], names: Sequence[str] | None = None) -> np.ndarray:
        return self.score(graphs).matrix(names or self.names)

    def close(self) -> None:
        for children in self._children.values():
            for c in children:
                c.close()
        self._children.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------- objective


@dataclass(frozen=True)
class Term:
    name: str
    weight: float
    direction: str = "min"

    def __post_init__(self):
        if self.direction not in ("min", "max"):
            raise ConfigError(f"direction must be 'min' or 'max', got {self.direction!r}")
        if not math.isfinite(self.weight):
            raise ConfigError(f"weight for {self.name!r} must be finite")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "min" else -1.0


@dataclass(frozen=True)
class Objective:
    """Weighted sum of properties; lower is better."""

    terms: tuple[Term, ...]

    def __post_init__(self):
        if not self.terms:
            raise ConfigError("an objective needs at least one term")

    @classmethod
    def parse(cls, items: Sequence[Mapping]) -> "Objective":
        try:
            return cls(tuple(Term(**dict(t)) for t in items))
        except TypeError as exc:
            raise ConfigError(f"bad objective term: {exc}") from None

    def as_list(self) -> list[dict]:
        return [{"name": t.name, "weight": t.weight, "direction": t.direction} for t in self.terms]

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def coefficients(self, names: Sequence[str]) -> np.ndarray:
        """Vector ``c`` with ``objective = props @ c`` for columns ordered as ``names``."""
        c = np.zeros(len(names))
        for t in self.terms:
            if t.name not in names:
                raise UnknownProperty(f"objective term {t.name!r} is not among {list(names)}")
            c[list(names).index(t.name)] += t.weight * t.sign
        return c


def objective_value(props: Mapping[str, float | np.ndarray], objective: Objective):
    if not objective.terms:
        raise ConfigError("an objective needs at least one term")
    total = 0.0
    for t in objective.terms:
        if t.name not in props:
            raise UnknownProperty(f"property {t.name!r} missing from {sorted(props)}")
        total = total + t.weight * t.sign * props[t.name]
    return total


def default_objective(binding_affinity: str | None = None) -> Objective:
    terms = [Term("pseudoSA", 1.0 / 9.0, "min"), Term("pseudoQED", 1.0, "max")]
    if binding_affinity is not None:
        terms.append(Term(binding_affinity, 0.1, "min"))
    return Objective(tuple(terms))


def default_oracles() -> list[OracleSpec]:
    return [OracleSpec("pseudoSA", builtin="pseudoSA"), OracleSpec("pseudoQED", builtin="pseudoQED")]
