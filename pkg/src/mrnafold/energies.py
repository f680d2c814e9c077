"""Stacking free-energy tables keyed by the 4-base stack context."""

from __future__ import annotations

import importlib.resources

from .errors import MrnafoldError, UnknownStackContextError

VALID_PAIRS = frozenset({("A", "U"), ("U", "A"), ("C", "G"), ("G", "C"), ("G", "U"), ("U", "G")})
BASES = ("A", "C", "G", "U")


class EnergyTable:
    """Maps a stack context "XY/WZ" (outer pair X-W, inner pair Y-Z) to a
    free energy. Lookups of unknown contexts raise at build time rather
    than defaulting silently."""

    def __init__(self, values: dict[str, float]):
        for ctx in values:
            _check_context(ctx)
        self._values = dict(values)

    def __contains__(self, context: str) -> bool:
        return context in self._values

    def __len__(self) -> int:
        return len(self._values)

    def lookup(self, context: str) -> float:
        try:
            return self._values[context]
        except KeyError:
            raise UnknownStackContextError(context) from None

    def stack_energy(self, outer_5p: str, inner_5p: str, outer_3p: str, inner_3p: str) -> float:
        return self.lookup(f"{outer_5p}{inner_5p}/{outer_3p}{inner_3p}")

    @classmethod
    def from_text(cls, text: str) -> "EnergyTable":
        values: dict[str, float] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise MrnafoldError(f"energy table line {lineno}: expected 'CONTEXT VALUE', got {raw!r}")
            ctx, val = parts
            try:
                values[ctx] = float(val)
            except ValueError:
                raise MrnafoldError(f"energy table line {lineno}: bad value {val!r}") from None
        return cls(values)

    @classmethod
    def from_file(cls, path) -> "EnergyTable":
        with open(path, encoding="utf-8") as f:
            return cls.from_text(f.read())

    @classmethod
    def default(cls) -> "EnergyTable":
        text = importlib.resources.files("mrnafold").joinpath("data/stack_energies.txt").read_text()
        return cls.from_text(text)


def _check_context(ctx: str) -> None:
    if len(ctx) != 5 or ctx[2] != "/":
        raise MrnafoldError(f"malformed stack context {ctx!r}, expected form 'XY/WZ'")
    for c in ctx.replace("/", ""):
        if c not in BASES:
            raise MrnafoldError(f"stack context {ctx!r} contains a non-RNA base")
