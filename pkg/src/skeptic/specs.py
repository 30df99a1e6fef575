"""Text grammar for strategies and sources, as used on the command line.

Strategies::

    beta(a,b)            beta-binomial on the count of ones
    block(k,shift,c)     block strategy; shift is an integer or ``all``
    markov(k,a,b)        Markov strategy of order k
    universal(kmax)      mixture of blocks and Markov strategies up to kmax

Sources::

    bernoulli(p)
    periodic(0110)
    markov_chain(p0,p1,...)   P(1 | context), contexts in binary order
    bits(0110...)             a literal finite sequence
    file(path)                a bit file written by ``save_bits``

Trailing arguments may be left out and take the defaults shown by
:data:`STRATEGY_DEFAULTS`.  Errors carry the character position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .game import Predictor, load_bits
from .sources import BitSource, bernoulli, from_bits, markov_chain, periodic
from .strategies import BetaBinomial, BlockPredictor, MarkovPredictor, shift_combined_block, universal

__all__ = ["SpecError", "Spec", "parse", "parse_strategy", "parse_source", "STRATEGY_DEFAULTS"]

STRATEGY_DEFAULTS = {
    "beta": ("1", "1"),
    "block": ("2", "all", "1"),
    "markov": ("1", "1", "1"),
    "universal": ("8",),
}
_SOURCE_ARITY = {"bernoulli": (1, 1), "periodic": (1, 1), "markov_chain": (1, None), "bits": (1, 1), "file": (1, 1)}

_CALL = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(")


class SpecError(ValueError):
    """Malformed specification; ``pos`` is the 0-based offending column."""

    def __init__(self, text: str, pos: int, message: str):
        self.text = text
        self.pos = pos
        self.message = message
        super().__init__(f"{message} at position {pos}\n  {text}\n  {' ' * pos}^")


@dataclass(frozen=True)
class Spec:
    name: str
    args: tuple
    positions: tuple
    text: str

    def error(self, i: int, message: str) -> SpecError:
        pos = self.positions[i] if i < len(self.positions) else len(self.text)
        return SpecError(self.text, pos, message)


def parse(text: str) -> Spec:
    """Split ``name(arg, ...)`` into its parts, keeping argument columns."""
    m = _CALL.match(text)
    if not m:
        raise SpecError(text, len(text) - len(text.lstrip()), "expected name(...)")
    close = text.rfind(")")
    if close < m.end() - 1:
        raise SpecError(text, len(text), "missing ')'")
    if text[close + 1 :].strip():
        raise SpecError(text, close + 1, "unexpected text after ')'")
    body = text[m.end() : close]
    args, positions = [], []
    if body.strip():
        start = m.end()
        for piece in body.split(","):
            stripped = piece.strip()
            col = start + (len(piece) - len(piece.lstrip()))
            if not stripped:
                raise SpecError(text, col, "empty argument")
            args.append(stripped)
            positions.append(col)
            start += len(piece) + 1
    return Spec(m.group(1), tuple(args), tuple(positions), text)


def _number(spec: Spec, i: int, kind=float, positive=False):
    try:
        v = kind(spec.args[i])
    except ValueError:
        raise spec.error(i, f"expected {'an integer' if kind is int else 'a number'}, got {spec.args[i]!r}") from None
    if positive and not v > 0:
        raise spec.error(i, "must be positive")
    return v


def parse_strategy(text: str, rho: float) -> Predictor:
    """Build the predictor named by ``text`` for risk-neutral ``rho``."""
    spec = parse(text)
    if spec.name not in STRATEGY_DEFAULTS:
        raise SpecError(text, text.find(spec.name), f"unknown strategy {spec.name!r}; expected one of {sorted(STRATEGY_DEFAULTS)}")
    defaults = STRATEGY_DEFAULTS[spec.name]
    if len(spec.args) > len(defaults):
        raise spec.error(len(defaults), f"{spec.name} takes at most {len(defaults)} arguments")
    full = Spec(spec.name, spec.args + defaults[len(spec.args) :], spec.positions, text)
    try:
        if full.name == "beta":
            return BetaBinomial(_number(full, 0, positive=True), _number(full, 1, positive=True))
        if full.name == "markov":
            k = _number(full, 0, int)
            if k < 0:
                raise full.error(0, "order must be >= 0")
            pred = MarkovPredictor(k, rho, _number(full, 1, positive=True), _number(full, 2, positive=True))
            return pred
        if full.name == "block":
            k = _number(full, 0, int)
            if k < 1:
                raise full.error(0, "block length must be >= 1")
            c = _number(full, 2, positive=True)
            if full.args[1] == "all":
                return shift_combined_block(k, rho, c)
            shift = _number(full, 1, int)
            if not 0 <= shift < k:
                raise full.error(1, f"shift must lie in [0, {k})")
            return BlockPredictor(k, shift, rho, c)
        k_max = _number(full, 0, int)
        if k_max < 1:
            raise full.error(0, "kmax must be >= 1")
        return universal(k_max, rho)
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(text, spec.positions[0] if spec.positions else len(text), str(exc)) from None


def parse_source(text: str, seed: int = 0) -> BitSource:
    """Build the bit source named by ``text``."""
    spec = parse(text)
    if spec.name not in _SOURCE_ARITY:
        raise SpecError(text, text.find(spec.name), f"unknown source {spec.name!r}; expected one of {sorted(_SOURCE_ARITY)}")
    lo, hi = _SOURCE_ARITY[spec.name]
    if len(spec.args) < lo:
        raise spec.error(len(spec.args), f"{spec.name} needs at least {lo} argument")
    if hi is not None and len(spec.args) > hi:
        raise spec.error(hi, f"{spec.name} takes {hi} argument")
    try:
        if spec.name == "bernoulli":
            p = _number(spec, 0)
            if not 0 <= p <= 1:
                raise spec.error(0, "probability must lie in [0, 1]")
            return bernoulli(p, seed)
        if spec.name == "markov_chain":
            table = [_number(spec, i) for i in range(len(spec.args))]
            for i, t in enumerate(table):
                if not 0 <= t <= 1:
                    raise spec.error(i, "probability must lie in [0, 1]")
            if len(table) & (len(table) - 1):
                raise spec.error(0, "table length must be a power of two")
            return markov_chain(table, seed)
        if spec.name in ("periodic", "bits"):
            pattern = spec.args[0]
            bad = re.search(r"[^01]", pattern)
            if bad:
                raise SpecError(text, spec.positions[0] + bad.start(), "pattern may contain only 0 and 1")
            return periodic(pattern) if spec.name == "periodic" else from_bits(pattern)
        try:
            return from_bits(load_bits(spec.args[0]).bits)
        except OSError as exc:
            raise spec.error(0, f"cannot read bit file: {exc.strerror}") from None
    except SpecError:
        raise
    except ValueError as exc:
        raise spec.error(0, str(exc)) from None
