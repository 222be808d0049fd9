"""Stability-property atoms, Horn rules with context flags, and witnessed non-implications.

The rule base is plain text; :func:`seed_kb` loads the shipped one. Closure is
forward chaining in breadth-first rounds, so every derived atom keeps a
shortest derivation, and its trace lists rule applications in an order that
replays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

__all__ = [
    "ATOMS",
    "BLOCKED_NO",
    "CONTEXTS",
    "Conflict",
    "Deduction",
    "DERIVED_YES",
    "KnowledgeBase",
    "NonImplication",
    "QueryResult",
    "Rule",
    "RuleParseError",
    "UNKNOWN",
    "UnknownAtomError",
    "closure",
    "consistency_check",
    "load_rules",
    "parse_atoms",
    "query",
    "seed_kb",
]

# id -> (meaning, where it is defined, gain class note)
ATOMS: dict[str, tuple[str, str, str]] = {
    "ISS": ("input-to-state stable", "Def 11", "gain in Kinf"),
    "LISS": ("locally input-to-state stable", "Def 12", "gain in Kinf"),
    "sISS": ("strongly input-to-state stable", "Def sISS", "gain in K, state-indexed decay"),
    "UAG": ("uniform asymptotic gain", "Def 8", "gain in Kinf"),
    "sAG": ("strong asymptotic gain", "Def 8", "gain in Kinf"),
    "AG": ("asymptotic gain", "Def 8", "gain in Kinf"),
    "ULIM": ("uniform limit property", "Def 9", "gain in Kinf"),
    "sLIM": ("strong limit property", "Def 9", "gain in Kinf"),
    "LIM": ("limit property", "Def 9", "gain in Kinf"),
    "UGS": ("uniformly globally stable", "Def 7", "sigma in Kinf, gain in Kinf or zero"),
    "ULS": ("uniformly locally stable", "Def 7", "sigma in Kinf, gain in Kinf or zero"),
    "UGB": ("uniformly globally bounded", "Def 7", "sigma in Kinf, gain in Kinf or zero, plus a constant"),
    "BRS": ("bounded reachability sets", "Def 5", "none"),
    "CEP": ("continuous at the equilibrium", "Def 4", "none"),
    "FC": ("forward complete", "Def 1", "none"),
    "ISS_LF": ("has a coercive ISS Lyapunov function", "Def 13", "frames in Kinf, sigma in K"),
    "ncISS_LF": ("has a non-coercive ISS Lyapunov function", "Def 23", "upper frame in Kinf, sigma in K"),
    "0-UGAS": ("zero-input uniformly globally asymptotically stable", "Def 6", "KL bound"),
    "0-UAS": ("zero-input uniformly locally asymptotically stable", "Def 6", "KL bound near zero"),
    "0-GAS": ("zero-input globally asymptotically stable", "Def 6", "none"),
    "0-UGATT": ("zero-input uniformly globally attractive", "Def 6", "none"),
    "0-GATT": ("zero-input globally attractive", "Def 6", "none"),
    "0-UGS": ("zero-input uniformly globally stable", "Def 6", "sigma in Kinf"),
    "0-ULS": ("zero-input uniformly locally stable", "Def 6", "sigma in Kinf"),
    "0-LIM": ("zero-input limit property", "Def 6", "none"),
    "0-ULIM": ("zero-input uniform limit property", "Def 6", "none"),
    "LF_coercive": ("has a coercive Lyapunov function (no inputs)", "Def 13", "frames in Kinf"),
    "LF_noncoercive": ("has a non-coercive Lyapunov function (no inputs)", "Prop 24", "upper frame in Kinf"),
}

CONTEXTS = ("General", "FiniteDim", "Linear", "SemilinearDiamond", "NoInput", "BiLipschitz")

DERIVED_YES = "DerivedYes"
BLOCKED_NO = "BlockedNo"
UNKNOWN = "Unknown"


class UnknownAtomError(ValueError):
    pass


class RuleParseError(ValueError):
    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


def _check_atoms(atoms: Iterable[str]) -> frozenset[str]:
    out = frozenset(atoms)
    bad = sorted(a for a in out if a not in ATOMS)
    if bad:
        raise UnknownAtomError(f"unknown atom(s): {', '.join(bad)}")
    return out


def _check_context(ctx: Iterable[str]) -> frozenset[str]:
    out = frozenset(ctx) | {"General"}
    bad = sorted(c for c in out if c not in CONTEXTS)
    if bad:
        raise ValueError(f"unknown context flag(s): {', '.join(bad)}; known: {', '.join(CONTEXTS)}")
    return out


def parse_atoms(text: str) -> frozenset[str]:
    """Comma or ``&`` separated atom ids."""
    return _check_atoms(a.strip() for a in re.split(r"[,&]", text) if a.strip())


@dataclass(frozen=True)
class Rule:
    premises: frozenset[str]
    conclusions: frozenset[str]
    context: frozenset[str]
    location: str
    note: str = ""
    line: int = 0

    def applies(self, flags: frozenset[str]) -> bool:
        return bool(self.context & flags)

    def text(self) -> str:
        return (
            f"{','.join(sorted(self.context))}: {' & '.join(sorted(self.premises))} => "
            f"{', '.join(sorted(self.conclusions))} @ {self.location}"
        )


@dataclass(frozen=True)
class NonImplication:
    """A system with every atom in ``premises`` that lacks ``non_conclusion``.

    ``context`` lists the flags the witness system satisfies.
    """

    premises: frozenset[str]
    non_conclusion: str
    witness: str
    context: frozenset[str]
    location: str = ""
    note: str = ""
    line: int = 0

    def text(self) -> str:
        return (
            f"{' & '.join(sorted(self.premises))} !=> {self.non_conclusion} "
            f"witness:{self.witness} @ {self.location}"
        )


@dataclass(frozen=True)
class KnowledgeBase:
    rules: tuple[Rule, ...] = ()
    non_implications: tuple[NonImplication, ...] = ()


@dataclass(frozen=True)
class Deduction:
    atom: str
    trace: tuple[Rule, ...]
    depth: int

    @property
    def given(self) -> bool:
        return not self.trace


_LINE_RE = re.compile(r"^(?P<ctx>[A-Za-z,\s]+):(?P<body>.*?)@(?P<cite>.*)$")
_CITE_RE = re.compile(r'^\s*(?:witness:(?P<w>[^\s"|]+))?\s*(?:"(?P<loc>[^"]*)")?\s*(?:\|\s*"(?P<note>[^"]*)")?\s*$')


def _split_atoms(text: str, sep: str, line_no: int) -> frozenset[str]:
    parts = [p.strip() for p in text.split(sep)]
    if not parts or any(not p for p in parts):
        raise RuleParseError(line_no, f"empty atom in {text.strip()!r}")
    try:
        return _check_atoms(parts)
    except UnknownAtomError as exc:
        raise RuleParseError(line_no, str(exc)) from None


def load_rules(text: str) -> KnowledgeBase:
    """Parse rule text; errors name the offending line."""
    rules, nis = [], []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise RuleParseError(no, f"expected 'CTX: premises => conclusions @ citation', got {raw.strip()!r}")
        flags = [c.strip() for c in m.group("ctx").split(",") if c.strip()]
        bad = [c for c in flags if c not in CONTEXTS]
        if not flags or bad:
            raise RuleParseError(no, f"unknown context flag(s) {bad or flags!r}")
        cm = _CITE_RE.match(m.group("cite"))
        if not cm or not (cm.group("loc") or cm.group("note") or cm.group("w")):
            raise RuleParseError(no, "citation missing or malformed")
        body = m.group("body")
        ctx = frozenset(flags)
        loc, note = cm.group("loc") or "", cm.group("note") or ""
        if "!=>" in body:
            lhs, rhs = body.split("!=>", 1)
            target = _split_atoms(rhs, ",", no)
            if len(target) != 1:
                raise RuleParseError(no, "a non-implication names exactly one atom")
            if not cm.group("w"):
                raise RuleParseError(no, "a non-implication needs witness:<id>")
            nis.append(NonImplication(_split_atoms(lhs, "&", no), next(iter(target)), cm.group("w"), ctx, loc, note, no))
        elif "=>" in body:
            lhs, rhs = body.split("=>", 1)
            if cm.group("w"):
                raise RuleParseError(no, "witness given on an implication")
            rules.append(Rule(_split_atoms(lhs, "&", no), _split_atoms(rhs, ",", no), ctx, loc, note, no))
        else:
            raise RuleParseError(no, "missing '=>' or '!=>'")
    return KnowledgeBase(tuple(rules), tuple(nis))


def seed_kb() -> KnowledgeBase:
    return load_rules(resources.files(__name__).joinpath("seed_rules.txt").read_text(encoding="utf-8"))


def closure(kb: KnowledgeBase, facts: Iterable[str], context: Iterable[str] = ()) -> dict[str, Deduction]:
    """Least fixed point of the applicable rules, with a shortest derivation per atom.

    Rules fire in rounds; an atom first reached in round ``d`` has depth
    ``d``. Within a round, rules fire in file order, so results are
    deterministic.
    """
    facts = _check_atoms(facts)
    flags = _check_context(context)
    rules = [r for r in kb.rules if r.applies(flags)]
    via: dict[str, Rule | None] = {a: None for a in sorted(facts)}
    depth = {a: 0 for a in facts}
    d = 0
    while True:
        d += 1
        known = set(via)
        fresh: dict[str, Rule] = {}
        for r in rules:
            if r.premises <= known:
                for c in sorted(r.conclusions):
                    if c not in known and c not in fresh:
                        fresh[c] = r
        if not fresh:
            break
        for c, r in fresh.items():
            via[c] = r
            depth[c] = d
    out = {}
    for a in via:
        out[a] = Deduction(a, tuple(_trace(a, via)), depth[a])
    return out


def _trace(atom: str, via: dict[str, Rule | None]) -> list[Rule]:
    seq: list[Rule] = []
    seen: set[Rule] = set()

    def visit(a):
        r = via[a]
        if r is None or r in seen:
            return
        for p in sorted(r.premises):
            visit(p)
        seen.add(r)
        seq.append(r)

    visit(atom)
    return seq


@dataclass(frozen=True)
class QueryResult:
    status: str
    target: str
    trace: tuple[Rule, ...] = ()
    blocked_by: NonImplication | None = None

    def text(self) -> str:
        if self.status == DERIVED_YES:
            lines = [f"{DERIVED_YES} {self.target}"]
            lines += [f"  {i}. {r.text()}" for i, r in enumerate(self.trace, 1)]
            if not self.trace:
                lines.append("  (given)")
            return "\n".join(lines)
        if self.status == BLOCKED_NO:
            ni = self.blocked_by
            return f"{BLOCKED_NO} witness:{ni.witness}\n  {ni.text()}"
        return f"{UNKNOWN} {self.target}"


def _witness_lacks(kb: KnowledgeBase, ni: NonImplication, target: str) -> bool:
    """Whether the witness can be shown to lack ``target``: adding it would derive the missing atom."""
    if target == ni.non_conclusion:
        return True
    base = set(closure(kb, ni.premises, ni.context))
    return ni.non_conclusion in closure(kb, base | {target}, ni.context)


def query(kb: KnowledgeBase, facts: Iterable[str], target: str, context: Iterable[str] = ()) -> QueryResult:
    """Derive ``target`` from ``facts``, or find a witness that blocks it.

    A non-implication blocks when its witness satisfies the query context,
    has every fact (after closing its own properties) and lacks the target,
    either directly or because the target would derive an atom the witness
    lacks.
    """
    facts = _check_atoms(facts)
    (target,) = _check_atoms([target])
    flags = _check_context(context)
    cl = closure(kb, facts, flags)
    if target in cl:
        return QueryResult(DERIVED_YES, target, cl[target].trace)
    for ni in kb.non_implications:
        if not flags <= ni.context | {"General"}:
            continue
        if facts <= set(closure(kb, ni.premises, ni.context)) and _witness_lacks(kb, ni, target):
            return QueryResult(BLOCKED_NO, target, (), ni)
    return QueryResult(UNKNOWN, target)


@dataclass(frozen=True)
class Conflict:
    atom: str
    trace: tuple[Rule, ...]

    def text(self) -> str:
        return f"{self.atom} derived but witnessed false via " + "; ".join(r.text() for r in self.trace)


def consistency_check(
    kb: KnowledgeBase,
    witnessed_true: Iterable[str],
    witnessed_false: Iterable[str],
    context: Iterable[str] = (),
) -> list[Conflict]:
    """Atoms witnessed false yet derivable from those witnessed true."""
    t, f = _check_atoms(witnessed_true), _check_atoms(witnessed_false)
    if t & f:
        raise ValueError(f"atoms witnessed both true and false: {', '.join(sorted(t & f))}")
    cl = closure(kb, t, context)
    return [Conflict(a, cl[a].trace) for a in sorted(f) if a in cl]
