"""Arrows of the three relation diagrams, as (premises, conclusions, context) triples.

Conjunction nodes are premise sets. An implication arrow holds when every
conclusion atom derives from the premises.
"""

STANDING = frozenset({"BRS", "CEP"})


def _a(text):
    return frozenset(p.strip() for p in text.split("&"))


def _chain(nodes, context):
    return [(_a(a), _a(b), context) for a, b in zip(nodes, nodes[1:])]


# ODE characterisations: everything on the cycle is equivalent
FINITE_DIM = _chain(
    [
        "ISS",
        "UAG",
        "AG & 0-UGAS",
        "AG & LISS",
        "AG & ULS",
        "LIM & 0-ULS",
        "LIM & ULS",
        "LIM & UGS",
        "AG & UGS",
        "ISS_LF",
        "ISS",
    ],
    ("FiniteDim",),
) + [(_a("LIM & ULS"), _a("LIM & 0-ULS"), ("FiniteDim",))]

# general systems; BRS and CEP are standing assumptions of the diagram
_GENERAL_PAIRS = [
    ("ISS", "UAG"),
    ("UAG", "ISS"),
    ("UAG", "ULIM & UGS"),
    ("ULIM & UGS", "UAG"),
    ("ULIM & ULS", "ULIM & UGS"),
    ("ULIM & UGS", "ULIM & ULS"),
    ("sISS", "sAG & UGS"),
    ("sAG & UGS", "sISS"),
    ("sLIM & UGS", "sAG & UGS"),
    ("sAG & UGS", "sLIM & UGS"),
    ("UAG", "sAG & UGS"),
    ("ISS", "sISS"),
    ("sAG & UGS", "AG & UGS"),
    ("AG & UGS", "LIM & UGS"),
    ("LIM & UGS", "AG & UGS"),
    ("AG & UGS", "AG & ULS"),
    ("AG & ULS", "AG & 0-ULS"),
    ("ISS", "AG & 0-UGAS"),
    ("AG & 0-UGAS", "AG & 0-UAS"),
    ("AG & 0-UAS", "AG & 0-ULS"),
    ("AG & 0-ULS", "AG & 0-GAS"),
    ("AG & 0-GAS", "AG & 0-ULS"),
]
GENERAL_BLACK = [(_a(p) | STANDING, _a(c), ()) for p, c in _GENERAL_PAIRS]

# arrows that need an extra structural hypothesis
CONTEXT_ARROWS = [
    (_a("ISS_LF"), _a("ISS"), ("BiLipschitz",)),
    (_a("ISS"), _a("ISS_LF"), ("BiLipschitz",)),
    (_a("ULIM & 0-ULS") | STANDING, _a("ULIM & ULS"), ("SemilinearDiamond",)),
    (_a("ULIM & ULS"), _a("ULIM & 0-ULS"), ("SemilinearDiamond",)),
    (_a("AG & 0-UAS"), _a("AG & LISS"), ("SemilinearDiamond",)),
    (_a("AG & LISS"), _a("AG & 0-UAS"), ()),
]

# no-input characterisations of zero-input UGAS, all with BRS and CEP
_NO_INPUT_NODES = ["0-UGAS", "0-UGATT", "0-ULIM & 0-ULS", "LF_coercive", "LF_noncoercive"]
NO_INPUT = [
    (_a(p) | STANDING, _a(c), ("NoInput",))
    for p in _NO_INPUT_NODES
    for c in _NO_INPUT_NODES
    if p != c
] + [
    (_a("0-LIM & 0-ULS"), _a("0-GAS"), ("NoInput",)),
    (_a("0-GAS"), _a("0-LIM & 0-ULS"), ("NoInput",)),
]

# refuted arrows, keyed by their roman label; each is (premises, missing atom)
RED = {
    "i": (_a("AG & 0-ULS"), "0-UAS"),
    "ii": (_a("AG & 0-UAS"), "0-UGAS"),
    "iii": (_a("AG & 0-UGAS"), "ISS"),
    "iv": (_a("sAG & UGS"), "0-UGAS"),
    "v": (_a("AG & 0-UGAS"), "UGS"),
    "vi": (_a("AG & UGS"), "0-UAS"),
    "vii": (_a("AG & 0-UAS"), "UGS"),
    "viii": (_a("AG & ULS"), "UGS"),
    "ix": (_a("sAG & UGS"), "UAG"),
}

# open questions: neither direction is recorded
OPEN = [
    (_a("AG & UGS") | STANDING, "sAG"),
    (_a("AG & 0-ULS") | STANDING, "ULS"),
]
