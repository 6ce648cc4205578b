"""Audit a finite stochastic-choice dataset against the behavioral axioms.

Every checker returns a :class:`Verdict`.  Axioms quantified over menus are
checked on observed menus only; when the dataset contains no configuration
an axiom speaks about, the verdict is ``vacuous`` rather than ``pass``.
Witnesses are plain JSON-ready dicts naming menus by canonical id and
allocations as ``x1:x2``; :func:`reverify_witness` re-evaluates one against
the dataset.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Iterable

import networkx as nx

from apusp.dataset import StochasticChoiceDataset
from apusp.model import Allocation, Menu

PASS = "pass"
VIOLATED = "violated"
VACUOUS = "vacuous"

LUCE_REL_TOL = 1e-6

# the behavioral characterization; the rest are diagnostics
CHARACTERIZING = ("regularity", "menu_acyclicity", "selfishness", "personal_norm_ranking")


@dataclass(frozen=True)
class Verdict:
    axiom: str
    status: str
    witnesses: tuple[dict, ...] = ()
    checked: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "axiom": self.axiom,
            "status": self.status,
            "checked": self.checked,
            "witnesses": list(self.witnesses),
        }


def _verdict(axiom: str, checked: int, witnesses: list[dict]) -> Verdict:
    if witnesses:
        return Verdict(axiom, VIOLATED, tuple(witnesses), checked)
    return Verdict(axiom, PASS if checked else VACUOUS, (), checked)


def _lab(a: Allocation) -> str:
    return a.label


# ---------------------------------------------------------------------------
# single-axiom checkers


def check_positivity(ds: StochasticChoiceDataset) -> Verdict:
    eps = ds.eps_tie
    witnesses, checked = [], 0
    for dist in ds:
        for a, p in dist.items():
            checked += 1
            if p <= eps:
                witnesses.append({"kind": "positivity", "menu": dist.menu.id, "allocation": _lab(a), "prob": p})
    return _verdict("positivity", checked, witnesses)


def _nested_pairs(ds: StochasticChoiceDataset) -> Iterable[tuple[Menu, Menu]]:
    menus = ds.menus
    for a in menus:
        for b in menus:
            if len(a) < len(b) and a.issubset(b):
                yield a, b


def check_regularity(ds: StochasticChoiceDataset) -> Verdict:
    eps = ds.eps_tie
    witnesses, checked = [], 0
    for small, big in _nested_pairs(ds):
        for x in small:
            checked += 1
            ps, pb = ds.prob(x, small), ds.prob(x, big)
            if ps < pb - eps:
                witnesses.append(
                    {"kind": "regularity", "subset": small.id, "superset": big.id,
                     "allocation": _lab(x), "p_subset": ps, "p_superset": pb}
                )
    return _verdict("regularity", checked, witnesses)


def _menu_graph(ds: StochasticChoiceDataset) -> tuple[nx.DiGraph, int]:
    """Strict edge A->B when some shared x has rho(x,A) > rho(x,B); tie edges both ways."""
    eps = ds.eps_tie
    g = nx.DiGraph()
    menus = ds.menus
    g.add_nodes_from(m.id for m in menus)
    pairs = 0
    for i, a in enumerate(menus):
        for b in menus[i + 1:]:
            shared = sorted(a.allocation_set & b.allocation_set, key=lambda v: (-v.x1, -v.x2))
            if not shared:
                continue
            pairs += 1
            for x in shared:
                pa, pb = ds.prob(x, a), ds.prob(x, b)
                if pa > pb + eps:
                    _add_edge(g, a.id, b.id, x, pa, pb, True)
                elif pb > pa + eps:
                    _add_edge(g, b.id, a.id, x, pb, pa, True)
                elif eps < pa < 1 - eps:
                    _add_edge(g, a.id, b.id, x, pa, pb, False)
                    _add_edge(g, b.id, a.id, x, pb, pa, False)
    return g, pairs


def _add_edge(g: nx.DiGraph, u: str, v: str, x: Allocation, pu: float, pv: float, strict: bool) -> None:
    if g.has_edge(u, v) and (g.edges[u, v]["strict"] or not strict):
        return
    g.add_edge(u, v, strict=strict, allocation=_lab(x), p_from=pu, p_to=pv)


def check_menu_acyclicity(ds: StochasticChoiceDataset) -> Verdict:
    g, pairs = _menu_graph(ds)
    component = {}
    for k, scc in enumerate(nx.strongly_connected_components(g)):
        for node in scc:
            component[node] = k
    witnesses = []
    for u, v, data in g.edges(data=True):
        if not data["strict"] or component[u] != component[v]:
            continue
        back = nx.shortest_path(g, v, u)
        cycle = [u] + back
        steps = []
        for s, t in zip(cycle, cycle[1:]):
            e = g.edges[s, t]
            steps.append({"from": s, "to": t, "allocation": e["allocation"],
                          "p_from": e["p_from"], "p_to": e["p_to"], "strict": e["strict"]})
        witnesses.append({"kind": "menu_acyclicity", "cycle": steps})
    return _verdict("menu_acyclicity", pairs, witnesses)


def check_selfishness(ds: StochasticChoiceDataset) -> Verdict:
    eps = ds.eps_tie
    witnesses, checked = [], 0
    for dist in ds:
        for x, p in dist.items():
            if p < 1 - eps:
                continue
            checked += 1
            for y in dist.menu:
                if y != x and y.x1 >= x.x1:
                    witnesses.append(
                        {"kind": "selfishness", "menu": dist.menu.id, "certain": _lab(x),
                         "prob": p, "rival": _lab(y)}
                    )
    return _verdict("selfishness", checked, witnesses)


def check_fosd_selfish(ds: StochasticChoiceDataset) -> Verdict:
    eps = ds.eps_tie
    witnesses, checked = [], 0
    for dist in ds:
        for (x, px), (y, py) in itertools.permutations(dist.items(), 2):
            if x.x1 <= y.x1:
                continue
            checked += 1
            if px <= py + eps:
                witnesses.append(
                    {"kind": "selfishness_fosd", "menu": dist.menu.id, "richer": _lab(x),
                     "poorer": _lab(y), "p_richer": px, "p_poorer": py}
                )
    return _verdict("selfishness_fosd", checked, witnesses)


def check_deterministic(ds: StochasticChoiceDataset) -> Verdict:
    eps = ds.eps_tie
    witnesses = []
    for dist in ds:
        if max(dist.probs) < 1 - eps:
            witnesses.append({"kind": "deterministic_choice", "menu": dist.menu.id, "max_prob": max(dist.probs)})
    return _verdict("deterministic_choice", len(ds), witnesses)


def check_order_independence(ds: StochasticChoiceDataset) -> Verdict:
    """rho(z, B+x) <= rho(z, B+y)  iff  rho(x, A) >= rho(y, A), on observed quadruples."""
    eps = ds.eps_tie
    menus = ds.menus
    witnesses, checked = [], 0
    for c, d in itertools.permutations(menus, 2):
        if len(c) != len(d) or len(c) < 2:
            continue
        only_c = c.allocation_set - d.allocation_set
        only_d = d.allocation_set - c.allocation_set
        if len(only_c) != 1:
            continue
        (x,), (y,) = only_c, only_d
        base = sorted(c.allocation_set & d.allocation_set, key=lambda v: (-v.x1, -v.x2))
        for a in menus:
            if x not in a or y not in a:
                continue
            rhs = ds.prob(x, a) >= ds.prob(y, a) - eps
            for z in base:
                checked += 1
                lhs = ds.prob(z, c) <= ds.prob(z, d) + eps
                if lhs != rhs:
                    witnesses.append(
                        {"kind": "order_independence", "with_x": c.id, "with_y": d.id, "menu": a.id,
                         "x": _lab(x), "y": _lab(y), "z": _lab(z),
                         "p_z_with_x": ds.prob(z, c), "p_z_with_y": ds.prob(z, d),
                         "p_x": ds.prob(x, a), "p_y": ds.prob(y, a)}
                    )
    return _verdict("order_independence", checked, witnesses)


def _luce_mismatch(r1: float, r2: float) -> bool:
    return max(r1, r2) / min(r1, r2) - 1.0 > LUCE_REL_TOL


def check_luce_iia(ds: StochasticChoiceDataset) -> Verdict:
    eps = ds.eps_tie
    together: dict[tuple[Allocation, Allocation], list[Menu]] = {}
    for dist in ds:
        for x, y in itertools.combinations(dist.menu.allocations, 2):
            together.setdefault((x, y), []).append(dist.menu)
    witnesses, checked = [], 0
    for (x, y), menus in together.items():
        usable = [m for m in menus if ds.prob(x, m) > eps and ds.prob(y, m) > eps]
        for a, b in itertools.combinations(usable, 2):
            checked += 1
            ra = ds.prob(x, a) / ds.prob(y, a)
            rb = ds.prob(x, b) / ds.prob(y, b)
            if _luce_mismatch(ra, rb):
                witnesses.append(
                    {"kind": "luce_iia", "x": _lab(x), "y": _lab(y), "menu_a": a.id, "menu_b": b.id,
                     "ratio_a": ra, "ratio_b": rb}
                )
    return _verdict("luce_iia", checked, witnesses)


# ---------------------------------------------------------------------------
# revealed personal-norm ranking


@dataclass(frozen=True)
class RevealedPair:
    """``better`` is normatively better than ``worse``: adding it to ``menu`` lowered rho(worse)."""

    better: Allocation
    worse: Allocation
    menu: str = ""
    p_without: float = float("nan")
    p_with: float = float("nan")

    def to_dict(self) -> dict[str, Any]:
        return {"better": _lab(self.better), "worse": _lab(self.worse), "menu": self.menu,
                "p_without": self.p_without, "p_with": self.p_with}


@dataclass(frozen=True)
class RevealedNormRelation:
    pairs: tuple[RevealedPair, ...] = ()
    _strict: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_strict", frozenset((p.better, p.worse) for p in self.pairs))

    @classmethod
    def of(cls, *pairs: tuple[Allocation, Allocation]) -> RevealedNormRelation:
        return cls(tuple(RevealedPair(b, w) for b, w in pairs))

    @property
    def strict(self) -> frozenset[tuple[Allocation, Allocation]]:
        return self._strict

    def holds(self, better: Allocation, worse: Allocation) -> bool:
        return (better, worse) in self._strict

    @property
    def allocations(self) -> list[Allocation]:
        seen = {a for pair in self._strict for a in pair}
        return sorted(seen, key=lambda v: (-v.x1, -v.x2))

    def __len__(self) -> int:
        return len(self._strict)

    def to_dict(self) -> dict[str, Any]:
        return {"pairs": [p.to_dict() for p in self.pairs]}


def reveal_norm_ranking(ds: StochasticChoiceDataset) -> RevealedNormRelation:
    eps = ds.eps_tie
    pairs = []
    for big in ds:
        if len(big.menu) < 2:
            continue
        for y in big.menu:
            small = ds.get(Menu(big.menu.allocation_set - {y}))
            if small is None:
                continue
            for x, p_without in small.items():
                p_with = big.prob(x)
                if p_without > p_with + eps:
                    pairs.append(RevealedPair(y, x, small.menu.id, p_without, p_with))
    return RevealedNormRelation(tuple(pairs))


def check_personal_norm_axioms(rel: RevealedNormRelation, ds: StochasticChoiceDataset) -> Verdict:
    """Asymmetry, negative transitivity and fair-allocation monotonicity of the revealed relation."""
    if not len(rel):
        return Verdict("personal_norm_ranking", VACUOUS)
    provenance: dict[tuple[Allocation, Allocation], RevealedPair] = {}
    for p in rel.pairs:
        provenance.setdefault((p.better, p.worse), p)
    witnesses, checked = [], 0

    for a, b in sorted(rel.strict, key=lambda ab: (_lab(ab[0]), _lab(ab[1]))):
        checked += 1
        if rel.holds(b, a) and _lab(a) < _lab(b):
            witnesses.append({"kind": "norm_asymmetry", "pairs": [provenance[(a, b)].to_dict(),
                                                                 provenance[(b, a)].to_dict()]})

    allocs = rel.allocations
    for x, y, z in itertools.permutations(allocs, 3):
        if rel.holds(x, z):
            checked += 1
            if not rel.holds(x, y) and not rel.holds(y, z):
                witnesses.append({"kind": "norm_negative_transitivity", "x": _lab(x), "y": _lab(y),
                                  "z": _lab(z), "pair": provenance[(x, z)].to_dict()})

    for better, worse in sorted(rel.strict, key=lambda ab: (_lab(ab[0]), _lab(ab[1]))):
        if better.is_fair and worse.is_fair:
            checked += 1
            if better.x1 < worse.x1:
                witnesses.append({"kind": "norm_fair_monotonicity", "pair": provenance[(better, worse)].to_dict()})
    return _verdict("personal_norm_ranking", checked, witnesses)


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class AuditReport:
    verdicts: tuple[Verdict, ...]
    relation: RevealedNormRelation
    eps_tie: float

    def __getitem__(self, axiom: str) -> Verdict:
        for v in self.verdicts:
            if v.axiom == axiom:
                return v
        raise KeyError(axiom)

    @property
    def violated(self) -> list[str]:
        return [v.axiom for v in self.verdicts if v.status == VIOLATED]

    @property
    def characterization_violated(self) -> bool:
        return any(a in CHARACTERIZING for a in self.violated)

    def to_dict(self) -> dict[str, Any]:
        return {
            "eps_tie": self.eps_tie,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "revealed_norm_relation": self.relation.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_markdown(self) -> str:
        lines = ["# Axiom audit", "", f"tie tolerance: {self.eps_tie:g}", "",
                 "| axiom | role | verdict | checked | witnesses |", "|---|---|---|---|---|"]
        for v in self.verdicts:
            role = "characterizing" if v.axiom in CHARACTERIZING else "diagnostic"
            lines.append(f"| {v.axiom} | {role} | {v.status} | {v.checked} | {len(v.witnesses)} |")
        lines += ["", "## Revealed personal-norm ranking", ""]
        if self.relation.pairs:
            for p in self.relation.pairs:
                lines.append(f"- {p.better} over {p.worse}: adding it to {{{p.menu}}} "
                             f"moves {p.p_without:.6g} -> {p.p_with:.6g}")
        else:
            lines.append("- (empty)")
        bad = [v for v in self.verdicts if v.witnesses]
        if bad:
            lines += ["", "## Witnesses", ""]
            for v in bad:
                lines.append(f"### {v.axiom}")
                for w in v.witnesses:
                    lines.append(f"- `{json.dumps(w, sort_keys=True)}`")
        return "\n".join(lines) + "\n"


def audit_all(ds: StochasticChoiceDataset) -> AuditReport:
    relation = reveal_norm_ranking(ds)
    verdicts = (
        check_positivity(ds),
        check_regularity(ds),
        check_menu_acyclicity(ds),
        check_selfishness(ds),
        check_personal_norm_axioms(relation, ds),
        check_order_independence(ds),
        check_fosd_selfish(ds),
        check_deterministic(ds),
        check_luce_iia(ds),
    )
    return AuditReport(verdicts, relation, ds.eps_tie)


# ---------------------------------------------------------------------------
# witness re-verification


def _p(ds: StochasticChoiceDataset, label: str, menu_id: str) -> float:
    return ds.prob(Allocation.parse(label), menu_id)


def _pair_holds(ds: StochasticChoiceDataset, pair: dict) -> bool:
    better, worse = Allocation.parse(pair["better"]), Allocation.parse(pair["worse"])
    small = Menu.from_id(pair["menu"])
    big = small.union(better)
    if small not in ds or big not in ds or better in small:
        return False
    return ds.prob(worse, small) > ds.prob(worse, big) + ds.eps_tie


def reverify_witness(ds: StochasticChoiceDataset, w: dict) -> bool:
    """Re-evaluate a witness's defining inequality against ``ds``."""
    eps = ds.eps_tie
    kind = w["kind"]
    if kind == "positivity":
        return _p(ds, w["allocation"], w["menu"]) <= eps
    if kind == "regularity":
        sub, sup = Menu.from_id(w["subset"]), Menu.from_id(w["superset"])
        return sub.issubset(sup) and _p(ds, w["allocation"], w["subset"]) < _p(ds, w["allocation"], w["superset"]) - eps
    if kind == "menu_acyclicity":
        steps = w["cycle"]
        if steps[0]["from"] != steps[-1]["to"] or not any(s["strict"] for s in steps):
            return False
        for s, nxt in zip(steps, steps[1:] + steps[:1]):
            if s["to"] != nxt["from"]:
                return False
            pf, pt = _p(ds, s["allocation"], s["from"]), _p(ds, s["allocation"], s["to"])
            if s["strict"]:
                if not pf > pt + eps:
                    return False
            elif not (abs(pf - pt) <= eps and eps < pf < 1 - eps):
                return False
        return True
    if kind == "selfishness":
        x, y = Allocation.parse(w["certain"]), Allocation.parse(w["rival"])
        return _p(ds, w["certain"], w["menu"]) >= 1 - eps and y in Menu.from_id(w["menu"]) and y.x1 >= x.x1
    if kind == "selfishness_fosd":
        x, y = Allocation.parse(w["richer"]), Allocation.parse(w["poorer"])
        return x.x1 > y.x1 and _p(ds, w["richer"], w["menu"]) <= _p(ds, w["poorer"], w["menu"]) + eps
    if kind == "deterministic_choice":
        return max(ds[w["menu"]].probs) < 1 - eps
    if kind == "order_independence":
        lhs = _p(ds, w["z"], w["with_x"]) <= _p(ds, w["z"], w["with_y"]) + eps
        rhs = _p(ds, w["x"], w["menu"]) >= _p(ds, w["y"], w["menu"]) - eps
        return lhs != rhs
    if kind == "luce_iia":
        ra = _p(ds, w["x"], w["menu_a"]) / _p(ds, w["y"], w["menu_a"])
        rb = _p(ds, w["x"], w["menu_b"]) / _p(ds, w["y"], w["menu_b"])
        return _luce_mismatch(ra, rb)
    if kind == "norm_asymmetry":
        a, b = w["pairs"]
        return (a["better"], a["worse"]) == (b["worse"], b["better"]) and _pair_holds(ds, a) and _pair_holds(ds, b)
    if kind == "norm_negative_transitivity":
        rel = reveal_norm_ranking(ds)
        x, y, z = (Allocation.parse(w[k]) for k in ("x", "y", "z"))
        return rel.holds(x, z) and not rel.holds(x, y) and not rel.holds(y, z) and _pair_holds(ds, w["pair"])
    if kind == "norm_fair_monotonicity":
        pair = w["pair"]
        b, v = Allocation.parse(pair["better"]), Allocation.parse(pair["worse"])
        return b.is_fair and v.is_fair and b.x1 < v.x1 and _pair_holds(ds, pair)
    raise ValueError(f"unknown witness kind {kind!r}")
