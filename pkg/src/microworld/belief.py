"""Reader-side belief tracking over statement sequences.

The belief state captures exactly the set of worlds consistent with the
statements read so far.  Uncertainty lives only in initial locations, so
the belief factors into independent location variables: each agent's
current location is a variable, and an uncarried object's location is a
variable too.  Statements collapse, prune, or unify variables:

- a move gives the agent a fresh variable pinned to the destination (and
  prunes the destination from the old one: you cannot move to where you
  already are);
- a grab unifies the agent's variable with the object's (they were
  co-located) and marks the object carried;
- a drop aliases the object to the carrier's current variable, so later
  evidence about where the carrier was keeps refining where the object
  lies;
- facts and negations prune a single variable.

Carrier status is never uncertain: objects start uncarried and every
possession change is narrated.  Each variable class carries provenance:
the statement indices that produced its current possibility set.  Replaying
exactly those statements through a fresh tracker re-derives the same
possibility set (the supporting-fact guarantee).
"""

from __future__ import annotations

from .world import (
    At,
    Carry,
    CoMove,
    Drop,
    Give,
    Grab,
    Holds,
    Label,
    LocationFact,
    Move,
    Negation,
    ObjAt,
    Statement,
    World,
    WorldError,
)

EMPTY = frozenset()


class Contradiction(WorldError):
    """A statement inconsistent with every world still possible."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"statement {index}: {reason}")
        self.index = index
        self.reason = reason


class ConflictInfo:
    """Why a statement cannot hold: the violated facts and their evidence."""

    __slots__ = ("reason", "evidence", "affected")

    def __init__(self, reason, evidence, affected):
        self.reason = reason
        self.evidence = frozenset(evidence)  # statement indices
        self.affected = tuple(affected)  # (proposition, entailed Label) pairs


class BeliefState:
    """Possibility sets per entity with provenance, exact w.r.t. enumeration.

    Treat instances as immutable: :meth:`update` returns a new state.  The
    private in-place path exists for the generator's hot loop.
    """

    def __init__(self, world: World):
        self.world = world
        self._all = frozenset(world.locations)
        self._parent = {}  # var id -> parent var id (absent = root)
        self._pset = {}  # root id -> frozenset of locations
        self._prov = {}  # root id -> frozenset of statement indices
        self._agent_var = {}  # agent -> var id (absent = untouched, full set)
        self._obj = {}  # object -> Carry(agent) | var id (absent = untouched)
        self._chain = {}  # object -> frozenset of possession event indices
        self._entered = {}  # object -> index when it entered current carrier
        self._next = 0

    def _clone(self) -> "BeliefState":
        c = BeliefState.__new__(BeliefState)
        c.world = self.world
        c._all = self._all
        c._parent = dict(self._parent)
        c._pset = dict(self._pset)
        c._prov = dict(self._prov)
        c._agent_var = dict(self._agent_var)
        c._obj = dict(self._obj)
        c._chain = dict(self._chain)
        c._entered = dict(self._entered)
        c._next = self._next
        return c

    # -- union-find over location variables --

    def _find(self, v: int) -> int:
        parent = self._parent
        while v in parent:
            v = parent[v]
        return v

    def _fresh(self, pset, prov) -> int:
        v = self._next
        self._next = v + 1
        self._pset[v] = pset
        self._prov[v] = prov
        return v

    def _agent_root(self, a: str) -> int:
        var = self._agent_var.get(a)
        if var is None:
            var = self._fresh(self._all, EMPTY)
            self._agent_var[a] = var
            return var
        return self._find(var)

    def _obj_root(self, o: str) -> int:
        st = self._obj.get(o)
        if st is None:
            st = self._fresh(self._all, EMPTY)
            self._obj[o] = st
            return st
        return self._find(st)

    def _union(self, r1: int, r2: int, pset, prov) -> int:
        root, child = (r1, r2) if r1 < r2 else (r2, r1)
        if r1 != r2:
            self._parent[child] = root
            del self._pset[child], self._prov[child]
        self._pset[root] = pset
        self._prov[root] = prov
        return root

    # -- consistency analysis (read-only) --

    def analyze(self, event, index: int):
        """Return ConflictInfo if the event contradicts the belief, else None.

        Checks run in a fixed order per variant, so the reported conflict is
        deterministic when several preconditions fail at once.
        """
        t = type(event)
        if t is Move or t is CoMove:
            movers = (event.agent,) if t is Move else (event.agent, event.agent2)
            for a in movers:
                pset = self.agent_possible(a)
                if len(pset) == 1 and event.location in pset:
                    return ConflictInfo(
                        f"{a} is already in the {event.location}",
                        self._prov_of_agent(a),
                        [(At(a, event.location), Label.TRUE)],
                    )
        elif t is Grab:
            st = self._obj.get(event.obj)
            if type(st) is Carry:
                return ConflictInfo(
                    f"the {event.obj} is already carried by {st.agent}",
                    self._chain.get(event.obj, EMPTY),
                    [(Holds(st.agent, event.obj), Label.TRUE)],
                )
            conflict = self._colocation_conflict(
                event.agent, self._obj_pset(event.obj), self._obj_evidence(event.obj)
            )
            if conflict is not None:
                reason, evidence = conflict
                return ConflictInfo(
                    f"the {event.obj} is not where {event.agent} is ({reason})",
                    evidence,
                    self._colocation_affected(event.agent, obj=event.obj),
                )
        elif t is Drop:
            if self._obj.get(event.obj) != Carry(event.agent):
                return ConflictInfo(
                    f"{event.agent} is not carrying the {event.obj}",
                    self._chain.get(event.obj, EMPTY),
                    [(Holds(event.agent, event.obj), Label.FALSE)],
                )
        elif t is Give:
            if self._obj.get(event.obj) != Carry(event.agent):
                return ConflictInfo(
                    f"{event.agent} is not carrying the {event.obj}",
                    self._chain.get(event.obj, EMPTY),
                    [(Holds(event.agent, event.obj), Label.FALSE)],
                )
            conflict = self._colocation_conflict(
                event.agent,
                self.agent_possible(event.agent2),
                self._prov_of_agent(event.agent2),
            )
            if conflict is not None:
                reason, evidence = conflict
                return ConflictInfo(
                    f"{event.agent} and {event.agent2} are not in the same place ({reason})",
                    evidence,
                    self._colocation_affected(event.agent, agent2=event.agent2),
                )
        elif t is LocationFact:
            pset = self.agent_possible(event.agent)
            if event.location not in pset:
                return ConflictInfo(
                    f"{event.agent} cannot be in the {event.location}",
                    self._prov_of_agent(event.agent),
                    [(At(event.agent, event.location), Label.FALSE)],
                )
        elif t is Negation:
            pset = self.agent_possible(event.agent)
            if len(pset) == 1 and event.location in pset:
                return ConflictInfo(
                    f"{event.agent} is certainly in the {event.location}",
                    self._prov_of_agent(event.agent),
                    [(At(event.agent, event.location), Label.TRUE)],
                )
        else:
            raise TypeError(f"not an event: {event!r}")
        return None

    def _colocation_conflict(self, agent, other_pset, other_evidence):
        pset = self.agent_possible(agent)
        if pset & other_pset:
            return None
        return (
            f"{sorted(pset)} vs {sorted(other_pset)}",
            self._prov_of_agent(agent) | other_evidence,
        )

    def _colocation_affected(self, agent, obj=None, agent2=None):
        affected = []
        pset = self.agent_possible(agent)
        if obj is not None:
            opset = self._obj_pset(obj)
            if len(pset) == 1:
                (loc,) = pset
                affected.append((ObjAt(obj, loc), Label.FALSE))
            if len(opset) == 1:
                (loc,) = opset
                affected.append((At(agent, loc), Label.FALSE))
        else:
            opset = self.agent_possible(agent2)
            if len(pset) == 1:
                (loc,) = pset
                affected.append((At(agent2, loc), Label.FALSE))
            if len(opset) == 1:
                (loc,) = opset
                affected.append((At(agent, loc), Label.FALSE))
        return affected

    def _obj_pset(self, o: str):
        st = self._obj.get(o)
        if st is None:
            return self._all
        if type(st) is Carry:
            return self.agent_possible(st.agent)
        return self._pset[self._find(st)]

    def _obj_evidence(self, o: str):
        """Indices supporting what is known about an object's place."""
        st = self._obj.get(o)
        chain = self._chain.get(o, EMPTY)
        if st is None:
            return chain
        if type(st) is Carry:
            return chain | self._prov_of_agent(st.agent)
        return chain | self._prov[self._find(st)]

    def _prov_of_agent(self, a: str):
        var = self._agent_var.get(a)
        if var is None:
            return EMPTY
        return self._prov[self._find(var)]

    # -- update --

    def _update(self, stmt: Statement) -> None:
        event, j = stmt.event, stmt.index
        conflict = self.analyze(event, j)
        if conflict is not None:
            raise Contradiction(j, conflict.reason)
        t = type(event)
        if t is Move or t is CoMove:
            movers = (event.agent,) if t is Move else (event.agent, event.agent2)
            for a in movers:
                old = self._agent_root(a)
                pset = self._pset[old]
                if event.location in pset:
                    self._pset[old] = pset - {event.location}
                    self._prov[old] = self._prov[old] | {j}
                self._agent_var[a] = self._fresh(
                    frozenset((event.location,)), frozenset((j,))
                )
        elif t is Grab:
            av = self._agent_root(event.agent)
            ov = self._obj_root(event.obj)
            apset, opset = self._pset[av], self._pset[ov]
            inter = apset & opset
            prov = self._prov[av] | self._prov[ov]
            if inter != apset or inter != opset:
                prov = prov | self._chain.get(event.obj, EMPTY) | {j}
            self._union(av, ov, inter, prov)
            self._obj[event.obj] = Carry(event.agent)
            self._chain[event.obj] = self._chain.get(event.obj, EMPTY) | {j}
            self._entered[event.obj] = j
        elif t is Drop:
            root = self._agent_root(event.agent)
            self._obj[event.obj] = root
            self._chain[event.obj] = self._chain[event.obj] | {j}
        elif t is Give:
            gv = self._agent_root(event.agent)
            rv = self._agent_root(event.agent2)
            gpset, rpset = self._pset[gv], self._pset[rv]
            inter = gpset & rpset
            prov = self._prov[gv] | self._prov[rv]
            if inter != gpset or inter != rpset:
                prov = prov | self._chain.get(event.obj, EMPTY) | {j}
            self._union(gv, rv, inter, prov)
            self._obj[event.obj] = Carry(event.agent2)
            self._chain[event.obj] = self._chain[event.obj] | {j}
            self._entered[event.obj] = j
        elif t is LocationFact:
            root = self._agent_root(event.agent)
            pset = self._pset[root]
            if len(pset) > 1:
                self._pset[root] = frozenset((event.location,))
                self._prov[root] = self._prov[root] | {j}
        elif t is Negation:
            root = self._agent_root(event.agent)
            pset = self._pset[root]
            if event.location in pset:
                self._pset[root] = pset - {event.location}
                self._prov[root] = self._prov[root] | {j}

    def update(self, stmt: Statement) -> "BeliefState":
        """Pure update: returns the successor belief, raises Contradiction."""
        c = self._clone()
        c._update(stmt)
        return c

    # -- queries --

    def agent_possible(self, a: str):
        var = self._agent_var.get(a)
        if var is None:
            return self._all
        return self._pset[self._find(var)]

    def object_possible(self, o: str):
        """Set of possible places: locations, or a carrier when carried."""
        st = self._obj.get(o)
        if type(st) is Carry:
            return frozenset((st,))
        return self._obj_pset(o)

    def carrier_of(self, o: str):
        st = self._obj.get(o)
        return st.agent if type(st) is Carry else None

    def carried_by(self, a: str) -> list:
        """Objects currently carried by an agent, ordered by possession time."""
        out = [o for o, st in self._obj.items() if st == Carry(a)]
        out.sort(key=self._entered.__getitem__)
        return out

    def provenance(self, entity: str):
        """Statement indices behind the entity's current possibility set."""
        if entity in self.world.kind and self.world.kind[entity] == "object":
            return self._obj_evidence(entity)
        return self._prov_of_agent(entity)

    def label(self, prop) -> Label:
        t = type(prop)
        if t is At:
            pset = self.agent_possible(prop.agent)
            if prop.location not in pset:
                return Label.FALSE
            if len(pset) == 1:
                return Label.TRUE
            return Label.UNKNOWN
        if t is Holds:
            if self._obj.get(prop.obj) == Carry(prop.agent):
                return Label.TRUE
            return Label.FALSE
        if t is ObjAt:
            pset = self._obj_pset(prop.obj)
            if prop.location not in pset:
                return Label.FALSE
            if len(pset) == 1:
                return Label.TRUE
            return Label.UNKNOWN
        raise TypeError(f"not a proposition: {prop!r}")

    def support(self, prop):
        """Supporting statement indices for the proposition's current label.

        Unknown labels carry no support: replaying nothing leaves them
        unknown.  For holds/object propositions the possession chain is
        included so the support replays cleanly on a fresh tracker.
        """
        t = type(prop)
        if t is At:
            if self.label(prop) is Label.UNKNOWN:
                return EMPTY
            return self._prov_of_agent(prop.agent)
        if t is Holds:
            return self._chain.get(prop.obj, EMPTY)
        if t is ObjAt:
            if self.label(prop) is Label.UNKNOWN:
                return EMPTY
            return self._obj_evidence(prop.obj)
        raise TypeError(f"not a proposition: {prop!r}")


def update_belief(belief: BeliefState, stmt: Statement) -> BeliefState:
    """Fold one statement into the belief; raises Contradiction if impossible."""
    return belief.update(stmt)


def label(belief: BeliefState, prop) -> Label:
    """True if the proposition holds in every consistent world, False if in
    none, Unknown otherwise."""
    return belief.label(prop)


def replay(world: World, statements) -> BeliefState:
    """Run a fresh tracker over statements (raises Contradiction on conflict)."""
    b = BeliefState(world)
    for stmt in statements:
        b._update(stmt)
    return b
