"""Gridworld environments, synthetic test MDPs and the JSON interchange format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .mdp import MdpSpec, PolicySpec, ValidationError

ACTIONS = ("N", "E", "S", "W")
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass(frozen=True)
class GridworldConfig:
    """Grid layout and epsilon-greedy policy parameters.

    Cells are ``(row, col)``; ``arrows`` gives the greedy action of every
    non-terminal open cell and ``terminals`` the reward for entering a
    terminal cell.
    """

    width: int
    height: int
    walls: frozenset
    corridor: frozenset
    arrows: dict
    terminals: dict
    start: tuple
    eps_eval: float
    eps_behavior: float
    eps_behavior_corridor: float | None = None
    gamma: float = 1.0
    t_max: int = 1000
    name: str = "gridworld"
    version: str = ""
    branch: tuple | None = None

    def __post_init__(self):
        cell = lambda c: tuple(int(x) for x in c)
        object.__setattr__(self, "walls", frozenset(cell(c) for c in self.walls))
        object.__setattr__(self, "corridor", frozenset(cell(c) for c in self.corridor))
        object.__setattr__(self, "arrows", {cell(c): int(a) for c, a in dict(self.arrows).items()})
        object.__setattr__(self, "terminals",
                           {cell(c): float(r) for c, r in dict(self.terminals).items()})
        object.__setattr__(self, "start", cell(self.start))
        if self.branch is not None:
            object.__setattr__(self, "branch", cell(self.branch))
        self.validate()

    def in_bounds(self, c) -> bool:
        return 0 <= c[0] < self.height and 0 <= c[1] < self.width

    def open_cells(self) -> list:
        return [(r, c) for r in range(self.height) for c in range(self.width)
                if (r, c) not in self.walls]

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError("grid dimensions must be positive")
        for group, cells in (("walls", self.walls), ("corridor", self.corridor),
                             ("arrows", self.arrows), ("terminals", self.terminals)):
            for c in cells:
                if not self.in_bounds(c):
                    raise ValidationError(f"{group} cell {list(c)} is outside the grid")
        if self.start in self.walls or self.start in self.terminals or not self.in_bounds(self.start):
            raise ValidationError(f"start cell {list(self.start)} must be an open non-terminal cell")
        for c in self.open_cells():
            if c not in self.terminals and c not in self.arrows:
                raise ValidationError(f"open cell {list(c)} has no arrow")
        for c, a in self.arrows.items():
            if not 0 <= a < 4:
                raise ValidationError(f"arrow at {list(c)} must be an action in 0..3, got {a}")
            if c in self.walls or c in self.terminals:
                raise ValidationError(f"arrow at {list(c)} sits on a wall or terminal")
        for c in self.corridor:
            if c in self.walls or c in self.terminals:
                raise ValidationError(f"corridor cell {list(c)} must be open and non-terminal")
        for name in ("eps_eval", "eps_behavior", "eps_behavior_corridor"):
            e = getattr(self, name)
            if e is not None and not 0.0 <= e <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {e}")

    # -- JSON asset ------------------------------------------------------
    def to_json_dict(self) -> dict:
        out = {
            "name": self.name, "version": self.version,
            "width": self.width, "height": self.height,
            "walls": sorted([list(c) for c in self.walls]),
            "corridor": sorted([list(c) for c in self.corridor]),
            "arrows": [[list(c), a] for c, a in sorted(self.arrows.items())],
            "terminals": [[list(c), r] for c, r in sorted(self.terminals.items())],
            "start": list(self.start),
            "eps_eval": self.eps_eval, "eps_behavior": self.eps_behavior,
            "eps_behavior_corridor": self.eps_behavior_corridor,
            "gamma": self.gamma, "t_max": self.t_max,
        }
        if self.branch is not None:
            out["branch"] = list(self.branch)
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "GridworldConfig":
        known = {"name", "version", "width", "height", "walls", "corridor", "arrows",
                 "terminals", "start", "eps_eval", "eps_behavior",
                 "eps_behavior_corridor", "gamma", "t_max", "branch"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown gridworld fields: {sorted(unknown)}")
        d = dict(d)
        d["arrows"] = {tuple(c): a for c, a in d["arrows"]}
        d["terminals"] = {tuple(c): r for c, r in d["terminals"]}
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Gridworld:
    """A built gridworld: the MDP, both policies and the cell/state bookkeeping."""

    config: GridworldConfig
    mdp: MdpSpec
    pi_e: PolicySpec
    pi_b: PolicySpec
    cells: tuple = field(repr=False)

    def state_of(self, cell) -> int:
        return self.cells.index(tuple(cell))

    @property
    def corridor_states(self) -> list:
        return sorted(self.state_of(c) for c in self.config.corridor)

    @property
    def branch_state(self) -> int | None:
        return None if self.config.branch is None else self.state_of(self.config.branch)

    def __iter__(self):
        # unpacks as (mdp, pi_e, pi_b)
        return iter((self.mdp, self.pi_e, self.pi_b))


def build_gridworld(cfg: GridworldConfig) -> Gridworld:
    """Deterministic 4-action grid; bumping into walls or edges stays in place."""
    cells = tuple(cfg.open_cells())
    index = {c: i for i, c in enumerate(cells)}
    S, A = len(cells), 4
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    terminal = set()
    for c, s in index.items():
        if c in cfg.terminals:
            terminal.add(s)
            P[s, :, s] = 1.0
            continue
        for a, (dr, dc) in enumerate(MOVES):
            nxt = (c[0] + dr, c[1] + dc)
            if not cfg.in_bounds(nxt) or nxt in cfg.walls:
                nxt = c
            P[s, a, index[nxt]] = 1.0
            R[s, a] = cfg.terminals.get(nxt, 0.0)
    d0 = np.zeros(S)
    d0[index[cfg.start]] = 1.0
    mdp = MdpSpec(P, R, d0, frozenset(terminal), cfg.gamma, cfg.t_max)
    greedy = [cfg.arrows.get(c) for c in cells]
    pi_e = PolicySpec.epsilon_greedy(greedy, A, cfg.eps_eval)
    eps_b = np.array([cfg.eps_behavior_corridor
                      if cfg.eps_behavior_corridor is not None and c in cfg.corridor
                      else cfg.eps_behavior for c in cells])
    pi_b = PolicySpec.epsilon_greedy(greedy, A, eps_b)
    return Gridworld(cfg, mdp, pi_e, pi_b, cells)


def load_gridworld_config(path) -> GridworldConfig:
    with open(path) as fh:
        return GridworldConfig.from_json_dict(json.load(fh))


def _asset(name: str) -> dict:
    text = resources.files("osiris_ope").joinpath("assets").joinpath(name).read_text()
    return json.loads(text)


def dilly_dallying_config() -> GridworldConfig:
    return GridworldConfig.from_json_dict(_asset("gridworld.json"))


def canonical_dilly_dallying() -> Gridworld:
    """Evaluation epsilon 0.1, behavior epsilon 0.5 everywhere."""
    return build_gridworld(dilly_dallying_config())


def canonical_express() -> Gridworld:
    """Same layout, but the behavior policy uses epsilon 0.2 inside the corridor."""
    d = _asset("gridworld.json")
    d["name"] = "express"
    d["eps_behavior_corridor"] = 0.2
    return build_gridworld(GridworldConfig.from_json_dict(d))


# --------------------------------------------------------------------------
# synthetic MDPs

def random_mdp(seed: int, n_states: int = 5, n_actions: int = 2, n_irrelevant: int = 0,
               stop_prob: float = 0.25, gamma: float = 1.0, t_max: int = 200):
    """Random episodic MDP with one extra terminal state.

    Every action reaches the terminal with probability at least ``stop_prob``.
    The first ``n_irrelevant`` states give all actions identical transitions
    and rewards, so their Q-values coincide exactly. Returns
    ``(mdp, pi_e, pi_b, irrelevant_states)``; both policies have full support.
    """
    rng = np.random.default_rng(seed)
    S = n_states + 1
    term = n_states
    P = np.zeros((S, n_actions, S))
    R = np.zeros((S, n_actions))
    for s in range(n_states):
        for a in range(n_actions):
            row = rng.dirichlet(np.ones(n_states)) * (1.0 - stop_prob)
            P[s, a, :n_states] = row
            P[s, a, term] = 1.0 - row.sum()
            R[s, a] = rng.normal()
    irrelevant = list(range(n_irrelevant))
    for s in irrelevant:
        P[s, :] = P[s, 0]
        R[s, :] = R[s, 0]
    P[term, :, term] = 1.0
    d0 = np.zeros(S)
    d0[:n_states] = rng.dirichlet(np.ones(n_states))
    mdp = MdpSpec(P, R, d0, frozenset({term}), gamma, t_max)
    pe = rng.dirichlet(np.ones(n_actions), size=S)
    pb = 0.5 * rng.dirichlet(np.ones(n_actions), size=S) + 0.5 / n_actions
    return mdp, PolicySpec(pe), PolicySpec(pb), irrelevant


def three_state_mdp():
    """Small MDP with one irrelevant state, used by the identity checks.

    State 0 either moves on to state 1 or lingers, with no reward either way,
    so the action there never changes the return. States 1 and 2 each choose
    between an immediate payout and moving on. State 3 is terminal.
    """
    S, A = 4, 2
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    P[0, 0, 1] = 1.0
    P[0, 1, 0] = 1.0
    P[1, 0, 3] = 1.0
    R[1, 0] = 1.0
    P[1, 1, 2] = 1.0
    P[2, 0, 3] = 1.0
    R[2, 0] = 3.0
    P[2, 1, 3] = 1.0
    R[2, 1] = -1.0
    P[3, :, 3] = 1.0
    d0 = np.array([1.0, 0.0, 0.0, 0.0])
    mdp = MdpSpec(P, R, d0, frozenset({3}), 1.0, 500)
    pi_e = PolicySpec(np.array([[0.8, 0.2], [0.3, 0.7], [0.9, 0.1], [0.5, 0.5]]))
    pi_b = PolicySpec(np.array([[0.4, 0.6], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]))
    return mdp, pi_e, pi_b


# --------------------------------------------------------------------------
# JSON interchange

_MDP_FIELDS = {"n_states", "n_actions", "gamma", "t_max", "initial_dist", "terminal",
               "transition", "reward", "policies"}


def mdp_to_json_dict(mdp: MdpSpec, policies: dict) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "t_max": mdp.t_max,
        "initial_dist": mdp.initial_dist.tolist(),
        "terminal": sorted(mdp.terminal),
        "transition": mdp.transition.tolist(),
        "reward": mdp.reward.tolist(),
        "policies": {name: p.probs.tolist() for name, p in policies.items()},
    }


def save_mdp(path, mdp: MdpSpec, policies: dict) -> None:
    Path(path).write_text(json.dumps(mdp_to_json_dict(mdp, policies), indent=1))


def _array(d, key, shape, path="$"):
    try:
        arr = np.array(d[key], dtype=float)
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{path}.{key}: not a numeric array ({exc})") from None
    if arr.shape != shape:
        raise ValidationError(f"{path}.{key}: expected shape {list(shape)}, got {list(arr.shape)}")
    return arr


def _prob_rows(arr, where):
    if np.any(arr < 0):
        idx = np.argwhere(arr < 0)[0]
        raise ValidationError(f"{where}" + "".join(f"[{i}]" for i in idx) + " is negative")
    sums = arr.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > 1e-12)
    if len(bad):
        idx = tuple(bad[0])
        raise ValidationError(f"{where}" + "".join(f"[{i}]" for i in idx)
                              + f" sums to {sums[idx]!r}, expected 1")


def mdp_from_json_dict(d: dict):
    if not isinstance(d, dict):
        raise ValidationError("$: expected a JSON object")
    unknown = set(d) - _MDP_FIELDS
    if unknown:
        raise ValidationError(f"$: unknown fields {sorted(unknown)}")
    missing = _MDP_FIELDS - set(d) - {"policies"}
    if missing:
        raise ValidationError(f"$: missing fields {sorted(missing)}")
    S, A = d["n_states"], d["n_actions"]
    if not (isinstance(S, int) and isinstance(A, int) and S > 0 and A > 0):
        raise ValidationError("$.n_states/$.n_actions: must be positive integers")
    P = _array(d, "transition", (S, A, S))
    _prob_rows(P, "$.transition")
    R = _array(d, "reward", (S, A))
    d0 = _array(d, "initial_dist", (S,))
    _prob_rows(d0, "$.initial_dist")
    terminal = d["terminal"]
    if not isinstance(terminal, list) or not all(isinstance(t, int) for t in terminal):
        raise ValidationError("$.terminal: expected an array of state indices")
    try:
        mdp = MdpSpec(P, R, d0, frozenset(terminal), d["gamma"], d["t_max"])
    except ValidationError as exc:
        raise ValidationError(f"$: {exc}") from None
    policies = {}
    for name, probs in d.get("policies", {}).items():
        arr = _array(d["policies"], name, (S, A), "$.policies")
        _prob_rows(arr, f"$.policies.{name}")
        policies[name] = PolicySpec(arr)
    return mdp, policies


def load_mdp(path):
    """Read ``(MdpSpec, {name: PolicySpec})`` from the JSON interchange format."""
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return mdp_from_json_dict(d)
