"""Control-affine systems, target dynamics and control laws."""

from __future__ import annotations

from typing import Mapping, Sequence

from . import expr as E
from .expr import DuplicateVariable, Expr


class SymbolMismatch(ValueError):
    """An expression uses symbols outside the declared state and parameters."""


class SingularityHit(ArithmeticError):
    """A control law was evaluated where its singular guard vanishes."""

    def __init__(self, point, guard_value: float):
        super().__init__(point, guard_value)
        self.point = dict(point)
        self.guard_value = guard_value

    def __str__(self) -> str:
        return f"singular guard {self.guard_value:.3e} at {self.point}"


LAW_TAGS = ("generic-PI", "psf", "feedforward", "nontriangular", "catalog-reference")

GUARD_TOL = 1e-9


def _check_names(names: Sequence[str]) -> tuple[str, ...]:
    seen = set()
    for name in names:
        if not name.isidentifier():
            raise ValueError(f"bad symbol name {name!r}")
        if name in seen:
            raise DuplicateVariable(name)
        seen.add(name)
    return tuple(names)


def _as_exprs(items, n: int, what: str) -> tuple[Expr, ...]:
    if any(isinstance(e, (list, tuple)) for e in items):
        raise ValueError(f"{what} must be a flat vector; multi-input systems are not supported")
    out = tuple(E._wrap(e) for e in items)
    if len(out) != n:
        raise ValueError(f"{what} must have {n} components, got {len(out)}")
    return out


class ControlAffineSystem:
    """x_dot = f(x) + g(x) u with a single scalar input.

    state        ordered state symbol names
    f, g         drift and input vector fields, one Expr per state
    params       named constants that may appear in f and g
    time_symbol  optional name for explicit time dependence
    """

    def __init__(
        self,
        state: Sequence[str],
        f: Sequence[Expr],
        g: Sequence[Expr],
        params: Mapping[str, float] | None = None,
        time_symbol: str | None = None,
    ):
        self.state = _check_names(state)
        n = len(self.state)
        if n == 0:
            raise ValueError("empty state")
        self.f = _as_exprs(f, n, "f")
        self.g = _as_exprs(g, n, "g")
        self.params = {k: float(v) for k, v in (params or {}).items()}
        self.time_symbol = time_symbol
        allowed = self.allowed_symbols()
        for label, vec in (("f", self.f), ("g", self.g)):
            for i, e in enumerate(vec):
                extra = e.free_symbols() - allowed
                if extra:
                    raise SymbolMismatch(
                        f"{label}[{i}] uses undeclared symbols {sorted(extra)}"
                    )

    @property
    def dim(self) -> int:
        return len(self.state)

    def allowed_symbols(self) -> frozenset[str]:
        names = set(self.state) | set(self.params)
        if self.time_symbol:
            names.add(self.time_symbol)
        return frozenset(names)

    def check_expr(self, e: Expr, what: str = "expression") -> None:
        extra = e.free_symbols() - self.allowed_symbols()
        if extra:
            raise SymbolMismatch(f"{what} uses undeclared symbols {sorted(extra)}")

    def bind_params(self, extra: Mapping[str, float] | None = None) -> "ControlAffineSystem":
        """Substitute numeric parameter values into f and g."""
        table = dict(self.params)
        if extra:
            table.update({k: float(v) for k, v in extra.items()})
        consts = {k: E.Const(v) for k, v in table.items()}
        return ControlAffineSystem(
            self.state,
            [E.subst(e, consts) for e in self.f],
            [E.subst(e, consts) for e in self.g],
            params=None,
            time_symbol=self.time_symbol,
        )


class TargetDynamics:
    """Lower-dimensional target theta_dot = beta(theta) immersed by pi.

    The immersion pi maps the target state into the full state space; the
    target dimension must be strictly smaller than len(pi).
    """

    def __init__(
        self,
        target_state: Sequence[str],
        beta: Sequence[Expr],
        pi: Sequence[Expr],
        params: Mapping[str, float] | None = None,
    ):
        self.target_state = _check_names(target_state)
        h = len(self.target_state)
        self.beta = _as_exprs(beta, h, "beta")
        self.pi = tuple(E._wrap(e) for e in pi)
        self.params = {k: float(v) for k, v in (params or {}).items()}
        if h >= len(self.pi):
            raise ValueError(
                f"target dimension {h} must be smaller than the full dimension {len(self.pi)}"
            )
        allowed = frozenset(self.target_state) | frozenset(self.params)
        for label, vec in (("beta", self.beta), ("pi", self.pi)):
            for i, e in enumerate(vec):
                extra = e.free_symbols() - allowed
                if extra:
                    raise SymbolMismatch(
                        f"{label}[{i}] uses undeclared symbols {sorted(extra)}"
                    )


class ControlLaw:
    """A feedback law u(x) with its singular guard and provenance tag."""

    def __init__(self, u: Expr, guard: Expr | None = None, tag: str = "generic-PI",
                 notes: str = ""):
        if tag not in LAW_TAGS:
            raise ValueError(f"unknown law tag {tag!r}; expected one of {LAW_TAGS}")
        self.u = E._wrap(u)
        self.guard = E._wrap(guard) if guard is not None else E.Const(1.0)
        self.tag = tag
        self.notes = notes

    def evaluate(self, env: Mapping[str, float]) -> float:
        gv = self.guard.eval(env)
        if abs(gv) < GUARD_TOL:
            raise SingularityHit(env, gv)
        return self.u.eval(env)


def closed_loop(sys: ControlAffineSystem, law: ControlLaw) -> tuple[Expr, ...]:
    """The closed-loop vector field f + g*u, component-wise simplified."""
    sys.check_expr(law.u, "control law")
    sys.check_expr(law.guard, "singular guard")
    return tuple(E.simplify(E.add(fi, E.mul(gi, law.u)))
                 for fi, gi in zip(sys.f, sys.g))


def substitute_params(e: Expr, params: Mapping[str, float]) -> Expr:
    """Replace named parameters by numeric constants."""
    return E.subst(e, {k: E.Const(float(v)) for k, v in params.items()})
