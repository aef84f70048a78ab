"""Point predicates for common regions, usable with CellSet.from_predicate."""

from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

Predicate = Callable[[np.ndarray], np.ndarray]


def ellipse(center, semi_axes) -> Predicate:
    c = np.asarray(center, dtype=float)
    s = np.asarray(semi_axes, dtype=float)
    return lambda p: (((p - c) / s) ** 2).sum(axis=1) <= 1.0


def disk(center, radius: float) -> Predicate:
    c = np.asarray(center, dtype=float)
    return lambda p: ((p - c) ** 2).sum(axis=1) <= radius * radius


def annulus(center, inner: float, outer: float) -> Predicate:
    c = np.asarray(center, dtype=float)

    def pred(p):
        r2 = ((p - c) ** 2).sum(axis=1)
        return (r2 >= inner * inner) & (r2 <= outer * outer)

    return pred


def box(lo, hi) -> Predicate:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lambda p: np.all((p >= lo) & (p <= hi), axis=1)


def spiral_heart() -> Predicate:
    """Region r <= exp(-|phi|), phi in (-pi, pi]: bounded by two spiral arcs.

    Its boundary arcs are trajectories of the spiral-contraction model that
    meet at (1, 0) and at the point of angle pi.
    """
    return lambda p: np.hypot(p[:, 0], p[:, 1]) <= np.exp(-np.abs(np.arctan2(p[:, 1], p[:, 0])))


_FUNCS = {
    "sqrt": np.sqrt, "abs": np.abs, "exp": np.exp, "log": np.log,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "atan2": np.arctan2,
    "arctan2": np.arctan2, "hypot": np.hypot, "min": np.minimum, "max": np.maximum,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_AXES = ("x", "y", "z")
_BINOPS = {
    ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
    ast.Div: np.divide, ast.Pow: np.power, ast.Mod: np.mod,
}
_CMPS = {
    ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater,
    ast.GtE: np.greater_equal, ast.Eq: np.equal, ast.NotEq: np.not_equal,
}


def expression(text: str, dimension: int) -> Predicate:
    """Compile an arithmetic inequality such as ``4*x**2 + y**2 <= 16``.

    Only numbers, the coordinates ``x, y, z``, ``pi``, ``e``, arithmetic,
    comparisons, ``and``/``or``/``not`` and a few numpy functions are allowed.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"invalid predicate {text!r}: {exc.msg}") from None
    names = _AXES[:dimension]

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ValueError(f"unknown name {node.id!r} in predicate")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = ev(node.operand, env)
            if isinstance(node.op, ast.USub):
                return np.negative(v)
            if isinstance(node.op, ast.UAdd):
                return v
            if isinstance(node.op, ast.Not):
                return np.logical_not(v)
        if isinstance(node, ast.Compare):
            left = ev(node.left, env)
            result = True
            for op, right_node in zip(node.ops, node.comparators):
                if type(op) not in _CMPS:
                    break
                right = ev(right_node, env)
                result = np.logical_and(result, _CMPS[type(op)](left, right))
                left = right
            else:
                return result
        if isinstance(node, ast.BoolOp):
            vals = [ev(v, env) for v in node.values]
            fn = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
            out = vals[0]
            for v in vals[1:]:
                out = fn(out, v)
            return out
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
            return _FUNCS[node.func.id](*[ev(a, env) for a in node.args])
        raise ValueError(f"unsupported syntax in predicate: {ast.dump(node)[:60]}")

    def pred(p):
        env = {n: p[:, k] for k, n in enumerate(names)}
        with np.errstate(all="ignore"):
            out = ev(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=bool), (p.shape[0],))

    # fail early on bad names or syntax
    pred(np.zeros((1, dimension)))
    return pred
