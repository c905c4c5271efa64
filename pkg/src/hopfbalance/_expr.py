"""Tiny safe arithmetic-expression compiler for model-file matrix entries."""

import ast
import math

_FUNCS = {
    name: getattr(math, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh",
                 "asin", "acos", "atan", "fabs")
}
_FUNCS["abs"] = abs
_CONSTS = {"pi": math.pi, "e": math.e}

_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load,
            ast.Call, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


class ExprError(ValueError):
    pass


def compile_expr(text, allowed_names):
    """Compile `text` into ``f(params) -> float``.

    Only arithmetic, whitelisted math functions and the names in
    `allowed_names` (plus ``pi`` and ``e``) are accepted.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"cannot parse expression {text!r}") from exc
    names = set()
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ExprError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExprError(f"non-numeric constant in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ExprError(f"disallowed call in {text!r}")
        elif isinstance(node, ast.Name) and node.id not in _FUNCS:
            names.add(node.id)
    unknown = names - set(allowed_names) - set(_CONSTS)
    if unknown:
        raise ExprError(f"unknown names {sorted(unknown)} in {text!r}")
    code = compile(tree, "<model-expr>", "eval")
    base = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def evaluate(params):
        return float(eval(code, base, dict(params)))  # noqa: S307 - AST whitelisted above

    return evaluate
