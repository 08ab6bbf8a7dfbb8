#!/usr/bin/env python3
"""Small Scheme subset used as a test evaluator for doctest runs.

Reads a program from stdin, evaluates every top-level form and exits 1 on
any error. Covers the list and arithmetic core the fixtures rely on; it is
not a conforming R7RS implementation.
"""

import sys


class Symbol(str):
    pass


class Pair:
    __slots__ = ("car", "cdr")

    def __init__(self, car, cdr):
        self.car, self.cdr = car, cdr


NIL = ()


def from_list(items, tail=NIL):
    result = tail
    for item in reversed(items):
        result = Pair(item, result)
    return result


def to_list(value):
    items = []
    while isinstance(value, Pair):
        items.append(value.car)
        value = value.cdr
    if value is not NIL:
        raise SchemeError("improper list")
    return items


class SchemeError(Exception):
    pass


def tokenize(text):
    tokens, i = [], 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
        elif c in "()'":
            tokens.append(c)
            i += 1
        elif c == '"':
            j, out = i + 1, []
            while text[j] != '"':
                if text[j] == "\\":
                    j += 1
                out.append(text[j])
                j += 1
            tokens.append(("str", "".join(out)))
            i = j + 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()';\"":
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def atom(token):
    if isinstance(token, tuple):
        return token[1]
    if token == "#t":
        return True
    if token == "#f":
        return False
    for kind in (int, float):
        try:
            return kind(token)
        except ValueError:
            pass
    return Symbol(token)


def read(tokens, pos):
    token = tokens[pos]
    if token == "(":
        items, pos = [], pos + 1
        tail = NIL
        while tokens[pos] != ")":
            if tokens[pos] == ".":
                tail, pos = read(tokens, pos + 1)
                continue
            item, pos = read(tokens, pos)
            items.append(item)
        return from_list(items, tail), pos + 1
    if token == "'":
        quoted, pos = read(tokens, pos + 1)
        return from_list([Symbol("quote"), quoted]), pos
    if token == ")":
        raise SchemeError("unexpected )")
    return atom(token), pos + 1


class Env(dict):
    def __init__(self, names=(), values=(), outer=None):
        super().__init__(zip(names, values))
        self.outer = outer

    def find(self, name):
        env = self
        while env is not None:
            if name in env:
                return env
            env = env.outer
        raise SchemeError(f"unbound variable: {name}")


class Procedure:
    def __init__(self, params, body, env):
        self.params, self.body, self.env = params, body, env

    def bind(self, args):
        names, values, params = [], [], self.params
        while isinstance(params, Pair):
            if not args:
                raise SchemeError("too few arguments")
            names.append(params.car)
            values.append(args.pop(0))
            params = params.cdr
        if isinstance(params, Symbol):
            names.append(params)
            values.append(from_list(args))
        elif args:
            raise SchemeError("too many arguments")
        return Env(names, values, self.env)


def is_true(value):
    return value is not False


def evaluate(x, env):
    while True:
        if isinstance(x, Symbol):
            return env.find(x)[x]
        if not isinstance(x, Pair):
            return x
        op, args = x.car, to_list(x.cdr)
        if op == "quote":
            return args[0]
        if op == "if":
            branch = args[1] if is_true(evaluate(args[0], env)) else (args[2] if len(args) > 2 else False)
            x = branch
            continue
        if op == "define":
            if isinstance(args[0], Pair):
                env[args[0].car] = Procedure(args[0].cdr, args[1:], env)
            else:
                env[args[0]] = evaluate(args[1], env)
            return None
        if op == "set!":
            env.find(args[0])[args[0]] = evaluate(args[1], env)
            return None
        if op == "lambda":
            return Procedure(args[0], args[1:], env)
        if op == "begin":
            for form in args[:-1]:
                evaluate(form, env)
            x = args[-1]
            continue
        if op == "cond":
            for clause in args:
                parts = to_list(clause)
                if parts[0] == "else" or is_true(test := evaluate(parts[0], env)):
                    if len(parts) == 1:
                        return test
                    for form in parts[1:-1]:
                        evaluate(form, env)
                    x = parts[-1]
                    break
            else:
                return None
            continue
        if op in ("let", "let*", "letrec"):
            bindings = [to_list(b) for b in to_list(args[0])]
            inner = Env(outer=env)
            for name, expr in bindings:
                inner[name] = evaluate(expr, inner if op != "let" else env)
            for form in args[1:-1]:
                evaluate(form, inner)
            x, env = args[-1], inner
            continue
        if op == "and":
            value = True
            for form in args:
                value = evaluate(form, env)
                if not is_true(value):
                    return False
            return value
        if op == "or":
            for form in args:
                value = evaluate(form, env)
                if is_true(value):
                    return value
            return False
        proc = evaluate(op, env)
        values = [evaluate(a, env) for a in args]
        if isinstance(proc, Procedure):
            env = proc.bind(values)
            for form in proc.body[:-1]:
                evaluate(form, env)
            x = proc.body[-1]
            continue
        if callable(proc):
            return proc(*values)
        raise SchemeError(f"not a procedure: {show(proc)}")


def equal(a, b):
    if isinstance(a, Pair) and isinstance(b, Pair):
        return equal(a.car, b.car) and equal(a.cdr, b.cdr)
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    return type(a) is type(b) and a == b or (isinstance(a, (int, float)) and isinstance(b, (int, float)) and a == b)


def show(value):
    if value is True:
        return "#t"
    if value is False:
        return "#f"
    if value is NIL:
        return "()"
    if isinstance(value, Pair):
        parts = []
        while isinstance(value, Pair):
            parts.append(show(value.car))
            value = value.cdr
        tail = "" if value is NIL else " . " + show(value)
        return "(" + " ".join(parts) + tail + ")"
    if isinstance(value, Procedure) or callable(value):
        return "#<procedure>"
    return str(value)


def length(lst):
    return len(to_list(lst))


def car(p):
    if not isinstance(p, Pair):
        raise SchemeError("car of non-pair")
    return p.car


def cdr(p):
    if not isinstance(p, Pair):
        raise SchemeError("cdr of non-pair")
    return p.cdr


def chain(op):
    return lambda *xs: all(op(a, b) for a, b in zip(xs, xs[1:]))


def append(*lists):
    if not lists:
        return NIL
    items = [x for lst in lists[:-1] for x in to_list(lst)]
    return from_list(items, lists[-1])


def subtract(first, *rest):
    return -first if not rest else first - sum(rest)


def global_env():
    env = Env()
    env.update({
        "car": car, "cdr": cdr, "cons": Pair,
        "list": lambda *xs: from_list(list(xs)),
        "null?": lambda x: x is NIL,
        "pair?": lambda x: isinstance(x, Pair),
        "list?": lambda x: x is NIL or (isinstance(x, Pair) and isinstance(x.cdr, (Pair, tuple))),
        "length": length, "append": append,
        "reverse": lambda lst: from_list(to_list(lst)[::-1]),
        "list-tail": lambda lst, k: from_list(to_list(lst)[k:]),
        "+": lambda *xs: sum(xs), "-": subtract,
        "*": lambda *xs: __import__("math").prod(xs),
        "/": lambda a, b: a / b if a % b else a // b,
        "=": chain(lambda a, b: a == b), "<": chain(lambda a, b: a < b),
        ">": chain(lambda a, b: a > b), "<=": chain(lambda a, b: a <= b),
        ">=": chain(lambda a, b: a >= b),
        "not": lambda x: x is False,
        "equal?": equal, "eqv?": equal, "eq?": lambda a, b: a is b or equal(a, b) and not isinstance(a, Pair),
        "zero?": lambda x: x == 0,
        "display": lambda x: sys.stdout.write(show(x)) and None,
        "newline": lambda: sys.stdout.write("\n") and None,
        "apply": lambda f, args: call(f, to_list(args)),
    })
    return env


def call(proc, args):
    if isinstance(proc, Procedure):
        env = proc.bind(list(args))
        result = None
        for form in proc.body:
            result = evaluate(form, env)
        return result
    return proc(*args)


def main():
    sys.setrecursionlimit(20000)
    tokens = tokenize(sys.stdin.read())
    env, pos = global_env(), 0
    try:
        while pos < len(tokens):
            form, pos = read(tokens, pos)
            evaluate(form, env)
    except (SchemeError, IndexError, TypeError, ZeroDivisionError, RecursionError) as e:
        sys.stdout.flush()
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
