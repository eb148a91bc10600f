"""Expression trees with exact partial derivatives.

Nodes are immutable and simplified at construction.  Evaluation is vectorised
over numpy arrays and complex valued; a factor that evaluates to exactly zero
annihilates the product even if another factor is NaN there, which keeps
cone cutoffs well defined at the origin.
"""
from __future__ import annotations

import math
import numbers
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

VAR_KINDS = ("x", "xi", "y", "eps", "t")


class DomainError(ArithmeticError):
    pass


class CapExceeded(ValueError):
    pass


def _is_num(v):
    return isinstance(v, numbers.Number) and not isinstance(v, bool)


class Expr:
    __slots__ = ("_key", "_hash", "_dcache")
    kind = "expr"

    def __init__(self, key):
        self._key = key
        self._hash = hash(key)
        self._dcache = {}

    # structural identity
    def __eq__(self, other):
        return isinstance(other, Expr) and self._key == other._key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return to_sexpr(self)

    # arithmetic sugar
    def __add__(self, o):
        return add(self, wrap(o))

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(wrap(o)))

    def __rsub__(self, o):
        return add(wrap(o), neg(self))

    def __mul__(self, o):
        return mul(self, wrap(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, wrap(o))

    def __rtruediv__(self, o):
        return div(wrap(o), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    # interface
    @property
    def children(self) -> Tuple["Expr", ...]:
        return ()

    def rebuild(self, kids):
        return self

    def diff(self, var: Tuple[str, int]) -> "Expr":
        if var not in self._dcache:
            self._dcache[var] = self._diff(var) if var in self.free_vars() else ZERO
        return self._dcache[var]

    def _diff(self, var):
        raise NotImplementedError

    def free_vars(self) -> frozenset:
        fv = self._dcache.get("__fv__")
        if fv is None:
            fv = frozenset().union(*(c.free_vars() for c in self.children))
            self._dcache["__fv__"] = fv
        return fv

    def kinds(self) -> frozenset:
        return frozenset(k for k, _ in self.free_vars())

    def evaluate(self, env: Dict, memo=None):
        if memo is None:
            memo = {}
        k = id(self)
        if k not in memo:
            memo[k] = self._eval(env, memo)
        return memo[k]

    def _eval(self, env, memo):
        raise NotImplementedError


class Const(Expr):
    __slots__ = ("value",)
    kind = "const"

    def __init__(self, value):
        v = complex(value)
        if v.imag == 0:
            v = complex(v.real, 0.0)
        self.value = v
        super().__init__(("const", v.real, v.imag))

    def free_vars(self):
        return frozenset()

    def _diff(self, var):
        return ZERO

    def _eval(self, env, memo):
        return self.value


class Var(Expr):
    __slots__ = ("name", "index")
    kind = "var"

    def __init__(self, name, index=0):
        if name not in VAR_KINDS:
            raise ValueError(f"unknown variable kind {name}")
        self.name = name
        self.index = int(index)
        super().__init__(("var", name, self.index))

    def free_vars(self):
        return frozenset([(self.name, self.index)])

    def _diff(self, var):
        return ONE if var == (self.name, self.index) else ZERO

    def _eval(self, env, memo):
        try:
            return env[(self.name, self.index)]
        except KeyError:
            raise KeyError(f"no value bound for {self.name}{self.index}") from None


class _Nary(Expr):
    __slots__ = ("args",)

    def __init__(self, tag, args):
        self.args = tuple(args)
        super().__init__((tag,) + self.args)

    @property
    def children(self):
        return self.args


class Add(_Nary):
    __slots__ = ()
    kind = "add"

    def __init__(self, args):
        super().__init__("add", args)

    def rebuild(self, kids):
        return add(*kids)

    def _diff(self, var):
        return add(*(a.diff(var) for a in self.args))

    def _eval(self, env, memo):
        out = 0
        for a in self.args:
            out = out + a.evaluate(env, memo)
        return out


class Mul(_Nary):
    __slots__ = ()
    kind = "mul"

    def __init__(self, args):
        super().__init__("mul", args)

    def rebuild(self, kids):
        return mul(*kids)

    def _diff(self, var):
        terms = []
        for i, a in enumerate(self.args):
            da = a.diff(var)
            if da == ZERO:
                continue
            terms.append(mul(*(self.args[:i] + (da,) + self.args[i + 1:])))
        return add(*terms)

    def _eval(self, env, memo):
        vals = [a.evaluate(env, memo) for a in self.args]
        out = 1
        zero = None
        for v in vals:
            with np.errstate(invalid="ignore", over="ignore"):
                out = out * v
            z = (np.asarray(v) == 0)
            if z.any():
                zero = z if zero is None else (zero | z)
        if zero is not None:
            out = np.where(zero, 0.0, out)
            if out.ndim == 0:
                out = out[()]
        return out


class Pow(Expr):
    __slots__ = ("base", "p")
    kind = "pow"

    def __init__(self, base, p):
        self.base = base
        self.p = float(p)
        super().__init__(("pow", base, self.p))

    @property
    def children(self):
        return (self.base,)

    def rebuild(self, kids):
        return power(kids[0], self.p)

    def _diff(self, var):
        return mul(Const(self.p), power(self.base, self.p - 1), self.base.diff(var))

    def _eval(self, env, memo):
        b = self.base.evaluate(env, memo)
        p = self.p
        with np.errstate(all="ignore"):
            if p == int(p):
                pi = int(p)
                if pi >= 0:
                    return b ** pi
                return 1.0 / (np.asarray(b, complex) ** (-pi))
            bc = np.asarray(b, complex)
            return np.where(bc == 0, 0.0 if p > 0 else np.inf, bc ** p)


class _Unary(Expr):
    __slots__ = ("arg",)
    tag = "unary"

    def __init__(self, arg):
        self.arg = arg
        super().__init__((self.tag, arg))

    @property
    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return type(self).make(kids[0])

    @classmethod
    def make(cls, a):
        return cls(a)


class Exp(_Unary):
    __slots__ = ()
    kind = tag = "exp"

    @classmethod
    def make(cls, a):
        return exp(a)

    def _diff(self, var):
        return mul(self, self.arg.diff(var))

    def _eval(self, env, memo):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(self.arg.evaluate(env, memo))


class Log(_Unary):
    __slots__ = ()
    kind = tag = "log"

    @classmethod
    def make(cls, a):
        return log(a)

    def _diff(self, var):
        return mul(self.arg.diff(var), power(self.arg, -1))

    def _eval(self, env, memo):
        a = np.asarray(self.arg.evaluate(env, memo), complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(a == 0, np.nan, np.log(np.where(a == 0, 1, a)))
        if np.all(a.imag == 0) and np.all(a.real > 0):
            out = out.real
        return out[()] if out.ndim == 0 else out


class Sin(_Unary):
    __slots__ = ()
    kind = tag = "sin"

    @classmethod
    def make(cls, a):
        return sin(a)

    def _diff(self, var):
        return mul(cos(self.arg), self.arg.diff(var))

    def _eval(self, env, memo):
        return np.sin(self.arg.evaluate(env, memo))


class Cos(_Unary):
    __slots__ = ()
    kind = tag = "cos"

    @classmethod
    def make(cls, a):
        return cos(a)

    def _diff(self, var):
        return mul(Const(-1), sin(self.arg), self.arg.diff(var))

    def _eval(self, env, memo):
        return np.cos(self.arg.evaluate(env, memo))


class JBracket(Expr):
    """Japanese bracket <xi> = (1 + |xi|^2)^(1/2) in n frequency variables."""
    __slots__ = ("n",)
    kind = "jbracket"

    def __init__(self, n):
        self.n = int(n)
        super().__init__(("jbracket", self.n))

    def free_vars(self):
        return frozenset(("xi", i) for i in range(self.n))

    def _diff(self, var):
        return mul(Var("xi", var[1]), power(self, -1))

    def _eval(self, env, memo):
        s = 1.0
        for i in range(self.n):
            v = env[("xi", i)]
            s = s + np.real(v) ** 2
        return np.sqrt(s)


class Smooth(Expr):
    """k-th derivative of the glue function s(t) = g(t)/(g(t)+g(1-t))."""
    __slots__ = ("k", "arg")
    kind = "smoothstep"

    def __init__(self, k, arg):
        self.k = int(k)
        self.arg = arg
        super().__init__(("smooth", self.k, arg))

    @property
    def children(self):
        return (self.arg,)

    def rebuild(self, kids):
        return smooth(kids[0], self.k)

    def _diff(self, var):
        return mul(Smooth(self.k + 1, self.arg), self.arg.diff(var))

    def _eval(self, env, memo):
        t = self.arg.evaluate(env, memo)
        tr = np.real(t)
        return smoothstep_deriv(tr, self.k)


# ----------------------------------------------------------------------------
# smoothstep and its derivatives via truncated power series

_T_EDGE = 2e-3


def _jet_exp(c):
    K = c.shape[0] - 1
    b = np.empty_like(c)
    with np.errstate(under="ignore"):
        b[0] = np.exp(c[0])
    for n in range(1, K + 1):
        acc = np.zeros_like(c[0])
        for m in range(1, n + 1):
            acc = acc + m * c[m] * b[n - m]
        b[n] = acc / n
    return b


def _jet_div(a, b):
    K = a.shape[0] - 1
    q = np.empty_like(a)
    for n in range(K + 1):
        acc = a[n].copy()
        for m in range(1, n + 1):
            acc = acc - b[m] * q[n - m]
        q[n] = acc / b[0]
    return q


def smoothstep_jet(t, K):
    """Taylor coefficients s^(k)(t)/k! for k = 0..K, shape (K+1,) + t.shape."""
    t = np.asarray(t, float)
    flat = t.ravel()
    out = np.zeros((K + 1, flat.size))
    with np.errstate(invalid="ignore"):
        out[0] = np.where(flat >= 1 - _T_EDGE, 1.0, 0.0)
        nanmask = np.isnan(flat)
        inner = (flat > _T_EDGE) & (flat < 1 - _T_EDGE)
    if inner.any():
        ti = flat[inner]
        n = np.arange(K + 1)[:, None]
        # -1/(t+h) and -1/(1-t-h) as series in h
        c1 = -((-1.0) ** n) / ti[None, :] ** (n + 1)
        c2 = -1.0 / (1.0 - ti[None, :]) ** (n + 1)
        g1 = _jet_exp(c1)
        g2 = _jet_exp(c2)
        out[:, inner] = _jet_div(g1, g1 + g2)
    out[:, nanmask] = np.nan
    return out.reshape((K + 1,) + t.shape)


def smoothstep_deriv(t, k=0):
    t = np.asarray(t, float)
    if k == 0:
        out = np.zeros_like(t)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            g1 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
            g2 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
            out = g1 / (g1 + g2)
        out = np.where(np.isnan(t), np.nan, out)
        return out[()] if out.ndim == 0 else out
    jet = smoothstep_jet(t, k)
    return jet[k] * math.factorial(k)


def smoothstep(t):
    """s(t) = g(t)/(g(t)+g(1-t)), g(t) = exp(-1/t) for t > 0 else 0."""
    return smoothstep_deriv(t, 0)


# ----------------------------------------------------------------------------
# constructors with simplification

ZERO = Const(0)
ONE = Const(1)


def wrap(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if _is_num(v):
        return Const(v)
    raise TypeError(f"cannot convert {v!r} to an expression")


def const(re, im=0.0):
    return Const(complex(re, im))


def var(name, index=0):
    return Var(name, index)


def x(i=0):
    return Var("x", i)


def xi(i=0):
    return Var("xi", i)


def y(i=0):
    return Var("y", i)


EPS = Var("eps", 0)
T = Var("t", 0)


def _split_coeff(e: Expr):
    """Return (numeric coefficient, remaining expression) of a term."""
    if isinstance(e, Const):
        return e.value, ONE
    if isinstance(e, Mul) and isinstance(e.args[0], Const):
        rest = e.args[1:]
        return e.args[0].value, rest[0] if len(rest) == 1 else Mul(rest)
    return 1.0, e


def add(*args) -> Expr:
    flat: List[Expr] = []
    for a in args:
        a = wrap(a)
        if isinstance(a, Add):
            flat.extend(a.args)
        else:
            flat.append(a)
    coeffs: Dict[Expr, complex] = {}
    order: List[Expr] = []
    for a in flat:
        c, rest = _split_coeff(a)
        if c == 0:
            continue
        if rest in coeffs:
            coeffs[rest] += c
        else:
            coeffs[rest] = c
            order.append(rest)
    terms = []
    for rest in order:
        c = coeffs[rest]
        if c == 0:
            continue
        if rest == ONE:
            terms.append(Const(c))
        elif c == 1:
            terms.append(rest)
        else:
            terms.append(mul(Const(c), rest))
    # constants last, for readability
    consts = [t for t in terms if isinstance(t, Const)]
    others = [t for t in terms if not isinstance(t, Const)]
    terms = others + consts
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Add(terms)


def mul(*args) -> Expr:
    c = 1.0 + 0j
    flat: List[Expr] = []
    for a in args:
        a = wrap(a)
        if isinstance(a, Mul):
            items = a.args
        else:
            items = (a,)
        for it in items:
            if isinstance(it, Const):
                c *= it.value
            else:
                flat.append(it)
    if c == 0:
        return ZERO
    # merge equal bases into powers
    powers: Dict[Expr, float] = {}
    order: List[Expr] = []
    for f in flat:
        b, p = (f.base, f.p) if isinstance(f, Pow) else (f, 1.0)
        if b in powers:
            powers[b] += p
        else:
            powers[b] = p
            order.append(b)
    factors = []
    for b in order:
        p = powers[b]
        if p == 0:
            continue
        factors.append(b if p == 1 else Pow(b, p))
    if not factors:
        return Const(c)
    if c != 1:
        factors.insert(0, Const(c))
    if len(factors) == 1:
        return factors[0]
    return Mul(factors)


def neg(a) -> Expr:
    return mul(Const(-1), a)


def sub(a, b) -> Expr:
    return add(a, neg(b))


def power(base, p) -> Expr:
    base = wrap(base)
    if isinstance(p, Expr):
        if isinstance(p, Const) and p.value.imag == 0:
            p = p.value.real
        else:
            raise TypeError("only constant real exponents are supported")
    p = float(p)
    if p == 0:
        return ONE
    if p == 1:
        return base
    if isinstance(base, Const):
        with np.errstate(all="ignore"):
            return Const(base.value ** p)
    if isinstance(base, Pow) and float(p).is_integer():
        return power(base.base, base.p * p)
    if isinstance(base, Mul) and float(p).is_integer():
        return mul(*(power(f, p) for f in base.args))
    return Pow(base, p)


def div(a, b) -> Expr:
    b = wrap(b)
    if b == ZERO:
        raise DomainError("division by the zero expression")
    return mul(a, power(b, -1))


def exp(a) -> Expr:
    a = wrap(a)
    if isinstance(a, Const):
        return Const(np.exp(a.value))
    return Exp(a)


def log(a) -> Expr:
    a = wrap(a)
    if isinstance(a, Const):
        if a.value == 0:
            raise DomainError("log(0)")
        return Const(np.log(a.value))
    return Log(a)


def sin(a) -> Expr:
    a = wrap(a)
    if isinstance(a, Const):
        return Const(np.sin(a.value))
    return Sin(a)


def cos(a) -> Expr:
    a = wrap(a)
    if isinstance(a, Const):
        return Const(np.cos(a.value))
    return Cos(a)


def jb(n=1) -> Expr:
    return JBracket(n)


def smooth(a, k=0) -> Expr:
    a = wrap(a)
    if isinstance(a, Const):
        return Const(float(smoothstep_deriv(np.array(a.value.real), k)))
    return Smooth(k, a)


# ----------------------------------------------------------------------------
# tree utilities

def transform(e: Expr, fn, memo=None) -> Expr:
    """Bottom-up rebuild; ``fn(node, new_children)`` returns a replacement or None."""
    if memo is None:
        memo = {}
    k = id(e)
    if k in memo:
        return memo[k]
    kids = [transform(c, fn, memo) for c in e.children]
    out = fn(e, kids)
    if out is None:
        out = e.rebuild(kids) if e.children else e
    memo[k] = out
    return out


def substitute(e: Expr, mapping: Dict[Tuple[str, int], Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    mapping = {k: wrap(v) for k, v in mapping.items()}

    def fn(node, kids):
        if isinstance(node, Var):
            return mapping.get((node.name, node.index))
        if isinstance(node, JBracket):
            hit = [("xi", i) in mapping for i in range(node.n)]
            if any(hit):
                s = ONE
                for i in range(node.n):
                    s = add(s, power(mapping.get(("xi", i), Var("xi", i)), 2))
                return power(s, 0.5)
        return None

    return transform(e, fn)


def conj(e: Expr) -> Expr:
    """Complex conjugate assuming all variables are real."""
    def fn(node, kids):
        if isinstance(node, Const):
            return Const(node.value.conjugate())
        return None

    return transform(e, fn)


def count_nodes(e: Expr) -> int:
    seen = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.extend(n.children)
    return len(seen)


def diff_multi(e: Expr, alpha: Iterable[int] = (), beta: Iterable[int] = (),
               cap: int = 12, xvar="x") -> Expr:
    """Apply d_xi^alpha d_x^beta exactly."""
    alpha, beta = tuple(alpha), tuple(beta)
    if sum(alpha) + sum(beta) > cap:
        raise CapExceeded(f"derivative order {sum(alpha) + sum(beta)} exceeds cap {cap}")
    for i, a in enumerate(alpha):
        for _ in range(a):
            e = e.diff(("xi", i))
    for i, b in enumerate(beta):
        for _ in range(b):
            e = e.diff((xvar, i))
    return e


def evaluate(e: Expr, env: Dict, check=True):
    """Evaluate with broadcasting; raise DomainError on non-finite output."""
    out = np.asarray(e.evaluate(env), dtype=complex)
    if check and not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite value in {to_sexpr(e)[:120]}")
    return out


# ----------------------------------------------------------------------------
# separability: sum of products f(x) g(xi)

def _expand_products(e: Expr, cap: int) -> Optional[List[Expr]]:
    """Distribute products over sums; returns a list of product terms or None."""
    if isinstance(e, Add):
        out = []
        for a in e.args:
            t = _expand_products(a, cap)
            if t is None:
                return None
            out.extend(t)
            if len(out) > cap:
                return None
        return out
    if isinstance(e, Mul):
        acc = [ONE]
        for f in e.args:
            ft = _expand_products(f, cap)
            if ft is None:
                return None
            acc = [mul(a, b) for a in acc for b in ft]
            if len(acc) > cap:
                return None
        return acc
    if isinstance(e, Pow) and e.p.is_integer() and 1 < e.p <= 4 and isinstance(e.base, Add):
        return _expand_products(mul(*([e.base] * int(e.p))), cap)
    return [e]


def separate(e: Expr, cap: int = 64):
    """Split into [(f(x), g(xi)), ...] if possible, else None.

    Factors depending only on epsilon or t go to the x side.
    """
    terms = _expand_products(e, cap)
    if terms is None:
        return None
    pairs = []
    for t in terms:
        factors = t.args if isinstance(t, Mul) else (t,)
        fx, gk = [], []
        for f in factors:
            kinds = f.kinds()
            if "xi" in kinds and ("x" in kinds or "y" in kinds):
                return None
            (gk if "xi" in kinds else fx).append(f)
        pairs.append((mul(*fx), mul(*gk)))
    return pairs


# ----------------------------------------------------------------------------
# s-expressions

def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_sexpr(e: Expr) -> str:
    if isinstance(e, Const):
        return f"(const {_fmt(e.value.real)} {_fmt(e.value.imag)})"
    if isinstance(e, Var):
        return f"(var {e.name} {e.index})"
    if isinstance(e, Add):
        return "(add " + " ".join(to_sexpr(a) for a in e.args) + ")"
    if isinstance(e, Mul):
        return "(mul " + " ".join(to_sexpr(a) for a in e.args) + ")"
    if isinstance(e, Pow):
        return f"(pow {to_sexpr(e.base)} {_fmt(e.p)})"
    if isinstance(e, JBracket):
        return f"(jbracket {e.n})"
    if isinstance(e, Smooth):
        if e.k == 0:
            return f"(smoothstep {to_sexpr(e.arg)})"
        return f"(dsmoothstep {e.k} {to_sexpr(e.arg)})"
    if isinstance(e, _Unary):
        return f"({e.tag} {to_sexpr(e.arg)})"
    raise TypeError(type(e))


def _tokenize(s: str):
    return s.replace("(", " ( ").replace(")", " ) ").split()


def from_sexpr(s: str) -> Expr:
    toks = _tokenize(s)
    pos = 0

    def parse():
        nonlocal pos
        tok = toks[pos]
        if tok != "(":
            raise ValueError(f"expected '(' at token {pos}, got {tok!r}")
        pos += 1
        head = toks[pos]
        pos += 1
        items = []
        while toks[pos] != ")":
            if toks[pos] == "(":
                items.append(parse())
            else:
                items.append(toks[pos])
                pos += 1
        pos += 1
        return build(head, items)

    def build(head, items):
        if head == "const":
            re_ = float(items[0])
            im_ = float(items[1]) if len(items) > 1 else 0.0
            return Const(complex(re_, im_))
        if head == "var":
            return Var(items[0], int(items[1]) if len(items) > 1 else 0)
        if head == "add":
            return add(*items)
        if head == "sub":
            return sub(items[0], items[1]) if len(items) == 2 else neg(items[0])
        if head == "mul":
            return mul(*items)
        if head == "div":
            return div(items[0], items[1])
        if head == "neg":
            return neg(items[0])
        if head == "pow":
            return power(items[0], float(items[1]) if isinstance(items[1], str) else items[1])
        if head == "exp":
            return exp(items[0])
        if head == "log":
            return log(items[0])
        if head == "sin":
            return sin(items[0])
        if head == "cos":
            return cos(items[0])
        if head == "jbracket":
            return jb(int(items[0]))
        if head == "smoothstep":
            return smooth(items[0])
        if head == "dsmoothstep":
            return smooth(items[1], int(items[0]))
        raise ValueError(f"unknown head {head!r}")

    out = parse()
    if pos != len(toks):
        raise ValueError("trailing tokens in s-expression")
    return out
