"""Candidate-function library: pointwise products of hidden-state and
parameter monomials, contracted with a trainable coefficient matrix to form
the state increment.

The text form is comma-separated terms; a term is ``1`` or a ``*``-separated
product of factors: ``h<j>``, ``h<j>^<p>``, ``sin(h<j>)``, ``<param>``,
``<param>^<q>``. Repeated factors are merged by summing exponents, so
``h0*h0`` parses to the same term as ``h0^2`` (the printer also emits
``sin(h0)^2`` for merged sine factors, which the parser accepts back).
"""
from __future__ import annotations

from dataclasses import dataclass
import re

import numpy as np

from . import tensor as T
from .models import ArchConfig, FNOBackbone, ModelError, as_batched
from .tensor import Tensor

IDENTITY = "identity"
SIN = "sin"


class LibraryParseError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class HiddenFactor:
    index: int
    unary: str = IDENTITY
    exponent: int = 1


@dataclass(frozen=True, order=True)
class ParamFactor:
    index: int
    exponent: int = 1


@dataclass(frozen=True)
class LibraryTerm:
    """One candidate function; the empty term is the constant 1."""

    hidden_factors: tuple[HiddenFactor, ...] = ()
    param_factors: tuple[ParamFactor, ...] = ()

    @property
    def param_dependent(self) -> bool:
        return len(self.param_factors) > 0

    def canonical(self) -> "LibraryTerm":
        merged_h: dict[tuple[int, str], int] = {}
        for f in self.hidden_factors:
            if f.exponent < 1:
                raise LibraryParseError("hidden exponents must be >= 1")
            key = (f.index, f.unary)
            merged_h[key] = merged_h.get(key, 0) + f.exponent
        merged_p: dict[int, int] = {}
        for f in self.param_factors:
            if f.exponent < 1:
                raise LibraryParseError("parameter exponents must be >= 1")
            merged_p[f.index] = merged_p.get(f.index, 0) + f.exponent
        return LibraryTerm(
            hidden_factors=tuple(HiddenFactor(i, u, e)
                                 for (i, u), e in sorted(merged_h.items())),
            param_factors=tuple(ParamFactor(i, e)
                                for i, e in sorted(merged_p.items())),
        )


@dataclass(frozen=True)
class LibrarySpec:
    """Ordered, duplicate-free term list; the order fixes the coefficient rows."""

    terms: tuple[LibraryTerm, ...]
    hidden_arity: int
    param_arity: int
    param_names: tuple[str, ...]

    def __post_init__(self):
        if not self.terms:
            raise LibraryParseError("a library needs at least one term")
        if self.hidden_arity < 1:
            raise LibraryParseError("a library must reference at least one hidden state")
        if len(self.param_names) != self.param_arity:
            raise LibraryParseError("param_names must match param_arity")
        seen = set()
        for term in self.terms:
            if term != term.canonical():
                raise LibraryParseError("terms must be in canonical form")
            for f in term.hidden_factors:
                if not 0 <= f.index < self.hidden_arity:
                    raise LibraryParseError(f"hidden index h{f.index} out of range")
                if f.unary not in (IDENTITY, SIN):
                    raise LibraryParseError(f"unknown unary {f.unary!r}")
            for f in term.param_factors:
                if not 0 <= f.index < self.param_arity:
                    raise LibraryParseError(f"parameter index {f.index} out of range")
            if term in seen:
                raise LibraryParseError(f"duplicate term {term_to_string(self, term)!r}")
            seen.add(term)

    @property
    def num_terms(self) -> int:
        return len(self.terms)

    def param_dependent_indices(self) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.terms) if t.param_dependent],
                        dtype=np.intp)

    def param_independent_indices(self) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.terms) if not t.param_dependent],
                        dtype=np.intp)


_SIN_RE = re.compile(r"^sin\(h(\d+)\)(?:\^(\d+))?$")
_HIDDEN_RE = re.compile(r"^h(\d+)(?:\^(\d+))?$")
_PARAM_RE = re.compile(r"^([a-zA-Z_][a-zA-Z0-9_]*)(?:\^(\d+))?$")


def _parse_factor(text: str, param_names: tuple[str, ...]):
    if m := _SIN_RE.match(text):
        exp = int(m.group(2) or 1)
        if exp < 1:
            raise LibraryParseError(f"exponent must be >= 1 in {text!r}")
        return HiddenFactor(int(m.group(1)), SIN, exp)
    if m := _HIDDEN_RE.match(text):
        exp = int(m.group(2) or 1)
        if exp < 1:
            raise LibraryParseError(f"exponent must be >= 1 in {text!r} (spell the constant as '1')")
        return HiddenFactor(int(m.group(1)), IDENTITY, exp)
    if m := _PARAM_RE.match(text):
        name = m.group(1)
        if name not in param_names:
            raise LibraryParseError(f"unknown symbol {name!r}; parameters are {param_names}")
        exp = int(m.group(2) or 1)
        if exp < 1:
            raise LibraryParseError(f"exponent must be >= 1 in {text!r}")
        return ParamFactor(param_names.index(name), exp)
    raise LibraryParseError(f"cannot parse factor {text!r}")


def parse_library_spec(text: str, param_names: tuple[str, ...] | list[str],
                       hidden_arity: int | None = None) -> LibrarySpec:
    """Parse the term DSL; hidden arity is inferred from the largest h index
    unless given explicitly."""
    param_names = tuple(param_names)
    term_texts = [t.strip() for t in text.split(",")]
    if any(not t for t in term_texts):
        raise LibraryParseError("empty term in library string")
    terms = []
    max_hidden = -1
    for term_text in term_texts:
        if term_text == "1":
            terms.append(LibraryTerm())
            continue
        hidden, params = [], []
        for factor_text in (f.strip() for f in term_text.split("*")):
            if not factor_text:
                raise LibraryParseError(f"empty factor in term {term_text!r}")
            factor = _parse_factor(factor_text, param_names)
            if isinstance(factor, HiddenFactor):
                hidden.append(factor)
                max_hidden = max(max_hidden, factor.index)
            else:
                params.append(factor)
        terms.append(LibraryTerm(tuple(hidden), tuple(params)).canonical())
    inferred = max_hidden + 1
    if hidden_arity is None:
        hidden_arity = inferred
    elif hidden_arity < inferred:
        raise LibraryParseError(f"hidden_arity {hidden_arity} < largest index {inferred - 1}")
    return LibrarySpec(terms=tuple(terms), hidden_arity=hidden_arity,
                       param_arity=len(param_names), param_names=param_names)


def term_to_string(spec: LibrarySpec, term: LibraryTerm) -> str:
    if not term.hidden_factors and not term.param_factors:
        return "1"
    parts = []
    for f in term.hidden_factors:
        base = f"sin(h{f.index})" if f.unary == SIN else f"h{f.index}"
        parts.append(base if f.exponent == 1 else f"{base}^{f.exponent}")
    for f in term.param_factors:
        name = spec.param_names[f.index]
        parts.append(name if f.exponent == 1 else f"{name}^{f.exponent}")
    return "*".join(parts)


def library_to_string(spec: LibrarySpec) -> str:
    return ", ".join(term_to_string(spec, t) for t in spec.terms)


# evaluation ----------------------------------------------------------------

def _as_param_matrix(params, batch: int, arity: int) -> np.ndarray:
    p = np.asarray(params, dtype=np.float64)
    if p.ndim == 1:
        p = np.broadcast_to(p, (batch, p.shape[0]))
    if p.shape != (batch, arity):
        raise ValueError(f"parameters shape {p.shape} != ({batch}, {arity})")
    return p


def _promote_hidden(spec: LibrarySpec, hidden) -> tuple[Tensor, bool]:
    """Return batched hidden fields [B, H, spatial...] plus a squeeze flag.

    [H, X] and [B, H, X(, Y)] are unambiguous; a 3-dim array is read as an
    unbatched 2D field stack only when axis 0 (and not axis 1) matches the
    library's hidden arity.
    """
    t = hidden if isinstance(hidden, Tensor) else Tensor(np.asarray(hidden, dtype=np.float64))
    arity = spec.hidden_arity
    if t.ndim == 2 and t.shape[0] == arity:
        return T.reshape(t, (1,) + t.shape), True
    if t.ndim == 3:
        if t.shape[1] == arity:
            return t, False
        if t.shape[0] == arity:
            return T.reshape(t, (1,) + t.shape), True
    if t.ndim == 4 and t.shape[1] == arity:
        return t, False
    raise ValueError(f"hidden fields of shape {t.shape} do not match arity {arity}")


def evaluate_library(spec: LibrarySpec, hidden, params) -> Tensor:
    """Evaluate every term pointwise on the grid: [B, num_terms, X(, Y)].

    Accepts hidden fields [H, ...] or [B, H, ...]; parameter rows broadcast
    to the batch. Differentiable with respect to the hidden fields.
    """
    h, squeeze = _promote_hidden(spec, hidden)
    if not np.isfinite(h.data).all():
        raise ValueError("non-finite hidden fields")
    batch, spatial = h.shape[0], h.shape[2:]
    pmat = _as_param_matrix(params, batch, spec.param_arity)

    values = []
    for term in spec.terms:
        coef = np.ones(batch)
        for f in term.param_factors:
            coef = coef * pmat[:, f.index] ** f.exponent
        acc: Tensor | None = None
        for f in term.hidden_factors:
            factor = h[:, f.index]
            if f.unary == SIN:
                factor = T.sin(factor)
            if f.exponent != 1:
                factor = T.power(factor, f.exponent)
            acc = factor if acc is None else T.mul(acc, factor)
        if acc is None:
            value = Tensor(np.broadcast_to(coef.reshape((batch,) + (1,) * len(spatial)),
                                           (batch,) + spatial).copy())
        elif term.param_factors:
            value = T.mul(acc, Tensor(coef.reshape((batch,) + (1,) * len(spatial))))
        else:
            value = acc
        values.append(value)
    theta = T.stack(values, axis=1)
    return T.reshape(theta, theta.shape[1:]) if squeeze else theta


def residual_parts(spec: LibrarySpec, coeffs, hidden, params) -> tuple[Tensor, Tensor]:
    """Parameter-dependent and parameter-independent contributions to the
    state increment; their sum is the increment, by construction."""
    h, squeeze = _promote_hidden(spec, hidden)
    theta = evaluate_library(spec, h, params)
    if not isinstance(coeffs, Tensor):
        coeffs = Tensor(np.asarray(coeffs, dtype=np.float64))
    if coeffs.shape[0] != spec.num_terms:
        raise ValueError("coefficient rows must match the term count")
    dep_idx = spec.param_dependent_indices()
    indep_idx = spec.param_independent_indices()
    dep = T.channel_matmul(T.take(theta, dep_idx, axis=1), T.take(coeffs, dep_idx, axis=0))
    indep = T.channel_matmul(T.take(theta, indep_idx, axis=1), T.take(coeffs, indep_idx, axis=0))
    if squeeze:
        dep = T.reshape(dep, dep.shape[1:])
        indep = T.reshape(indep, indep.shape[1:])
    return dep, indep


def split_residual(spec: LibrarySpec, coeffs, hidden, params) -> tuple[np.ndarray, np.ndarray]:
    """Array-valued view of :func:`residual_parts` for analysis exports."""
    dep, indep = residual_parts(spec, coeffs, hidden, params)
    return dep.data, indep.data


def late_fusion_step(backbone: FNOBackbone, spec: LibrarySpec, coeffs: Tensor,
                     u, params) -> Tensor:
    """One time step: hidden states from the backbone, library contraction,
    and the residual added onto the current state."""
    x, squeeze = as_batched(u, backbone.arch.spatial_dims)
    hidden = backbone(x)
    dep, indep = residual_parts(spec, coeffs, hidden, _as_param_matrix(
        params, x.shape[0], spec.param_arity))
    out = T.add(x, T.add(dep, indep))
    return T.reshape(out, out.shape[1:]) if squeeze else out


class LateFusionModel:
    """Backbone + library + coefficient matrix, advanced as a residual map."""

    kind = "late_fusion"

    def __init__(self, arch: ArchConfig, library: LibrarySpec, family: str, seed: int):
        if arch.out_channels != library.hidden_arity:
            raise ValueError("backbone output channels must equal the library's hidden arity")
        self.arch = arch
        self.library = library
        self.family = family
        self.param_names = library.param_names
        self.num_variables = arch.in_channels
        self.seed = int(seed)
        self.backbone = FNOBackbone(arch, seed)
        # zero start: the model begins as the identity map in time
        self.coeffs = Tensor(np.zeros((library.num_terms, self.num_variables)),
                             requires_grad=True)

    def step(self, u, params, check_finite: bool = True) -> Tensor:
        out = late_fusion_step(self.backbone, self.library, self.coeffs, u, params)
        if check_finite and not np.isfinite(out.data).all():
            raise ModelError("non-finite activations in late-fusion forward pass")
        return out

    def hidden_states(self, u) -> Tensor:
        x, squeeze = as_batched(u, self.arch.spatial_dims)
        h = self.backbone(x)
        return T.reshape(h, h.shape[1:]) if squeeze else h

    def named_params(self) -> list[tuple[str, Tensor]]:
        return self.backbone.named_params() + [("coeffs", self.coeffs)]

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_params()]

    def config_dict(self) -> dict:
        return {
            "kind": self.kind,
            "family": self.family,
            "param_names": list(self.param_names),
            "arch": self.arch.to_dict(),
            "library": library_to_string(self.library),
            "hidden_arity": self.library.hidden_arity,
            "seed": self.seed,
            "init": "spectral uniform(0, 1/(cin*cout)); pointwise uniform(+-sqrt(1/fan_in)); coeffs zero",
        }
