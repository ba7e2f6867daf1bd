//! Textual grammar for states, shared by the CLI and witness rendering.
//!
//! Terms are joined by `+`/`-`, each term is an optional rational `p/q*` followed
//! by `*`-joined factors: `e[c1,...,cr]`, `a[i,-n]` (optionally `^k`), `|0>`,
//! `x^k`, `b[i]`, `h[j]`. Whitespace is insignificant. The parser accepts
//! everything the canonical renderer produces.

use num::bigint::BigInt;
use num::rational::BigRational;

use crate::error::VqgError;
use crate::linalg::{BasisKey, LatticeState, StateVector};
use crate::scalar::Ring;

/// What key shapes an input may mention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    Lattice,
    Poly,
    Finite,
}

#[derive(Clone, Debug)]
pub struct StateContext {
    pub ring: Ring,
    pub kind: StateKind,
    /// Lattice rank (arity of `e[...]`).
    pub rank: usize,
    /// Number of labels if `h[j]` factors are allowed.
    pub hdim: Option<u32>,
}

impl StateContext {
    pub fn lattice(ring: &Ring, rank: usize) -> StateContext {
        StateContext {
            ring: ring.clone(),
            kind: StateKind::Lattice,
            rank,
            hdim: None,
        }
    }

    pub fn poly(ring: &Ring) -> StateContext {
        StateContext {
            ring: ring.clone(),
            kind: StateKind::Poly,
            rank: 0,
            hdim: None,
        }
    }

    pub fn finite(ring: &Ring) -> StateContext {
        StateContext {
            ring: ring.clone(),
            kind: StateKind::Finite,
            rank: 0,
            hdim: None,
        }
    }
}

fn err(msg: impl Into<String>) -> VqgError {
    VqgError::Parse(msg.into())
}

/// Splits on `+`/`-` outside brackets; returns (negated, chunk) pairs.
fn split_terms(s: &str) -> Result<Vec<(bool, String)>, VqgError> {
    let mut terms = Vec::new();
    let mut cur = String::new();
    let mut neg = false;
    let mut depth = 0i32;
    for ch in s.chars() {
        match ch {
            '[' => {
                depth += 1;
                cur.push(ch);
            }
            ']' => {
                depth -= 1;
                if depth < 0 {
                    return Err(err("unbalanced ']'"));
                }
                cur.push(ch);
            }
            '+' | '-' if depth == 0 => {
                if cur.is_empty() {
                    if ch == '-' && !neg && terms.is_empty() {
                        neg = true;
                        continue;
                    }
                    return Err(err(format!("empty term before `{ch}`")));
                }
                terms.push((neg, std::mem::take(&mut cur)));
                neg = ch == '-';
            }
            _ => cur.push(ch),
        }
    }
    if depth != 0 {
        return Err(err("unbalanced '['"));
    }
    if cur.is_empty() {
        return Err(err("empty term"));
    }
    terms.push((neg, cur));
    Ok(terms)
}

fn parse_i64(s: &str) -> Result<i64, VqgError> {
    s.parse::<i64>().map_err(|_| err(format!("bad integer `{s}`")))
}

fn parse_rational(s: &str) -> Option<BigRational> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().ok()?;
    let d: BigInt = den.parse().ok()?;
    if d == BigInt::from(0) {
        return None;
    }
    Some(BigRational::new(n, d))
}

fn bracket_args<'a>(piece: &'a str, head: &str) -> Result<Vec<&'a str>, VqgError> {
    let rest = piece
        .strip_prefix(head)
        .and_then(|r| r.strip_prefix('['))
        .ok_or_else(|| err(format!("expected `{head}[...]` in `{piece}`")))?;
    let inner = rest
        .strip_suffix(']')
        .ok_or_else(|| err(format!("expected closing `]` in `{piece}`")))?;
    Ok(inner.split(',').collect())
}

struct TermBuilder {
    coeff: BigRational,
    lambda: Vec<i64>,
    mono: Vec<(u32, u32, u32)>,
    poly_deg: u32,
    b_index: Option<u32>,
    h_label: Option<u32>,
    saw_factor: bool,
}

/// Parses one state expression into a vector of basis keys.
pub fn parse_state(ctx: &StateContext, input: &str) -> Result<StateVector, VqgError> {
    let compact: String = input.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(err("empty state expression"));
    }
    if compact == "0" {
        return Ok(StateVector::zero());
    }
    let mut out = StateVector::zero();
    for (neg, chunk) in split_terms(&compact)? {
        let mut tb = TermBuilder {
            coeff: BigRational::from_integer(1.into()),
            lambda: vec![0; ctx.rank],
            mono: Vec::new(),
            poly_deg: 0,
            b_index: None,
            h_label: None,
            saw_factor: false,
        };
        for piece in chunk.split('*') {
            if piece.is_empty() {
                return Err(err(format!("empty factor in `{chunk}`")));
            }
            if let Some(q) = parse_rational(piece) {
                tb.coeff *= q;
                continue;
            }
            tb.saw_factor = true;
            let (base, pow) = match piece.split_once('^') {
                Some((b, p)) => {
                    let k = parse_i64(p)?;
                    if k < 0 {
                        return Err(err(format!("negative power in `{piece}`")));
                    }
                    (b, k as u32)
                }
                None => (piece, 1u32),
            };
            match base {
                "|0>" => {
                    if pow != 1 {
                        return Err(err("cannot raise |0> to a power"));
                    }
                }
                "x" => {
                    if ctx.kind != StateKind::Poly {
                        return Err(err("`x` factors only exist in polynomial spaces"));
                    }
                    tb.poly_deg += pow;
                }
                _ if base.starts_with("e[") || base == "e" => {
                    if ctx.kind != StateKind::Lattice {
                        return Err(err("`e[...]` factors only exist in lattice spaces"));
                    }
                    let args = bracket_args(base, "e")?;
                    if args.len() != ctx.rank {
                        return Err(err(format!(
                            "e[...] needs {} components, got {}",
                            ctx.rank,
                            args.len()
                        )));
                    }
                    for (slot, a) in args.iter().enumerate() {
                        tb.lambda[slot] += parse_i64(a)? * pow as i64;
                    }
                }
                _ if base.starts_with("a[") => {
                    if ctx.kind != StateKind::Lattice {
                        return Err(err("`a[...]` factors only exist in lattice spaces"));
                    }
                    let args = bracket_args(base, "a")?;
                    if args.len() != 2 {
                        return Err(err("a[...] takes exactly two arguments"));
                    }
                    let i = parse_i64(args[0])?;
                    let m = parse_i64(args[1])?;
                    if i < 1 || i as usize > ctx.rank {
                        return Err(err(format!("generator color {i} out of range")));
                    }
                    if m >= 0 {
                        return Err(err(format!(
                            "a[{i},{m}]: only creation modes a[i,-n] with n >= 1 are states"
                        )));
                    }
                    tb.mono.push((i as u32, (-m) as u32, pow));
                }
                _ if base.starts_with("b[") => {
                    if ctx.kind != StateKind::Finite {
                        return Err(err("`b[...]` factors only exist in finite bases"));
                    }
                    if pow != 1 || tb.b_index.is_some() {
                        return Err(err("finite basis factors cannot be multiplied"));
                    }
                    let args = bracket_args(base, "b")?;
                    if args.len() != 1 {
                        return Err(err("b[...] takes one argument"));
                    }
                    let i = parse_i64(args[0])?;
                    if i < 0 {
                        return Err(err("negative basis index"));
                    }
                    tb.b_index = Some(i as u32);
                }
                _ if base.starts_with("h[") => {
                    let hdim = ctx
                        .hdim
                        .ok_or_else(|| err("`h[...]` labels are not available here"))?;
                    if pow != 1 || tb.h_label.is_some() {
                        return Err(err("at most one `h[...]` label per term"));
                    }
                    let args = bracket_args(base, "h")?;
                    if args.len() != 1 {
                        return Err(err("h[...] takes one argument"));
                    }
                    let j = parse_i64(args[0])?;
                    if j < 0 || j as u32 >= hdim {
                        return Err(err(format!("label index {j} out of range")));
                    }
                    tb.h_label = Some(j as u32);
                }
                other => return Err(err(format!("unknown factor `{other}`"))),
            }
        }
        let key = match ctx.kind {
            StateKind::Lattice => BasisKey::L(LatticeState::new(tb.lambda, tb.mono)),
            StateKind::Poly => BasisKey::X(tb.poly_deg),
            StateKind::Finite => match tb.b_index {
                Some(i) => BasisKey::B(i),
                None if !tb.saw_factor => {
                    return Err(err("finite-basis terms must name a basis vector"))
                }
                None => return Err(err("finite-basis terms must name a basis vector")),
            },
        };
        let key = match tb.h_label {
            Some(j) => BasisKey::H(j, Box::new(key)),
            None => key,
        };
        let mut q = tb.coeff;
        if neg {
            q = -q;
        }
        out.insert_add(key, ctx.ring.big(q));
    }
    Ok(out)
}
