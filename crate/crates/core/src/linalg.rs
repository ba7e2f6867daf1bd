//! Graded state spaces, sparse vectors over them, linear maps and tensor calculus.
//!
//! Basis keys are self-describing (no space handle): an abstract finite basis,
//! monomials `x^k`, lattice-plus-Heisenberg monomials, optionally wrapped in a
//! label from a finite bialgebra, and flat tensor words of any arity. All
//! enumeration orders are deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num::rational::BigRational;

use crate::scalar::{Ring, Scalar};
use crate::series::Coeff;

/// A single monomial `prod_j a[i_j, -n_j]^{k_j} * e[lambda]` in a lattice Fock space.
///
/// `mono` entries are `(i, n, k)` with `i` the 1-based color, `n >= 1` the mode
/// depth (the generator `a[i,-n]`) and `k >= 1` the multiplicity; kept sorted by
/// color ascending, then depth descending.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeState {
    pub lambda: Vec<i64>,
    pub mono: Vec<(u32, u32, u32)>,
}

impl LatticeState {
    pub fn new(lambda: Vec<i64>, mono_raw: Vec<(u32, u32, u32)>) -> LatticeState {
        let mut merged: BTreeMap<(u32, i64), u32> = BTreeMap::new();
        for (i, n, k) in mono_raw {
            if k == 0 {
                continue;
            }
            assert!(i >= 1 && n >= 1, "generator a[{i},-{n}] out of range");
            // Negate depth so the natural BTreeMap order gives depth-descending.
            *merged.entry((i, -(n as i64))).or_insert(0) += k;
        }
        let mono = merged
            .into_iter()
            .map(|((i, negn), k)| (i, (-negn) as u32, k))
            .collect();
        LatticeState { lambda, mono }
    }

    pub fn vacuum(rank: usize) -> LatticeState {
        LatticeState {
            lambda: vec![0; rank],
            mono: Vec::new(),
        }
    }

    pub fn weight(&self) -> i64 {
        self.mono.iter().map(|(_, n, k)| (*n as i64) * (*k as i64)).sum()
    }

    pub fn is_vacuum(&self) -> bool {
        self.mono.is_empty() && self.lambda.iter().all(|&c| c == 0)
    }

    /// Product in the commutative algebra: lattice classes add, monomials merge.
    pub fn mul(&self, other: &LatticeState) -> LatticeState {
        assert_eq!(self.lambda.len(), other.lambda.len(), "lattice rank");
        let lambda = self
            .lambda
            .iter()
            .zip(&other.lambda)
            .map(|(a, b)| a + b)
            .collect();
        let mut mono = self.mono.clone();
        mono.extend_from_slice(&other.mono);
        LatticeState::new(lambda, mono)
    }

    pub fn render(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        for (i, n, k) in &self.mono {
            let f = if *k == 1 {
                format!("a[{i},-{n}]")
            } else {
                format!("a[{i},-{n}]^{k}")
            };
            parts.push(f);
        }
        let lambda_zero = self.lambda.iter().all(|&c| c == 0);
        if !lambda_zero {
            let cs: Vec<String> = self.lambda.iter().map(|c| c.to_string()).collect();
            parts.push(format!("e[{}]", cs.join(",")));
        }
        if parts.is_empty() {
            "|0>".to_string()
        } else {
            parts.join("*")
        }
    }
}

/// Basis state of one of the supported space shapes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BasisKey {
    /// Abstract finite basis vector `b[i]`.
    B(u32),
    /// Monomial `x^k` in a truncated polynomial algebra.
    X(u32),
    /// Lattice Fock state.
    L(LatticeState),
    /// State labeled by a basis element `h[j]` of an auxiliary bialgebra.
    H(u32, Box<BasisKey>),
    /// Flat tensor word (arity >= 2, never nested).
    T(Vec<BasisKey>),
}

impl BasisKey {
    pub fn render(&self) -> String {
        match self {
            BasisKey::B(i) => format!("b[{i}]"),
            BasisKey::X(k) => format!("x^{k}"),
            BasisKey::L(s) => s.render(),
            BasisKey::H(j, inner) => format!("h[{j}]*{}", inner.render()),
            BasisKey::T(ks) => ks
                .iter()
                .map(|k| k.render())
                .collect::<Vec<_>>()
                .join("(x)"),
        }
    }

    /// Heisenberg weight / polynomial degree, summed over tensor slots.
    pub fn weight(&self) -> i64 {
        match self {
            BasisKey::B(_) => 0,
            BasisKey::X(k) => *k as i64,
            BasisKey::L(s) => s.weight(),
            BasisKey::H(_, inner) => inner.weight(),
            BasisKey::T(ks) => ks.iter().map(|k| k.weight()).sum(),
        }
    }

    pub fn slots(&self) -> Vec<BasisKey> {
        match self {
            BasisKey::T(ks) => ks.clone(),
            other => vec![other.clone()],
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            BasisKey::T(ks) => ks.len(),
            _ => 1,
        }
    }
}

impl fmt::Display for BasisKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

fn seal(mut ks: Vec<BasisKey>) -> BasisKey {
    match ks.len() {
        1 => ks.pop().unwrap(),
        _ => BasisKey::T(ks),
    }
}

/// Tensor product of keys; tensor words stay flat.
pub fn tensor_key(a: &BasisKey, b: &BasisKey) -> BasisKey {
    let mut ks = a.slots();
    ks.extend(b.slots());
    seal(ks)
}

/// Finite linear combination of basis keys with exact scalar coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    terms: BTreeMap<BasisKey, Scalar>,
}

impl StateVector {
    pub fn zero() -> StateVector {
        StateVector {
            terms: BTreeMap::new(),
        }
    }

    pub fn single(key: BasisKey, c: Scalar) -> StateVector {
        let mut v = StateVector::zero();
        v.insert_add(key, c);
        v
    }

    pub fn from_key(ring: &Ring, key: BasisKey) -> StateVector {
        StateVector::single(key, ring.one())
    }

    pub fn insert_add(&mut self, key: BasisKey, c: Scalar) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                o.get_mut().add_inplace(&c);
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BasisKey, &Scalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, key: &BasisKey) -> Option<&Scalar> {
        self.terms.get(key)
    }

    pub fn add(&self, other: &StateVector) -> StateVector {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.insert_add(k.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.insert_add(k.clone(), c.neg());
        }
        out
    }

    pub fn scale(&self, s: &Scalar) -> StateVector {
        let mut out = StateVector::zero();
        for (k, c) in &self.terms {
            out.insert_add(k.clone(), c.mul(s));
        }
        out
    }

    /// Linear extension of a map defined on keys.
    pub fn map_keys(&self, f: &dyn Fn(&BasisKey) -> StateVector) -> StateVector {
        let mut out = StateVector::zero();
        for (k, c) in &self.terms {
            for (k2, c2) in f(k).terms {
                out.insert_add(k2, c2.mul(c));
            }
        }
        out
    }

    pub fn render(&self) -> String {
        <Self as Coeff>::render(self)
    }
}

impl Coeff for StateVector {
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn add_inplace(&mut self, other: &Self) {
        for (k, c) in &other.terms {
            self.insert_add(k.clone(), c.clone());
        }
    }
    fn neg_inplace(&mut self) {
        for c in self.terms.values_mut() {
            c.neg_inplace();
        }
    }
    fn scale_big(&mut self, q: &BigRational) {
        if num::Zero::is_zero(q) {
            self.terms.clear();
            return;
        }
        for c in self.terms.values_mut() {
            c.scale_big(q);
        }
    }
    fn scale_scalar(&self, s: &Scalar) -> Self {
        self.scale(s)
    }
    fn render(&self) -> String {
        let parts: Vec<(bool, String)> = self
            .atoms()
            .into_iter()
            .filter(|(s, _)| !s.is_zero())
            .map(|(s, key)| {
                let (neg, coeff_body) = s.series_coeff_body();
                let mut body = coeff_body;
                if let Some(k) = key {
                    body.push('*');
                    body.push_str(&k);
                }
                (neg, body)
            })
            .collect();
        crate::scalar::join_signed_terms(&parts)
    }
    fn atoms(&self) -> Vec<(Scalar, Option<String>)> {
        self.terms
            .iter()
            .map(|(k, c)| (c.clone(), Some(k.render())))
            .collect()
    }
}

/// Tensor product of vectors; tensor words stay flat.
pub fn tensor(a: &StateVector, b: &StateVector) -> StateVector {
    let mut out = StateVector::zero();
    for (ka, ca) in a.iter() {
        for (kb, cb) in b.iter() {
            out.insert_add(tensor_key(ka, kb), ca.mul(cb));
        }
    }
    out
}

/// Permutes tensor slots: output slot `i` takes input slot `perm[i]`.
pub fn permute(v: &StateVector, perm: &[usize]) -> StateVector {
    let mut out = StateVector::zero();
    for (k, c) in v.iter() {
        let slots = k.slots();
        assert_eq!(slots.len(), perm.len(), "permutation arity");
        let ks: Vec<BasisKey> = perm.iter().map(|&i| slots[i].clone()).collect();
        out.insert_add(seal(ks), c.clone());
    }
    out
}

/// The flip on two tensor slots.
pub fn swap(v: &StateVector) -> StateVector {
    permute(v, &[1, 0])
}

/// Applies a linear map to one slot of every tensor word.
pub fn apply_slot(v: &StateVector, slot: usize, f: &LinearMap) -> StateVector {
    let mut out = StateVector::zero();
    for (k, c) in v.iter() {
        let slots = k.slots();
        assert!(slot < slots.len(), "slot index");
        for (img, ci) in f.apply_key(&slots[slot]).terms {
            let mut ks = slots.clone();
            let imgs = img.slots();
            // Replacing one slot may widen the word (e.g. a coproduct).
            ks.splice(slot..slot + 1, imgs);
            out.insert_add(seal(ks), c.mul(&ci));
        }
    }
    out
}

/// Collapses one slot with a scalar functional, shrinking the tensor word.
pub fn collapse_slot(
    v: &StateVector,
    slot: usize,
    f: &dyn Fn(&BasisKey) -> Scalar,
) -> StateVector {
    let mut out = StateVector::zero();
    for (k, c) in v.iter() {
        let mut slots = k.slots();
        assert!(slot < slots.len(), "slot index");
        assert!(slots.len() >= 2, "collapsing the only slot");
        let s = f(&slots.remove(slot));
        out.insert_add(seal(slots), c.mul(&s));
    }
    out
}

/// Linear map given by its action on basis keys.
#[derive(Clone)]
pub struct LinearMap {
    f: Arc<dyn Fn(&BasisKey) -> StateVector + Send + Sync>,
}

impl LinearMap {
    pub fn new(f: impl Fn(&BasisKey) -> StateVector + Send + Sync + 'static) -> LinearMap {
        LinearMap { f: Arc::new(f) }
    }

    pub fn from_table(table: BTreeMap<BasisKey, StateVector>) -> LinearMap {
        LinearMap::new(move |k| {
            table
                .get(k)
                .cloned()
                .unwrap_or_else(|| panic!("linear map has no column for {k}"))
        })
    }

    pub fn identity(ring: &Ring) -> LinearMap {
        let ring = ring.clone();
        LinearMap::new(move |k| StateVector::from_key(&ring, k.clone()))
    }

    pub fn apply_key(&self, k: &BasisKey) -> StateVector {
        (self.f)(k)
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        v.map_keys(&*self.f)
    }

    /// `self` after `inner`.
    pub fn compose(&self, inner: &LinearMap) -> LinearMap {
        let outer = self.clone();
        let inner = inner.clone();
        LinearMap::new(move |k| outer.apply(&inner.apply_key(k)))
    }

    /// j-fold iterate.
    pub fn iterate(&self, v: &StateVector, j: u32) -> StateVector {
        let mut out = v.clone();
        for _ in 0..j {
            out = self.apply(&out);
        }
        out
    }
}

/// Shapes of state spaces the engines run on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Space {
    /// dim abstract basis vectors `b[0..dim]`.
    Finite { dim: u32 },
    /// `k[x]/(x^(max_deg+1))`, basis `x^0..x^max_deg`.
    Poly { max_deg: u32 },
    /// Lattice Fock space: classes `|lambda_i| <= lambda_box`, Heisenberg weight
    /// up to `max_weight`.
    Fock {
        rank: u32,
        lambda_box: i64,
        max_weight: i64,
    },
    /// A Fock space with labels from an auxiliary bialgebra of dimension `hdim`.
    Labeled { hdim: u32, inner: Box<Space> },
}

fn fock_monos(rank: u32, max_weight: i64) -> Vec<Vec<(u32, u32, u32)>> {
    // All colored monomials of weight <= max_weight; parts are (color, depth).
    fn go(
        rank: u32,
        budget: i64,
        min_part: (u32, u32),
        acc: &mut Vec<(u32, u32, u32)>,
        out: &mut Vec<Vec<(u32, u32, u32)>>,
    ) {
        out.push(acc.clone());
        for i in min_part.0..=rank {
            let n_start = if i == min_part.0 { min_part.1 } else { 1 };
            for n in n_start..=(budget.max(0) as u32) {
                if (n as i64) > budget {
                    break;
                }
                acc.push((i, n, 1));
                go(rank, budget - n as i64, (i, n), acc, out);
                acc.pop();
            }
        }
    }
    let mut out = Vec::new();
    let mut acc = Vec::new();
    go(rank, max_weight, (1, 1), &mut acc, &mut out);
    out
}

impl Space {
    /// Deterministic basis enumeration (sorted in key order).
    pub fn enumerate(&self) -> Vec<BasisKey> {
        let mut keys = match self {
            Space::Finite { dim } => (0..*dim).map(BasisKey::B).collect::<Vec<_>>(),
            Space::Poly { max_deg } => (0..=*max_deg).map(BasisKey::X).collect(),
            Space::Fock {
                rank,
                lambda_box,
                max_weight,
            } => {
                let mut lambdas: Vec<Vec<i64>> = vec![Vec::new()];
                for _ in 0..*rank {
                    let mut next = Vec::new();
                    for l in &lambdas {
                        for c in -*lambda_box..=*lambda_box {
                            let mut l2 = l.clone();
                            l2.push(c);
                            next.push(l2);
                        }
                    }
                    lambdas = next;
                }
                let monos = fock_monos(*rank, *max_weight);
                let mut keys = Vec::new();
                for l in &lambdas {
                    for m in &monos {
                        keys.push(BasisKey::L(LatticeState::new(l.clone(), m.clone())));
                    }
                }
                keys
            }
            Space::Labeled { hdim, inner } => {
                let inner_keys = inner.enumerate();
                let mut keys = Vec::new();
                for j in 0..*hdim {
                    for k in &inner_keys {
                        keys.push(BasisKey::H(j, Box::new(k.clone())));
                    }
                }
                keys
            }
        };
        keys.sort();
        keys
    }

    pub fn vacuum(&self) -> BasisKey {
        match self {
            Space::Finite { .. } => panic!("finite bialgebras carry an explicit unit element"),
            Space::Poly { .. } => BasisKey::X(0),
            Space::Fock { rank, .. } => BasisKey::L(LatticeState::vacuum(*rank as usize)),
            Space::Labeled { .. } => {
                panic!("labeled spaces carry an explicit unit element")
            }
        }
    }

    pub fn contains(&self, key: &BasisKey) -> bool {
        match (self, key) {
            (Space::Finite { dim }, BasisKey::B(i)) => i < dim,
            (Space::Poly { max_deg }, BasisKey::X(k)) => k <= max_deg,
            (
                Space::Fock {
                    rank,
                    lambda_box,
                    max_weight,
                },
                BasisKey::L(s),
            ) => {
                s.lambda.len() == *rank as usize
                    && s.lambda.iter().all(|c| c.abs() <= *lambda_box)
                    && s.weight() <= *max_weight
                    && s.mono.iter().all(|(i, _, _)| *i <= *rank)
            }
            (Space::Labeled { hdim, inner }, BasisKey::H(j, k)) => j < hdim && inner.contains(k),
            _ => false,
        }
    }

    /// Number of basis states in one graded piece. For Fock spaces the grade is
    /// `(lattice class, weight)`; pass `None` to sum over classes.
    pub fn graded_dimension(&self, sector: Option<&[i64]>, weight: i64) -> u64 {
        self.enumerate()
            .iter()
            .filter(|k| {
                k.weight() == weight
                    && match (k, sector) {
                        (BasisKey::L(s), Some(l)) => s.lambda == l,
                        (BasisKey::H(_, inner), Some(l)) => match inner.as_ref() {
                            BasisKey::L(s) => s.lambda == l,
                            _ => false,
                        },
                        _ => true,
                    }
            })
            .count() as u64
    }
}
