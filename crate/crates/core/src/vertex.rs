//! Vertex engines over a formal coordinate: state-field evaluation with exact
//! windows, fields with normal ordering and modes, the axiom checks (vacuum,
//! translation, skew commutativity and its braided variant, weak associativity,
//! locality and braided locality, coproduct compatibility, multiplicative
//! coordinate equivalence) and reconstruction from generating fields.
//!
//! An engine is a memoised evaluator `(a, b) -> Y(a, z) b` producing sparse
//! Laurent series with state-vector coefficients, exact on their windows.
//! Checks compare series on caller-supplied probe boxes and report `Pass`, a
//! rendered failure witness, or the window that was too small. A truncation
//! shortfall is retried once with the engine's expansion depth doubled before
//! it is reported as `Insufficient`.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use num::rational::BigRational;
use num::One;

use crate::error::{CheckOutcome, VqgError, Witness};
use crate::linalg::{apply_slot, tensor, BasisKey, LinearMap, Space, StateVector};
use crate::scalar::{factorial, gen_binomial, Ring, Scalar};
use crate::series::{
    expand_shifted_power, log1p, mult_inverse_coordinate, zw_power, GroupLaw, Series, ShiftDir,
    VarSet, Window, INF_HI,
};

/// Evaluator behind an engine: `(a, b, truncation, hi)` must return `Y(a, z) b`
/// exact at least on `[lo, hi)` for the engine's own sound low bound `lo`, and
/// must tolerate windows that are empty (`hi <= lo`).
pub type EvalFn =
    dyn Fn(&BasisKey, &BasisKey, u32, i64) -> Result<Series<StateVector>, VqgError> + Send + Sync;

/// Sound lower bound for the exponents of `Y(a, z) b`.
pub type PoleFn = dyn Fn(&BasisKey, &BasisKey) -> i64 + Send + Sync;

/// Coproduct splits of a basis state: the terms of `delta(a)` as
/// `(left, right, coefficient)` triples.
pub type SplitFn = dyn Fn(&BasisKey) -> Vec<(BasisKey, BasisKey, Scalar)> + Send + Sync;

/// Spectral R-matrix: scalar-valued Laurent series `S(x (x) y)(z)` per state
/// pair, exact below the requested bound.
#[derive(Clone)]
pub struct VertexRMatrix {
    eval: Arc<dyn Fn(&BasisKey, &BasisKey, i64) -> Result<Series<Scalar>, VqgError> + Send + Sync>,
}

impl VertexRMatrix {
    pub fn new(
        f: impl Fn(&BasisKey, &BasisKey, i64) -> Result<Series<Scalar>, VqgError>
            + Send
            + Sync
            + 'static,
    ) -> VertexRMatrix {
        VertexRMatrix { eval: Arc::new(f) }
    }

    /// The constant series `1` for every pair (no braiding).
    pub fn trivial(ring: &Ring) -> VertexRMatrix {
        let ring = ring.clone();
        VertexRMatrix::new(move |_, _, _| {
            Ok(Series::one(&ring, VarSet::new(&["z"])))
        })
    }

    pub fn eval(&self, x: &BasisKey, y: &BasisKey, hi: i64) -> Result<Series<Scalar>, VqgError> {
        (self.eval)(x, y, hi)
    }
}

/// A state-field correspondence: ring, state space, vacuum vector, formal group
/// law of the coordinate, translation operator and the memoised evaluator.
#[derive(Clone)]
pub struct VertexEngine {
    ring: Ring,
    space: Space,
    vacuum: StateVector,
    law: GroupLaw,
    truncation: u32,
    t_map: LinearMap,
    eval: Arc<EvalFn>,
    pole: Arc<PoleFn>,
    memo: Arc<Mutex<BTreeMap<(BasisKey, BasisKey), Arc<Series<StateVector>>>>>,
}

impl std::fmt::Debug for VertexEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VertexEngine")
            .field("space", &self.space)
            .field("law", &self.law)
            .field("truncation", &self.truncation)
            .finish_non_exhaustive()
    }
}

impl VertexEngine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ring: Ring,
        space: Space,
        vacuum: StateVector,
        law: GroupLaw,
        truncation: u32,
        t_map: LinearMap,
        eval: Arc<EvalFn>,
        pole: Arc<PoleFn>,
    ) -> VertexEngine {
        VertexEngine {
            ring,
            space,
            vacuum,
            law,
            truncation,
            t_map,
            eval,
            pole,
            memo: Arc::new(Mutex::new(BTreeMap::new())),
        }
    }

    pub fn ring(&self) -> &Ring {
        &self.ring
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn vacuum(&self) -> &StateVector {
        &self.vacuum
    }

    pub fn law(&self) -> GroupLaw {
        self.law
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn t_map(&self) -> &LinearMap {
        &self.t_map
    }

    pub fn t_apply(&self, v: &StateVector) -> StateVector {
        self.t_map.apply(v)
    }

    /// Same engine with a different expansion depth and a fresh memo (the depth
    /// can influence evaluator output, so cached series are not reusable).
    pub fn with_truncation(&self, truncation: u32) -> VertexEngine {
        let mut e = self.clone();
        e.truncation = truncation;
        e.memo = Arc::new(Mutex::new(BTreeMap::new()));
        e
    }

    pub fn pole_bound(&self, a: &BasisKey, b: &BasisKey) -> i64 {
        (self.pole)(a, b)
    }

    /// Lower exponent bound over all key pairs of two vectors (0 when empty).
    pub fn pole_bound_vec(&self, a: &StateVector, b: &StateVector) -> i64 {
        let mut lo = 0i64;
        for (ka, _) in a.iter() {
            for (kb, _) in b.iter() {
                lo = lo.min(self.pole_bound(ka, kb));
            }
        }
        lo
    }

    /// `Y(a, z) b` exact at least below `hi`, memoised per pair at the deepest
    /// bound requested so far. The shared handle lets callers accumulate from
    /// the cache without cloning the stored series.
    pub fn eval_pair_arc(
        &self,
        a: &BasisKey,
        b: &BasisKey,
        hi: i64,
    ) -> Result<Arc<Series<StateVector>>, VqgError> {
        let key = (a.clone(), b.clone());
        {
            let memo = self.memo.lock().unwrap();
            if let Some(s) = memo.get(&key) {
                if s.window().hi[0] >= hi {
                    return Ok(Arc::clone(s));
                }
            }
        }
        let s = Arc::new((self.eval)(a, b, self.truncation, hi)?);
        let mut memo = self.memo.lock().unwrap();
        let slot = memo.entry(key).or_insert_with(|| Arc::clone(&s));
        if slot.window().hi[0] < s.window().hi[0] {
            *slot = Arc::clone(&s);
        }
        Ok(s)
    }

    /// Owned variant of [`VertexEngine::eval_pair_arc`].
    pub fn eval_pair(
        &self,
        a: &BasisKey,
        b: &BasisKey,
        hi: i64,
    ) -> Result<Series<StateVector>, VqgError> {
        Ok((*self.eval_pair_arc(a, b, hi)?).clone())
    }

    /// `Y(a, z)` applied to a state vector, exact below `hi`.
    pub fn y_key(
        &self,
        a: &BasisKey,
        b: &StateVector,
        hi: i64,
    ) -> Result<Series<StateVector>, VqgError> {
        let vars = VarSet::new(&["z"]);
        let mut acc: Option<Series<StateVector>> = None;
        for (kb, c) in b.iter() {
            let s = self.eval_pair_arc(a, kb, hi)?;
            match &mut acc {
                None => {
                    let mut first = Series::zero(vars.clone(), s.window().clone());
                    first.add_assign_scaled(&s, c);
                    acc = Some(first);
                }
                Some(t) => t.add_assign_scaled(&s, c),
            }
        }
        Ok(acc.unwrap_or_else(|| Series::zero(vars, Window::new(vec![0], vec![INF_HI]))))
    }

    /// `Y(a, z) b` extended linearly in the first slot as well.
    pub fn y_vec(
        &self,
        a: &StateVector,
        b: &StateVector,
        hi: i64,
    ) -> Result<Series<StateVector>, VqgError> {
        let vars = VarSet::new(&["z"]);
        let mut acc: Option<Series<StateVector>> = None;
        for (ka, ca) in a.iter() {
            for (kb, cb) in b.iter() {
                let s = self.eval_pair_arc(ka, kb, hi)?;
                let c = ca.mul(cb);
                match &mut acc {
                    None => {
                        let mut first = Series::zero(vars.clone(), s.window().clone());
                        first.add_assign_scaled(&s, &c);
                        acc = Some(first);
                    }
                    Some(t) => t.add_assign_scaled(&s, &c),
                }
            }
        }
        Ok(acc.unwrap_or_else(|| Series::zero(vars, Window::new(vec![0], vec![INF_HI]))))
    }

    /// Applies `exp(u(z) T)` coefficientwise, where `u` is the logarithm
    /// coordinate of the engine's group law (`u = z` additively). The input is
    /// first clipped to `target_hi`, which also bounds the expansion order.
    pub fn apply_exp_t(
        &self,
        s: &Series<StateVector>,
        target_hi: i64,
    ) -> Result<Series<StateVector>, VqgError> {
        let s0 = s.restrict_hi(&[target_hi]);
        if s0.is_zero() {
            return Ok(s0);
        }
        let lo = s0.window().lo[0];
        let u = match self.law {
            GroupLaw::Additive => {
                Series::monomial(VarSet::new(&["z"]), vec![1], self.ring.one())
            }
            GroupLaw::Multiplicative => {
                let depth = (target_hi - lo.min(0) + 1).max(2);
                log1p(&self.ring, "z", depth)
            }
        };
        let mut acc = s0.clone();
        let mut tj = s0.clone();
        let mut upow = Series::one(&self.ring, VarSet::new(&["z"]));
        let mut fact = BigRational::one();
        let mut j: i64 = 0;
        loop {
            j += 1;
            if j + lo >= target_hi {
                break;
            }
            tj = map_states(&tj, |v| self.t_map.apply(v));
            if tj.is_zero() {
                break;
            }
            upow = upow.mul_scalar_series(&u);
            fact = fact * BigRational::from_integer(j.into());
            let term = tj
                .mul_scalar_series(&upow)
                .scale_big(&fact.recip())
                .restrict_hi(&[target_hi]);
            acc = acc.add(&term);
        }
        Ok(acc)
    }
}

/// One-variable operator-valued distributions built from the engine: the
/// identity field, the field of a state, formal derivatives and normally
/// ordered products.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    /// `id * z^0`.
    Id,
    /// The field of a basis state.
    Y(BasisKey),
    /// Iterated formal derivative in the coordinate.
    Deriv(Box<Field>, u32),
    /// Normally ordered product (annihilation modes of the right factor act
    /// first).
    Normal(Box<Field>, Box<Field>),
}

impl Field {
    pub fn y(key: BasisKey) -> Field {
        Field::Y(key)
    }

    pub fn deriv(self, k: u32) -> Field {
        if k == 0 {
            self
        } else {
            Field::Deriv(Box::new(self), k)
        }
    }
}

/// Normally ordered product of two fields.
pub fn normally_ordered(alpha: Field, beta: Field) -> Field {
    Field::Normal(Box::new(alpha), Box::new(beta))
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Field::Id => write!(f, "1"),
            Field::Y(k) => write!(f, "Y({k})"),
            Field::Deriv(g, k) => write!(f, "D^{k}({g})"),
            Field::Normal(a, b) => write!(f, ":{a} {b}:"),
        }
    }
}

impl VertexEngine {
    /// Smallest `K` (sound overestimate) with `mode(f, m) x = 0` for all
    /// `m >= K`. Exact for identity and state fields; for normal products this
    /// recurses through the actual annihilation images.
    pub fn kill_bound(&self, f: &Field, x: &StateVector) -> i64 {
        match f {
            Field::Id => 0,
            Field::Y(a) => {
                let mut k = 0i64;
                for (kb, _) in x.iter() {
                    k = k.max(-self.pole_bound(a, kb));
                }
                k
            }
            Field::Deriv(g, d) => self.kill_bound(g, x) + *d as i64,
            Field::Normal(a, b) => {
                let ka = self.kill_bound(a, x);
                let mut k = ka + 1;
                let kb = self.kill_bound(b, x);
                for m in 1..kb {
                    let y = self
                        .mode_apply(b, m, x)
                        .expect("mode extraction inside a kill bound");
                    if y.num_terms() == 0 {
                        continue;
                    }
                    k = k.max(self.kill_bound(a, &y) + m + 1);
                }
                k
            }
        }
    }

    /// Evaluates a field on a state vector, exact on `[lo, hi)` for the field's
    /// own sound low bound `lo`.
    pub fn field_apply(
        &self,
        f: &Field,
        x: &StateVector,
        hi: i64,
    ) -> Result<Series<StateVector>, VqgError> {
        let vars = VarSet::new(&["z"]);
        match f {
            Field::Id => Ok(Series::from_terms(
                vars,
                Window::new(vec![0], vec![INF_HI]),
                [(vec![0i64], x.clone())],
            )),
            Field::Y(a) => self.y_key(a, x, hi),
            Field::Deriv(g, d) => {
                let mut s = self.field_apply(g, x, hi + *d as i64)?;
                for _ in 0..*d {
                    s = s.derive("z");
                }
                Ok(s)
            }
            Field::Normal(a, b) => {
                let lo = -self.kill_bound(f, x);
                let mut out = Series::zero(vars, Window::new(vec![lo], vec![hi]));
                let kb = self.kill_bound(b, x);
                let mut b_images: Vec<(i64, StateVector)> = Vec::new();
                for m in 1..kb {
                    let y = self.mode_apply(b, m, x)?;
                    if y.num_terms() > 0 {
                        b_images.push((m, y));
                    }
                }
                let ka = self.kill_bound(a, x);
                for kk in lo..hi {
                    let n_total = -kk - 1;
                    let mut acc = StateVector::zero();
                    for (m, y) in &b_images {
                        let t = self.mode_apply(a, n_total - 1 - m, y)?;
                        acc = acc.add(&t);
                    }
                    for m in (n_total - ka)..=0 {
                        let u = self.mode_apply(a, n_total - 1 - m, x)?;
                        if u.num_terms() == 0 {
                            continue;
                        }
                        let t = self.mode_apply(b, m, &u)?;
                        acc = acc.add(&t);
                    }
                    if acc.num_terms() > 0 {
                        out.insert_add(vec![kk], acc);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Coefficient of `z^(-n-1)` of a field applied to a state vector.
    pub fn mode_apply(&self, f: &Field, n: i64, x: &StateVector) -> Result<StateVector, VqgError> {
        let e = -n - 1;
        let s = self.field_apply(f, x, e + 1)?;
        Ok(s.coeff(&[e]).cloned().unwrap_or_else(StateVector::zero))
    }
}

/// The mode `mode(f, n)` as a linear map on the state space, projected to
/// weight at most `grade_bound`.
pub fn mode(e: &VertexEngine, f: &Field, n: i64, grade_bound: i64) -> LinearMap {
    let eng = e.clone();
    let f = f.clone();
    LinearMap::new(move |k| {
        let v = StateVector::from_key(eng.ring(), k.clone());
        let img = eng
            .mode_apply(&f, n, &v)
            .expect("mode extraction stays inside the engine's exact range");
        let mut out = StateVector::zero();
        for (key, c) in img.iter() {
            if key.weight() <= grade_bound {
                out.insert_add(key.clone(), c.clone());
            }
        }
        out
    })
}

fn map_states(
    s: &Series<StateVector>,
    f: impl Fn(&StateVector) -> StateVector,
) -> Series<StateVector> {
    Series::from_terms(
        s.vars().clone(),
        s.window().clone(),
        s.iter().map(|(e, c)| (e.clone(), f(c))),
    )
}

/// Convolution of two univariate state series where coefficients combine by
/// tensor product instead of multiplication.
fn tensor_mul(s1: &Series<StateVector>, s2: &Series<StateVector>) -> Series<StateVector> {
    let window = s1.window().mul_rule(s2.window());
    let mut out = Series::zero(s1.vars().clone(), window);
    for (e1, c1) in s1.iter() {
        for (e2, c2) in s2.iter() {
            let e = vec![e1[0] + e2[0]];
            if out.window().in_u(&e) {
                out.insert_add(e, tensor(c1, c2));
            }
        }
    }
    out
}

/// Assembles a two-variable series from a univariate inner series by expanding
/// each coefficient into a further univariate series. `inner_slot` receives the
/// inner exponent, `value_slot` the expanded one.
fn nest(
    vars: VarSet,
    inner_slot: usize,
    value_slot: usize,
    inner: &Series<StateVector>,
    mut eval_k: impl FnMut(&StateVector) -> Result<Series<StateVector>, VqgError>,
) -> Result<Series<StateVector>, VqgError> {
    let mut parts: Vec<(i64, Series<StateVector>)> = Vec::new();
    for (e, c) in inner.iter() {
        parts.push((e[0], eval_k(c)?));
    }
    let mut lo = vec![0i64; 2];
    let mut hi = vec![INF_HI; 2];
    lo[inner_slot] = inner.window().lo[0];
    hi[inner_slot] = inner.window().hi[0];
    let (vlo, vhi) = parts.iter().fold((0i64, INF_HI), |(l, h), (_, s)| {
        (l.min(s.window().lo[0]), h.min(s.window().hi[0]))
    });
    lo[value_slot] = vlo;
    hi[value_slot] = vhi;
    let mut out = Series::zero(vars, Window::new(lo, hi));
    for (k, s) in parts {
        for (e, c) in s.iter() {
            let mut ex = vec![0i64; 2];
            ex[inner_slot] = k;
            ex[value_slot] = e[0];
            if out.window().in_u(&ex) {
                out.insert_add(ex, c.clone());
            }
        }
    }
    Ok(out)
}

/// Runs a check, retrying once with the expansion depth doubled when the first
/// attempt dies of truncation; a second shortfall becomes `Insufficient`.
fn run_with_retry(
    e: &VertexEngine,
    run: impl Fn(&VertexEngine) -> Result<CheckOutcome, VqgError>,
) -> Result<CheckOutcome, VqgError> {
    match run(e) {
        Err(VqgError::Truncation(_)) => {
            let deeper = e.with_truncation((e.truncation().max(1)) * 2);
            match run(&deeper) {
                Err(VqgError::Truncation(t)) => Ok(CheckOutcome::Insufficient(t)),
                other => other,
            }
        }
        other => other,
    }
}

fn compare(
    check: &str,
    states: Vec<String>,
    lhs: &Series<StateVector>,
    rhs: &Series<StateVector>,
    probe_lo: &[i64],
    probe_hi: &[i64],
) -> Result<CheckOutcome, VqgError> {
    match lhs.equal_on_window(rhs, probe_lo, probe_hi)? {
        None => Ok(CheckOutcome::Pass),
        Some(m) => Ok(CheckOutcome::Fail(Witness {
            check: check.to_string(),
            states,
            exponents: m.exponents,
            lhs: m.lhs,
            rhs: m.rhs,
        })),
    }
}

/// `Y(|0>, z) = id` and the creation property: `Y(x, z)|0>` is regular with
/// constant term `x`, for every listed state.
pub fn check_vacuum(
    e: &VertexEngine,
    states: &[BasisKey],
    hi: i64,
) -> Result<CheckOutcome, VqgError> {
    assert!(hi >= 1, "the creation check needs the constant term");
    run_with_retry(e, |e| {
        let vars = VarSet::new(&["z"]);
        for x in states {
            let xv = StateVector::from_key(e.ring(), x.clone());
            let got = e.y_vec(e.vacuum(), &xv, hi)?;
            let want = Series::from_terms(
                vars.clone(),
                Window::new(vec![got.window().lo[0].min(0)], vec![INF_HI]),
                [(vec![0i64], xv.clone())],
            );
            let lo = got.window().lo[0].min(0);
            let out = compare(
                "vacuum-identity",
                vec![x.render()],
                &got,
                &want,
                &[lo],
                &[hi],
            )?;
            if !out.is_pass() {
                return Ok(out);
            }

            let g = e.y_vec(&xv, e.vacuum(), hi)?;
            for (ex, c) in g.iter() {
                if ex[0] < 0 {
                    return Ok(CheckOutcome::Fail(Witness {
                        check: "vacuum-creation".to_string(),
                        states: vec![x.render()],
                        exponents: ex.clone(),
                        lhs: c.render(),
                        rhs: "0".to_string(),
                    }));
                }
            }
            let konst = g.coeff(&[0]).cloned().unwrap_or_else(StateVector::zero);
            if konst != xv {
                return Ok(CheckOutcome::Fail(Witness {
                    check: "vacuum-creation".to_string(),
                    states: vec![x.render()],
                    exponents: vec![0],
                    lhs: konst.render(),
                    rhs: xv.render(),
                }));
            }
        }
        Ok(CheckOutcome::Pass)
    })
}

/// `[T, Y(a, z)] b = dY(a, z) b` for every ordered pair of listed states, where
/// `d` is `d/dz` for the additive law and `(1 + z) d/dz` for the multiplicative
/// one (the derivative of the log coordinate).
pub fn check_translation(
    e: &VertexEngine,
    states: &[BasisKey],
    hi: i64,
) -> Result<CheckOutcome, VqgError> {
    run_with_retry(e, |e| {
        for a in states {
            for b in states {
                let s = e.eval_pair(a, b, hi + 1)?;
                let tb = e.t_apply(&StateVector::from_key(e.ring(), b.clone()));
                let lhs = map_states(&s, |v| e.t_apply(v)).sub(&e.y_key(a, &tb, hi + 1)?);
                let mut rhs = s.derive("z");
                if e.law() == GroupLaw::Multiplicative {
                    let one_plus_z = Series::from_terms(
                        VarSet::new(&["z"]),
                        Window::new(vec![0], vec![INF_HI]),
                        [(vec![0i64], e.ring().one()), (vec![1i64], e.ring().one())],
                    );
                    rhs = rhs.mul_scalar_series(&one_plus_z);
                }
                let lo = lhs.window().lo[0].min(rhs.window().lo[0]);
                let out = compare(
                    "translation",
                    vec![a.render(), b.render()],
                    &lhs,
                    &rhs,
                    &[lo],
                    &[hi],
                )?;
                if !out.is_pass() {
                    return Ok(out);
                }
            }
        }
        Ok(CheckOutcome::Pass)
    })
}

fn flip_coordinate(
    e: &VertexEngine,
    inner: &Series<StateVector>,
    hi: i64,
) -> Result<Series<StateVector>, VqgError> {
    match e.law() {
        GroupLaw::Additive => Ok(inner.negate_var("z")),
        GroupLaw::Multiplicative => {
            let lo = inner.window().lo[0];
            let depth = (hi - lo + 1).max(e.truncation() as i64).max(2);
            let g = mult_inverse_coordinate(e.ring(), "z", depth);
            inner.substitute_series(&g)
        }
    }
}

/// Skew commutativity `Y(a, z) b = exp(u(z) T) Y(b, -z) a`, with `-z` read in
/// the engine's group law.
pub fn check_skew_commutativity(
    e: &VertexEngine,
    a: &BasisKey,
    b: &BasisKey,
    hi: i64,
) -> Result<CheckOutcome, VqgError> {
    run_with_retry(e, |e| {
        let lhs = e.eval_pair(a, b, hi)?;
        let inner = e.eval_pair(b, a, hi)?;
        let rhs = e.apply_exp_t(&flip_coordinate(e, &inner, hi)?, hi)?;
        let lo = lhs.window().lo[0].min(rhs.window().lo[0]);
        compare(
            "skew",
            vec![a.render(), b.render()],
            &lhs,
            &rhs,
            &[lo],
            &[hi],
        )
    })
}

/// Braided skew commutativity: `Y(a, z) b` against the S-twisted sum
/// `sum S(b1 (x) a1)(z) exp(u(z) T) Y(b2, -z) a2` over the coproduct splits of
/// both states. A trivial S reduces this to plain skew commutativity.
pub fn check_braided_skew_commutativity(
    e: &VertexEngine,
    s: &VertexRMatrix,
    splits: &Arc<SplitFn>,
    a: &BasisKey,
    b: &BasisKey,
    hi: i64,
) -> Result<CheckOutcome, VqgError> {
    run_with_retry(e, |e| {
        let lhs = e.eval_pair(a, b, hi)?;
        let mut rhs: Option<Series<StateVector>> = None;
        for (b1, b2, cb) in splits(b) {
            for (a1, a2, ca) in splits(a) {
                let pole = e.pole_bound(&b2, &a2);
                let s_ser = s.eval(&b1, &a1, hi - pole.min(0))?;
                let target = hi - s_ser.window().lo[0].min(0);
                let inner = e.eval_pair(&b2, &a2, target)?;
                let t = e.apply_exp_t(&flip_coordinate(e, &inner, target)?, target)?;
                let term = t.mul_scalar_series(&s_ser).scale_scalar(&cb.mul(&ca));
                rhs = Some(match rhs {
                    None => term,
                    Some(acc) => acc.add(&term),
                });
            }
        }
        let rhs = rhs.unwrap_or_else(|| {
            Series::zero(VarSet::new(&["z"]), Window::new(vec![0], vec![INF_HI]))
        });
        let lo = lhs.window().lo[0].min(rhs.window().lo[0]);
        compare(
            "braided-skew",
            vec![a.render(), b.render()],
            &lhs,
            &rhs,
            &[lo],
            &[hi],
        )
    })
}

/// The pole-clearing exponent used by weak associativity.
pub fn weak_associativity_exponent(e: &VertexEngine, a: &BasisKey, c: &BasisKey) -> u32 {
    (-e.pole_bound(a, c)).max(0) as u32
}

fn group_sum_power(e: &VertexEngine, vars: &VarSet, n: u32) -> Series<Scalar> {
    match e.law() {
        GroupLaw::Additive => {
            expand_shifted_power(e.ring(), vars, "z1", "z2", 1, n as i64, n as i64 + 1)
        }
        GroupLaw::Multiplicative => {
            let f = Series::from_terms(
                vars.clone(),
                Window::new(vec![0, 0], vec![INF_HI, INF_HI]),
                [
                    (vec![1i64, 0i64], e.ring().one()),
                    (vec![0i64, 1i64], e.ring().one()),
                    (vec![1i64, 1i64], e.ring().one()),
                ],
            );
            let mut acc = Series::one(e.ring(), vars.clone());
            for _ in 0..n {
                acc = acc.mul(&f);
            }
            acc
        }
    }
}

/// Weak associativity on the probe box (variables `z1`, `z2`):
/// `F^N Y(Y(a, z1) b, z2) c = F^N iota Y(a, z1 + z2) Y(b, z2) c`, where `F` is
/// the group-law sum of the coordinates, `N` clears the `(a, c)` poles, and the
/// right side expands the composite coordinate with `z2` small. That direction
/// is what makes the right side summable: the spread of the `z2^j` coefficient
/// of the inner product starts at `z2^j`, so a fixed output exponent only
/// collects contributions from finitely many `j`.
pub fn check_weak_associativity(
    e: &VertexEngine,
    a: &BasisKey,
    b: &BasisKey,
    c: &BasisKey,
    probe: &Window,
) -> Result<CheckOutcome, VqgError> {
    assert_eq!(probe.arity(), 2, "two-variable probe window");
    run_with_retry(e, |e| {
        let vars2 = VarSet::new(&["z1", "z2"]);
        let n_exp = weak_associativity_exponent(e, a, c);
        let cvec = StateVector::from_key(e.ring(), c.clone());

        let inner = e.eval_pair(a, b, probe.hi[0])?;
        let lhs = nest(vars2.clone(), 0, 1, &inner, |u| {
            e.y_vec(u, &cvec, probe.hi[1])
        })?;

        let inner2 = e.eval_pair(b, c, probe.hi[1])?;
        let mut rhs: Option<Series<StateVector>> = None;
        for (j_exp, v) in inner2.iter() {
            let j = j_exp[0];
            if j >= probe.hi[1] {
                continue;
            }
            let small = probe.hi[1] - j;
            let hi_j = probe.hi[0] + small - 1;
            let s_j = e.y_key(a, v, hi_j)?;
            let spread = s_j
                .shift_substitute(e.law(), ShiftDir::SecondSmall, "z1", "z2", small)?
                .shift_var("z2", j);
            rhs = Some(match rhs {
                None => spread,
                Some(acc) => acc.add(&spread),
            });
        }
        let rhs = rhs.unwrap_or_else(|| {
            Series::zero(
                vars2.clone(),
                Window::new(vec![0, 0], probe.hi.clone()),
            )
        });

        let factor = group_sum_power(e, &vars2, n_exp);
        let lhs_c = lhs.mul_scalar_series(&factor);
        let rhs_c = rhs.mul_scalar_series(&factor);
        let lo: Vec<i64> = (0..2)
            .map(|i| probe.lo[i].max(lhs_c.window().lo[i].min(rhs_c.window().lo[i])))
            .collect();
        compare(
            "weak-associativity",
            vec![a.render(), b.render(), c.render()],
            &lhs_c,
            &rhs_c,
            &lo,
            &probe.hi,
        )
    })
}

fn composite(
    e: &VertexEngine,
    first: &Field,
    then: &Field,
    x: &StateVector,
    hi_then: i64,
    hi_first: i64,
) -> Result<Series<StateVector>, VqgError> {
    // `then` evaluates in z (slot 0), `first` in w (slot 1).
    let vars = VarSet::new(&["z", "w"]);
    let inner = e.field_apply(first, x, hi_first)?;
    nest(vars, 1, 0, &inner, |v| e.field_apply(then, v, hi_then))
}

/// Locality at order `n`: `(z - w)^n [alpha(z), beta(w)] x = 0` on the probe
/// box (variables `z`, `w`) for every listed state.
pub fn check_locality(
    e: &VertexEngine,
    alpha: &Field,
    beta: &Field,
    n: u32,
    states: &[BasisKey],
    probe: &Window,
) -> Result<CheckOutcome, VqgError> {
    assert_eq!(probe.arity(), 2, "two-variable probe window");
    run_with_retry(e, |e| {
        let vars = VarSet::new(&["z", "w"]);
        let factor = zw_power(e.ring(), &vars, "z", "w", n);
        for x in states {
            let xv = StateVector::from_key(e.ring(), x.clone());
            let ab = composite(e, beta, alpha, &xv, probe.hi[0], probe.hi[1])?;
            let ba = {
                let inner = e.field_apply(alpha, &xv, probe.hi[0])?;
                nest(vars.clone(), 0, 1, &inner, |v| {
                    e.field_apply(beta, v, probe.hi[1])
                })?
            };
            let prod = ab.sub(&ba).mul_scalar_series(&factor);
            let zero = Series::zero(
                vars.clone(),
                Window::new(probe.lo.clone(), vec![INF_HI, INF_HI]),
            );
            let lo: Vec<i64> = (0..2)
                .map(|i| probe.lo[i].max(prod.window().lo[i]))
                .collect();
            let out = compare(
                "locality",
                vec![format!("{alpha}"), format!("{beta}"), x.render()],
                &prod,
                &zero,
                &lo,
                &probe.hi,
            )?;
            if !out.is_pass() {
                return Ok(out);
            }
        }
        Ok(CheckOutcome::Pass)
    })
}

/// Braided locality at order `n` for state fields: `(z - w)^n` times
/// `Y(a, z) Y(b, w) x - sum S(b1 (x) a1)(w - z) Y(b2, w) Y(a2, z) x` vanishes
/// on the probe box, with `S(w - z)` expanded in the `z`-small region.
#[allow(clippy::too_many_arguments)]
pub fn check_braided_locality(
    e: &VertexEngine,
    s: &VertexRMatrix,
    splits: &Arc<SplitFn>,
    a: &BasisKey,
    b: &BasisKey,
    n: u32,
    states: &[BasisKey],
    probe: &Window,
) -> Result<CheckOutcome, VqgError> {
    assert_eq!(probe.arity(), 2, "two-variable probe window");
    run_with_retry(e, |e| {
        let vars = VarSet::new(&["z", "w"]);
        let factor = zw_power(e.ring(), &vars, "z", "w", n);
        for x in states {
            let xv = StateVector::from_key(e.ring(), x.clone());
            let part1 = composite(e, &Field::Y(b.clone()), &Field::Y(a.clone()), &xv, probe.hi[0], probe.hi[1])?;
            let mut part2: Option<Series<StateVector>> = None;
            for (b1, b2, cb) in splits(b) {
                for (a1, a2, ca) in splits(a) {
                    // Swapped composition: alpha acts first (z inner), beta after (w outer).
                    let run = |hi_w: i64| -> Result<Series<StateVector>, VqgError> {
                        let inner = e.field_apply(&Field::Y(a2.clone()), &xv, probe.hi[0])?;
                        nest(vars.clone(), 0, 1, &inner, |v| {
                            e.field_apply(&Field::Y(b2.clone()), v, hi_w)
                        })
                    };
                    let t0 = run(probe.hi[1])?;
                    let hs = (probe.hi[0] - t0.window().lo[0].min(0)).max(1);
                    let s_hi = probe.hi[1] - t0.window().lo[1].min(0) + hs;
                    let s_ser = s.eval(&b1, &a1, s_hi)?;
                    let mut expansion: Option<Series<Scalar>> = None;
                    for (ke, cs) in s_ser.iter() {
                        let term = expand_shifted_power(e.ring(), &vars, "w", "z", -1, ke[0], hs)
                            .scale_scalar(cs);
                        expansion = Some(match expansion {
                            None => term,
                            Some(acc) => acc.add(&term),
                        });
                    }
                    let expansion = expansion.unwrap_or_else(|| {
                        Series::zero(vars.clone(), Window::new(vec![0, 0], vec![INF_HI, INF_HI]))
                    });
                    let t = if expansion.window().lo[1] < 0 {
                        run(probe.hi[1] - expansion.window().lo[1])?
                    } else {
                        t0
                    };
                    let term = t.mul_scalar_series(&expansion).scale_scalar(&cb.mul(&ca));
                    part2 = Some(match part2 {
                        None => term,
                        Some(acc) => acc.add(&term),
                    });
                }
            }
            let part2 = part2.unwrap_or_else(|| {
                Series::zero(vars.clone(), Window::new(vec![0, 0], vec![INF_HI, INF_HI]))
            });
            let prod = part1.sub(&part2).mul_scalar_series(&factor);
            let zero = Series::zero(
                vars.clone(),
                Window::new(probe.lo.clone(), vec![INF_HI, INF_HI]),
            );
            let lo: Vec<i64> = (0..2)
                .map(|i| probe.lo[i].max(prod.window().lo[i]))
                .collect();
            let out = compare(
                "braided-locality",
                vec![a.render(), b.render(), x.render()],
                &prod,
                &zero,
                &lo,
                &probe.hi,
            )?;
            if !out.is_pass() {
                return Ok(out);
            }
        }
        Ok(CheckOutcome::Pass)
    })
}

/// Smallest locality order `<= max_n` that makes `check_locality` pass, if any.
/// An undecidable (insufficient-window) order counts as not passing.
pub fn find_locality_order(
    e: &VertexEngine,
    alpha: &Field,
    beta: &Field,
    states: &[BasisKey],
    probe: &Window,
    max_n: u32,
) -> Result<Option<u32>, VqgError> {
    for n in 0..=max_n {
        if check_locality(e, alpha, beta, n, states, probe)?.is_pass() {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Braided counterpart of [`find_locality_order`].
#[allow(clippy::too_many_arguments)]
pub fn find_braided_locality_order(
    e: &VertexEngine,
    s: &VertexRMatrix,
    splits: &Arc<SplitFn>,
    a: &BasisKey,
    b: &BasisKey,
    states: &[BasisKey],
    probe: &Window,
    max_n: u32,
) -> Result<Option<u32>, VqgError> {
    for n in 0..=max_n {
        if check_braided_locality(e, s, splits, a, b, n, states, probe)?.is_pass() {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// The same structure read through the multiplicative coordinate `s = 1 + z`:
/// `Y_m(a, z) = Y(a, u(z))` with `u = log(1 + z)` truncated to the engine
/// depth. The base engine must be additive.
pub fn multiplicative_engine(e: &VertexEngine) -> VertexEngine {
    assert_eq!(
        e.law(),
        GroupLaw::Additive,
        "the multiplicative view is derived from an additive engine"
    );
    let base = e.clone();
    let pole = Arc::clone(&base.pole);
    let eval: Arc<EvalFn> = Arc::new(move |a, b, trunc, hi| {
        let src = base.eval_pair(a, b, hi)?;
        let lo = src.window().lo[0];
        let depth = (hi - lo.min(0) + 1).max(trunc as i64).max(2);
        let u = log1p(base.ring(), "z", depth);
        src.substitute_series(&u)
    });
    VertexEngine::new(
        e.ring().clone(),
        e.space().clone(),
        e.vacuum().clone(),
        GroupLaw::Multiplicative,
        e.truncation(),
        e.t_map().clone(),
        eval,
        pole,
    )
}

/// Re-verifies an additive engine through the multiplicative coordinate: skew
/// commutativity and translation on `(a, b)` plus the `s1 s2` substitution form
/// of weak associativity on `(a, b, b)`.
pub fn check_multiplicative_axioms(
    e: &VertexEngine,
    a: &BasisKey,
    b: &BasisKey,
    hi: i64,
    probe: &Window,
) -> Result<CheckOutcome, VqgError> {
    let m = multiplicative_engine(e);
    let out = check_skew_commutativity(&m, a, b, hi)?;
    if !out.is_pass() {
        return Ok(out);
    }
    let out = check_translation(&m, &[a.clone(), b.clone()], hi)?;
    if !out.is_pass() {
        return Ok(out);
    }
    check_weak_associativity(&m, a, b, b, probe)
}

/// Compatibility of a coproduct and counit with the engine:
/// `delta Y(a, z) b = (Y (x) Y)(sigma23 (delta a (x) delta b))`, grouplike
/// vacuum, primitive-derivation translation and the counit conditions.
pub fn check_coproduct_compatibility(
    e: &VertexEngine,
    delta: &LinearMap,
    counit: &dyn Fn(&BasisKey) -> Scalar,
    states: &[BasisKey],
    hi: i64,
) -> Result<CheckOutcome, VqgError> {
    let eps_vec = |v: &StateVector| -> Scalar {
        let mut acc = e.ring().zero();
        for (k, c) in v.iter() {
            acc.add_inplace(&c.mul(&counit(k)));
        }
        acc
    };

    // Vacuum is grouplike and has counit one.
    let dv = delta.apply(e.vacuum());
    let want = tensor(e.vacuum(), e.vacuum());
    if dv != want {
        return Ok(CheckOutcome::Fail(Witness {
            check: "coproduct-vacuum".to_string(),
            states: vec![e.vacuum().render()],
            exponents: vec![],
            lhs: dv.render(),
            rhs: want.render(),
        }));
    }
    let ev = eps_vec(e.vacuum());
    if !ev.is_one() {
        return Ok(CheckOutcome::Fail(Witness {
            check: "counit-vacuum".to_string(),
            states: vec![e.vacuum().render()],
            exponents: vec![],
            lhs: ev.to_string(),
            rhs: "1".to_string(),
        }));
    }

    // T is a coderivation and counit-trivial.
    for x in states {
        let xv = StateVector::from_key(e.ring(), x.clone());
        let lhs = delta.apply(&e.t_apply(&xv));
        let dx = delta.apply(&xv);
        let rhs = apply_slot(&dx, 0, e.t_map()).add(&apply_slot(&dx, 1, e.t_map()));
        if lhs != rhs {
            return Ok(CheckOutcome::Fail(Witness {
                check: "coproduct-translation".to_string(),
                states: vec![x.render()],
                exponents: vec![],
                lhs: lhs.render(),
                rhs: rhs.render(),
            }));
        }
        let et = eps_vec(&e.t_apply(&xv));
        if !et.is_zero() {
            return Ok(CheckOutcome::Fail(Witness {
                check: "counit-translation".to_string(),
                states: vec![x.render()],
                exponents: vec![],
                lhs: et.to_string(),
                rhs: "0".to_string(),
            }));
        }
    }

    // The coproduct intertwines the field with its two-slot form.
    run_with_retry(e, |e| {
        for a in states {
            for b in states {
                let lhs = map_states(&e.eval_pair(a, b, hi)?, |v| delta.apply(v));
                let da = delta.apply_key(a);
                let db = delta.apply_key(b);
                let mut rhs: Option<Series<StateVector>> = None;
                for (ka, ca) in da.iter() {
                    let sa = ka.slots();
                    for (kb, cb) in db.iter() {
                        let sb = kb.slots();
                        let hi1 = hi - e.pole_bound(&sa[1], &sb[1]).min(0);
                        let hi2 = hi - e.pole_bound(&sa[0], &sb[0]).min(0);
                        let s1 = e.eval_pair(&sa[0], &sb[0], hi1)?;
                        let s2 = e.eval_pair(&sa[1], &sb[1], hi2)?;
                        let term = tensor_mul(&s1, &s2).scale_scalar(&ca.mul(cb));
                        rhs = Some(match rhs {
                            None => term,
                            Some(acc) => acc.add(&term),
                        });
                    }
                }
                let rhs = rhs.unwrap_or_else(|| {
                    Series::zero(VarSet::new(&["z"]), Window::new(vec![0], vec![INF_HI]))
                });
                let lo = lhs.window().lo[0].min(rhs.window().lo[0]);
                let out = compare(
                    "coproduct-field",
                    vec![a.render(), b.render()],
                    &lhs,
                    &rhs,
                    &[lo],
                    &[hi],
                )?;
                if !out.is_pass() {
                    return Ok(out);
                }
            }
        }
        Ok(CheckOutcome::Pass)
    })
}

fn word_field(gens: &[Field], word: &[(usize, u32)]) -> (Field, BigRational) {
    if word.is_empty() {
        return (Field::Id, BigRational::one());
    }
    let mut norm = BigRational::one();
    let mut it = word.iter().rev();
    let &(i, n) = it.next().unwrap();
    let mut f = gens[i].clone().deriv(n - 1);
    norm = norm * factorial((n - 1) as u64).recip();
    for &(i, n) in it {
        f = normally_ordered(gens[i].clone().deriv(n - 1), f);
        norm = norm * factorial((n - 1) as u64).recip();
    }
    (f, norm)
}

/// Rebuilds an engine from generating fields.
///
/// `decomp` writes each basis state as a word `[(generator index, depth n)]`,
/// realised as the right-nested normal product of `(n-1)`-th derivatives with
/// `1/(n-1)!` normalisation, so the constant term of the word's field on the
/// vacuum is the state itself (this is verified, as is pairwise locality of the
/// generators up to `locality_bound`; braided locality when an S-matrix and
/// splits are supplied).
pub fn reconstruct(
    src: &VertexEngine,
    gens: &[Field],
    decomp: Arc<dyn Fn(&BasisKey) -> Option<Vec<(usize, u32)>> + Send + Sync>,
    braiding: Option<(&VertexRMatrix, &Arc<SplitFn>)>,
    locality_bound: u32,
    probe: &Window,
) -> Result<VertexEngine, VqgError> {
    let states = src.space().enumerate();

    // Pairwise (braided) locality of the generator fields.
    for (i, gi) in gens.iter().enumerate() {
        for gj in gens.iter().skip(i) {
            let found = match braiding {
                None => find_locality_order(src, gi, gj, &states, probe, locality_bound)?,
                Some((s, splits)) => {
                    let (ka, kb) = match (gi, gj) {
                        (Field::Y(ka), Field::Y(kb)) => (ka, kb),
                        _ => {
                            return Err(VqgError::Invalid(
                                "braided reconstruction needs state fields as generators"
                                    .to_string(),
                            ))
                        }
                    };
                    find_braided_locality_order(src, s, splits, ka, kb, &states, probe, locality_bound)?
                }
            };
            if found.is_none() {
                return Err(VqgError::Invalid(format!(
                    "generator fields {gi} and {gj} are not mutually local at any order <= {locality_bound}"
                )));
            }
        }
    }

    // Spanning: every enumerated basis state is the constant vacuum term of its word.
    for key in &states {
        let word = decomp(key).ok_or_else(|| {
            VqgError::Invalid(format!("basis state {key} is not reached by the generators"))
        })?;
        let (f, norm) = word_field(gens, &word);
        let got = src.mode_apply(&f, -1, src.vacuum())?.scale(&src.ring().big(norm));
        let want = StateVector::from_key(src.ring(), key.clone());
        if got != want {
            return Err(VqgError::Invalid(format!(
                "reconstruction word for {key} creates {} instead",
                got.render()
            )));
        }
    }

    let base = src.clone();
    let gens_owned: Vec<Field> = gens.to_vec();
    let decomp_eval = Arc::clone(&decomp);
    let eval: Arc<EvalFn> = Arc::new(move |a, b, _trunc, hi| {
        let word = decomp_eval(a).ok_or_else(|| {
            VqgError::Invalid(format!("state {a} is not reached by the generators"))
        })?;
        let (f, norm) = word_field(&gens_owned, &word);
        let bv = StateVector::from_key(base.ring(), b.clone());
        Ok(base.field_apply(&f, &bv, hi)?.scale_big(&norm))
    });

    let base2 = src.clone();
    let gens2: Vec<Field> = gens.to_vec();
    let decomp_pole = Arc::clone(&decomp);
    let pole: Arc<PoleFn> = Arc::new(move |a, b| {
        match decomp_pole(a) {
            Some(word) => {
                let (f, _) = word_field(&gens2, &word);
                let bv = StateVector::from_key(base2.ring(), b.clone());
                -base2.kill_bound(&f, &bv)
            }
            None => 0,
        }
    });

    Ok(VertexEngine::new(
        src.ring().clone(),
        src.space().clone(),
        src.vacuum().clone(),
        src.law(),
        src.truncation(),
        src.t_map().clone(),
        eval,
        pole,
    ))
}

/// The polynomial engine `Y(a, z) b = (exp(z d/dx) a) * b` on `k[x]`. The
/// space bound `max_deg` limits enumerated test states only; evaluation is
/// sparse and exact on all of `k[x]`.
pub fn holomorphic_engine(ring: &Ring, max_deg: u32) -> VertexEngine {
    let rng = ring.clone();
    let t_map = LinearMap::new(move |k| match k {
        BasisKey::X(n) if *n > 0 => StateVector::single(BasisKey::X(n - 1), rng.int(*n as i64)),
        BasisKey::X(_) => StateVector::zero(),
        other => panic!("polynomial translation on non-monomial state {other}"),
    });
    let rng = ring.clone();
    let eval: Arc<EvalFn> = Arc::new(move |a, b, _trunc, _hi| {
        let (i, j) = match (a, b) {
            (BasisKey::X(i), BasisKey::X(j)) => (*i as i64, *j as i64),
            _ => {
                return Err(VqgError::Invalid(format!(
                    "polynomial engine got non-monomial states ({a}, {b})"
                )))
            }
        };
        let vars = VarSet::new(&["z"]);
        let mut out = Series::zero(vars, Window::new(vec![0], vec![INF_HI]));
        for k in 0..=i {
            let c = rng.big(gen_binomial(i, k as u64));
            out.insert_add(
                vec![k],
                StateVector::single(BasisKey::X((i - k + j) as u32), c),
            );
        }
        Ok(out)
    });
    let pole: Arc<PoleFn> = Arc::new(|_, _| 0);
    VertexEngine::new(
        ring.clone(),
        Space::Poly { max_deg },
        StateVector::from_key(ring, BasisKey::X(0)),
        GroupLaw::Additive,
        8,
        t_map,
        eval,
        pole,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q() -> Ring {
        Ring::rationals()
    }

    fn xkey(k: u32) -> BasisKey {
        BasisKey::X(k)
    }

    fn probe2(lo: i64, hi: i64) -> Window {
        Window::new(vec![lo, lo], vec![hi, hi])
    }

    #[test]
    fn polynomial_engine_satisfies_vacuum_and_creation() {
        let e = holomorphic_engine(&q(), 5);
        let states = e.space().enumerate();
        assert!(check_vacuum(&e, &states, 4).unwrap().is_pass());
    }

    #[test]
    fn polynomial_engine_translation_and_broken_t() {
        let e = holomorphic_engine(&q(), 4);
        let states = e.space().enumerate();
        assert!(check_translation(&e, &states, 5).unwrap().is_pass());

        // Doubling T breaks the identity and the witness names the first pair.
        let ring = q();
        let rng = ring.clone();
        let mut bad = e.clone();
        bad.t_map = LinearMap::new(move |k| match k {
            BasisKey::X(n) if *n > 0 => {
                StateVector::single(BasisKey::X(n - 1), rng.int(2 * *n as i64))
            }
            _ => StateVector::zero(),
        });
        let out = check_translation(&bad, &[xkey(1)], 4).unwrap();
        let w = out.witness().expect("broken translation");
        assert_eq!(w.check, "translation");
        assert_eq!(w.states, vec!["x^1".to_string(), "x^1".to_string()]);
    }

    #[test]
    fn polynomial_engine_skew_and_associativity() {
        let e = holomorphic_engine(&q(), 4);
        for i in 0..=3u32 {
            for j in 0..=3u32 {
                assert!(check_skew_commutativity(&e, &xkey(i), &xkey(j), 5)
                    .unwrap()
                    .is_pass());
            }
        }
        assert_eq!(weak_associativity_exponent(&e, &xkey(2), &xkey(1)), 0);
        assert!(
            check_weak_associativity(&e, &xkey(2), &xkey(1), &xkey(1), &probe2(0, 4))
                .unwrap()
                .is_pass()
        );
    }

    #[test]
    fn polynomial_fields_commute_at_order_zero() {
        let e = holomorphic_engine(&q(), 3);
        let states = e.space().enumerate();
        let a = Field::y(xkey(1));
        let b = Field::y(xkey(2));
        assert!(check_locality(&e, &a, &b, 0, &states, &probe2(0, 3))
            .unwrap()
            .is_pass());
        assert_eq!(
            find_locality_order(&e, &a, &b, &states, &probe2(0, 3), 2).unwrap(),
            Some(0)
        );
        // The identity field is local to anything at order zero.
        assert!(
            check_locality(&e, &Field::Id, &a, 0, &states, &probe2(0, 3))
                .unwrap()
                .is_pass()
        );
    }

    #[test]
    fn normal_order_constant_term_multiplies_polynomials() {
        // For Y(x, z) = x + z the composite :xx: has vacuum constant term x^2.
        let e = holomorphic_engine(&q(), 4);
        let f = normally_ordered(Field::y(xkey(1)), Field::y(xkey(1)));
        let got = e.mode_apply(&f, -1, e.vacuum()).unwrap();
        assert_eq!(got, StateVector::from_key(&q(), xkey(2)));
        // Modes shift degree: the (-1)-mode of Y(x) is multiplication by x.
        let m = mode(&e, &Field::y(xkey(1)), -1, 10);
        assert_eq!(
            m.apply_key(&xkey(2)),
            StateVector::from_key(&q(), xkey(3))
        );
    }

    #[test]
    fn derivative_field_matches_series_derivative() {
        let e = holomorphic_engine(&q(), 4);
        let f = Field::y(xkey(2)).deriv(1);
        let xv = StateVector::from_key(&q(), xkey(1));
        let direct = e.field_apply(&f, &xv, 4).unwrap();
        let expect = e
            .field_apply(&Field::y(xkey(2)), &xv, 5)
            .unwrap()
            .derive("z");
        assert_eq!(
            direct.equal_on_window(&expect, &[0], &[4]).unwrap(),
            None
        );
    }

    #[test]
    fn multiplicative_view_passes_and_wrong_coordinate_fails() {
        let e = holomorphic_engine(&q(), 3);
        assert!(
            check_multiplicative_axioms(&e, &xkey(2), &xkey(1), 4, &probe2(0, 3))
                .unwrap()
                .is_pass()
        );

        // Relabelling the additive engine as multiplicative without the log
        // substitution leaves Y(a, u) with u = z: skew commutativity breaks.
        let mut mislabeled = e.clone();
        mislabeled.law = GroupLaw::Multiplicative;
        let out = check_skew_commutativity(&mislabeled, &xkey(2), &xkey(1), 4).unwrap();
        let w = out.witness().expect("wrong coordinate must fail");
        assert_eq!(w.check, "skew");
    }

    fn binomial_delta(ring: &Ring) -> LinearMap {
        let rng = ring.clone();
        LinearMap::new(move |k| {
            let n = match k {
                BasisKey::X(n) => *n as i64,
                _ => panic!("polynomial coproduct"),
            };
            let mut out = StateVector::zero();
            for i in 0..=n {
                out.insert_add(
                    crate::linalg::tensor_key(&BasisKey::X(i as u32), &BasisKey::X((n - i) as u32)),
                    rng.big(gen_binomial(n, i as u64)),
                );
            }
            out
        })
    }

    #[test]
    fn coproduct_compatibility_on_a_multiplication_engine() {
        // With T = 0 the field is plain multiplication, and the binomial
        // coproduct (x primitive) intertwines it: all five conditions hold.
        let ring = q();
        let rng = ring.clone();
        let eval: Arc<EvalFn> = Arc::new(move |a, b, _trunc, _hi| {
            let (i, j) = match (a, b) {
                (BasisKey::X(i), BasisKey::X(j)) => (*i, *j),
                _ => panic!("monomials only"),
            };
            Ok(Series::from_terms(
                VarSet::new(&["z"]),
                Window::new(vec![0], vec![INF_HI]),
                [(vec![0i64], StateVector::from_key(&rng, BasisKey::X(i + j)))],
            ))
        });
        let e = VertexEngine::new(
            ring.clone(),
            Space::Poly { max_deg: 3 },
            StateVector::from_key(&ring, BasisKey::X(0)),
            GroupLaw::Additive,
            4,
            LinearMap::new(|_| StateVector::zero()),
            eval,
            Arc::new(|_, _| 0),
        );
        let delta = binomial_delta(&ring);
        let rng = ring.clone();
        let counit = move |k: &BasisKey| -> Scalar {
            match k {
                BasisKey::X(0) => rng.one(),
                _ => rng.zero(),
            }
        };
        let states = e.space().enumerate();
        assert!(
            check_coproduct_compatibility(&e, &delta, &counit, &states, 3)
                .unwrap()
                .is_pass()
        );

        // Breaking grouplikeness of the vacuum is caught first.
        let rng = ring.clone();
        let broken = LinearMap::new(move |k| {
            StateVector::single(crate::linalg::tensor_key(k, k), rng.int(2))
        });
        let out = check_coproduct_compatibility(&e, &broken, &counit, &states, 3).unwrap();
        assert_eq!(out.witness().unwrap().check, "coproduct-vacuum");
    }

    #[test]
    fn derivative_translation_is_no_coderivation_of_the_binomial_coproduct() {
        // On the full polynomial engine T = d/dx fails the coderivation law:
        // delta(T x) = 1 (x) 1 while (T (x) 1 + 1 (x) T) delta(x) doubles it.
        let ring = q();
        let e = holomorphic_engine(&ring, 3);
        let delta = binomial_delta(&ring);
        let rng = ring.clone();
        let counit = move |k: &BasisKey| -> Scalar {
            match k {
                BasisKey::X(0) => rng.one(),
                _ => rng.zero(),
            }
        };
        let states = e.space().enumerate();
        let out = check_coproduct_compatibility(&e, &delta, &counit, &states, 3).unwrap();
        let w = out.witness().expect("coderivation law must fail");
        assert_eq!(w.check, "coproduct-translation");
        assert_eq!(w.states, vec!["x^1".to_string()]);
        assert_eq!(w.lhs, "1*x^0(x)x^0");
        assert_eq!(w.rhs, "2*x^0(x)x^0");
    }

    #[test]
    fn reconstruct_polynomials_from_the_coordinate_field() {
        let e = holomorphic_engine(&q(), 4);
        let gens = vec![Field::y(xkey(1))];
        let decomp = Arc::new(|k: &BasisKey| -> Option<Vec<(usize, u32)>> {
            match k {
                BasisKey::X(n) => Some(vec![(0, 1); *n as usize]),
                _ => None,
            }
        });
        let r = reconstruct(&e, &gens, decomp.clone(), None, 2, &probe2(0, 3)).unwrap();
        for i in 0..=3u32 {
            for j in 0..=3u32 {
                let got = r.eval_pair(&xkey(i), &xkey(j), 4).unwrap();
                let want = e.eval_pair(&xkey(i), &xkey(j), 4).unwrap();
                assert_eq!(got.equal_on_window(&want, &[0], &[4]).unwrap(), None);
            }
        }
        // Reconstructing the reconstruction is stable.
        let rr = reconstruct(&r, &gens, decomp, None, 2, &probe2(0, 3)).unwrap();
        let got = rr.eval_pair(&xkey(2), &xkey(2), 4).unwrap();
        let want = e.eval_pair(&xkey(2), &xkey(2), 4).unwrap();
        assert_eq!(got.equal_on_window(&want, &[0], &[4]).unwrap(), None);
    }

    #[test]
    fn reconstruct_rejects_unreachable_and_wrong_words() {
        let e = holomorphic_engine(&q(), 3);
        let gens = vec![Field::y(xkey(1))];
        let none = Arc::new(|k: &BasisKey| -> Option<Vec<(usize, u32)>> {
            match k {
                BasisKey::X(0) => Some(vec![]),
                _ => None,
            }
        });
        let err = reconstruct(&e, &gens, none, None, 2, &probe2(0, 3)).unwrap_err();
        assert!(err.to_string().contains("not reached"));

        let wrong = Arc::new(|k: &BasisKey| -> Option<Vec<(usize, u32)>> {
            match k {
                BasisKey::X(n) => Some(vec![(0, 1); (*n as usize).max(1)]),
                _ => None,
            }
        });
        let err = reconstruct(&e, &gens, wrong, None, 2, &probe2(0, 3)).unwrap_err();
        assert!(err.to_string().contains("creates"));
    }

    #[test]
    fn zero_generators_reconstruct_the_one_dimensional_engine() {
        let e = holomorphic_engine(&q(), 0);
        let decomp = Arc::new(|k: &BasisKey| -> Option<Vec<(usize, u32)>> {
            match k {
                BasisKey::X(0) => Some(vec![]),
                _ => None,
            }
        });
        let r = reconstruct(&e, &[], decomp, None, 0, &probe2(0, 2)).unwrap();
        let s = r.eval_pair(&xkey(0), &xkey(0), 3).unwrap();
        let want = Series::from_terms(
            VarSet::new(&["z"]),
            Window::new(vec![0], vec![INF_HI]),
            [(vec![0i64], StateVector::from_key(&q(), xkey(0)))],
        );
        assert_eq!(s.equal_on_window(&want, &[0], &[3]).unwrap(), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn translation_identity_holds_on_random_monomial_pairs(i in 0u32..5, j in 0u32..5) {
            let e = holomorphic_engine(&q(), 5);
            let out = check_translation(&e, &[xkey(i), xkey(j)], 4).unwrap();
            prop_assert!(out.is_pass());
        }

        #[test]
        fn skew_commutativity_holds_on_random_monomial_pairs(i in 0u32..5, j in 0u32..5) {
            let e = holomorphic_engine(&q(), 5);
            let out = check_skew_commutativity(&e, &xkey(i), &xkey(j), 5).unwrap();
            prop_assert!(out.is_pass());
        }
    }
}
