//! Sparse multivariate Laurent series with exactly-tracked validity windows.
//!
//! A series stores finitely many terms and a [`Window`] recording what it claims.
//! With per-variable bounds `lo` (inclusive) and `hi` (exclusive), the series is
//! exactly known on the lower set `U = { e : e_i < hi_i for all i }`, and inside `U`
//! every nonzero coefficient has exponent vector in the box `[lo, hi)`. An `hi` of
//! [`INF_HI`] means the variable is not truncated. Arithmetic propagates windows so
//! that every stored coefficient is provably exact; coefficients that cannot be
//! trusted are dropped together with the window region that covered them.

use std::collections::BTreeMap;
use std::fmt;

use num::rational::BigRational;
use num::{One, Zero};

use crate::error::{TruncationNeed, VqgError};
use crate::scalar::{gen_binomial, join_signed_terms, Ring, Scalar};

/// Sentinel for an untruncated upper bound. Kept far from `i64::MAX` so window
/// arithmetic can add small offsets without overflow.
pub const INF_HI: i64 = i64::MAX / 4;

fn hi_plus(h: i64, d: i64) -> i64 {
    if h >= INF_HI {
        INF_HI
    } else {
        h + d
    }
}

/// Ordered set of formal variables. Construction order is preserved and is the
/// order used for exponent vectors and for rendering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarSet {
    names: Vec<String>,
}

impl VarSet {
    pub fn new(names: &[&str]) -> VarSet {
        let mut v: Vec<String> = Vec::new();
        for n in names {
            assert!(
                !v.iter().any(|m| m == n),
                "duplicate variable name `{n}`"
            );
            v.push((*n).to_string());
        }
        VarSet { names: v }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn expect_index(&self, name: &str) -> usize {
        self.index(name)
            .unwrap_or_else(|| panic!("unknown variable `{name}` in ({})", self.names.join(",")))
    }
}

/// Per-variable validity window: `lo` inclusive, `hi` exclusive, [`INF_HI`] = untruncated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl Window {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Window {
        assert_eq!(lo.len(), hi.len(), "window arity");
        Window { lo, hi }
    }

    /// Untruncated window claiming support in exponents `>= 0`.
    pub fn exact(n: usize) -> Window {
        Window {
            lo: vec![0; n],
            hi: vec![INF_HI; n],
        }
    }

    pub fn arity(&self) -> usize {
        self.lo.len()
    }

    /// Membership in the lower set `U` on which the series is exact.
    pub fn in_u(&self, e: &[i64]) -> bool {
        e.iter().zip(&self.hi).all(|(k, h)| k < h)
    }

    pub fn in_box(&self, e: &[i64]) -> bool {
        self.in_u(e) && e.iter().zip(&self.lo).all(|(k, l)| k >= l)
    }

    /// Window of a sum: knowledge is the intersection of the claims.
    pub fn add_rule(&self, o: &Window) -> Window {
        Window {
            lo: self.lo.iter().zip(&o.lo).map(|(a, b)| *a.min(b)).collect(),
            hi: self.hi.iter().zip(&o.hi).map(|(a, b)| *a.min(b)).collect(),
        }
    }

    /// Window of a product of lower-bounded series.
    pub fn mul_rule(&self, o: &Window) -> Window {
        let lo: Vec<i64> = self.lo.iter().zip(&o.lo).map(|(a, b)| a + b).collect();
        let hi: Vec<i64> = (0..self.hi.len())
            .map(|i| hi_plus(self.hi[i], o.lo[i]).min(hi_plus(o.hi[i], self.lo[i])))
            .collect();
        Window { lo, hi }
    }
}

/// Coefficient objects a series can carry: exact scalars or vectors of states.
pub trait Coeff: Clone + PartialEq + fmt::Debug {
    fn is_zero(&self) -> bool;
    fn add_inplace(&mut self, other: &Self);
    /// `self += other * s` without materialising the scaled intermediate.
    fn add_scaled_inplace(&mut self, other: &Self, s: &Scalar);
    fn neg_inplace(&mut self);
    fn scale_big(&mut self, q: &BigRational);
    fn scale_scalar(&self, s: &Scalar) -> Self;
    fn render(&self) -> String;
    /// Flattening used by canonical rendering: one `(scalar, optional state key)`
    /// atom per printed term.
    fn atoms(&self) -> Vec<(Scalar, Option<String>)>;
}

impl Coeff for Scalar {
    fn is_zero(&self) -> bool {
        Scalar::is_zero(self)
    }
    fn add_inplace(&mut self, other: &Self) {
        Scalar::add_inplace(self, other)
    }
    fn add_scaled_inplace(&mut self, other: &Self, s: &Scalar) {
        if s.is_one() {
            Scalar::add_inplace(self, other);
        } else {
            Scalar::add_inplace(self, &other.mul(s));
        }
    }
    fn neg_inplace(&mut self) {
        Scalar::neg_inplace(self)
    }
    fn scale_big(&mut self, q: &BigRational) {
        Scalar::scale_big(self, q)
    }
    fn scale_scalar(&self, s: &Scalar) -> Self {
        self.mul(s)
    }
    fn render(&self) -> String {
        self.to_string()
    }
    fn atoms(&self) -> Vec<(Scalar, Option<String>)> {
        vec![(self.clone(), None)]
    }
}

/// First difference found by [`Series::equal_on_window`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub exponents: Vec<i64>,
    pub lhs: String,
    pub rhs: String,
}

/// Formal group law used by [`Series::shift_substitute`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupLaw {
    /// `z -> z1 + z2`
    Additive,
    /// `z -> z1 + z2 + z1*z2` (the coordinate `s = 1 + z` multiplies)
    Multiplicative,
}

/// Which output variable of a two-variable expansion is the small one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftDir {
    FirstSmall,
    SecondSmall,
}

/// Expansion direction for `(z - w)^{-n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpandDir {
    /// Expand with `w` small (the region `|z| > |w|`).
    WOverZ,
    /// Expand with `z` small (the region `|w| > |z|`).
    ZOverW,
}

/// Sparse Laurent series over coefficients `C`, exact on its window.
#[derive(Clone, Debug, PartialEq)]
pub struct Series<C: Coeff> {
    vars: VarSet,
    window: Window,
    terms: BTreeMap<Vec<i64>, C>,
}

impl<C: Coeff> Series<C> {
    pub fn zero(vars: VarSet, window: Window) -> Series<C> {
        assert_eq!(vars.len(), window.arity(), "window arity");
        Series {
            vars,
            window,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_terms<I>(vars: VarSet, window: Window, terms: I) -> Series<C>
    where
        I: IntoIterator<Item = (Vec<i64>, C)>,
    {
        let mut s = Series::zero(vars, window);
        for (e, c) in terms {
            s.insert_add(e, c);
        }
        s
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn coeff(&self, e: &[i64]) -> Option<&C> {
        self.terms.get(e)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &C)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds a term, silently dropping anything outside the window's exact region.
    pub fn insert_add(&mut self, e: Vec<i64>, c: C) {
        assert_eq!(e.len(), self.vars.len(), "exponent arity");
        if c.is_zero() || !self.window.in_u(&e) {
            return;
        }
        debug_assert!(
            e.iter().zip(&self.window.lo).all(|(k, l)| k >= l),
            "term below window low bound: {e:?} < {:?}",
            self.window.lo
        );
        match self.terms.entry(e) {
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

    fn assert_same_vars(&self, other: &Series<C>) {
        assert!(
            self.vars == other.vars,
            "variable set mismatch: ({}) vs ({})",
            self.vars.names().join(","),
            other.vars.names().join(",")
        );
    }

    pub fn add(&self, other: &Series<C>) -> Series<C> {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    /// In-place `self += other`, narrowing the window exactly as [`Series::add`] does.
    pub fn add_assign(&mut self, other: &Series<C>) {
        self.merge_add_window(other);
        for (e, c) in &other.terms {
            if !self.window.in_u(e) {
                continue;
            }
            self.insert_add(e.clone(), c.clone());
        }
    }

    /// In-place `self += other * s` without materialising the scaled intermediate.
    pub fn add_assign_scaled(&mut self, other: &Series<C>, s: &Scalar) {
        self.merge_add_window(other);
        if s.is_zero() {
            return;
        }
        let plain = s.is_one();
        for (e, c) in &other.terms {
            if !self.window.in_u(e) {
                continue;
            }
            match self.terms.entry(e.clone()) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    let c = if plain { c.clone() } else { c.scale_scalar(s) };
                    if !c.is_zero() {
                        v.insert(c);
                    }
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    o.get_mut().add_scaled_inplace(c, s);
                    if o.get().is_zero() {
                        o.remove();
                    }
                }
            }
        }
    }

    /// Narrows to the sum window and drops terms the narrower claim no longer covers.
    fn merge_add_window(&mut self, other: &Series<C>) {
        self.assert_same_vars(other);
        let window = self.window.add_rule(&other.window);
        if window.hi != self.window.hi {
            let w = window.clone();
            self.terms.retain(|e, _| w.in_u(e));
        }
        self.window = window;
    }

    pub fn neg(&self) -> Series<C> {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            c.neg_inplace();
        }
        out
    }

    pub fn sub(&self, other: &Series<C>) -> Series<C> {
        self.add(&other.neg())
    }

    pub fn scale_big(&self, q: &BigRational) -> Series<C> {
        if q.is_zero() {
            return Series::zero(self.vars.clone(), self.window.clone());
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            c.scale_big(q);
        }
        out
    }

    pub fn scale_scalar(&self, s: &Scalar) -> Series<C> {
        let mut out = Series::zero(self.vars.clone(), self.window.clone());
        for (e, c) in &self.terms {
            out.insert_add(e.clone(), c.scale_scalar(s));
        }
        out
    }

    /// Convolution against a scalar-coefficient series in the same variables.
    ///
    /// Both factors must be lower-bounded (every window here is), so each output
    /// coefficient inside the result window is a finite, fully-known sum.
    pub fn mul_scalar_series(&self, s: &Series<Scalar>) -> Series<C> {
        assert!(
            self.vars == s.vars,
            "variable set mismatch: ({}) vs ({})",
            self.vars.names().join(","),
            s.vars.names().join(",")
        );
        let window = self.window.mul_rule(&s.window);
        let mut out = Series::zero(self.vars.clone(), window);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &s.terms {
                let e: Vec<i64> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                if out.window.in_u(&e) {
                    out.insert_add(e, ca.scale_scalar(cb));
                }
            }
        }
        out
    }

    /// Derivative in one variable. The window loses one exponent of knowledge at
    /// the top; a low bound of zero survives because constants die.
    pub fn derive(&self, var: &str) -> Series<C> {
        let i = self.vars.expect_index(var);
        let mut window = self.window.clone();
        window.lo[i] = if window.lo[i] == 0 { 0 } else { window.lo[i] - 1 };
        window.hi[i] = hi_plus(window.hi[i], -1);
        let mut out = Series::zero(self.vars.clone(), window);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            let mut c2 = c.clone();
            c2.scale_big(&BigRational::from_integer(e[i].into()));
            out.insert_add(e2, c2);
        }
        out
    }

    /// Substitutes `var -> -var`; the window is unchanged.
    pub fn negate_var(&self, var: &str) -> Series<C> {
        let i = self.vars.expect_index(var);
        let mut out = Series::zero(self.vars.clone(), self.window.clone());
        for (e, c) in &self.terms {
            let mut c2 = c.clone();
            if e[i].rem_euclid(2) == 1 {
                c2.neg_inplace();
            }
            out.insert_add(e.clone(), c2);
        }
        out
    }

    /// Multiplies by `var^k` (shifts exponents and the window).
    pub fn shift_var(&self, var: &str, k: i64) -> Series<C> {
        let i = self.vars.expect_index(var);
        let mut window = self.window.clone();
        window.lo[i] += k;
        window.hi[i] = hi_plus(window.hi[i], k);
        let mut out = Series::zero(self.vars.clone(), window);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2[i] += k;
            out.insert_add(e2, c.clone());
        }
        out
    }

    /// Weakens the window to `hi = min(hi, new_hi)`, dropping newly unclaimed terms.
    pub fn restrict_hi(&self, new_hi: &[i64]) -> Series<C> {
        assert_eq!(new_hi.len(), self.vars.len());
        let mut window = self.window.clone();
        for (h, n) in window.hi.iter_mut().zip(new_hi) {
            *h = (*h).min(*n);
        }
        let mut out = Series::zero(self.vars.clone(), window);
        for (e, c) in &self.terms {
            out.insert_add(e.clone(), c.clone());
        }
        out
    }

    /// Clips to the box `[lo, hi)` for display purposes.
    pub fn clip(&self, lo: &[i64], hi: &[i64]) -> Series<C> {
        let mut window = self.window.clone();
        for i in 0..window.arity() {
            window.lo[i] = window.lo[i].max(lo[i]);
            window.hi[i] = window.hi[i].min(hi[i]);
        }
        let mut out = Series::zero(self.vars.clone(), window);
        for (e, c) in &self.terms {
            if out.window.in_box(e) {
                out.insert_add(e.clone(), c.clone());
            }
        }
        out
    }

    /// Sets one variable to zero (keeps its exponent-zero slice). Requires the
    /// window to actually cover exponent zero in that variable.
    pub fn set_var_zero(&self, var: &str) -> Result<Series<C>, VqgError> {
        let i = self.vars.expect_index(var);
        if self.window.hi[i] <= 0 {
            return Err(VqgError::Truncation(TruncationNeed {
                var: var.to_string(),
                needed: 1,
                available: self.window.hi[i],
            }));
        }
        let names: Vec<&str> = self
            .vars
            .names()
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, n)| n.as_str())
            .collect();
        let drop = |v: &[i64]| -> Vec<i64> {
            v.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, k)| *k)
                .collect()
        };
        let window = Window::new(drop(&self.window.lo), drop(&self.window.hi));
        let mut out = Series::zero(VarSet::new(&names), window);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                out.insert_add(drop(e), c.clone());
            }
        }
        Ok(out)
    }

    /// Renames the variables (same arity, same exponent layout).
    pub fn rename_vars(&self, vars: VarSet) -> Series<C> {
        assert_eq!(vars.len(), self.vars.len(), "variable arity");
        Series {
            vars,
            window: self.window.clone(),
            terms: self.terms.clone(),
        }
    }

    /// Compares two series on the probe box `[probe_lo, probe_hi)`.
    ///
    /// Errors if either window cannot vouch for the whole probe box; otherwise the
    /// lexicographically first differing exponent vector is reported.
    pub fn equal_on_window(
        &self,
        other: &Series<C>,
        probe_lo: &[i64],
        probe_hi: &[i64],
    ) -> Result<Option<Mismatch>, VqgError> {
        if self.vars != other.vars {
            return Err(VqgError::VarSetMismatch(format!(
                "({}) vs ({})",
                self.vars.names().join(","),
                other.vars.names().join(",")
            )));
        }
        assert_eq!(probe_lo.len(), self.vars.len());
        assert_eq!(probe_hi.len(), self.vars.len());
        for side in [&self.window, &other.window] {
            for i in 0..side.arity() {
                if probe_hi[i] > side.hi[i] {
                    return Err(VqgError::Truncation(TruncationNeed {
                        var: self.vars.names()[i].clone(),
                        needed: probe_hi[i],
                        available: side.hi[i],
                    }));
                }
            }
        }
        let in_probe = |e: &[i64]| {
            e.iter()
                .zip(probe_lo)
                .zip(probe_hi)
                .all(|((k, l), h)| k >= l && k < h)
        };
        let mut support: Vec<&Vec<i64>> = Vec::new();
        for e in self.terms.keys().chain(other.terms.keys()) {
            if in_probe(e) {
                support.push(e);
            }
        }
        support.sort();
        support.dedup();
        for e in support {
            let a = self.terms.get(e);
            let b = other.terms.get(e);
            let eq = match (a, b) {
                (Some(x), Some(y)) => x == y,
                (None, None) => true,
                (Some(x), None) => x.is_zero(),
                (None, Some(y)) => y.is_zero(),
            };
            if !eq {
                return Ok(Some(Mismatch {
                    exponents: e.clone(),
                    lhs: a.map(|c| c.render()).unwrap_or_else(|| "0".to_string()),
                    rhs: b.map(|c| c.render()).unwrap_or_else(|| "0".to_string()),
                }));
            }
        }
        Ok(None)
    }

    /// Substitutes the single variable of `self` by a formal sum of two variables.
    ///
    /// For the additive law, `z^k = sum_i C(k, i) small^i big^(k-i)`; for the
    /// multiplicative law (`z -> z1 + z2 + z1 z2`), `z^k = sum_i C(k, i) small^i
    /// (1 + big)^i big^(k-i)`. The small variable is truncated below `high_small`,
    /// which is what makes negative `k` meaningful; `dir` selects which output
    /// variable is small. Output variables are `(first, second)` in that order.
    pub fn shift_substitute(
        &self,
        law: GroupLaw,
        dir: ShiftDir,
        first: &str,
        second: &str,
        high_small: i64,
    ) -> Result<Series<C>, VqgError> {
        if self.vars.len() != 1 {
            return Err(VqgError::Invalid(format!(
                "shift substitution needs a univariate source, got ({})",
                self.vars.names().join(",")
            )));
        }
        if first == second {
            return Err(VqgError::Invalid(
                "shift substitution output variables must differ".to_string(),
            ));
        }
        if high_small < 1 {
            return Err(VqgError::Invalid(
                "shift substitution needs a positive small-variable bound".to_string(),
            ));
        }
        let vars = VarSet::new(&[first, second]);
        let (si, bi) = match dir {
            ShiftDir::FirstSmall => (0usize, 1usize),
            ShiftDir::SecondSmall => (1usize, 0usize),
        };
        let (src_lo, src_hi) = (self.window.lo[0], self.window.hi[0]);
        let mut lo = vec![0i64; 2];
        let mut hi = vec![0i64; 2];
        lo[si] = 0;
        hi[si] = high_small;
        lo[bi] = src_lo - (high_small - 1);
        hi[bi] = hi_plus(src_hi, -(high_small - 1));
        let mut out = Series::zero(vars, Window::new(lo, hi));
        for (e, c) in &self.terms {
            let k = e[0];
            let max_i = if k >= 0 {
                k.min(high_small - 1)
            } else {
                high_small - 1
            };
            for i in 0..=max_i {
                let bin = gen_binomial(k, i as u64);
                if bin.is_zero() {
                    continue;
                }
                match law {
                    GroupLaw::Additive => {
                        let mut e2 = vec![0i64; 2];
                        e2[si] = i;
                        e2[bi] = k - i;
                        let mut c2 = c.clone();
                        c2.scale_big(&bin);
                        out.insert_add(e2, c2);
                    }
                    GroupLaw::Multiplicative => {
                        // (1 + big)^i expands to a finite polynomial.
                        for j in 0..=i {
                            let b2 = gen_binomial(i, j as u64);
                            let mut e2 = vec![0i64; 2];
                            e2[si] = i;
                            e2[bi] = k - i + j;
                            let mut c2 = c.clone();
                            c2.scale_big(&(bin.clone() * b2));
                            out.insert_add(e2, c2);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Substitutes the single variable of `self` by a series `g` of order exactly
    /// one with invertible leading coefficient. Negative powers of `g` exist as
    /// Laurent series, so the source may have poles.
    pub fn substitute_series(&self, g: &Series<Scalar>) -> Result<Series<C>, VqgError> {
        if self.vars.len() != 1 || g.vars.len() != 1 {
            return Err(VqgError::Invalid(
                "series substitution needs univariate source and substituent".to_string(),
            ));
        }
        if g.window.hi[0] < 2 {
            return Err(VqgError::Truncation(TruncationNeed {
                var: g.vars.names()[0].clone(),
                needed: 2,
                available: g.window.hi[0],
            }));
        }
        if g.terms.keys().any(|e| e[0] < 1) {
            return Err(VqgError::NonInvertibleSeries(
                "substituent must have order exactly one".to_string(),
            ));
        }
        let c1 = g
            .coeff(&[1])
            .cloned()
            .ok_or_else(|| {
                VqgError::NonInvertibleSeries("substituent must have order exactly one".to_string())
            })?;
        let c1_inv = c1
            .invert()
            .map_err(|_| VqgError::NonInvertibleSeries("leading coefficient not a unit".to_string()))?;

        let (src_lo, src_hi) = (self.window.lo[0], self.window.hi[0]);
        // Exactness above the order: g determines g^k to k + delta.
        let delta = if g.window.hi[0] >= INF_HI {
            INF_HI
        } else {
            g.window.hi[0] - 1
        };
        let out_hi = if delta >= INF_HI {
            src_hi
        } else {
            src_hi.min(hi_plus(src_lo, delta))
        };
        if src_lo < 0 && out_hi >= INF_HI {
            return Err(VqgError::Invalid(
                "substituting into a pole needs a finite request window".to_string(),
            ));
        }
        let out_window = Window::new(vec![src_lo], vec![out_hi]);
        let mut out = Series::zero(g.vars.clone(), out_window);
        if self.terms.is_empty() {
            return Ok(out);
        }

        let one = Series::from_terms(
            g.vars.clone(),
            Window::new(vec![0], vec![INF_HI]),
            [(vec![0i64], c1.ring().one())],
        );
        let cap = vec![out_hi];
        // Inverse of g as a Laurent series: g = c1 z (1 + e), so
        // g^-1 = c1^-1 z^-1 sum_j (-e)^j.
        let g_inv = if src_lo < 0 {
            let h = g.shift_var(g.vars.names()[0].as_str(), -1).scale_scalar(&c1_inv);
            let e = h.sub(&one);
            let mut acc = one.clone();
            let mut p = one.clone();
            // Every multiplication by g^-1 lowers the exact bound by one, so
            // the deepest power still needs the inverse known near out_hi - lo.
            let steps = (out_hi - src_lo + 2).max(2);
            for _ in 0..steps {
                p = p.mul_scalar_series(&e.neg()).restrict_hi(&[steps + 1]);
                if p.is_zero() {
                    break;
                }
                acc = acc.add(&p);
            }
            Some(
                acc.shift_var(g.vars.names()[0].as_str(), -1)
                    .scale_scalar(&c1_inv),
            )
        } else {
            None
        };

        let mut pow_cache: BTreeMap<i64, Series<Scalar>> = BTreeMap::new();
        pow_cache.insert(0, one.clone());
        let power = |k: i64, cache: &mut BTreeMap<i64, Series<Scalar>>| -> Series<Scalar> {
            if let Some(p) = cache.get(&k) {
                return p.clone();
            }
            let prev = if k > 0 {
                cache.get(&(k - 1)).cloned()
            } else {
                cache.get(&(k + 1)).cloned()
            };
            let base = prev.unwrap_or_else(|| one.clone());
            let next = if k > 0 {
                base.mul_scalar_series(g).restrict_hi(&cap)
            } else {
                // Negative powers lose one exponent of validity per factor;
                // the window arithmetic tracks that, so no clipping here.
                base.mul_scalar_series(g_inv.as_ref().expect("inverse built for negative powers"))
            };
            cache.insert(k, next.clone());
            next
        };
        // Fill the cache outward from zero so each power builds on its neighbor.
        let ks: Vec<i64> = self.terms.keys().map(|e| e[0]).collect();
        let kmin = *ks.iter().min().unwrap();
        let kmax = *ks.iter().max().unwrap();
        for k in 1..=kmax.max(0) {
            power(k, &mut pow_cache);
        }
        for k in (kmin.min(0)..0).rev() {
            power(k, &mut pow_cache);
        }
        for (e, c) in &self.terms {
            let p = pow_cache.get(&e[0]).expect("power cached");
            for (pe, ps) in &p.terms {
                if out.window.in_u(pe) {
                    out.insert_add(pe.clone(), c.scale_scalar(ps));
                }
            }
        }
        Ok(out)
    }

    /// Canonical text form: terms ascending in the exponent order, every variable
    /// printed with an explicit exponent, explicit rational coefficients.
    pub fn render(&self) -> String {
        let mut parts: Vec<(bool, String)> = Vec::new();
        for (e, c) in &self.terms {
            let vars_part: Vec<String> = self
                .vars
                .names()
                .iter()
                .zip(e)
                .map(|(n, k)| format!("{n}^{k}"))
                .collect();
            let vars_part = vars_part.join("*");
            for (scalar, key) in c.atoms() {
                if scalar.is_zero() {
                    continue;
                }
                let (neg, coeff_body) = scalar.series_coeff_body();
                let mut body = coeff_body;
                if !vars_part.is_empty() {
                    body.push('*');
                    body.push_str(&vars_part);
                }
                if let Some(k) = key {
                    body.push('*');
                    body.push_str(&k);
                }
                parts.push((neg, body));
            }
        }
        join_signed_terms(&parts)
    }
}

impl Series<Scalar> {
    pub fn constant(ring: &Ring, vars: VarSet, s: Scalar) -> Series<Scalar> {
        let n = vars.len();
        let _ = ring;
        Series::from_terms(vars, Window::exact(n), [(vec![0i64; n], s)])
    }

    pub fn one(ring: &Ring, vars: VarSet) -> Series<Scalar> {
        let s = ring.one();
        Series::constant(ring, vars, s)
    }

    /// `c * prod vars^exps` with an untruncated window.
    pub fn monomial(vars: VarSet, exps: Vec<i64>, c: Scalar) -> Series<Scalar> {
        let lo: Vec<i64> = exps.iter().map(|k| (*k).min(0)).collect();
        let window = Window::new(lo, vec![INF_HI; exps.len()]);
        Series::from_terms(vars, window, [(exps, c)])
    }

    pub fn mul(&self, other: &Series<Scalar>) -> Series<Scalar> {
        self.mul_scalar_series(other)
    }
}

/// Expansion of `(big + small_sign * small)^k` with the small variable truncated
/// below `high_small`. Exact (untruncated) when `k >= 0` terminates early.
pub fn expand_shifted_power(
    ring: &Ring,
    vars: &VarSet,
    big: &str,
    small: &str,
    small_sign: i64,
    k: i64,
    high_small: i64,
) -> Series<Scalar> {
    assert!(high_small >= 1, "need at least one small-variable slot");
    assert!(small_sign == 1 || small_sign == -1);
    let bi = vars.expect_index(big);
    let si = vars.expect_index(small);
    assert!(bi != si);
    let n = vars.len();
    let exact = k >= 0 && k < high_small;
    let max_i = if k >= 0 {
        k.min(high_small - 1)
    } else {
        high_small - 1
    };
    let mut lo = vec![0i64; n];
    let mut hi = vec![INF_HI; n];
    lo[bi] = k - max_i;
    lo[si] = 0;
    hi[si] = if exact { INF_HI } else { high_small };
    let mut out = Series::zero(vars.clone(), Window::new(lo, hi));
    for i in 0..=max_i {
        let mut q = gen_binomial(k, i as u64);
        if q.is_zero() {
            continue;
        }
        if small_sign == -1 && i % 2 == 1 {
            q = -q;
        }
        let mut e = vec![0i64; n];
        e[bi] = k - i;
        e[si] = i;
        out.insert_add(e, ring.big(q));
    }
    out
}

/// The two expansions of `(z - w)^{-n}` as series in variables `(z, w)`.
pub fn expand_binomial_inverse(ring: &Ring, n: u32, dir: ExpandDir, high: i64) -> Series<Scalar> {
    let vars = VarSet::new(&["z", "w"]);
    let k = -(n as i64);
    match dir {
        ExpandDir::WOverZ => expand_shifted_power(ring, &vars, "z", "w", -1, k, high),
        ExpandDir::ZOverW => {
            let s = expand_shifted_power(ring, &vars, "w", "z", -1, k, high);
            if n % 2 == 1 {
                s.neg()
            } else {
                s
            }
        }
    }
}

/// Polynomial `(a - b)^n` in the given variables, exact.
pub fn zw_power(ring: &Ring, vars: &VarSet, a: &str, b: &str, n: u32) -> Series<Scalar> {
    expand_shifted_power(ring, vars, a, b, -1, n as i64, n as i64 + 1)
}

/// The formal delta distribution truncated symmetrically:
/// `sum_{k=-deg..deg} a^k b^(-k-1)`.
pub fn formal_delta(ring: &Ring, vars: &VarSet, a: &str, b: &str, deg: i64) -> Series<Scalar> {
    let ai = vars.expect_index(a);
    let bi = vars.expect_index(b);
    let n = vars.len();
    let mut lo = vec![0i64; n];
    let mut hi = vec![INF_HI; n];
    lo[ai] = -deg;
    hi[ai] = deg + 1;
    lo[bi] = -deg - 1;
    hi[bi] = deg;
    let mut out = Series::zero(vars.clone(), Window::new(lo, hi));
    for k in -deg..=deg {
        let mut e = vec![0i64; n];
        e[ai] = k;
        e[bi] = -k - 1;
        out.insert_add(e, ring.one());
    }
    out
}

/// `log(1 + z)` truncated below `hi`: `z - z^2/2 + z^3/3 - ...`.
pub fn log1p(ring: &Ring, var: &str, hi: i64) -> Series<Scalar> {
    let vars = VarSet::new(&[var]);
    let mut out = Series::zero(vars, Window::new(vec![1], vec![hi.max(1)]));
    for k in 1..hi {
        let q = BigRational::new(
            if k % 2 == 1 { 1.into() } else { (-1i64).into() },
            k.into(),
        );
        out.insert_add(vec![k], ring.big(q));
    }
    out
}

/// `(1 + z)^-1 - 1 = -z + z^2 - z^3 + ...`, the additive inverse in the
/// multiplicative formal group law, truncated below `hi`.
pub fn mult_inverse_coordinate(ring: &Ring, var: &str, hi: i64) -> Series<Scalar> {
    let vars = VarSet::new(&[var]);
    let mut out = Series::zero(vars, Window::new(vec![1], vec![hi.max(1)]));
    for k in 1..hi {
        let q = if k % 2 == 1 {
            BigRational::from_integer((-1i64).into())
        } else {
            BigRational::one()
        };
        out.insert_add(vec![k], ring.big(q));
    }
    out
}

impl<C: Coeff> fmt::Display for Series<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q() -> Ring {
        Ring::rationals()
    }

    fn zw() -> VarSet {
        VarSet::new(&["z", "w"])
    }

    fn sz(terms: &[(i64, i64)], lo: i64, hi: i64) -> Series<Scalar> {
        let r = q();
        Series::from_terms(
            VarSet::new(&["z"]),
            Window::new(vec![lo], vec![hi]),
            terms.iter().map(|(e, c)| (vec![*e], r.int(*c))),
        )
    }

    #[test]
    fn add_windows_take_minima() {
        let r = q();
        let a = Series::from_terms(
            VarSet::new(&["z"]),
            Window::new(vec![-1], vec![5]),
            [(vec![-1], r.int(1))],
        );
        let b = Series::from_terms(
            VarSet::new(&["z"]),
            Window::new(vec![-3], vec![4]),
            [(vec![2], r.int(7))],
        );
        let s = a.add(&b);
        assert_eq!(s.window(), &Window::new(vec![-3], vec![4]));
        assert_eq!(s.coeff(&[-1]), Some(&r.int(1)));
        assert_eq!(s.coeff(&[2]), Some(&r.int(7)));
    }

    #[test]
    fn additive_inverse_keeps_window() {
        let a = sz(&[(0, 1), (1, 1)], 0, 6);
        let d = a.add(&a.neg());
        assert!(d.is_zero());
        assert_eq!(d.window(), &Window::new(vec![0], vec![6]));
    }

    #[test]
    fn laurent_units_cancel() {
        let r = q();
        let zinv = Series::monomial(VarSet::new(&["z"]), vec![-1], r.one());
        let z = Series::monomial(VarSet::new(&["z"]), vec![1], r.one());
        let p = zinv.mul(&z);
        assert_eq!(p.coeff(&[0]), Some(&r.one()));
        assert_eq!(p.num_terms(), 1);
    }

    #[test]
    fn truncated_geometric_cancellation() {
        // (1 + z + ... + z^7)(1 - z) = 1 - z^8, but the window cuts at 8.
        let r = q();
        let geo = Series::from_terms(
            VarSet::new(&["z"]),
            Window::new(vec![0], vec![8]),
            (0..8).map(|k| (vec![k], r.one())),
        );
        let lin = Series::from_terms(
            VarSet::new(&["z"]),
            Window::new(vec![0], vec![INF_HI]),
            [(vec![0], r.int(1)), (vec![1], r.int(-1))],
        );
        let p = geo.mul(&lin);
        assert_eq!(p.window().hi[0], 8);
        assert_eq!(p.coeff(&[0]), Some(&r.one()));
        assert_eq!(p.num_terms(), 1, "interior terms all cancel: {}", p.render());
    }

    #[test]
    fn binomial_inverse_expansions_match_spec() {
        let r = q();
        // w-small: z^-1 + w z^-2 + w^2 z^-3 + ...
        let a = expand_binomial_inverse(&r, 1, ExpandDir::WOverZ, 4);
        assert_eq!(a.coeff(&[-1, 0]), Some(&r.one()));
        assert_eq!(a.coeff(&[-2, 1]), Some(&r.one()));
        assert_eq!(a.coeff(&[-3, 2]), Some(&r.one()));
        assert_eq!(a.window().lo, vec![-4, 0]);
        assert_eq!(a.window().hi[1], 4);
        assert!(a.window().hi[0] >= INF_HI);
        // z-small: -w^-1 - z w^-2 - z^2 w^-3 - ...
        let b = expand_binomial_inverse(&r, 1, ExpandDir::ZOverW, 4);
        assert_eq!(b.coeff(&[0, -1]), Some(&r.int(-1)));
        assert_eq!(b.coeff(&[1, -2]), Some(&r.int(-1)));
        assert_eq!(b.coeff(&[2, -3]), Some(&r.int(-1)));
    }

    #[test]
    fn expansions_invert_the_binomial() {
        let r = q();
        for n in 1..=4u32 {
            for dir in [ExpandDir::WOverZ, ExpandDir::ZOverW] {
                let e = expand_binomial_inverse(&r, n, dir, 9);
                let p = zw_power(&r, &zw(), "z", "w", n);
                let prod = e.mul(&p);
                let one = Series::one(&r, zw());
                let probe_lo = vec![-6, -6];
                let probe_hi: Vec<i64> = prod.window().hi.clone();
                let diff = prod.equal_on_window(&one, &probe_lo, &probe_hi).unwrap();
                assert_eq!(diff, None, "n={n} dir={dir:?}");
            }
        }
    }

    #[test]
    fn delta_is_difference_of_expansions() {
        let r = q();
        let high = 6;
        let a = expand_binomial_inverse(&r, 1, ExpandDir::WOverZ, high);
        let b = expand_binomial_inverse(&r, 1, ExpandDir::ZOverW, high);
        let diff = a.sub(&b);
        // delta = sum_k w^k z^(-k-1), vars here are (z, w).
        let delta = formal_delta(&r, &zw(), "w", "z", high - 1);
        let lo = vec![-(high - 1), -(high - 1)];
        let hi = vec![high - 1, high - 1];
        let delta = delta.clip(&lo, &hi);
        let diffc = diff.clip(&lo, &hi);
        assert_eq!(diffc.equal_on_window(&delta, &lo, &hi).unwrap(), None);
    }

    #[test]
    fn equal_on_window_reports_first_lex_difference() {
        let r = q();
        let a = expand_binomial_inverse(&r, 1, ExpandDir::WOverZ, 1);
        let b = expand_binomial_inverse(&r, 1, ExpandDir::ZOverW, 1);
        let m = a
            .equal_on_window(&b, &[-1, -1], &[1, 1])
            .unwrap()
            .expect("expansions differ");
        assert_eq!(m.exponents, vec![-1, 0]);
        assert_eq!(m.lhs, "1");
        assert_eq!(m.rhs, "0");
    }

    #[test]
    fn equal_on_window_rejects_oversized_probe() {
        let a = sz(&[(0, 1)], 0, 3);
        let b = sz(&[(0, 1)], 0, 5);
        let err = a.equal_on_window(&b, &[0], &[4]).unwrap_err();
        match err {
            VqgError::Truncation(t) => {
                assert_eq!(t.var, "z");
                assert_eq!(t.needed, 4);
                assert_eq!(t.available, 3);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn derive_window_and_leibniz_example() {
        let a = sz(&[(-2, 1), (3, 2)], -2, 5);
        let d = a.derive("z");
        assert_eq!(d.coeff(&[-3]), Some(&q().int(-2)));
        assert_eq!(d.coeff(&[2]), Some(&q().int(6)));
        assert_eq!(d.window(), &Window::new(vec![-3], vec![4]));
        let b = sz(&[(0, 1), (1, 1)], 0, 6);
        let db = b.derive("z");
        assert_eq!(db.window(), &Window::new(vec![0], vec![5]));
    }

    #[test]
    fn shift_substitute_polynomial_both_directions() {
        // z^2 -> (z1 + z2)^2 regardless of direction.
        let src = sz(&[(2, 1)], 0, INF_HI);
        let a = src
            .shift_substitute(GroupLaw::Additive, ShiftDir::FirstSmall, "z1", "z2", 8)
            .unwrap();
        let b = src
            .shift_substitute(GroupLaw::Additive, ShiftDir::SecondSmall, "z1", "z2", 8)
            .unwrap();
        for e in [[2, 0], [1, 1], [0, 2]] {
            let expect = if e == [1, 1] { q().int(2) } else { q().one() };
            assert_eq!(a.coeff(&e), Some(&expect));
            assert_eq!(b.coeff(&e), Some(&expect));
        }
        assert_eq!(a.equal_on_window(&b, &[0, 0], &[6, 6]).unwrap(), None);
    }

    #[test]
    fn shift_substitute_pole_expansion() {
        // z^-1 -> sum_k (-1)^k z1^k z2^(-k-1) in the z1-small direction.
        let src = sz(&[(-1, 1)], -1, INF_HI);
        let s = src
            .shift_substitute(GroupLaw::Additive, ShiftDir::FirstSmall, "z1", "z2", 5)
            .unwrap();
        for k in 0..5i64 {
            let expect = q().int(if k % 2 == 0 { 1 } else { -1 });
            assert_eq!(s.coeff(&[k, -k - 1]), Some(&expect), "k={k}");
        }
        assert_eq!(s.window().lo, vec![0, -5]);
    }

    #[test]
    fn multiplicative_law_reduces_to_product_of_shifts() {
        // With F = z1 + z2 + z1 z2 we have 1 + F = (1 + z1)(1 + z2), so substituting
        // into 1 + z must give exactly that product.
        let src = sz(&[(0, 1), (1, 1)], 0, INF_HI);
        let s = src
            .shift_substitute(GroupLaw::Multiplicative, ShiftDir::FirstSmall, "z1", "z2", 6)
            .unwrap();
        for (e, c) in [([0, 0], 1), ([1, 0], 1), ([0, 1], 1), ([1, 1], 1)] {
            assert_eq!(s.coeff(&e), Some(&q().int(c)));
        }
        assert_eq!(s.num_terms(), 4);
    }

    #[test]
    fn log_series_to_order_four() {
        let r = q();
        let l = log1p(&r, "z", 5);
        assert_eq!(l.coeff(&[1]), Some(&r.one()));
        assert_eq!(l.coeff(&[2]), Some(&r.rat(-1, 2)));
        assert_eq!(l.coeff(&[3]), Some(&r.rat(1, 3)));
        assert_eq!(l.coeff(&[4]), Some(&r.rat(-1, 4)));
        assert_eq!(l.num_terms(), 4);
    }

    #[test]
    fn substitute_series_inverts_coordinates() {
        // Substituting g(z) = -z + z^2 - z^3 + ... into itself is the identity:
        // g is an involution for the multiplicative group law.
        let r = q();
        let g = mult_inverse_coordinate(&r, "z", 7);
        let gg = g.substitute_series(&g).unwrap();
        let idz = Series::monomial(VarSet::new(&["z"]), vec![1], r.one()).restrict_hi(&[6]);
        assert_eq!(gg.equal_on_window(&idz, &[0], &[6]).unwrap(), None);
    }

    #[test]
    fn substitute_series_handles_poles() {
        // (z)^-1 under z -> log(1+z): 1/log(1+z) = z^-1 (1 + z/2 - z^2/12 + ...).
        let r = q();
        let src = sz(&[(-1, 1)], -1, INF_HI);
        let u = log1p(&r, "z", 6);
        let s = src.substitute_series(&u).unwrap();
        assert_eq!(s.coeff(&[-1]), Some(&r.one()));
        assert_eq!(s.coeff(&[0]), Some(&r.rat(1, 2)));
        assert_eq!(s.coeff(&[1]), Some(&r.rat(-1, 12)));
        assert_eq!(s.coeff(&[2]), Some(&r.rat(1, 24)));
    }

    #[test]
    fn render_is_canonical() {
        let r = q();
        let s = Series::from_terms(
            zw(),
            Window::new(vec![-2, 0], vec![3, 4]),
            [
                (vec![-2, 3], r.rat(-1, 2)),
                (vec![0, 0], r.one()),
                (vec![1, 2], r.int(3)),
            ],
        );
        assert_eq!(s.render(), "-1/2*z^-2*w^3 + 1*z^0*w^0 + 3*z^1*w^2");
        let zero: Series<Scalar> = Series::zero(zw(), Window::new(vec![0, 0], vec![1, 1]));
        assert_eq!(zero.render(), "0");
    }

    #[test]
    fn render_parenthesizes_parameter_sums() {
        let r = Ring::with_params(&["t"]).unwrap();
        let t = r.param("t").unwrap();
        let c = r.one().add(&t.scaled(&BigRational::from_integer(2.into())));
        let s = Series::from_terms(
            VarSet::new(&["z"]),
            Window::new(vec![-1], vec![2]),
            [(vec![-1], c), (vec![1], t.neg())],
        );
        assert_eq!(s.render(), "(1 + 2*t)*z^-1 - 1*t*z^1");
    }

    #[test]
    fn negate_var_flips_odd_exponents() {
        let a = sz(&[(-1, 1), (2, 3), (3, 5)], -1, 4);
        let b = a.negate_var("z");
        assert_eq!(b.coeff(&[-1]), Some(&q().int(-1)));
        assert_eq!(b.coeff(&[2]), Some(&q().int(3)));
        assert_eq!(b.coeff(&[3]), Some(&q().int(-5)));
        assert_eq!(b.window(), a.window());
    }

    #[test]
    fn zero_series_carries_requested_window() {
        let z: Series<Scalar> = Series::zero(zw(), Window::new(vec![-2, -2], vec![2, 2]));
        assert!(z.is_zero());
        assert_eq!(z.window(), &Window::new(vec![-2, -2], vec![2, 2]));
    }

    fn arb_series() -> impl Strategy<Value = Series<Scalar>> {
        proptest::collection::btree_map(
            (-3i64..4, -3i64..4).prop_map(|(a, b)| vec![a, b]),
            -4i64..5,
            0..5,
        )
        .prop_map(|m| {
            let r = Ring::rationals();
            Series::from_terms(
                VarSet::new(&["z", "w"]),
                Window::new(vec![-3, -3], vec![4, 4]),
                m.into_iter().map(|(e, c)| (e, r.int(c))),
            )
        })
    }

    proptest! {
        #[test]
        fn prop_add_commutes(a in arb_series(), b in arb_series()) {
            prop_assert_eq!(a.add(&b), b.add(&a));
        }

        #[test]
        fn prop_mul_commutes(a in arb_series(), b in arb_series()) {
            prop_assert_eq!(a.mul(&b), b.mul(&a));
        }

        #[test]
        fn prop_mul_associates_on_common_window(
            a in arb_series(), b in arb_series(), c in arb_series()
        ) {
            let l = a.mul(&b).mul(&c);
            let r = a.mul(&b.mul(&c));
            let hi: Vec<i64> = l.window().hi.iter().zip(&r.window().hi)
                .map(|(x, y)| *x.min(y)).collect();
            let lo = vec![-12, -12];
            prop_assert_eq!(l.equal_on_window(&r, &lo, &hi).unwrap(), None);
        }

        #[test]
        fn prop_mul_distributes(a in arb_series(), b in arb_series(), c in arb_series()) {
            let l = a.mul(&b.add(&c));
            let r = a.mul(&b).add(&a.mul(&c));
            let hi: Vec<i64> = l.window().hi.iter().zip(&r.window().hi)
                .map(|(x, y)| *x.min(y)).collect();
            let lo = vec![-12, -12];
            prop_assert_eq!(l.equal_on_window(&r, &lo, &hi).unwrap(), None);
        }

        #[test]
        fn prop_leibniz(a in arb_series(), b in arb_series()) {
            let l = a.mul(&b).derive("z");
            let r = a.derive("z").mul(&b).add(&a.mul(&b.derive("z")));
            let hi: Vec<i64> = l.window().hi.iter().zip(&r.window().hi)
                .map(|(x, y)| *x.min(y)).collect();
            let lo = vec![-12, -12];
            prop_assert_eq!(l.equal_on_window(&r, &lo, &hi).unwrap(), None);
        }

        #[test]
        fn prop_shift_then_restore(
            m in proptest::collection::btree_map(-3i64..5, -4i64..5, 0..5)
        ) {
            let r = Ring::rationals();
            let src = Series::from_terms(
                VarSet::new(&["z"]),
                Window::new(vec![-3], vec![5]),
                m.into_iter().map(|(e, c)| (vec![e], r.int(c))),
            );
            // Substitute z -> z1 + z2 with z1 small, then set z1 = 0: recovers the
            // original series in z2 on the shared window.
            let s = src.shift_substitute(GroupLaw::Additive, ShiftDir::FirstSmall, "z1", "z2", 4)
                .unwrap();
            let back = s.set_var_zero("z1").unwrap();
            let expect = src.rename_vars(VarSet::new(&["z2"]));
            let hi = back.window().hi.clone();
            prop_assert_eq!(expect.equal_on_window(&back, &[-6], &hi).unwrap(), None);
        }
    }
}
