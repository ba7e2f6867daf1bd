//! Finite-dimensional bialgebras with R-matrices: axiom checks, Yang-Baxter,
//! coproduct twisting and Borcherds products.
//!
//! Everything is verified by exhaustive evaluation on basis tuples; failures
//! carry the first offending tuple in canonical order. Conjugation identities
//! are checked in cross-multiplied, inverse-free form. Where an honest inverse
//! of R is unavoidable (the excess-intersection correction), unitarity
//! `swap(R)*R = 1(x)1` supplies it inverse-free; otherwise the inverse is found
//! by rational linear algebra, and parameter rings are rejected cleanly.


use num::rational::BigRational;
use num::Zero;

use crate::error::{CheckOutcome, VqgError, Witness};
use crate::linalg::{apply_slot, collapse_slot, permute, swap, tensor, BasisKey, LinearMap, StateVector};
use crate::scalar::{Ring, Scalar};

/// Finite-dimensional bialgebra given by structure constants on basis `b[0..dim]`.
#[derive(Clone)]
pub struct FinBialgebra {
    pub ring: Ring,
    pub dim: u32,
    pub unit: StateVector,
    counit: Vec<Scalar>,
    /// `product[i][j] = b_i * b_j`
    product: Vec<Vec<StateVector>>,
    /// `coproduct[i] = Delta(b_i)` as an arity-2 element.
    coproduct: Vec<StateVector>,
}

fn key_index(k: &BasisKey) -> usize {
    match k {
        BasisKey::B(i) => *i as usize,
        other => panic!("expected a finite basis key, got {other}"),
    }
}

impl FinBialgebra {
    pub fn new(
        ring: Ring,
        dim: u32,
        unit: StateVector,
        product: Vec<Vec<StateVector>>,
        coproduct: Vec<StateVector>,
        counit: Vec<Scalar>,
    ) -> Result<FinBialgebra, VqgError> {
        if product.len() != dim as usize
            || product.iter().any(|row| row.len() != dim as usize)
            || coproduct.len() != dim as usize
            || counit.len() != dim as usize
        {
            return Err(VqgError::Invalid(
                "structure constant tables must cover the whole basis".to_string(),
            ));
        }
        let in_range = |v: &StateVector, arity: usize| {
            v.iter().all(|(k, _)| {
                k.arity() == arity && k.slots().iter().all(|s| matches!(s, BasisKey::B(i) if (*i as usize) < dim as usize))
            })
        };
        if !in_range(&unit, 1)
            || product.iter().flatten().any(|v| !in_range(v, 1))
            || coproduct.iter().any(|v| !v.is_zero_arity_ok(2, dim))
        {
            return Err(VqgError::Invalid(
                "structure constants reference out-of-range basis indices".to_string(),
            ));
        }
        Ok(FinBialgebra {
            ring,
            dim,
            unit,
            counit,
            product,
            coproduct,
        })
    }

    pub fn basis(&self) -> Vec<BasisKey> {
        (0..self.dim).map(BasisKey::B).collect()
    }

    pub fn mul_key(&self, i: usize, j: usize) -> &StateVector {
        &self.product[i][j]
    }

    /// Product of elements of `A^(x)n`, slotwise.
    pub fn mul(&self, u: &StateVector, v: &StateVector) -> StateVector {
        let mut out = StateVector::zero();
        for (ku, cu) in u.iter() {
            for (kv, cv) in v.iter() {
                let su = ku.slots();
                let sv = kv.slots();
                assert_eq!(su.len(), sv.len(), "tensor arity mismatch in product");
                let mut acc: Option<StateVector> = None;
                for (a, b) in su.iter().zip(&sv) {
                    let p = self.mul_key(key_index(a), key_index(b));
                    acc = Some(match acc {
                        None => p.clone(),
                        Some(t) => tensor(&t, p),
                    });
                }
                let mut piece = acc.expect("nonempty tensor word");
                piece = piece.scale(&cu.mul(cv));
                for (k, c) in piece.iter() {
                    out.insert_add(k.clone(), c.clone());
                }
            }
        }
        out
    }

    pub fn delta_key(&self, i: usize) -> &StateVector {
        &self.coproduct[i]
    }

    pub fn delta_map(&self) -> LinearMap {
        let cols = self.coproduct.clone();
        LinearMap::new(move |k| cols[key_index(k)].clone())
    }

    /// Coproduct of an arity-1 element.
    pub fn delta(&self, v: &StateVector) -> StateVector {
        self.delta_map().apply(v)
    }

    pub fn counit_key(&self, i: usize) -> &Scalar {
        &self.counit[i]
    }

    pub fn counit_fn(&self) -> impl Fn(&BasisKey) -> Scalar + '_ {
        move |k| self.counit[key_index(k)].clone()
    }

    /// Places an arity-2 element into slots `(i, j)` of `A^(x)n`, units elsewhere.
    pub fn embed(&self, r: &StateVector, n: usize, i: usize, j: usize) -> StateVector {
        assert!(i < j && j < n, "embedding slots");
        let mut out = StateVector::zero();
        for (k, c) in r.iter() {
            let slots = k.slots();
            assert_eq!(slots.len(), 2, "embedding needs an arity-2 element");
            let mut acc: Option<StateVector> = None;
            for pos in 0..n {
                let factor = if pos == i {
                    StateVector::from_key(&self.ring, slots[0].clone())
                } else if pos == j {
                    StateVector::from_key(&self.ring, slots[1].clone())
                } else {
                    self.unit.clone()
                };
                acc = Some(match acc {
                    None => factor,
                    Some(t) => tensor(&t, &factor),
                });
            }
            for (k2, c2) in acc.unwrap().iter() {
                out.insert_add(k2.clone(), c2.mul(c));
            }
        }
        out
    }

    pub fn unit_pair(&self) -> StateVector {
        tensor(&self.unit, &self.unit)
    }
}

trait ArityCheck {
    fn is_zero_arity_ok(&self, arity: usize, dim: u32) -> bool;
}
impl ArityCheck for StateVector {
    fn is_zero_arity_ok(&self, arity: usize, dim: u32) -> bool {
        self.iter().all(|(k, _)| {
            k.arity() == arity
                && k.slots()
                    .iter()
                    .all(|s| matches!(s, BasisKey::B(i) if *i < dim))
        })
    }
}

fn expect_eq(
    check: &str,
    states: &[&BasisKey],
    lhs: &StateVector,
    rhs: &StateVector,
) -> Result<(), Witness> {
    if lhs == rhs {
        Ok(())
    } else {
        Err(Witness {
            check: check.to_string(),
            states: states.iter().map(|k| k.render()).collect(),
            exponents: Vec::new(),
            lhs: lhs.render(),
            rhs: rhs.render(),
        })
    }
}

/// The five bialgebra laws, by exhaustive basis evaluation.
pub fn check_bialgebra(a: &FinBialgebra) -> CheckOutcome {
    let basis = a.basis();
    let dm = a.delta_map();
    // Associativity and unit laws.
    for bi in &basis {
        let vi = StateVector::from_key(&a.ring, bi.clone());
        let left = a.mul(&a.unit, &vi);
        let right = a.mul(&vi, &a.unit);
        if let Err(w) = expect_eq("unit", &[bi], &left, &vi)
            .and_then(|_| expect_eq("unit", &[bi], &right, &vi))
        {
            return CheckOutcome::Fail(w);
        }
        for bj in &basis {
            let vj = StateVector::from_key(&a.ring, bj.clone());
            for bk in &basis {
                let vk = StateVector::from_key(&a.ring, bk.clone());
                let l = a.mul(&a.mul(&vi, &vj), &vk);
                let r = a.mul(&vi, &a.mul(&vj, &vk));
                if let Err(w) = expect_eq("associativity", &[bi, bj, bk], &l, &r) {
                    return CheckOutcome::Fail(w);
                }
            }
        }
    }
    // Coassociativity and counit laws.
    for bi in &basis {
        let d = a.delta_key(key_index(bi));
        let l = apply_slot(d, 0, &dm);
        let r = apply_slot(d, 1, &dm);
        if let Err(w) = expect_eq("coassociativity", &[bi], &l, &r) {
            return CheckOutcome::Fail(w);
        }
        let vi = StateVector::from_key(&a.ring, bi.clone());
        let eps = a.counit_fn();
        let cl = collapse_slot(d, 0, &eps);
        let cr = collapse_slot(d, 1, &eps);
        if let Err(w) = expect_eq("counit", &[bi], &cl, &vi)
            .and_then(|_| expect_eq("counit", &[bi], &cr, &vi))
        {
            return CheckOutcome::Fail(w);
        }
    }
    // Compatibility: Delta and the counit are algebra maps; Delta(1) = 1(x)1.
    for bi in &basis {
        let vi = StateVector::from_key(&a.ring, bi.clone());
        for bj in &basis {
            let vj = StateVector::from_key(&a.ring, bj.clone());
            let l = a.delta(&a.mul(&vi, &vj));
            let r = a.mul(a.delta_key(key_index(bi)), a.delta_key(key_index(bj)));
            if let Err(w) = expect_eq("compatibility", &[bi, bj], &l, &r) {
                return CheckOutcome::Fail(w);
            }
            let eps = a.counit_fn();
            let el = a
                .mul(&vi, &vj)
                .iter()
                .fold(a.ring.zero(), |acc, (k, c)| acc.add(&eps(k).mul(c)));
            let er = a.counit_key(key_index(bi)).mul(a.counit_key(key_index(bj)));
            if el != er {
                return CheckOutcome::Fail(Witness {
                    check: "compatibility".to_string(),
                    states: vec![bi.render(), bj.render()],
                    exponents: Vec::new(),
                    lhs: el.to_string(),
                    rhs: er.to_string(),
                });
            }
        }
    }
    let d_unit = a.delta(&a.unit);
    if let Err(w) = expect_eq("compatibility", &[], &d_unit, &a.unit_pair()) {
        return CheckOutcome::Fail(w);
    }
    CheckOutcome::Pass
}

/// Hexagons, counit conditions and inverse-free almost cocommutativity for R.
pub fn check_rmatrix(a: &FinBialgebra, r: &StateVector) -> CheckOutcome {
    let dm = a.delta_map();
    // Counit conditions first: linear in the terms of R, cheapest to refute.
    let eps = a.counit_fn();
    let cl = collapse_slot(r, 0, &eps);
    let cr = collapse_slot(r, 1, &eps);
    if let Err(w) = expect_eq("rmatrix-counit", &[], &cl, &a.unit)
        .and_then(|_| expect_eq("rmatrix-counit", &[], &cr, &a.unit))
    {
        return CheckOutcome::Fail(w);
    }
    let r13 = a.embed(r, 3, 0, 2);
    let r23 = a.embed(r, 3, 1, 2);
    let r12 = a.embed(r, 3, 0, 1);
    let hex1_l = apply_slot(r, 0, &dm);
    let hex1_r = a.mul(&r13, &r23);
    if let Err(w) = expect_eq("hexagon-1", &[], &hex1_l, &hex1_r) {
        return CheckOutcome::Fail(w);
    }
    let hex2_l = apply_slot(r, 1, &dm);
    let hex2_r = a.mul(&r13, &r12);
    if let Err(w) = expect_eq("hexagon-2", &[], &hex2_l, &hex2_r) {
        return CheckOutcome::Fail(w);
    }
    for bi in &a.basis() {
        let d = a.delta_key(key_index(bi));
        let l = a.mul(&swap(d), r);
        let rr = a.mul(r, d);
        if let Err(w) = expect_eq("almost-cocommutativity", &[bi], &l, &rr) {
            return CheckOutcome::Fail(w);
        }
    }
    CheckOutcome::Pass
}

/// Both triple products of the Yang-Baxter equation, compared exactly.
pub fn check_yang_baxter(a: &FinBialgebra, r: &StateVector) -> CheckOutcome {
    let r12 = a.embed(r, 3, 0, 1);
    let r13 = a.embed(r, 3, 0, 2);
    let r23 = a.embed(r, 3, 1, 2);
    let l = a.mul(&a.mul(&r12, &r13), &r23);
    let rr = a.mul(&a.mul(&r23, &r13), &r12);
    expect_eq("yang-baxter", &[], &l, &rr).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetricFlags {
    pub naive_symmetric: bool,
    pub unitary: bool,
}

pub fn check_symmetric_rmatrix(a: &FinBialgebra, r: &StateVector) -> SymmetricFlags {
    SymmetricFlags {
        naive_symmetric: swap(r) == *r,
        unitary: a.mul(&swap(r), r) == a.unit_pair(),
    }
}

/// The twisted coproduct `Delta_R = R * Delta` plus its coassociativity certificate.
pub fn borcherds_twist(a: &FinBialgebra, r: &StateVector) -> (LinearMap, CheckOutcome) {
    let cols: Vec<StateVector> = (0..a.dim as usize)
        .map(|i| a.mul(r, a.delta_key(i)))
        .collect();
    let cols2 = cols.clone();
    let twisted = LinearMap::new(move |k| cols2[key_index(k)].clone());
    for bi in a.basis() {
        let d = twisted.apply_key(&bi);
        let l = apply_slot(&d, 0, &twisted);
        let r2 = apply_slot(&d, 1, &twisted);
        if let Err(w) = expect_eq("twist-coassociativity", &[&bi], &l, &r2) {
            return (twisted, CheckOutcome::Fail(w));
        }
    }
    (twisted, CheckOutcome::Pass)
}

/// S-hexagons, S-centrality, commutation with R, and certification of R*S.
pub fn check_twist_compatible(
    a: &FinBialgebra,
    r: &StateVector,
    s: &StateVector,
) -> CheckOutcome {
    let dm = a.delta_map();
    let s13 = a.embed(s, 3, 0, 2);
    let s23 = a.embed(s, 3, 1, 2);
    let s12 = a.embed(s, 3, 0, 1);
    let hex1_l = apply_slot(s, 0, &dm);
    let hex1_r = a.mul(&s13, &s23);
    if let Err(w) = expect_eq("s-hexagon-1", &[], &hex1_l, &hex1_r) {
        return CheckOutcome::Fail(w);
    }
    let hex2_l = apply_slot(s, 1, &dm);
    let hex2_r = a.mul(&s13, &s12);
    if let Err(w) = expect_eq("s-hexagon-2", &[], &hex2_l, &hex2_r) {
        return CheckOutcome::Fail(w);
    }
    for bi in &a.basis() {
        let d = a.delta_key(key_index(bi));
        let l = a.mul(s, d);
        let rr = a.mul(d, s);
        if let Err(w) = expect_eq("s-almost-commutativity", &[bi], &l, &rr) {
            return CheckOutcome::Fail(w);
        }
    }
    let r23 = a.embed(r, 3, 1, 2);
    let r12 = a.embed(r, 3, 0, 1);
    let c1l = a.mul(&r23, &s13);
    let c1r = a.mul(&s13, &r23);
    if let Err(w) = expect_eq("rs-commutation", &[], &c1l, &c1r) {
        return CheckOutcome::Fail(w);
    }
    let c2l = a.mul(&r12, &s13);
    let c2r = a.mul(&s13, &r12);
    if let Err(w) = expect_eq("rs-commutation", &[], &c2l, &c2r) {
        return CheckOutcome::Fail(w);
    }
    check_rmatrix(a, &a.mul(r, s))
}

/// Solves `mat * x = rhs` over the rationals; any solution if consistent.
fn solve_rational(
    mut mat: Vec<Vec<BigRational>>,
    mut rhs: Vec<BigRational>,
) -> Option<Vec<BigRational>> {
    let rows = mat.len();
    let cols = if rows == 0 { 0 } else { mat[0].len() };
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; cols];
    let mut row = 0usize;
    for col in 0..cols {
        let Some(p) = (row..rows).find(|&i| !mat[i][col].is_zero()) else {
            continue;
        };
        mat.swap(row, p);
        rhs.swap(row, p);
        let inv = mat[row][col].recip();
        for x in mat[row].iter_mut() {
            *x *= &inv;
        }
        rhs[row] *= &inv;
        for i in 0..rows {
            if i != row && !mat[i][col].is_zero() {
                let f = mat[i][col].clone();
                for c in 0..cols {
                    let t = &mat[row][c] * &f;
                    mat[i][c] -= t;
                }
                let t = &rhs[row] * &f;
                rhs[i] -= t;
            }
        }
        pivot_of_col[col] = Some(row);
        row += 1;
        if row == rows {
            break;
        }
    }
    // Inconsistent if a zero row has nonzero rhs.
    for i in row..rows {
        if !rhs[i].is_zero() {
            return None;
        }
    }
    let mut x = vec![BigRational::zero(); cols];
    for (col, p) in pivot_of_col.iter().enumerate() {
        if let Some(r) = p {
            x[col] = rhs[*r].clone();
        }
    }
    Some(x)
}

fn pair_index(dim: usize, i: usize, j: usize) -> usize {
    i * dim + j
}

fn element_to_pairs(dim: usize, v: &StateVector) -> Result<Vec<BigRational>, VqgError> {
    let mut out = vec![BigRational::zero(); dim * dim];
    for (k, c) in v.iter() {
        let slots = k.slots();
        assert_eq!(slots.len(), 2);
        let q = c.as_rational().ok_or_else(|| {
            VqgError::Invalid(
                "R-matrix inversion needs rational coefficients; parameter rings are not supported here"
                    .to_string(),
            )
        })?;
        out[pair_index(dim, key_index(&slots[0]), key_index(&slots[1]))] = q;
    }
    Ok(out)
}

/// Two-sided inverse of R in `A(x)A` by rational linear algebra.
pub fn invert_rmatrix(a: &FinBialgebra, r: &StateVector) -> Result<StateVector, VqgError> {
    let dim = a.dim as usize;
    let n = dim * dim;
    // Columns: image of each basis pair under left multiplication by R.
    let mut mat = vec![vec![BigRational::zero(); n]; n];
    for i in 0..dim {
        for j in 0..dim {
            let pair = tensor(
                &StateVector::from_key(&a.ring, BasisKey::B(i as u32)),
                &StateVector::from_key(&a.ring, BasisKey::B(j as u32)),
            );
            let img = element_to_pairs(dim, &a.mul(r, &pair))?;
            for (row, q) in img.into_iter().enumerate() {
                mat[row][pair_index(dim, i, j)] = q;
            }
        }
    }
    let rhs = element_to_pairs(dim, &a.unit_pair())?;
    let x = solve_rational(mat, rhs)
        .ok_or_else(|| VqgError::NonInvertibleScalar("R-matrix is singular".to_string()))?;
    let mut inv = StateVector::zero();
    for i in 0..dim {
        for j in 0..dim {
            let q = &x[pair_index(dim, i, j)];
            if !q.is_zero() {
                inv.insert_add(
                    BasisKey::T(vec![BasisKey::B(i as u32), BasisKey::B(j as u32)]),
                    a.ring.big(q.clone()),
                );
            }
        }
    }
    // The solve gives a right inverse; demand it works on both sides.
    if a.mul(&inv, r) != a.unit_pair() || a.mul(r, &inv) != a.unit_pair() {
        return Err(VqgError::NonInvertibleScalar(
            "R-matrix has no two-sided inverse".to_string(),
        ));
    }
    Ok(inv)
}

/// A-linearity and the excess-intersection diagram for a Borcherds product.
///
/// The diagram's correction `R_14^-1 sigma(R_23)^-1` is realized inverse-free via
/// unitarity when `swap(R)*R = 1(x)1`, else by an explicit rational inverse.
pub fn check_borcherds_product(
    a: &FinBialgebra,
    r: &StateVector,
    m2: &LinearMap,
) -> Result<CheckOutcome, VqgError> {
    let basis = a.basis();
    let m2elem = |v: &StateVector| m2.apply(v);
    // Associativity is a precondition, not a verdict.
    for bi in &basis {
        for bj in &basis {
            for bk in &basis {
                let vi = StateVector::from_key(&a.ring, bi.clone());
                let vj = StateVector::from_key(&a.ring, bj.clone());
                let vk = StateVector::from_key(&a.ring, bk.clone());
                let l = m2elem(&tensor(&m2elem(&tensor(&vi, &vj)), &vk));
                let rr = m2elem(&tensor(&vi, &m2elem(&tensor(&vj, &vk))));
                if l != rr {
                    return Err(VqgError::Invalid(format!(
                        "m2 is not associative at ({}, {}, {})",
                        bi, bj, bk
                    )));
                }
            }
        }
    }
    // Unit: solve m2(u (x) b_i) = b_i = m2(b_i (x) u) for u.
    {
        let dim = a.dim as usize;
        let mut mat = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..dim {
            for side in 0..2 {
                // rows indexed by (equation basis element, output coordinate)
                let mut cols_for_output: Vec<Vec<BigRational>> =
                    vec![vec![BigRational::zero(); dim]; dim];
                for j in 0..dim {
                    let pair = if side == 0 {
                        tensor(
                            &StateVector::from_key(&a.ring, BasisKey::B(j as u32)),
                            &StateVector::from_key(&a.ring, BasisKey::B(i as u32)),
                        )
                    } else {
                        tensor(
                            &StateVector::from_key(&a.ring, BasisKey::B(i as u32)),
                            &StateVector::from_key(&a.ring, BasisKey::B(j as u32)),
                        )
                    };
                    for (k, c) in m2elem(&pair).iter() {
                        let q = c.as_rational().ok_or_else(|| {
                            VqgError::Invalid(
                                "unit solving needs rational m2 coefficients".to_string(),
                            )
                        })?;
                        cols_for_output[key_index(k)][j] = q;
                    }
                }
                for (out_idx, row) in cols_for_output.into_iter().enumerate() {
                    mat.push(row);
                    rhs.push(if out_idx == i {
                        BigRational::from_integer(1.into())
                    } else {
                        BigRational::zero()
                    });
                }
            }
        }
        let solved = solve_rational(mat, rhs);
        let unit_ok = match solved {
            None => false,
            Some(x) => {
                let mut u = StateVector::zero();
                for (j, q) in x.iter().enumerate() {
                    if !q.is_zero() {
                        u.insert_add(BasisKey::B(j as u32), a.ring.big(q.clone()));
                    }
                }
                basis.iter().all(|bi| {
                    let vi = StateVector::from_key(&a.ring, bi.clone());
                    m2elem(&tensor(&u, &vi)) == vi && m2elem(&tensor(&vi, &u)) == vi
                })
            }
        };
        if !unit_ok {
            return Ok(CheckOutcome::Fail(Witness {
                check: "borcherds-unit".to_string(),
                states: Vec::new(),
                exponents: Vec::new(),
                lhs: "no unit element for m2".to_string(),
                rhs: "unit required".to_string(),
            }));
        }
    }
    // A-linearity: m2(Delta(a) * (x (x) y)) = a * m2(x (x) y).
    for ba in &basis {
        let da = a.delta_key(key_index(ba));
        let va = StateVector::from_key(&a.ring, ba.clone());
        for bx in &basis {
            for by in &basis {
                let pair = tensor(
                    &StateVector::from_key(&a.ring, bx.clone()),
                    &StateVector::from_key(&a.ring, by.clone()),
                );
                let l = m2elem(&a.mul(da, &pair));
                let rr = a.mul(&va, &m2elem(&pair));
                if let Err(w) = expect_eq("borcherds-linearity", &[ba, bx, by], &l, &rr) {
                    return Ok(CheckOutcome::Fail(w));
                }
            }
        }
    }
    // Excess intersection: Delta(m2(x (x) y)) vs (m2 (x) m2) of the corrected,
    // swapped double coproduct.
    let flags = check_symmetric_rmatrix(a, r);
    let r_inv = if flags.unitary {
        swap(r)
    } else {
        invert_rmatrix(a, r)?
    };
    let w_inv = a.mul(
        &a.embed(&r_inv, 4, 0, 3),
        &a.embed(&swap(&r_inv), 4, 1, 2),
    );
    for bx in &basis {
        for by in &basis {
            let vx = StateVector::from_key(&a.ring, bx.clone());
            let vy = StateVector::from_key(&a.ring, by.clone());
            let lhs = a.delta(&m2elem(&tensor(&vx, &vy)));
            let four = tensor(&a.delta(&vx), &a.delta(&vy));
            let four = permute(&four, &[0, 2, 1, 3]);
            let corrected = a.mul(&w_inv, &four);
            let mut rhs = StateVector::zero();
            for (k, c) in corrected.iter() {
                let slots = k.slots();
                assert_eq!(slots.len(), 4);
                let left = m2elem(&tensor(
                    &StateVector::from_key(&a.ring, slots[0].clone()),
                    &StateVector::from_key(&a.ring, slots[1].clone()),
                ));
                let right = m2elem(&tensor(
                    &StateVector::from_key(&a.ring, slots[2].clone()),
                    &StateVector::from_key(&a.ring, slots[3].clone()),
                ));
                for (k2, c2) in tensor(&left, &right).iter() {
                    rhs.insert_add(k2.clone(), c2.mul(c));
                }
            }
            if let Err(w) = expect_eq("excess-intersection", &[bx, by], &lhs, &rhs) {
                return Ok(CheckOutcome::Fail(w));
            }
        }
    }
    Ok(CheckOutcome::Pass)
}

/// Functions on Z/2 with pointwise product and coproduct dual to the group law,
/// together with the sign R-matrix `sum (-1)^{gh} e_g (x) e_h`, the unique
/// nontrivial bicharacter of Z/2.
pub fn o_z2(ring: &Ring) -> (FinBialgebra, StateVector) {
    let b = |i: u32| BasisKey::B(i);
    let t = |i: u32, j: u32| BasisKey::T(vec![b(i), b(j)]);
    let one = ring.one();
    let mut unit = StateVector::zero();
    unit.insert_add(b(0), one.clone());
    unit.insert_add(b(1), one.clone());
    let mut product = vec![vec![StateVector::zero(); 2], vec![StateVector::zero(); 2]];
    product[0][0] = StateVector::from_key(ring, b(0));
    product[1][1] = StateVector::from_key(ring, b(1));
    let mut d0 = StateVector::zero();
    d0.insert_add(t(0, 0), one.clone());
    d0.insert_add(t(1, 1), one.clone());
    let mut d1 = StateVector::zero();
    d1.insert_add(t(0, 1), one.clone());
    d1.insert_add(t(1, 0), one.clone());
    let counit = vec![ring.one(), ring.zero()];
    let a = FinBialgebra::new(ring.clone(), 2, unit, product, vec![d0, d1], counit).unwrap();
    let mut r = StateVector::zero();
    r.insert_add(t(0, 0), one.clone());
    r.insert_add(t(0, 1), one.clone());
    r.insert_add(t(1, 0), one.clone());
    r.insert_add(t(1, 1), one.neg());
    (a, r)
}

/// Group-algebra convolution product on the O(Z/2) basis: `e_g * e_h = e_{g+h}`.
pub fn o_z2_convolution(ring: &Ring) -> LinearMap {
    let ring = ring.clone();
    LinearMap::new(move |k| {
        let slots = k.slots();
        assert_eq!(slots.len(), 2, "convolution acts on pairs");
        let g = key_index(&slots[0]) as u32;
        let h = key_index(&slots[1]) as u32;
        StateVector::from_key(&ring, BasisKey::B((g + h) % 2))
    })
}

/// `k[x]/(x^2)` with primitive x and R-matrix `1(x)1 + t x(x)x` over `Q[t]`.
pub fn kx_x2(ring: &Ring) -> Result<(FinBialgebra, StateVector), VqgError> {
    let t = ring.param("t")?;
    let b = |i: u32| BasisKey::B(i);
    let tk = |i: u32, j: u32| BasisKey::T(vec![b(i), b(j)]);
    let unit = StateVector::from_key(ring, b(0));
    let mut product = vec![vec![StateVector::zero(); 2], vec![StateVector::zero(); 2]];
    product[0][0] = StateVector::from_key(ring, b(0));
    product[0][1] = StateVector::from_key(ring, b(1));
    product[1][0] = StateVector::from_key(ring, b(1));
    // x^2 = 0 stays the zero vector.
    let mut d0 = StateVector::zero();
    d0.insert_add(tk(0, 0), ring.one());
    let mut d1 = StateVector::zero();
    d1.insert_add(tk(1, 0), ring.one());
    d1.insert_add(tk(0, 1), ring.one());
    let counit = vec![ring.one(), ring.zero()];
    let a = FinBialgebra::new(ring.clone(), 2, unit, product, vec![d0, d1], counit)?;
    let mut r = StateVector::zero();
    r.insert_add(tk(0, 0), ring.one());
    r.insert_add(tk(1, 1), t);
    Ok((a, r))
}

/// `k[x,y]/(x^2, y^2, xy)` with primitive generators.
pub fn kxy_nilpotent(ring: &Ring) -> FinBialgebra {
    let b = |i: u32| BasisKey::B(i);
    let tk = |i: u32, j: u32| BasisKey::T(vec![b(i), b(j)]);
    let unit = StateVector::from_key(ring, b(0));
    let mut product = vec![vec![StateVector::zero(); 3]; 3];
    for i in 0..3 {
        product[0][i] = StateVector::from_key(ring, b(i as u32));
        product[i][0] = StateVector::from_key(ring, b(i as u32));
    }
    let mut d0 = StateVector::zero();
    d0.insert_add(tk(0, 0), ring.one());
    let mut cops = vec![d0];
    for i in 1..3u32 {
        let mut d = StateVector::zero();
        d.insert_add(tk(i, 0), ring.one());
        d.insert_add(tk(0, i), ring.one());
        cops.push(d);
    }
    let counit = vec![ring.one(), ring.zero(), ring.zero()];
    FinBialgebra::new(ring.clone(), 3, unit, product, cops, counit).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn o_z2_is_a_bialgebra_with_rmatrix() {
        let ring = Ring::rationals();
        let (a, r) = o_z2(&ring);
        assert!(check_bialgebra(&a).is_pass());
        assert!(check_rmatrix(&a, &r).is_pass());
        assert!(check_yang_baxter(&a, &r).is_pass());
        let flags = check_symmetric_rmatrix(&a, &r);
        assert!(flags.naive_symmetric);
        assert!(flags.unitary);
    }

    #[test]
    fn trivial_rmatrix_always_passes() {
        let ring = Ring::rationals();
        let (a, _) = o_z2(&ring);
        let triv = a.unit_pair();
        assert!(check_rmatrix(&a, &triv).is_pass());
        assert!(check_yang_baxter(&a, &triv).is_pass());
        let ring_t = Ring::with_params(&["t"]).unwrap();
        let (ax, _) = kx_x2(&ring_t).unwrap();
        assert!(check_rmatrix(&ax, &ax.unit_pair()).is_pass());
    }

    #[test]
    fn kx_x2_rmatrix_over_parameter_ring() {
        let ring = Ring::with_params(&["t"]).unwrap();
        let (a, r) = kx_x2(&ring).unwrap();
        // Over a field of characteristic zero a primitive x cannot coexist with
        // x^2 = 0: Delta(x^2) = 0 but Delta(x)^2 = 2 x(x)x. The compatibility
        // defect is frozen here; none of the R-matrix conditions depend on it.
        let out = check_bialgebra(&a);
        let w = out.witness().expect("char-0 obstruction");
        assert_eq!(w.check, "compatibility");
        assert_eq!(w.states, vec!["b[1]".to_string(), "b[1]".to_string()]);
        assert_eq!(w.lhs, "0");
        assert_eq!(w.rhs, "2*b[1](x)b[1]");
        assert!(check_rmatrix(&a, &r).is_pass());
        assert!(check_yang_baxter(&a, &r).is_pass());
        let flags = check_symmetric_rmatrix(&a, &r);
        assert!(flags.naive_symmetric);
        assert!(!flags.unitary);
    }

    #[test]
    fn asymmetric_tensor_on_kxy_quotient() {
        let ring = Ring::with_params(&["t"]).unwrap();
        let a = kxy_nilpotent(&ring);
        // Same characteristic-zero compatibility defect as k[x]/(x^2).
        let out = check_bialgebra(&a);
        let w = out.witness().expect("char-0 obstruction");
        assert_eq!(w.check, "compatibility");
        let mut r = StateVector::zero();
        r.insert_add(BasisKey::T(vec![BasisKey::B(0), BasisKey::B(0)]), ring.one());
        r.insert_add(
            BasisKey::T(vec![BasisKey::B(1), BasisKey::B(2)]),
            ring.param("t").unwrap(),
        );
        assert!(check_rmatrix(&a, &r).is_pass());
        let flags = check_symmetric_rmatrix(&a, &r);
        assert!(!flags.naive_symmetric);
        assert!(!flags.unitary);
    }

    #[test]
    fn corrupted_coproduct_yields_compatibility_witness() {
        let ring = Ring::rationals();
        let (a, _) = o_z2(&ring);
        // A stray e_1 (x) e_1 entry in the Delta(e_1) column keeps the counit
        // rows and coassociativity intact but breaks multiplicativity.
        let mut bad_d1 = a.coproduct[1].clone();
        bad_d1.insert_add(
            BasisKey::T(vec![BasisKey::B(1), BasisKey::B(1)]),
            ring.one(),
        );
        let bad = FinBialgebra::new(
            ring.clone(),
            2,
            a.unit.clone(),
            a.product.clone(),
            vec![a.coproduct[0].clone(), bad_d1],
            a.counit.clone(),
        )
        .unwrap();
        let out = check_bialgebra(&bad);
        let w = out.witness().expect("must fail");
        assert_eq!(w.check, "compatibility");
        assert_eq!(w.states, vec!["b[0]".to_string(), "b[1]".to_string()]);
    }

    #[test]
    fn dropped_rmatrix_term_fails_counit_condition() {
        let ring = Ring::rationals();
        let (a, r) = o_z2(&ring);
        let mut bad = StateVector::zero();
        for (k, c) in r.iter() {
            if k != &BasisKey::T(vec![BasisKey::B(0), BasisKey::B(1)]) {
                bad.insert_add(k.clone(), c.clone());
            }
        }
        let out = check_rmatrix(&a, &bad);
        let w = out.witness().expect("must fail");
        assert_eq!(w.check, "rmatrix-counit");
    }

    #[test]
    fn yang_baxter_expansion_matches_symbolic_oracle() {
        // Both YBE sides for 1(x)1 + t x(x)x equal
        // 1 + t(x(x)x(x)1 + x(x)1(x)x + 1(x)x(x)x).
        let ring = Ring::with_params(&["t"]).unwrap();
        let (a, r) = kx_x2(&ring).unwrap();
        let t = ring.param("t").unwrap();
        let r12 = a.embed(&r, 3, 0, 1);
        let r13 = a.embed(&r, 3, 0, 2);
        let r23 = a.embed(&r, 3, 1, 2);
        let l = a.mul(&a.mul(&r12, &r13), &r23);
        let b = |i: u32| BasisKey::B(i);
        let mut oracle = StateVector::zero();
        oracle.insert_add(BasisKey::T(vec![b(0), b(0), b(0)]), ring.one());
        oracle.insert_add(BasisKey::T(vec![b(1), b(1), b(0)]), t.clone());
        oracle.insert_add(BasisKey::T(vec![b(1), b(0), b(1)]), t.clone());
        oracle.insert_add(BasisKey::T(vec![b(0), b(1), b(1)]), t.clone());
        assert_eq!(l, oracle);
        assert!(check_yang_baxter(&a, &r).is_pass());
    }

    #[test]
    fn borcherds_twist_columns_and_certificates() {
        let ring = Ring::rationals();
        let (a, r) = o_z2(&ring);
        let (twisted, cert) = borcherds_twist(&a, &r);
        assert!(cert.is_pass());
        let d0 = twisted.apply_key(&BasisKey::B(0));
        let mut expect = StateVector::zero();
        expect.insert_add(BasisKey::T(vec![BasisKey::B(0), BasisKey::B(0)]), ring.one());
        expect.insert_add(
            BasisKey::T(vec![BasisKey::B(1), BasisKey::B(1)]),
            ring.int(-1),
        );
        assert_eq!(d0, expect);

        let ring_t = Ring::with_params(&["t"]).unwrap();
        let (ax, rx) = kx_x2(&ring_t).unwrap();
        let (twx, certx) = borcherds_twist(&ax, &rx);
        assert!(certx.is_pass());
        // Delta_R(1) picks up the R-matrix itself since x^2 = 0.
        assert_eq!(twx.apply_key(&BasisKey::B(0)), rx);
        // Trivial R leaves the coproduct alone.
        let (twt, certt) = borcherds_twist(&a, &a.unit_pair());
        assert!(certt.is_pass());
        assert_eq!(twt.apply_key(&BasisKey::B(1)), *a.delta_key(1));
    }

    #[test]
    fn twist_compatibility_examples() {
        let ring = Ring::rationals();
        let (a, r) = o_z2(&ring);
        assert!(check_twist_compatible(&a, &r, &a.unit_pair()).is_pass());
        assert!(check_twist_compatible(&a, &r, &r).is_pass());
        let ring_st = Ring::with_params(&["t", "s"]).unwrap();
        let (ax, rx) = kx_x2(&ring_st).unwrap();
        let s_param = ring_st.param("s").unwrap();
        let mut sx = StateVector::zero();
        sx.insert_add(BasisKey::T(vec![BasisKey::B(0), BasisKey::B(0)]), ring_st.one());
        sx.insert_add(BasisKey::T(vec![BasisKey::B(1), BasisKey::B(1)]), s_param.clone());
        assert!(check_twist_compatible(&ax, &rx, &sx).is_pass());
        // R*S = 1(x)1 + (s+t) x(x)x.
        let prod = ax.mul(&rx, &sx);
        let expect_coeff = ring_st.param("t").unwrap().add(&s_param);
        assert_eq!(
            prod.coeff(&BasisKey::T(vec![BasisKey::B(1), BasisKey::B(1)])),
            Some(&expect_coeff)
        );
    }

    #[test]
    fn rmatrix_inverse_by_linear_algebra() {
        let ring = Ring::rationals();
        let (a, r) = o_z2(&ring);
        let inv = invert_rmatrix(&a, &r).unwrap();
        assert_eq!(a.mul(&inv, &r), a.unit_pair());
        // Unitary R: the inverse is the swap (here R is symmetric, so R itself).
        assert_eq!(inv, swap(&r));
        // Inverse-free almost cocommutativity agrees with the conjugation form.
        for bi in a.basis() {
            let d = a.delta_key(key_index(&bi));
            let conj = a.mul(&a.mul(&r, d), &inv);
            assert_eq!(conj, swap(d));
        }
    }

    #[test]
    fn borcherds_product_trivial_r_reduces_to_compatibility() {
        let ring = Ring::rationals();
        // On the one-dimensional bialgebra m2 = m is A-linear and the trivial-R
        // diagram is exactly the compatibility law.
        let unit = StateVector::from_key(&ring, BasisKey::B(0));
        let mut d = StateVector::zero();
        d.insert_add(BasisKey::T(vec![BasisKey::B(0), BasisKey::B(0)]), ring.one());
        let a = FinBialgebra::new(
            ring.clone(),
            1,
            unit.clone(),
            vec![vec![unit.clone()]],
            vec![d],
            vec![ring.one()],
        )
        .unwrap();
        assert!(check_bialgebra(&a).is_pass());
        let m = {
            let a2 = a.clone();
            LinearMap::new(move |k| {
                let s = k.slots();
                a2.mul_key(key_index(&s[0]), key_index(&s[1])).clone()
            })
        };
        let out = check_borcherds_product(&a, &a.unit_pair(), &m).unwrap();
        assert!(out.is_pass());

        // The pointwise product on O(Z/2) is associative and unital but not
        // A-linear over the group-law coproduct; the first offending triple
        // is frozen.
        let (oz, _) = o_z2(&ring);
        let m_oz = {
            let a2 = oz.clone();
            LinearMap::new(move |k| {
                let s = k.slots();
                a2.mul_key(key_index(&s[0]), key_index(&s[1])).clone()
            })
        };
        let out = check_borcherds_product(&oz, &oz.unit_pair(), &m_oz).unwrap();
        let w = out.witness().expect("pointwise m2 is not A-linear here");
        assert_eq!(w.check, "borcherds-linearity");
        assert_eq!(
            w.states,
            vec!["b[0]".to_string(), "b[1]".to_string(), "b[1]".to_string()]
        );
    }

    #[test]
    fn borcherds_product_convolution_verdict_is_deterministic() {
        // The sign-R excess diagram for the convolution product fails by a factor
        // of two already on (e_0, e_0); the verdict and witness are frozen here.
        let ring = Ring::rationals();
        let (a, r) = o_z2(&ring);
        let m2 = o_z2_convolution(&ring);
        let out = check_borcherds_product(&a, &r, &m2).unwrap();
        let w = out.witness().expect("diagram fails");
        assert_eq!(w.check, "excess-intersection");
        assert_eq!(w.states, vec!["b[0]".to_string(), "b[0]".to_string()]);
        assert_eq!(w.lhs, "1*b[0](x)b[0] + 1*b[1](x)b[1]");
        assert_eq!(w.rhs, "2*b[0](x)b[0] + 2*b[1](x)b[1]");
    }

    #[test]
    fn zero_m2_fails_at_unit_condition() {
        let ring = Ring::rationals();
        let (a, r) = o_z2(&ring);
        let zero = LinearMap::new(|_| StateVector::zero());
        let out = check_borcherds_product(&a, &r, &zero).unwrap();
        let w = out.witness().expect("must fail");
        assert_eq!(w.check, "borcherds-unit");
    }
}
