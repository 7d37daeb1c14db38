//! Sparse real-coefficient polynomial observables and polynomial vector
//! fields over a truncated basis.
//!
//! Storage is symmetrized: one coefficient per canonical multiset of mode
//! ids, equal to the sum over all ordered representatives. Evaluation and
//! differentiation therefore carry multiplicity factors, which are
//! centralized in [`MultiIndex::distinct_entries`] / [`MultiIndex::without_one`]
//! so that every consumer shares the same bookkeeping.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, FrequencyMap, ModeIndex, StateVector};
use crate::error::{CoreError, Result};

/// Canonical multiset of mode ids: sorted ascending, repetitions explicit.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    /// Canonicalize a tuple of ids (any order) into the multiset key.
    pub fn from_ids(mut ids: Vec<u32>) -> Result<MultiIndex> {
        if ids.is_empty() {
            return Err(CoreError::EmptyMultiIndex);
        }
        ids.sort_unstable();
        Ok(MultiIndex(ids))
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    /// Distinct entries with multiplicities, in canonical order.
    pub fn distinct_entries(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        DistinctIter {
            ids: &self.0,
            pos: 0,
        }
    }

    /// The multiset with one occurrence of `id` removed. Panics if absent.
    pub fn without_one(&self, id: u32) -> MultiIndex {
        let pos = self
            .0
            .iter()
            .position(|&x| x == id)
            .expect("id not present in multi-index");
        let mut v = self.0.clone();
        v.remove(pos);
        MultiIndex(v)
    }

    /// Canonical union of two multisets (sorted merge).
    pub fn merged_with(&self, other: &MultiIndex) -> MultiIndex {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                v.push(a[i]);
                i += 1;
            } else {
                v.push(b[j]);
                j += 1;
            }
        }
        v.extend_from_slice(&a[i..]);
        v.extend_from_slice(&b[j..]);
        MultiIndex(v)
    }

    /// Entrywise conjugation followed by re-canonicalization.
    pub fn conjugate(&self, basis: &Basis) -> MultiIndex {
        let mut v: Vec<u32> = self.0.iter().map(|&id| basis.conj_id(id)).collect();
        v.sort_unstable();
        MultiIndex(v)
    }

    pub fn is_self_conjugate(&self, basis: &Basis) -> bool {
        self.conjugate(basis) == *self
    }

    /// Signed frequency sum over the entries.
    pub fn omega_sum(&self, omega: &FrequencyMap) -> f64 {
        self.0.iter().map(|&id| omega.omega_id(id)).sum()
    }

    /// The combinatorial triple controlling coefficient classes.
    pub fn mu_gap_beta(&self, basis: &Basis) -> MuGapBeta {
        let mut sq: Vec<u64> = self.0.iter().map(|&id| basis.weight_sq_of(id)).collect();
        sq.sort_unstable_by(|a, b| b.cmp(a));
        let w1 = (sq[0] as f64).sqrt();
        let w2 = if sq.len() >= 2 {
            (sq[1] as f64).sqrt()
        } else {
            f64::NAN
        };
        let mu = if sq.len() >= 3 {
            (sq[2] as f64).sqrt()
        } else {
            1.0
        };
        let (gap, beta) = if sq.len() == 1 {
            (0.0, w1)
        } else {
            (w1 - w2, w1 * w2)
        };
        MuGapBeta { mu, gap, beta }
    }

    /// Number of ordered tuples representing this multiset
    /// (`degree! / prod(mult_i!)`).
    pub fn ordered_count(&self) -> f64 {
        let mut count = factorial(self.degree());
        for (_, m) in self.distinct_entries() {
            count /= factorial(m);
        }
        count
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

struct DistinctIter<'a> {
    ids: &'a [u32],
    pos: usize,
}

impl Iterator for DistinctIter<'_> {
    type Item = (u32, usize);
    fn next(&mut self) -> Option<(u32, usize)> {
        if self.pos >= self.ids.len() {
            return None;
        }
        let id = self.ids[self.pos];
        let start = self.pos;
        while self.pos < self.ids.len() && self.ids[self.pos] == id {
            self.pos += 1;
        }
        Some((id, self.pos - start))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `mu`: third-largest weight (1 when fewer than three entries),
/// `gap`: difference of the two largest weights (0 for a single entry),
/// `beta`: product of the two largest weights (the weight itself for one).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuGapBeta {
    pub mu: f64,
    pub gap: f64,
    pub beta: f64,
}

/// Canonicalize a tuple of modes into a multiset key over `basis`.
pub fn canonical_multi_index(basis: &Basis, tuple: &[ModeIndex]) -> Result<MultiIndex> {
    let ids = tuple
        .iter()
        .map(|m| {
            basis
                .id_of(m)
                .ok_or(CoreError::IndexOutOfRange(u32::MAX, basis.dim()))
        })
        .collect::<Result<Vec<u32>>>()?;
    MultiIndex::from_ids(ids)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Neither,
    Unknown,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::Neither => "neither",
            Parity::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Homogeneous real-coefficient polynomial observable.
#[derive(Clone, Debug)]
pub struct ScalarPolynomial {
    degree: usize,
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
    parity: Parity,
}

impl ScalarPolynomial {
    pub fn zero(degree: usize, dim: usize) -> ScalarPolynomial {
        ScalarPolynomial {
            degree,
            dim,
            terms: BTreeMap::new(),
            parity: Parity::Unknown,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, &v)| (k, v))
    }

    pub fn coefficient(&self, key: &MultiIndex) -> f64 {
        self.terms.get(key).copied().unwrap_or(0.0)
    }

    pub fn set_parity_tag(&mut self, parity: Parity) {
        self.parity = parity;
    }

    pub fn parity_tag(&self) -> Parity {
        self.parity
    }

    /// Accumulate `coef` on the multiset; rejects non-finite coefficients and
    /// degree mismatches, drops terms that cancel to zero.
    pub fn add_term(&mut self, key: MultiIndex, coef: f64) -> Result<()> {
        if key.degree() != self.degree {
            return Err(CoreError::DegreeMismatch {
                declared: self.degree,
                found: key.degree(),
            });
        }
        if !coef.is_finite() {
            return Err(CoreError::NonRealCoefficient {
                context: format!("{key}"),
            });
        }
        if let Some(&max) = key.ids().iter().max() {
            if max as usize >= self.dim {
                return Err(CoreError::IndexOutOfRange(max, self.dim));
            }
        }
        let slot = self.terms.entry(key.clone()).or_insert(0.0);
        *slot += coef;
        if *slot == 0.0 {
            self.terms.remove(&key);
        }
        Ok(())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> ScalarPolynomial {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= factor;
        }
        out
    }

    pub fn add_assign(&mut self, other: &ScalarPolynomial) -> Result<()> {
        if other.degree != self.degree && !other.is_empty() {
            return Err(CoreError::DegreeMismatch {
                declared: self.degree,
                found: other.degree,
            });
        }
        for (k, v) in other.terms() {
            self.add_term(k.clone(), v)?;
        }
        Ok(())
    }

    /// Evaluate at a state: `sum_m b_m prod z^mult`.
    pub fn eval(&self, z: &StateVector) -> Result<Complex64> {
        if z.dim() < self.dim {
            return Err(CoreError::DomainMismatch(self.dim, z.dim()));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (key, coef) in self.terms() {
            let mut prod = Complex64::new(coef, 0.0);
            for &id in key.ids() {
                prod *= z.amp(id);
            }
            acc += prod;
        }
        Ok(acc)
    }

    /// Holomorphic gradient at `z`: entry `l` is `dQ/dz_l` with the
    /// multiplicity factors of the symmetrized storage.
    pub fn gradient(&self, z: &StateVector) -> Result<Vec<Complex64>> {
        if z.dim() < self.dim {
            return Err(CoreError::DomainMismatch(self.dim, z.dim()));
        }
        let mut grad = vec![Complex64::new(0.0, 0.0); z.dim()];
        for (key, coef) in self.terms() {
            for (id, mult) in key.distinct_entries() {
                let mut prod = Complex64::new(coef * mult as f64, 0.0);
                let mut skipped = false;
                for &other in key.ids() {
                    if !skipped && other == id {
                        skipped = true;
                        continue;
                    }
                    prod *= z.amp(other);
                }
                grad[id as usize] += prod;
            }
        }
        Ok(grad)
    }

    /// Coefficient-level parity against conjugation of every key.
    ///
    /// Missing conjugate keys count as zero; tolerance is relative to the
    /// largest stored coefficient. The zero polynomial classifies even.
    pub fn classify_parity(&self, basis: &Basis, tol: f64) -> Parity {
        let scale = self.max_abs_coeff();
        if scale == 0.0 {
            return Parity::Even;
        }
        let mut even = true;
        let mut odd = true;
        for (key, coef) in self.terms() {
            let cc = self.coefficient(&key.conjugate(basis));
            if (cc - coef).abs() > tol * scale {
                even = false;
            }
            if (cc + coef).abs() > tol * scale {
                odd = false;
            }
            if !even && !odd {
                return Parity::Neither;
            }
        }
        if even {
            Parity::Even
        } else if odd {
            Parity::Odd
        } else {
            Parity::Neither
        }
    }

    /// Smallest `C` with `|b| <= C mu^gamma beta^s / (1+gap)^2` over the
    /// stored support; 0 for the zero polynomial.
    pub fn gamma_class_constant(&self, basis: &Basis, gamma: f64, s: f64) -> f64 {
        assert!(gamma >= 0.0 && s >= 0.0);
        let mut c = 0.0f64;
        for (key, coef) in self.terms() {
            let MuGapBeta { mu, gap, beta } = key.mu_gap_beta(basis);
            c = c.max(coef.abs() * (1.0 + gap).powi(2) / (mu.powf(gamma) * beta.powf(s)));
        }
        c
    }

    /// `sum over support of mu^gamma beta^s / ((1+gap)^2 prod w_i^s)`: the
    /// finite-truncation envelope constant with
    /// `|Q(z)| <= gamma_class_constant * envelope * ||z||_s^k`.
    pub fn gamma_envelope_sum(&self, basis: &Basis, gamma: f64, s: f64) -> f64 {
        let mut acc = 0.0;
        for (key, _) in self.terms() {
            let MuGapBeta { mu, gap, beta } = key.mu_gap_beta(basis);
            let mut denom = (1.0 + gap).powi(2);
            for &id in key.ids() {
                denom *= basis.weight_of(id).powf(s);
            }
            acc += mu.powf(gamma) * beta.powf(s) / denom;
        }
        acc
    }
}

/// One reported field-symmetry violation.
#[derive(Clone, Debug)]
pub struct SymmetryViolation {
    pub out: u32,
    pub key: MultiIndex,
    pub coef: f64,
    pub conj_coef: f64,
}

/// Result of checking the coefficient-level reality/reversibility pair.
#[derive(Clone, Debug, Default)]
pub struct FieldSymmetryReport {
    /// Pairs violating `a(conj j, conj l) = -a(j, l)`.
    pub antisymmetry: Vec<SymmetryViolation>,
    /// Non-finite stored coefficients (realness itself is enforced by the
    /// storage type).
    pub nonfinite: Vec<(u32, MultiIndex)>,
}

impl FieldSymmetryReport {
    pub fn is_empty(&self) -> bool {
        self.antisymmetry.is_empty() && self.nonfinite.is_empty()
    }
}

/// Homogeneous polynomial vector field `F_j(z) = sum_l a_{jl} z_l`,
/// symmetrized over the monomial multiset like [`ScalarPolynomial`].
#[derive(Clone, Debug)]
pub struct PolyVectorField {
    degree: usize,
    dim: usize,
    rows: Vec<BTreeMap<MultiIndex, f64>>,
}

impl PolyVectorField {
    pub fn zero(degree: usize, dim: usize) -> PolyVectorField {
        PolyVectorField {
            degree,
            dim,
            rows: vec![BTreeMap::new(); dim],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.is_empty())
    }

    pub fn row(&self, out: u32) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.rows[out as usize].iter().map(|(k, &v)| (k, v))
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &MultiIndex, f64)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(out, row)| row.iter().map(move |(k, &v)| (out as u32, k, v)))
    }

    pub fn coefficient(&self, out: u32, key: &MultiIndex) -> f64 {
        self.rows[out as usize].get(key).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, out: u32, key: MultiIndex, coef: f64) -> Result<()> {
        if key.degree() != self.degree {
            return Err(CoreError::DegreeMismatch {
                declared: self.degree,
                found: key.degree(),
            });
        }
        if out as usize >= self.dim {
            return Err(CoreError::IndexOutOfRange(out, self.dim));
        }
        if !coef.is_finite() {
            return Err(CoreError::NonRealCoefficient {
                context: format!("F[{out}] {key}"),
            });
        }
        if let Some(&max) = key.ids().iter().max() {
            if max as usize >= self.dim {
                return Err(CoreError::IndexOutOfRange(max, self.dim));
            }
        }
        let row = &mut self.rows[out as usize];
        let slot = row.entry(key.clone()).or_insert(0.0);
        *slot += coef;
        if *slot == 0.0 {
            row.remove(&key);
        }
        Ok(())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.values())
            .fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Evaluate all components at once into a dense vector.
    pub fn eval(&self, z: &StateVector) -> Result<Vec<Complex64>> {
        if z.dim() != self.dim {
            return Err(CoreError::DomainMismatch(self.dim, z.dim()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for (j, row) in self.rows.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (key, coef) in row {
                let mut prod = Complex64::new(*coef, 0.0);
                for &id in key.ids() {
                    prod *= z.amp(id);
                }
                acc += prod;
            }
            out[j] = acc;
        }
        Ok(out)
    }

    /// Check `a(conj j, conj l) = -a(j, l)` (the coefficient form of the
    /// reality and reversibility hypotheses together, given real storage).
    pub fn check_field_symmetry(&self, basis: &Basis, tol: f64) -> FieldSymmetryReport {
        let mut report = FieldSymmetryReport::default();
        let scale = self.max_abs_coeff().max(1e-300);
        for (out, key, coef) in self.terms() {
            if !coef.is_finite() {
                report.nonfinite.push((out, key.clone()));
                continue;
            }
            let conj_out = basis.conj_id(out);
            let conj_key = key.conjugate(basis);
            let cc = self.coefficient(conj_out, &conj_key);
            if (cc + coef).abs() > tol * scale {
                report.antisymmetry.push(SymmetryViolation {
                    out,
                    key: key.clone(),
                    coef,
                    conj_coef: cc,
                });
            }
        }
        report
    }

    /// Smallest `C` with `|a| <= C mu^{M+nu} / (mu + gap^M)` over the stored
    /// support (denominator exactly as printed). With `alternate = true` the
    /// denominator is `(mu + gap)^M` instead.
    pub fn tclass_constant(&self, basis: &Basis, m_exp: f64, nu: f64, alternate: bool) -> f64 {
        assert!(m_exp >= 0.0 && nu >= 0.0);
        let mut c = 0.0f64;
        for (out, key, coef) in self.terms() {
            let combined = key.merged_with(&MultiIndex(vec![out]));
            let MuGapBeta { mu, gap, .. } = combined.mu_gap_beta(basis);
            let denom = if alternate {
                (mu + gap).powf(m_exp)
            } else {
                mu + gap.powf(m_exp)
            };
            c = c.max(coef.abs() * denom / mu.powf(m_exp + nu));
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Basis;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn b1k2() -> Arc<Basis> {
        Basis::shared(1, 2, 1)
    }

    fn id(b: &Basis, a: i32, delta: i8) -> u32 {
        b.id_of(&ModeIndex::new(vec![a], delta, 0)).unwrap()
    }

    #[test]
    fn canonical_key_is_permutation_invariant() {
        let b = b1k2();
        let two = ModeIndex::new(vec![2], 1, 0);
        let onem = ModeIndex::new(vec![1], -1, 0);
        let k1 = canonical_multi_index(&b, &[two.clone(), onem.clone(), two.clone()]).unwrap();
        let k2 = canonical_multi_index(&b, &[onem, two.clone(), two]).unwrap();
        assert_eq!(k1, k2);
        assert_eq!(k1.degree(), 3);
    }

    #[test]
    fn canonicalization_commutes_with_conjugation() {
        let b = b1k2();
        let tuple = vec![
            ModeIndex::new(vec![2], 1, 0),
            ModeIndex::new(vec![-1], -1, 0),
            ModeIndex::new(vec![2], -1, 0),
        ];
        let conj_tuple: Vec<_> = tuple.iter().map(|m| m.conjugate()).collect();
        let a = canonical_multi_index(&b, &conj_tuple).unwrap();
        let c = canonical_multi_index(&b, &tuple).unwrap().conjugate(&b);
        assert_eq!(a, c);
    }

    #[test]
    fn mu_gap_beta_examples() {
        // weights (5,3,2,1)
        let b = Basis::shared(1, 5, 1);
        let key = MultiIndex::from_ids(vec![
            id(&b, 5, 1),
            id(&b, 3, 1),
            id(&b, 2, -1),
            id(&b, 1, 1),
        ])
        .unwrap();
        let v = key.mu_gap_beta(&b);
        assert_eq!((v.mu, v.gap, v.beta), (2.0, 2.0, 15.0));

        let key = MultiIndex::from_ids(vec![id(&b, 4, 1), id(&b, -4, -1)]).unwrap();
        let v = key.mu_gap_beta(&b);
        assert_eq!((v.mu, v.gap, v.beta), (1.0, 0.0, 16.0));

        let key = MultiIndex::from_ids(vec![id(&b, 5, 1); 3]).unwrap();
        let v = key.mu_gap_beta(&b);
        assert_eq!((v.mu, v.gap, v.beta), (5.0, 0.0, 25.0));

        let key = MultiIndex::from_ids(vec![id(&b, 3, -1)]).unwrap();
        let v = key.mu_gap_beta(&b);
        assert_eq!((v.mu, v.gap, v.beta), (1.0, 0.0, 3.0));
    }

    #[test]
    fn mu_gap_beta_invariant_under_conjugation() {
        let b = Basis::shared(1, 4, 1);
        let key = MultiIndex::from_ids(vec![id(&b, 4, 1), id(&b, 2, -1), id(&b, -3, 1)]).unwrap();
        assert_eq!(key.mu_gap_beta(&b), key.conjugate(&b).mu_gap_beta(&b));
    }

    #[test]
    fn omega_sum_examples() {
        let b = b1k2();
        let om = FrequencyMap::from_positive_half(b.clone(), |m| m.eigen_sq() as f64);
        let key = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1), id(&b, 2, -1)]).unwrap();
        assert_eq!(key.omega_sum(&om), -2.0);
        let pair = MultiIndex::from_ids(vec![id(&b, 2, 1), id(&b, 2, -1)]).unwrap();
        assert_eq!(pair.omega_sum(&om), 0.0);
        // antisymmetry under conjugation
        assert_eq!(key.conjugate(&b).omega_sum(&om), 2.0);

        // custom frequencies: omega_1 = 1.3, omega_2 = 4.7
        let om2 = FrequencyMap::from_positive_half(b.clone(), |m| match m.a[0].abs() {
            1 => 1.3,
            2 => 4.7,
            _ => 0.0,
        });
        let key = MultiIndex::from_ids(vec![id(&b, 2, 1), id(&b, 1, -1), id(&b, 1, -1)]).unwrap();
        assert!((key.omega_sum(&om2) - 2.1).abs() < 1e-12);
    }

    #[test]
    fn eval_examples() {
        let b = b1k2();
        let mut q = ScalarPolynomial::zero(2, b.dim());
        let action = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, -1)]).unwrap();
        q.add_term(action, 1.0).unwrap();
        let mut z = StateVector::zero(b.clone());
        z.set(id(&b, 1, 1), Complex64::new(2.0, 0.0));
        z.set(id(&b, 1, -1), Complex64::new(3.0, 0.0));
        assert_eq!(q.eval(&z).unwrap(), Complex64::new(6.0, 0.0));

        assert_eq!(
            q.eval(&StateVector::zero(b.clone())).unwrap(),
            Complex64::new(0.0, 0.0)
        );

        let mut q2 = ScalarPolynomial::zero(2, b.dim());
        let sq = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1)]).unwrap();
        q2.add_term(sq, 0.5).unwrap();
        let mut z2 = StateVector::zero(b.clone());
        z2.set(id(&b, 1, 1), Complex64::new(1.0, 1.0));
        assert_eq!(q2.eval(&z2).unwrap(), Complex64::new(0.0, 1.0));
    }

    #[test]
    fn gradient_examples() {
        let b = b1k2();
        let mut q = ScalarPolynomial::zero(2, b.dim());
        q.add_term(
            MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, -1)]).unwrap(),
            1.0,
        )
        .unwrap();
        let mut z = StateVector::zero(b.clone());
        z.set(id(&b, 1, -1), Complex64::new(7.0, 0.0));
        let g = q.gradient(&z).unwrap();
        assert_eq!(g[id(&b, 1, 1) as usize], Complex64::new(7.0, 0.0));

        // Q = 0.5 z^2: multiplicity 2 restores the plain derivative.
        let mut q2 = ScalarPolynomial::zero(2, b.dim());
        q2.add_term(
            MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1)]).unwrap(),
            0.5,
        )
        .unwrap();
        let mut z2 = StateVector::zero(b.clone());
        z2.set(id(&b, 1, 1), Complex64::new(3.0, 0.0));
        let g2 = q2.gradient(&z2).unwrap();
        assert_eq!(g2[id(&b, 1, 1) as usize], Complex64::new(3.0, 0.0));
    }

    #[test]
    fn parity_examples() {
        let b = b1k2();
        let mut action = ScalarPolynomial::zero(2, b.dim());
        action
            .add_term(
                MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, -1)]).unwrap(),
                1.0,
            )
            .unwrap();
        assert_eq!(action.classify_parity(&b, 1e-12), Parity::Even);

        let m = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1), id(&b, 2, -1)]).unwrap();
        let mut odd = ScalarPolynomial::zero(3, b.dim());
        odd.add_term(m.clone(), 1.0).unwrap();
        odd.add_term(m.conjugate(&b), -1.0).unwrap();
        assert_eq!(odd.classify_parity(&b, 1e-12), Parity::Odd);

        let mut lone = ScalarPolynomial::zero(3, b.dim());
        lone.add_term(m, 1.0).unwrap();
        assert_eq!(lone.classify_parity(&b, 1e-12), Parity::Neither);
    }

    #[test]
    fn gamma_class_constant_examples() {
        let b = Basis::shared(1, 3, 1);
        let mut q = ScalarPolynomial::zero(3, b.dim());
        q.add_term(
            MultiIndex::from_ids(vec![id(&b, 3, 1), id(&b, 2, 1), id(&b, 1, -1)]).unwrap(),
            1.0,
        )
        .unwrap();
        // mu=1, gap=1, beta=6 -> C = 4/6
        assert!((q.gamma_class_constant(&b, 0.0, 1.0) - 4.0 / 6.0).abs() < 1e-15);
        // absolute homogeneity in the coefficients
        assert!(
            (q.scaled(10.0).gamma_class_constant(&b, 0.0, 1.0)
                - 10.0 * q.gamma_class_constant(&b, 0.0, 1.0))
            .abs()
                < 1e-13
        );
        assert_eq!(
            ScalarPolynomial::zero(3, b.dim()).gamma_class_constant(&b, 0.0, 1.0),
            0.0
        );
    }

    #[test]
    fn tclass_constant_examples() {
        let b = b1k2();
        let mut f = PolyVectorField::zero(2, b.dim());
        // combined weights (2,1,1): out weight 2, monomial weights (1,1)
        f.add_term(
            id(&b, 2, 1),
            MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, -1)]).unwrap(),
            1.0,
        )
        .unwrap();
        assert!((f.tclass_constant(&b, 2.0, 0.0, false) - 2.0).abs() < 1e-15);
        assert!((f.tclass_constant(&b, 2.0, 0.0, true) - 4.0).abs() < 1e-15);
        assert_eq!(
            PolyVectorField::zero(2, b.dim()).tclass_constant(&b, 2.0, 0.0, false),
            0.0
        );
    }

    #[test]
    fn field_symmetry_report() {
        let b = b1k2();
        let mut f = PolyVectorField::zero(2, b.dim());
        let key = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1)]).unwrap();
        f.add_term(id(&b, 2, 1), key.clone(), 0.7).unwrap();
        let rep = f.check_field_symmetry(&b, 1e-12);
        assert_eq!(rep.antisymmetry.len(), 1);

        // pair it correctly and the report empties
        f.add_term(b.conj_id(id(&b, 2, 1)), key.conjugate(&b), -0.7)
            .unwrap();
        assert!(f.check_field_symmetry(&b, 1e-12).is_empty());

        assert!(PolyVectorField::zero(2, b.dim())
            .check_field_symmetry(&b, 1e-12)
            .is_empty());
    }

    /// Random even polynomial with conjugation-symmetrized coefficients.
    fn random_even(b: &Arc<Basis>, degree: usize, seed: u64) -> ScalarPolynomial {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = ScalarPolynomial::zero(degree, b.dim());
        for _ in 0..12 {
            let ids: Vec<u32> = (0..degree)
                .map(|_| rng.gen_range(0..b.dim() as u32))
                .collect();
            let key = MultiIndex::from_ids(ids).unwrap();
            let c = rng.gen::<f64>() - 0.5;
            q.add_term(key.clone(), c).unwrap();
            q.add_term(key.conjugate(b), c).unwrap();
        }
        q
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn even_polynomials_are_rho_invariant(seed in 0u64..1000) {
            let b = b1k2();
            let q = random_even(&b, 3, seed);
            let z = {
                use rand::prelude::*;
                use rand_chacha::ChaCha8Rng;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(77));
                let mut z = StateVector::zero(b.clone());
                for idx in 0..b.dim() as u32 {
                    z.set(idx, Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
                }
                z
            };
            let v = q.eval(&z).unwrap();
            let vr = q.eval(&z.rho()).unwrap();
            prop_assert!((v - vr).norm() <= 1e-12 * (1.0 + v.norm()));
        }

        #[test]
        fn even_real_polys_real_on_real_states(seed in 0u64..1000) {
            let b = b1k2();
            let q = random_even(&b, 4, seed);
            let z = StateVector::random_real(b.clone(), 1.0, 0.8, seed.wrapping_add(3));
            let v = q.eval(&z).unwrap();
            prop_assert!(v.im.abs() <= 1e-12 * (1.0 + v.norm()));
        }

        #[test]
        fn eval_bounded_by_class_envelope(seed in 0u64..200) {
            let b = b1k2();
            let q = random_even(&b, 3, seed);
            let s = 1.5;
            let c = q.gamma_class_constant(&b, 0.0, s);
            let envelope = q.gamma_envelope_sum(&b, 0.0, s);
            let z = StateVector::random_real(b.clone(), s, 1.0, seed.wrapping_add(9));
            let v = q.eval(&z).unwrap().norm();
            prop_assert!(v <= c * envelope * (1.0 + 1e-12));
        }
    }
}
