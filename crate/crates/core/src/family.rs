//! Construction of the almost-invariant pseudo norm family.
//!
//! The quadratic part is the squared Sobolev norm. Each higher order solves
//! the homological equation `d_omega N_{k+1} = G_{k+1}` with
//! `G_{k+1} = -sum_{m=2..k} L_{F^(k+2-m)} N_m`, dividing coefficients by the
//! signed frequency sum of their multiset. Oddness of every `G` (forced by
//! the reversibility structure) guarantees the resonant, self-conjugate
//! multisets carry no source coefficient, so the solve is exact.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, FrequencyMap, ModeIndex, StateVector};
use crate::error::{CoreError, Result};
use crate::lie::{lie_derivative, omega_derivative, time_derivative_value};
use crate::poly::{MultiIndex, Parity, PolyVectorField, ScalarPolynomial};

/// Tolerance below which a divisor counts as resonant during a solve.
pub const DEFAULT_RES_TOL: f64 = 1e-10;

/// Reality tolerance for states fed to evaluation entry points.
pub const REALITY_TOL: f64 = 1e-9;

/// One multiset flagged by the resonance machinery.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonantEntry {
    pub modes: Vec<ModeIndex>,
    pub omega_sum: f64,
    /// Offending source coefficient magnitude; absent for pure frequency
    /// scans, which carry no polynomial.
    pub coef_abs: Option<f64>,
}

/// Near-resonant multisets found by a solve or a scan.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub threshold: f64,
    pub violations: Vec<ResonantEntry>,
    /// Smallest surviving divisor (over multisets actually divided/scanned).
    pub min_divisor: f64,
    /// Total violations found; the listing may be capped.
    pub total_found: usize,
}

/// Per-order divisor statistics recorded during a build.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderStats {
    pub order: usize,
    pub terms: usize,
    /// Smallest `|Omega|` among divided multisets; absent when the order is
    /// identically zero.
    pub min_divisor: Option<f64>,
    pub max_abs_coeff: f64,
    /// `gamma_class_constant` of the solved part at `gamma = 0`.
    pub gamma0_constant: f64,
}

/// The family `{N_{s,2}, ..., N_{s,r}}` plus build metadata.
#[derive(Clone, Debug)]
pub struct PseudoNormFamily {
    basis: Arc<Basis>,
    s: f64,
    r: usize,
    res_tol: f64,
    parts: Vec<ScalarPolynomial>,
    stats: Vec<OrderStats>,
}

impl PseudoNormFamily {
    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn res_tol(&self) -> f64 {
        self.res_tol
    }

    /// Parts in degree order; `parts()[0]` has degree 2.
    pub fn parts(&self) -> &[ScalarPolynomial] {
        &self.parts
    }

    pub fn part_of_degree(&self, degree: usize) -> Option<&ScalarPolynomial> {
        if degree < 2 || degree > self.r {
            return None;
        }
        Some(&self.parts[degree - 2])
    }

    pub fn divisor_stats(&self) -> &[OrderStats] {
        &self.stats
    }

    pub fn from_parts(
        basis: Arc<Basis>,
        s: f64,
        r: usize,
        res_tol: f64,
        parts: Vec<ScalarPolynomial>,
        stats: Vec<OrderStats>,
    ) -> Result<PseudoNormFamily> {
        if parts.len() != r - 1 {
            return Err(CoreError::Config(format!(
                "family with r = {r} needs {} parts, got {}",
                r - 1,
                parts.len()
            )));
        }
        for (i, p) in parts.iter().enumerate() {
            if !p.is_empty() && p.degree() != i + 2 {
                return Err(CoreError::DegreeMismatch {
                    declared: i + 2,
                    found: p.degree(),
                });
            }
        }
        Ok(PseudoNormFamily {
            basis,
            s,
            r,
            res_tol,
            parts,
            stats,
        })
    }
}

/// The polynomial equal to `||z||_s^2` on the truncated basis: coefficient
/// `2 |j|^{2s}` on each conjugate pair `{j, conj j}` (the two signed copies
/// of the norm sum land on the same multiset).
pub fn squared_sobolev_polynomial(basis: &Arc<Basis>, s: f64) -> ScalarPolynomial {
    let mut n2 = ScalarPolynomial::zero(2, basis.dim());
    for id in 0..basis.dim() as u32 {
        if basis.mode(id).delta == 1 {
            let w2 = basis.weight_sq_of(id) as f64;
            let key = MultiIndex::from_ids(vec![id, basis.conj_id(id)]).unwrap();
            n2.add_term(key, 2.0 * w2.powf(s)).unwrap();
        }
    }
    n2.set_parity_tag(Parity::Even);
    n2
}

struct SolveOutcome {
    n: ScalarPolynomial,
    min_divisor: Option<f64>,
}

fn solve_inner(g: &ScalarPolynomial, omega: &FrequencyMap, res_tol: f64) -> Result<SolveOutcome> {
    let basis = omega.basis();
    if g.dim() != omega.dim() {
        return Err(CoreError::DomainMismatch(g.dim(), omega.dim()));
    }
    if g.is_empty() {
        return Ok(SolveOutcome {
            n: ScalarPolynomial::zero(g.degree(), g.dim()),
            min_divisor: None,
        });
    }
    let parity = g.classify_parity(basis, 1e-12);
    if parity != Parity::Odd {
        return Err(CoreError::NotOdd(parity.to_string()));
    }
    let scale = g.max_abs_coeff();
    let mut n = ScalarPolynomial::zero(g.degree(), g.dim());
    let mut violations = Vec::new();
    let mut min_div = f64::INFINITY;
    for (key, a) in g.terms() {
        if key.is_self_conjugate(basis) {
            // oddness forces these to vanish; anything above noise is a bug
            // in the caller's source polynomial.
            if a.abs() > res_tol * scale {
                violations.push(ResonantEntry {
                    modes: key.ids().iter().map(|&i| basis.mode(i).clone()).collect(),
                    omega_sum: 0.0,
                    coef_abs: Some(a.abs()),
                });
            }
            continue;
        }
        let om = key.omega_sum(omega);
        if om.abs() <= res_tol {
            if a.abs() > res_tol * scale {
                violations.push(ResonantEntry {
                    modes: key.ids().iter().map(|&i| basis.mode(i).clone()).collect(),
                    omega_sum: om,
                    coef_abs: Some(a.abs()),
                });
            }
            continue;
        }
        min_div = min_div.min(om.abs());
        n.add_term(key.clone(), a / om)?;
    }
    if !violations.is_empty() {
        let total_found = violations.len();
        return Err(CoreError::Resonance {
            order: g.degree(),
            report: ResonanceReport {
                threshold: res_tol,
                violations,
                min_divisor: if min_div.is_finite() { min_div } else { 0.0 },
                total_found,
            },
        });
    }
    let parity = n.classify_parity(basis, 1e-12);
    debug_assert_eq!(parity, Parity::Even);
    n.set_parity_tag(parity);
    Ok(SolveOutcome {
        n,
        min_divisor: if min_div.is_finite() {
            Some(min_div)
        } else {
            None
        },
    })
}

/// Solve `d_omega N = G` exactly for odd `G`; the solution is even with real
/// coefficients. Errors on non-odd sources and on near-resonant multisets
/// carrying non-negligible coefficients.
pub fn solve_homological(
    g: &ScalarPolynomial,
    omega: &FrequencyMap,
    res_tol: f64,
) -> Result<ScalarPolynomial> {
    let out = solve_inner(g, omega, res_tol)?;
    // dividing and re-multiplying is exact to one rounding each way
    debug_assert!({
        let dn = omega_derivative(&out.n, omega)?;
        let scale = g.max_abs_coeff().max(1e-300);
        g.terms()
            .all(|(k, a)| (dn.coefficient(k) - a).abs() <= 1e-12 * scale)
    });
    Ok(out.n)
}

/// Assemble the order-`k+1` source `G_{k+1} = -sum_m L_{F^(k+2-m)} N_m` from
/// the parts built so far. `parts[i]` must hold `N_{i+2}`.
pub fn assemble_source(
    basis: &Basis,
    fields_by_degree: &[Option<&PolyVectorField>],
    parts: &[ScalarPolynomial],
    k: usize,
) -> Result<ScalarPolynomial> {
    let dim = basis.dim();
    let mut g = ScalarPolynomial::zero(k + 1, dim);
    for m in 2..=k {
        let p = k + 2 - m;
        let field = match fields_by_degree.get(p).and_then(|f| *f) {
            Some(f) => f,
            None => continue,
        };
        let n_m = &parts[m - 2];
        if n_m.is_empty() {
            continue;
        }
        let term = lie_derivative(basis, field, n_m)?;
        g.add_assign(&term.scaled(-1.0))?;
    }
    Ok(g)
}

/// Build the family `N_{s,2}..N_{s,r}` for Taylor fields `F^(2)..F^(r)`.
///
/// Fields of degree above `r` are ignored here (they only feed the
/// remainder); missing degrees count as zero. Every field must pass the
/// coefficient symmetry check.
pub fn build_pseudonorm(
    fields: &[PolyVectorField],
    omega: &FrequencyMap,
    s: f64,
    r: usize,
    res_tol: f64,
) -> Result<PseudoNormFamily> {
    assert!(r >= 2, "order must be >= 2");
    let basis = omega.basis().clone();
    let mut by_degree: Vec<Option<&PolyVectorField>> = vec![None; r + 1];
    for f in fields {
        if f.dim() != basis.dim() {
            return Err(CoreError::DomainMismatch(f.dim(), basis.dim()));
        }
        let rep = f.check_field_symmetry(&basis, 1e-12);
        if !rep.is_empty() {
            return Err(CoreError::Config(format!(
                "field of degree {} violates coefficient antisymmetry at {} terms",
                f.degree(),
                rep.antisymmetry.len()
            )));
        }
        if f.degree() <= r {
            if by_degree[f.degree()].is_some() {
                return Err(CoreError::Config(format!(
                    "duplicate Taylor field of degree {}",
                    f.degree()
                )));
            }
            by_degree[f.degree()] = Some(f);
        }
    }

    let n2 = squared_sobolev_polynomial(&basis, s);
    let mut parts = vec![n2];
    let mut stats = vec![OrderStats {
        order: 2,
        terms: parts[0].len(),
        min_divisor: None,
        max_abs_coeff: parts[0].max_abs_coeff(),
        gamma0_constant: parts[0].gamma_class_constant(&basis, 0.0, s),
    }];

    for k in 2..r {
        let g = assemble_source(&basis, &by_degree, &parts, k)?;
        let outcome = solve_inner(&g, omega, res_tol)?;
        let n = outcome.n;
        stats.push(OrderStats {
            order: k + 1,
            terms: n.len(),
            min_divisor: outcome.min_divisor,
            max_abs_coeff: n.max_abs_coeff(),
            gamma0_constant: n.gamma_class_constant(&basis, 0.0, s),
        });
        parts.push(n);
    }

    Ok(PseudoNormFamily {
        basis,
        s,
        r,
        res_tol,
        parts,
        stats,
    })
}

fn require_real(z: &StateVector) -> Result<()> {
    let scale = 1.0 + z.amps().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let residual = z.reality_residual();
    if residual > REALITY_TOL * scale {
        return Err(CoreError::NonRealState {
            residual,
            tol: REALITY_TOL * scale,
        });
    }
    Ok(())
}

/// Evaluate the pseudo norm at a real state.
pub fn pseudonorm_eval(fam: &PseudoNormFamily, z: &StateVector) -> Result<f64> {
    require_real(z)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in &fam.parts {
        acc += p.eval(z)?;
    }
    if acc.im.abs() > 1e-10 * (1.0 + acc.re.abs()) {
        return Err(CoreError::SpuriousImaginary { imag: acc.im });
    }
    Ok(acc.re)
}

/// Instantaneous drift `d/dt N_s^(r)(z(t))` at a real state, evaluated
/// against the full field list of the model (including degrees above `r`).
/// By construction every contribution of polynomial degree `<= r` cancels.
pub fn drift_rate(
    fam: &PseudoNormFamily,
    omega: &FrequencyMap,
    fields: &[PolyVectorField],
    z: &StateVector,
) -> Result<f64> {
    require_real(z)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in &fam.parts {
        if p.is_empty() {
            continue;
        }
        acc += time_derivative_value(p, omega, fields, z)?;
    }
    let scale = 1.0 + acc.re.abs();
    if acc.im.abs() > 1e-10 * scale {
        return Err(CoreError::SpuriousImaginary { imag: acc.im });
    }
    Ok(acc.re)
}

/// The symbolic remainder: all Lie-derivative contributions of degree above
/// `r`, grouped by degree. The drift equals `Re(-i * sum eval)` of these.
pub fn remainder_polynomials(
    fam: &PseudoNormFamily,
    fields: &[PolyVectorField],
) -> Result<Vec<ScalarPolynomial>> {
    let basis = &fam.basis;
    let mut by_degree: std::collections::BTreeMap<usize, ScalarPolynomial> =
        std::collections::BTreeMap::new();
    for f in fields {
        for part in &fam.parts {
            if part.is_empty() {
                continue;
            }
            let d = part.degree() + f.degree() - 1;
            if d <= fam.r {
                continue;
            }
            let term = lie_derivative(basis, f, part)?;
            by_degree
                .entry(d)
                .or_insert_with(|| ScalarPolynomial::zero(d, basis.dim()))
                .add_assign(&term)?;
        }
    }
    Ok(by_degree.into_values().collect())
}

/// Drift via the symbolic remainder route; cross-checks [`drift_rate`].
pub fn drift_via_remainder(remainder: &[ScalarPolynomial], z: &StateVector) -> Result<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for p in remainder {
        acc += p.eval(z)?;
    }
    let v = Complex64::new(0.0, -1.0) * acc;
    Ok(v.re)
}

/// Check the divisor-bound transfer `|b| <= |a| mu^alpha / gamma` for every
/// stored coefficient of every part, recomputing the sources from the
/// fields. Returns the number of coefficients checked and the largest ratio
/// `|b| / (|a| mu^alpha / gamma)` observed.
pub fn verify_divisor_transfer(
    fam: &PseudoNormFamily,
    fields: &[PolyVectorField],
    omega: &FrequencyMap,
    gamma: f64,
    alpha: f64,
) -> Result<(usize, f64)> {
    let basis = omega.basis();
    let mut by_degree: Vec<Option<&PolyVectorField>> = vec![None; fam.r + 1];
    for f in fields {
        if f.degree() <= fam.r {
            by_degree[f.degree()] = Some(f);
        }
    }
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for k in 2..fam.r {
        let g = assemble_source(basis, &by_degree, &fam.parts, k)?;
        let n = &fam.parts[k - 1];
        for (key, b) in n.terms() {
            let a = g.coefficient(key);
            let mu = key.mu_gap_beta(basis).mu;
            let bound = a.abs() * mu.powf(alpha) / gamma;
            checked += 1;
            worst = worst.max(b.abs() / bound);
            if b.abs() > bound * (1.0 + 1e-9) {
                return Err(CoreError::Config(format!(
                    "divisor transfer violated at degree {} key {key}: |b| = {:.3e} > {:.3e}",
                    k + 1,
                    b.abs(),
                    bound
                )));
            }
        }
    }
    Ok((checked, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ModeIndex;

    fn id(b: &Basis, a: i32, delta: i8) -> u32 {
        b.id_of(&ModeIndex::new(vec![a], delta, 0)).unwrap()
    }

    #[test]
    fn solve_simple_odd_source() {
        let b = Basis::shared(1, 2, 1);
        let om = FrequencyMap::from_positive_half(b.clone(), |m| m.eigen_sq() as f64);
        let key = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1), id(&b, 2, -1)]).unwrap();
        let mut g = ScalarPolynomial::zero(3, b.dim());
        g.add_term(key.clone(), 1.0).unwrap();
        g.add_term(key.conjugate(&b), -1.0).unwrap();
        let n = solve_homological(&g, &om, 1e-10).unwrap();
        assert!((n.coefficient(&key) + 0.5).abs() < 1e-15);
        assert!((n.coefficient(&key.conjugate(&b)) + 0.5).abs() < 1e-15);
        assert_eq!(n.classify_parity(&b, 1e-12), Parity::Even);
    }

    #[test]
    fn solve_rejects_self_conjugate_coefficient() {
        let b = Basis::shared(1, 2, 1);
        let om = FrequencyMap::from_positive_half(b.clone(), |m| m.eigen_sq() as f64 + 0.1);
        let key = MultiIndex::from_ids(vec![
            id(&b, 1, 1),
            id(&b, 1, -1),
            id(&b, 2, 1),
            id(&b, 2, -1),
        ])
        .unwrap();
        assert!(key.is_self_conjugate(&b));
        let mut g = ScalarPolynomial::zero(4, b.dim());
        g.add_term(key, 0.7).unwrap();
        let err = solve_homological(&g, &om, 1e-10).unwrap_err();
        assert!(matches!(err, CoreError::NotOdd(_)));
    }

    #[test]
    fn solve_random_odd_residual_and_parity() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let b = Basis::shared(1, 3, 1);
        let om = FrequencyMap::from_positive_half(b.clone(), |m| {
            let mut r = ChaCha8Rng::seed_from_u64(900 + m.a[0].unsigned_abs() as u64);
            m.eigen_sq() as f64 + r.gen::<f64>()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = ScalarPolynomial::zero(4, b.dim());
        for _ in 0..25 {
            let key =
                MultiIndex::from_ids((0..4).map(|_| rng.gen_range(0..b.dim() as u32)).collect())
                    .unwrap();
            if key.is_self_conjugate(&b) {
                continue;
            }
            let c = rng.gen::<f64>() - 0.5;
            g.add_term(key.clone(), c).unwrap();
            g.add_term(key.conjugate(&b), -c).unwrap();
        }
        let n = solve_homological(&g, &om, 1e-10).unwrap();
        assert_eq!(n.classify_parity(&b, 1e-12), Parity::Even);
        let dn = omega_derivative(&n, &om).unwrap();
        let scale = g.max_abs_coeff();
        for (k, a) in g.terms() {
            assert!((dn.coefficient(k) - a).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_fields_give_bare_norm() {
        let b = Basis::shared(1, 3, 1);
        let om = FrequencyMap::from_positive_half(b.clone(), |m| m.eigen_sq() as f64 + 0.2);
        let fam = build_pseudonorm(&[], &om, 2.0, 4, 1e-10).unwrap();
        assert_eq!(fam.parts().len(), 3);
        assert!(fam.parts()[1].is_empty());
        assert!(fam.parts()[2].is_empty());
        let z = StateVector::random_real(b.clone(), 2.0, 0.3, 8);
        let v = pseudonorm_eval(&fam, &z).unwrap();
        let n2 = z.sobolev_norm(2.0).powi(2);
        assert!((v - n2).abs() <= 1e-12 * n2);
        assert_eq!(drift_rate(&fam, &om, &[], &z).unwrap(), 0.0);
    }

    #[test]
    fn eval_rejects_non_real_state() {
        let b = Basis::shared(1, 2, 1);
        let om = FrequencyMap::from_positive_half(b.clone(), |m| m.eigen_sq() as f64 + 0.2);
        let fam = build_pseudonorm(&[], &om, 1.0, 3, 1e-10).unwrap();
        let mut z = StateVector::zero(b.clone());
        z.set(id(&b, 1, 1), Complex64::new(1.0, 0.0));
        assert!(matches!(
            pseudonorm_eval(&fam, &z),
            Err(CoreError::NonRealState { .. })
        ));
    }

    #[test]
    fn n2_class_constant_and_annihilation() {
        let b = Basis::shared(1, 4, 1);
        let s = 1.5;
        let n2 = squared_sobolev_polynomial(&b, s);
        // stored coefficients are 2 w^{2s} on pairs with mu = 1, gap = 0,
        // beta = w^2, so the stored-support constant is exactly 2
        assert!((n2.gamma_class_constant(&b, 0.0, s) - 2.0).abs() < 1e-12);
        let z = StateVector::random_real(b.clone(), s, 0.7, 9);
        let v = n2.eval(&z).unwrap();
        assert!((v.re - z.sobolev_norm(s).powi(2)).abs() < 1e-13);
        assert!(v.im.abs() < 1e-16);
    }
}
