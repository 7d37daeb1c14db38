//! Independent brute-force reference implementations.
//!
//! These deliberately avoid the symmetrized-storage multiplicity routines of
//! the fast paths: the Lie oracle expands the product rule position by
//! position over the stored tuples, and the gradient oracle is a finite
//! difference. A bug shared with the fast path would have to be reproduced
//! twice to go unnoticed.

use num_complex::Complex64;

use crate::basis::StateVector;
use crate::error::{CoreError, Result};
use crate::family::{pseudonorm_eval, PseudoNormFamily};
use crate::flow::Trajectory;
use crate::poly::{MultiIndex, PolyVectorField, ScalarPolynomial};

const MAX_ORACLE_DIM: usize = 12;
const MAX_ORACLE_DEGREE: usize = 5;

/// Position-by-position expansion of `L_F G`.
pub fn brute_force_lie(field: &PolyVectorField, g: &ScalarPolynomial) -> Result<ScalarPolynomial> {
    if g.dim() > MAX_ORACLE_DIM {
        return Err(CoreError::CostGuard(format!(
            "index set of {} modes exceeds the oracle limit {MAX_ORACLE_DIM}",
            g.dim()
        )));
    }
    if g.degree() > MAX_ORACLE_DEGREE || field.degree() > MAX_ORACLE_DEGREE {
        return Err(CoreError::CostGuard(format!(
            "degrees ({}, {}) exceed the oracle limit {MAX_ORACLE_DEGREE}",
            field.degree(),
            g.degree()
        )));
    }
    let mut out = ScalarPolynomial::zero(g.degree() + field.degree() - 1, g.dim());
    for (key, b) in g.terms() {
        let ids = key.ids();
        for pos in 0..ids.len() {
            let h = ids[pos];
            // product rule: drop this position, keep everything else
            let mut rest: Vec<u32> = Vec::with_capacity(ids.len() - 1);
            for (q, &other) in ids.iter().enumerate() {
                if q != pos {
                    rest.push(other);
                }
            }
            for (lkey, a) in field.row(h) {
                let mut tuple = rest.clone();
                tuple.extend_from_slice(lkey.ids());
                out.add_term(MultiIndex::from_ids(tuple)?, b * a)?;
            }
        }
    }
    Ok(out)
}

/// Centered finite-difference holomorphic gradient: the real- and
/// imaginary-direction difference quotients agree for a polynomial in the
/// `z_l`, and averaging them halves the noise.
pub fn finite_diff_gradient(
    q: &ScalarPolynomial,
    z: &StateVector,
    h: f64,
) -> Result<Vec<Complex64>> {
    assert!(h > 0.0);
    let mut grad = vec![Complex64::new(0.0, 0.0); z.dim()];
    let mut zp = z.clone();
    for id in 0..z.dim() as u32 {
        let orig = z.amp(id);

        zp.set(id, orig + h);
        let fp = q.eval(&zp)?;
        zp.set(id, orig - h);
        let fm = q.eval(&zp)?;
        let d_re = (fp - fm) / (2.0 * h);

        let ih = Complex64::new(0.0, h);
        zp.set(id, orig + ih);
        let gp = q.eval(&zp)?;
        zp.set(id, orig - ih);
        let gm = q.eval(&zp)?;
        let d_im = (gp - gm) / (2.0 * ih);

        zp.set(id, orig);
        grad[id as usize] = 0.5 * (d_re + d_im);
    }
    Ok(grad)
}

/// Centered difference in time of the pseudo norm along a sampled
/// trajectory; entry `i` approximates the drift at sample `i + 1`.
pub fn finite_diff_time_derivative(fam: &PseudoNormFamily, traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.states.len() < 3 {
        return Err(CoreError::TooFewSamples(traj.states.len()));
    }
    let values: Vec<f64> = traj
        .states
        .iter()
        .map(|z| pseudonorm_eval(fam, z))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(values.len() - 2);
    for i in 1..values.len() - 1 {
        let dt = traj.times[i + 1] - traj.times[i - 1];
        out.push((values[i + 1] - values[i - 1]) / dt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Basis, ModeIndex};
    use crate::lie::lie_derivative;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn id(b: &Basis, a: i32, delta: i8) -> u32 {
        b.id_of(&ModeIndex::new(vec![a], delta, 0)).unwrap()
    }

    fn random_field(b: &Arc<Basis>, degree: usize, seed: u64) -> PolyVectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = PolyVectorField::zero(degree, b.dim());
        for _ in 0..15 {
            let key = MultiIndex::from_ids(
                (0..degree)
                    .map(|_| rng.gen_range(0..b.dim() as u32))
                    .collect(),
            )
            .unwrap();
            f.add_term(
                rng.gen_range(0..b.dim() as u32),
                key,
                rng.gen::<f64>() - 0.5,
            )
            .unwrap();
        }
        f
    }

    fn random_poly(b: &Arc<Basis>, degree: usize, seed: u64) -> ScalarPolynomial {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = ScalarPolynomial::zero(degree, b.dim());
        for _ in 0..15 {
            let key = MultiIndex::from_ids(
                (0..degree)
                    .map(|_| rng.gen_range(0..b.dim() as u32))
                    .collect(),
            )
            .unwrap();
            q.add_term(key, rng.gen::<f64>() - 0.5).unwrap();
        }
        q
    }

    #[test]
    fn matches_fast_lie_on_single_term() {
        let b = Basis::shared(1, 2, 1);
        let mut f = PolyVectorField::zero(2, b.dim());
        f.add_term(
            id(&b, 1, 1),
            MultiIndex::from_ids(vec![id(&b, 2, 1), id(&b, 2, -1)]).unwrap(),
            0.9,
        )
        .unwrap();
        let mut g = ScalarPolynomial::zero(2, b.dim());
        g.add_term(
            MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, -1)]).unwrap(),
            1.0,
        )
        .unwrap();
        let slow = brute_force_lie(&f, &g).unwrap();
        let fast = lie_derivative(&b, &f, &g).unwrap();
        assert_eq!(slow.len(), fast.len());
        for (k, v) in fast.terms() {
            assert!((slow.coefficient(k) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_fast_lie_on_random_instances() {
        let b = Basis::shared(1, 2, 1);
        for seed in 0..10u64 {
            let f = random_field(&b, 2 + (seed % 2) as usize, seed);
            let g = random_poly(&b, 2 + (seed % 3) as usize, seed + 100);
            let slow = brute_force_lie(&f, &g).unwrap();
            let fast = lie_derivative(&b, &f, &g).unwrap();
            let scale = fast.max_abs_coeff().max(1e-300);
            for (k, v) in fast.terms() {
                assert!((slow.coefficient(k) - v).abs() <= 1e-12 * scale);
            }
            for (k, v) in slow.terms() {
                assert!((fast.coefficient(k) - v).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn cost_guard_rejects_large_instances() {
        let b = Basis::shared(1, 6, 1);
        let f = PolyVectorField::zero(2, b.dim());
        let g = ScalarPolynomial::zero(2, b.dim());
        assert!(matches!(
            brute_force_lie(&f, &g),
            Err(CoreError::CostGuard(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let b = Basis::shared(1, 2, 1);
        for seed in 0..8u64 {
            let q = random_poly(&b, 4, seed);
            let z = {
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 55);
                let mut z = StateVector::zero(b.clone());
                for i in 0..b.dim() as u32 {
                    z.set(
                        i,
                        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
                    );
                }
                z
            };
            let exact = q.gradient(&z).unwrap();
            let approx = finite_diff_gradient(&q, &z, 1e-5).unwrap();
            let scale = exact
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max)
                .max(1e-12);
            for (e, a) in exact.iter().zip(&approx) {
                assert!((e - a).norm() <= 1e-6 * scale, "{e} vs {a}");
            }
        }
    }

    #[test]
    fn gradient_zero_state_degree_two_plus() {
        let b = Basis::shared(1, 2, 1);
        let q = random_poly(&b, 3, 1);
        let z = StateVector::zero(b.clone());
        for v in finite_diff_gradient(&q, &z, 1e-5).unwrap() {
            assert!(v.norm() < 1e-10);
        }
    }

    #[test]
    fn time_differences_degrade_quadratically_with_stride() {
        use crate::family::{build_pseudonorm, drift_rate};
        use crate::flow::{integrate, IntegrateOptions};
        use crate::models::{build_nls_model, NonlinearitySpec, OmegaConvention, Potential};

        let model = build_nls_model(
            1,
            2,
            Potential::Uniform { seed: 7 },
            &NonlinearitySpec::modulus_only(&[(2, 1.0)]),
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let fam = build_pseudonorm(model.fields(), model.omega(), 2.0, 3, 1e-10).unwrap();
        let z0 = StateVector::random_real(model.basis().clone(), 2.0, 0.3, 5);
        let dt = 1e-4;
        let mut errs = Vec::new();
        for stride in [50usize, 100, 200] {
            let traj = integrate(
                &model,
                &z0,
                0.2,
                dt,
                &IntegrateOptions {
                    sample_stride: stride,
                    ..Default::default()
                },
            )
            .unwrap();
            let fd = finite_diff_time_derivative(&fam, &traj).unwrap();
            let mut worst = 0.0f64;
            for (i, v) in fd.iter().enumerate() {
                let exact =
                    drift_rate(&fam, model.omega(), model.fields(), &traj.states[i + 1]).unwrap();
                worst = worst.max((v - exact).abs());
            }
            errs.push(worst);
        }
        // doubling the stride should roughly quadruple the error
        assert!(
            errs[1] / errs[0] > 2.0 && errs[1] / errs[0] < 8.0,
            "{errs:?}"
        );
        assert!(
            errs[2] / errs[1] > 2.0 && errs[2] / errs[1] < 8.0,
            "{errs:?}"
        );
    }
}
