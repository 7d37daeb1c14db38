//! Lie derivatives of observables along polynomial vector fields, the
//! frequency derivative, and pointwise time derivatives along the system's
//! vector field `i dz_j/dt = omega_j z_j + F_j(z)`.

use num_complex::Complex64;

use crate::basis::{Basis, FrequencyMap, StateVector};
use crate::error::{CoreError, Result};
use crate::poly::{PolyVectorField, ScalarPolynomial};

/// Symbolic Lie derivative `L_F G = sum_l F_l dG/dz_l`.
///
/// Output degree is `deg F + deg G - 1`, exactly (a scalar output multiset
/// reuses input indices, so no truncation can occur). When `G` is even and
/// `F` satisfies the coefficient antisymmetry, the result classifies odd;
/// the parity tag is set from an actual classification, not assumed.
pub fn lie_derivative(
    basis: &Basis,
    field: &PolyVectorField,
    g: &ScalarPolynomial,
) -> Result<ScalarPolynomial> {
    if field.dim() != g.dim() {
        return Err(CoreError::DomainMismatch(field.dim(), g.dim()));
    }
    assert!(
        field.degree() >= 2 && g.degree() >= 2,
        "degrees must be >= 2"
    );
    let out_degree = g.degree() + field.degree() - 1;
    let mut out = ScalarPolynomial::zero(out_degree, g.dim());
    for (key, b) in g.terms() {
        for (h, mult) in key.distinct_entries() {
            let partial = key.without_one(h);
            for (lkey, a) in field.row(h) {
                out.add_term(partial.merged_with(lkey), mult as f64 * b * a)?;
            }
        }
    }
    let parity = out.classify_parity(basis, 1e-12);
    out.set_parity_tag(parity);
    Ok(out)
}

/// Frequency derivative `d_omega Q`: each coefficient is scaled by the
/// signed frequency sum of its multiset. Maps even polynomials to odd ones
/// and vice versa.
pub fn omega_derivative(g: &ScalarPolynomial, omega: &FrequencyMap) -> Result<ScalarPolynomial> {
    if g.dim() != omega.dim() {
        return Err(CoreError::DomainMismatch(g.dim(), omega.dim()));
    }
    let mut out = ScalarPolynomial::zero(g.degree(), g.dim());
    for (key, b) in g.terms() {
        let om = key.omega_sum(omega);
        if om != 0.0 {
            out.add_term(key.clone(), om * b)?;
        }
    }
    let parity = out.classify_parity(omega.basis(), 1e-12);
    out.set_parity_tag(parity);
    Ok(out)
}

/// Exact time derivative of `Q` along the flow, evaluated at `z`:
/// `-i sum_j (omega_j z_j + sum_k F^(k)_j(z)) dQ/dz_j`.
///
/// The frequency term is applied at the coefficient level (each monomial
/// picks up its signed frequency sum), so monomials with vanishing frequency
/// sum contribute exactly zero rather than a rounding residue; the field
/// term is evaluated pointwise against the gradient.
pub fn time_derivative_value(
    q: &ScalarPolynomial,
    omega: &FrequencyMap,
    fields: &[PolyVectorField],
    z: &StateVector,
) -> Result<Complex64> {
    if q.dim() != z.dim() || omega.dim() != z.dim() {
        return Err(CoreError::DomainMismatch(q.dim(), z.dim()));
    }
    let mut dot = omega_derivative(q, omega)?.eval(z)?;
    if !fields.is_empty() {
        let grad = q.gradient(z)?;
        let mut rhs = vec![Complex64::new(0.0, 0.0); z.dim()];
        for f in fields {
            let fv = f.eval(z)?;
            for (r, v) in rhs.iter_mut().zip(fv) {
                *r += v;
            }
        }
        dot += rhs.iter().zip(&grad).map(|(r, g)| r * g).sum::<Complex64>();
    }
    Ok(Complex64::new(0.0, -1.0) * dot)
}
