//! Serialized forms of polynomials, fields, models, families and reports.
//!
//! Mode indices are encoded flat as `[a_1, ..., a_d, delta, species]`;
//! `idx` lists are canonically ordered. Serialization goes through ordered
//! maps everywhere, so re-serializing the same object is byte-identical.

use serde::{Deserialize, Serialize};

use crate::basis::{Basis, FrequencyMap, ModeIndex};
use crate::error::{CoreError, Result};
use crate::family::{OrderStats, PseudoNormFamily, ResonanceReport};
use crate::models::{
    BucketStat, DivisorFit, ModelProvenance, ModelSpec, OmegaConvention, Potential,
};
use crate::poly::{MultiIndex, Parity, PolyVectorField, ScalarPolynomial};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyTermJson {
    pub idx: Vec<Vec<i32>>,
    pub coef: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolynomialJson {
    pub degree: usize,
    pub parity: Parity,
    pub terms: Vec<PolyTermJson>,
}

fn key_to_flat(basis: &Basis, key: &MultiIndex) -> Vec<Vec<i32>> {
    key.ids()
        .iter()
        .map(|&id| basis.mode(id).to_flat())
        .collect()
}

fn key_from_flat(basis: &Basis, flat: &[Vec<i32>]) -> Result<MultiIndex> {
    let ids = flat
        .iter()
        .map(|f| {
            let m = ModeIndex::from_flat(f, basis.d())?;
            basis
                .id_of(&m)
                .ok_or_else(|| CoreError::Config(format!("mode {m} outside basis")))
        })
        .collect::<Result<Vec<u32>>>()?;
    MultiIndex::from_ids(ids)
}

pub fn polynomial_to_json(basis: &Basis, poly: &ScalarPolynomial) -> PolynomialJson {
    PolynomialJson {
        degree: poly.degree(),
        parity: poly.classify_parity(basis, 1e-12),
        terms: poly
            .terms()
            .map(|(key, coef)| PolyTermJson {
                idx: key_to_flat(basis, key),
                coef,
            })
            .collect(),
    }
}

pub fn polynomial_from_json(basis: &Basis, json: &PolynomialJson) -> Result<ScalarPolynomial> {
    let mut poly = ScalarPolynomial::zero(json.degree, basis.dim());
    for t in &json.terms {
        poly.add_term(key_from_flat(basis, &t.idx)?, t.coef)?;
    }
    poly.set_parity_tag(json.parity);
    Ok(poly)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldTermJson {
    pub out: Vec<i32>,
    pub idx: Vec<Vec<i32>>,
    pub coef: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldJson {
    pub degree: usize,
    pub terms: Vec<FieldTermJson>,
}

pub fn field_to_json(basis: &Basis, field: &PolyVectorField) -> FieldJson {
    FieldJson {
        degree: field.degree(),
        terms: field
            .terms()
            .map(|(out, key, coef)| FieldTermJson {
                out: basis.mode(out).to_flat(),
                idx: key_to_flat(basis, key),
                coef,
            })
            .collect(),
    }
}

pub fn field_from_json(basis: &Basis, json: &FieldJson) -> Result<PolyVectorField> {
    let mut field = PolyVectorField::zero(json.degree, basis.dim());
    for t in &json.terms {
        let m = ModeIndex::from_flat(&t.out, basis.d())?;
        let out = basis
            .id_of(&m)
            .ok_or_else(|| CoreError::Config(format!("output mode {m} outside basis")))?;
        field.add_term(out, key_from_flat(basis, &t.idx)?, t.coef)?;
    }
    Ok(field)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub kind: String,
    pub d: usize,
    pub k: i32,
    pub n_species: u8,
    pub potentials: Vec<Potential>,
    pub omega_convention: OmegaConvention,
    pub nonlinearity: serde_json::Value,
    pub hamiltonian: bool,
    /// Frequencies in the deterministic basis order.
    pub omega: Vec<f64>,
    pub fields: Vec<FieldJson>,
}

pub fn model_to_json(model: &ModelSpec) -> ModelJson {
    let basis = model.basis();
    let p = &model.provenance;
    ModelJson {
        kind: p.kind.clone(),
        d: p.d,
        k: p.k,
        n_species: p.n_species,
        potentials: p.potentials.clone(),
        omega_convention: p.omega_convention,
        nonlinearity: p.nonlinearity.clone(),
        hamiltonian: model.hamiltonian,
        omega: model.omega().raw().to_vec(),
        fields: model
            .fields()
            .iter()
            .map(|f| field_to_json(basis, f))
            .collect(),
    }
}

pub fn model_from_json(json: &ModelJson) -> Result<ModelSpec> {
    let basis = Basis::shared(json.d, json.k, json.n_species);
    let omega = FrequencyMap::from_raw(basis.clone(), json.omega.clone())?;
    let fields = json
        .fields
        .iter()
        .map(|f| field_from_json(&basis, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelSpec::new(
        basis,
        omega,
        fields,
        json.hamiltonian,
        ModelProvenance {
            kind: json.kind.clone(),
            d: json.d,
            k: json.k,
            n_species: json.n_species,
            potentials: json.potentials.clone(),
            omega_convention: json.omega_convention,
            nonlinearity: json.nonlinearity.clone(),
        },
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyJson {
    pub s: f64,
    pub r: usize,
    pub res_tol: f64,
    pub d: usize,
    pub k: i32,
    pub n_species: u8,
    pub divisor_stats: Vec<OrderStats>,
    pub parts: Vec<PolynomialJson>,
}

pub fn family_to_json(fam: &PseudoNormFamily) -> FamilyJson {
    let basis = fam.basis();
    FamilyJson {
        s: fam.s(),
        r: fam.r(),
        res_tol: fam.res_tol(),
        d: basis.d(),
        k: basis.k(),
        n_species: basis.n_species(),
        divisor_stats: fam.divisor_stats().to_vec(),
        parts: fam
            .parts()
            .iter()
            .map(|p| polynomial_to_json(basis, p))
            .collect(),
    }
}

pub fn family_from_json(json: &FamilyJson) -> Result<PseudoNormFamily> {
    let basis = Basis::shared(json.d, json.k, json.n_species);
    let parts = json
        .parts
        .iter()
        .map(|p| polynomial_from_json(&basis, p))
        .collect::<Result<Vec<_>>>()?;
    PseudoNormFamily::from_parts(
        basis,
        json.s,
        json.r,
        json.res_tol,
        parts,
        json.divisor_stats.clone(),
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanJson {
    pub r: usize,
    pub threshold: f64,
    pub report: ResonanceReport,
    pub fit: DivisorFit,
    pub buckets: Vec<BucketStat>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::build_pseudonorm;
    use crate::models::{build_nls_model, NonlinearitySpec, OmegaConvention, Potential};

    #[test]
    fn model_roundtrip_preserves_everything() {
        let nl = NonlinearitySpec::modulus_only(&[(2, 1.0)]);
        let model = build_nls_model(
            1,
            2,
            Potential::Uniform { seed: 7 },
            &nl,
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let json = model_to_json(&model);
        let text = serde_json::to_string(&json).unwrap();
        let back: ModelJson = serde_json::from_str(&text).unwrap();
        let model2 = model_from_json(&back).unwrap();
        assert_eq!(model.omega().raw(), model2.omega().raw());
        assert_eq!(model.hamiltonian, model2.hamiltonian);
        let a: Vec<_> = model.fields()[0]
            .terms()
            .map(|(o, k, c)| (o, k.clone(), c))
            .collect();
        let b: Vec<_> = model2.fields()[0]
            .terms()
            .map(|(o, k, c)| (o, k.clone(), c))
            .collect();
        assert_eq!(a, b);
        // byte determinism of re-serialization
        let text2 = serde_json::to_string(&model_to_json(&model2)).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn family_roundtrip_evaluates_identically() {
        use crate::basis::StateVector;
        use crate::family::pseudonorm_eval;
        let nl = NonlinearitySpec::modulus_only(&[(2, 1.0)]);
        let model = build_nls_model(
            1,
            3,
            Potential::Uniform { seed: 9 },
            &nl,
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let fam = build_pseudonorm(model.fields(), model.omega(), 2.0, 4, 1e-10).unwrap();
        let json = family_to_json(&fam);
        let text = serde_json::to_string(&json).unwrap();
        let fam2 = family_from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        let z = StateVector::random_real(model.basis().clone(), 2.0, 0.05, 3);
        let v1 = pseudonorm_eval(&fam, &z).unwrap();
        let v2 = pseudonorm_eval(&fam2, &z).unwrap();
        assert_eq!(v1, v2);
    }
}
