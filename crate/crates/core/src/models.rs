//! Concrete reversible models on the truncated torus basis: NLS with a
//! convolution potential, the coupled NLS pair, and the non-resonance
//! scanner for their frequency maps.
//!
//! Nonlinearities are polynomial in `(psi, conj psi)` (and `(phi, conj phi)`
//! for the coupled pair), so the Taylor data is finite and exact. The
//! Hamiltonian `P(z) = integral of g` is expanded over the Fourier basis,
//! which turns the integral into a momentum selection rule, and the fields
//! come from `F_j = dP/dz_{conj j}` (sign-flipped on the conjugate half).

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, FrequencyMap};
use crate::error::{CoreError, Result};
use crate::family::{ResonanceReport, ResonantEntry};
use crate::poly::{MultiIndex, PolyVectorField, ScalarPolynomial};

/// Which value the dispersion uses at the zero mode: the true Laplacian
/// eigenvalue (0 at the origin) or the weight convention `max(1, |a|^2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaConvention {
    #[default]
    Eigenvalue,
    Maxed,
}

/// Convolution potential: Fourier coefficients of `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Potential {
    /// `V = 0` (resonant; useful for scanner checks).
    Zero,
    /// i.i.d. uniform `[0, 1)` coefficients drawn from the seed.
    Uniform { seed: u64 },
}

/// `lambda * (psi conj(psi))^p`, `p >= 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusTerm {
    pub p: u32,
    pub lambda: f64,
}

/// `coef * (psi^q conj(psi)^{q-1} + psi^{q-1} conj(psi)^q)`, `q >= 2`.
///
/// Degree `2q - 1 >= 3`, symmetric under swapping `psi` and `conj(psi)`, so
/// it stays inside the reversible class while producing even-degree fields
/// (modulus powers alone only ever produce odd-degree ones).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricOddTerm {
    pub q: u32,
    pub coef: f64,
}

/// Nonlinearity of the single-equation model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    #[serde(default)]
    pub modulus: Vec<ModulusTerm>,
    #[serde(default)]
    pub symmetric_odd: Vec<SymmetricOddTerm>,
}

impl NonlinearitySpec {
    pub fn modulus_only(terms: &[(u32, f64)]) -> NonlinearitySpec {
        NonlinearitySpec {
            modulus: terms
                .iter()
                .map(|&(p, lambda)| ModulusTerm { p, lambda })
                .collect(),
            symmetric_odd: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.modulus.is_empty() && self.symmetric_odd.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(CoreError::Config("nonlinearity must be nonempty".into()));
        }
        for t in &self.modulus {
            if t.p < 2 {
                return Err(CoreError::Config(format!(
                    "modulus power p = {} below the cubic threshold (need p >= 2)",
                    t.p
                )));
            }
        }
        for t in &self.symmetric_odd {
            if t.q < 2 {
                return Err(CoreError::Config(format!(
                    "symmetric term q = {} below the cubic threshold (need q >= 2)",
                    t.q
                )));
            }
        }
        Ok(())
    }

    /// True when every term depends on the modulus only.
    pub fn gauge_invariant(&self) -> bool {
        self.symmetric_odd.is_empty()
    }
}

/// `lambda * (psi conj(psi))^p (phi conj(phi))^q` for the coupled pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledTerm {
    pub p: u32,
    pub q: u32,
    pub lambda: f64,
}

/// Reproducibility record embedded in serialized models.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub kind: String,
    pub d: usize,
    pub k: i32,
    pub n_species: u8,
    pub potentials: Vec<Potential>,
    pub omega_convention: OmegaConvention,
    pub nonlinearity: serde_json::Value,
}

/// A compiled reversible model: frequencies plus homogeneous Taylor fields.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    basis: Arc<Basis>,
    omega: FrequencyMap,
    fields: Vec<PolyVectorField>,
    pub hamiltonian: bool,
    pub provenance: ModelProvenance,
}

impl ModelSpec {
    pub fn new(
        basis: Arc<Basis>,
        omega: FrequencyMap,
        fields: Vec<PolyVectorField>,
        hamiltonian: bool,
        provenance: ModelProvenance,
    ) -> ModelSpec {
        ModelSpec {
            basis,
            omega,
            fields,
            hamiltonian,
            provenance,
        }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn omega(&self) -> &FrequencyMap {
        &self.omega
    }

    /// Taylor fields in increasing degree.
    pub fn fields(&self) -> &[PolyVectorField] {
        &self.fields
    }

    pub fn max_field_degree(&self) -> usize {
        self.fields.iter().map(|f| f.degree()).max().unwrap_or(0)
    }
}

fn potential_values(basis: &Basis, potential: &Potential, species: u8) -> Vec<f64> {
    let npts = basis.dim() / (2 * basis.n_species() as usize);
    match potential {
        Potential::Zero => vec![0.0; npts],
        Potential::Uniform { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed ^ ((species as u64) << 32));
            (0..npts).map(|_| rng.gen::<f64>()).collect()
        }
    }
}

fn dispersion(
    basis: &Arc<Basis>,
    potentials: &[Potential],
    convention: OmegaConvention,
) -> FrequencyMap {
    let per_species: Vec<Vec<f64>> = (0..basis.n_species())
        .map(|sp| potential_values(basis, &potentials[sp as usize], sp))
        .collect();
    let npts = basis.dim() / (2 * basis.n_species() as usize);
    FrequencyMap::from_positive_half(basis.clone(), |m| {
        let lap = match convention {
            OmegaConvention::Eigenvalue => m.eigen_sq() as f64,
            OmegaConvention::Maxed => m.weight_sq() as f64,
        };
        let point = {
            // recover the point rank from the id layout
            let id = basis.id_of(m).unwrap() as usize / 2;
            id - m.species as usize * npts
        };
        lap + per_species[m.species as usize][point]
    })
}

/// Multisets of `count` points (ids into `points`) with their multinomial
/// weight `count! / prod(mult!)`.
fn point_multisets(npts: usize, count: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(
        npts: usize,
        remaining: usize,
        start: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if remaining == 0 {
            let mut weight = (1..=current.len()).map(|i| i as f64).product::<f64>();
            let mut i = 0;
            while i < current.len() {
                let mut j = i;
                while j < current.len() && current[j] == current[i] {
                    j += 1;
                }
                weight /= (1..=(j - i)).map(|x| x as f64).product::<f64>();
                i = j;
            }
            out.push((current.clone(), weight));
            return;
        }
        for p in start..npts {
            current.push(p);
            rec(npts, remaining - 1, p, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    rec(npts, count, 0, &mut Vec::new(), &mut out);
    out
}

/// One factor block of a Hamiltonian monomial: `count` copies of the given
/// sign for the given species.
#[derive(Clone, Copy)]
struct Block {
    species: u8,
    delta: i8,
    count: usize,
}

/// Expand `lambda * prod_blocks (component)^count` integrated over the
/// torus into multiset coefficients of `P`, applying the momentum selection
/// and the Fourier normalization `(2 pi)^{d (1 - D/2)}`.
fn expand_hamiltonian_term(
    basis: &Arc<Basis>,
    blocks: &[Block],
    lambda: f64,
) -> Result<ScalarPolynomial> {
    let d = basis.d();
    let degree: usize = blocks.iter().map(|b| b.count).sum();
    let npts = basis.dim() / (2 * basis.n_species() as usize);
    let points: Vec<&[i32]> = (0..npts)
        .map(|p| basis.mode((p * 2) as u32).a.as_slice())
        .collect();
    let norm = lambda * (2.0 * std::f64::consts::PI).powf(d as f64 * (1.0 - degree as f64 / 2.0));

    let block_multisets: Vec<Vec<(Vec<usize>, f64)>> = blocks
        .iter()
        .map(|b| point_multisets(npts, b.count))
        .collect();

    let mut poly = ScalarPolynomial::zero(degree, basis.dim());
    let mut chosen = vec![0usize; blocks.len()];
    loop {
        // momentum: sum over blocks of delta * sum of points
        let mut momentum = vec![0i64; d];
        for (bi, block) in blocks.iter().enumerate() {
            let (pts, _) = &block_multisets[bi][chosen[bi]];
            for &p in pts {
                for (c, &x) in points[p].iter().enumerate() {
                    momentum[c] += block.delta as i64 * x as i64;
                }
            }
        }
        if momentum.iter().all(|&m| m == 0) {
            let mut ids = Vec::with_capacity(degree);
            let mut weight = norm;
            for (bi, block) in blocks.iter().enumerate() {
                let (pts, w) = &block_multisets[bi][chosen[bi]];
                weight *= w;
                for &p in pts {
                    let id = (block.species as usize * npts + p) * 2
                        + if block.delta > 0 { 0 } else { 1 };
                    ids.push(id as u32);
                }
            }
            poly.add_term(MultiIndex::from_ids(ids)?, weight)?;
        }
        // advance the mixed-radix counter over block selections
        let mut bi = 0;
        loop {
            if bi == blocks.len() {
                return Ok(poly);
            }
            chosen[bi] += 1;
            if chosen[bi] < block_multisets[bi].len() {
                break;
            }
            chosen[bi] = 0;
            bi += 1;
        }
    }
}

/// Differentiate a Hamiltonian polynomial into field rows for one species:
/// `F_{(c,+)} = dP/dz_{(c,-)}`, `F_{(c,-)} = -dP/dz_{(c,+)}`, accumulated
/// into per-degree fields.
fn accumulate_fields(
    basis: &Basis,
    p: &ScalarPolynomial,
    species: u8,
    fields: &mut BTreeMap<usize, PolyVectorField>,
) -> Result<()> {
    let degree = p.degree() - 1;
    let field = fields
        .entry(degree)
        .or_insert_with(|| PolyVectorField::zero(degree, basis.dim()));
    for (key, b) in p.terms() {
        for (h, mult) in key.distinct_entries() {
            let mode = basis.mode(h);
            if mode.species != species {
                continue;
            }
            let out = basis.conj_id(h);
            let sign = if mode.delta == -1 { 1.0 } else { -1.0 };
            field.add_term(out, key.without_one(h), sign * mult as f64 * b)?;
        }
    }
    Ok(())
}

/// NLS with convolution potential on the truncated torus.
pub fn build_nls_model(
    d: usize,
    k: i32,
    potential: Potential,
    nl: &NonlinearitySpec,
    convention: OmegaConvention,
) -> Result<ModelSpec> {
    assert!(k >= 1);
    nl.validate()?;
    let basis = Basis::shared(d, k, 1);
    let omega = dispersion(&basis, std::slice::from_ref(&potential), convention);

    let mut fields: BTreeMap<usize, PolyVectorField> = BTreeMap::new();
    for t in &nl.modulus {
        let p = expand_hamiltonian_term(
            &basis,
            &[
                Block {
                    species: 0,
                    delta: 1,
                    count: t.p as usize,
                },
                Block {
                    species: 0,
                    delta: -1,
                    count: t.p as usize,
                },
            ],
            t.lambda,
        )?;
        accumulate_fields(&basis, &p, 0, &mut fields)?;
    }
    for t in &nl.symmetric_odd {
        for (plus, minus) in [
            (t.q as usize, t.q as usize - 1),
            (t.q as usize - 1, t.q as usize),
        ] {
            let p = expand_hamiltonian_term(
                &basis,
                &[
                    Block {
                        species: 0,
                        delta: 1,
                        count: plus,
                    },
                    Block {
                        species: 0,
                        delta: -1,
                        count: minus,
                    },
                ],
                t.coef,
            )?;
            accumulate_fields(&basis, &p, 0, &mut fields)?;
        }
    }

    let provenance = ModelProvenance {
        kind: "nls".into(),
        d,
        k,
        n_species: 1,
        potentials: vec![potential],
        omega_convention: convention,
        nonlinearity: serde_json::to_value(nl)?,
    };
    Ok(ModelSpec {
        basis,
        omega,
        fields: fields.into_values().filter(|f| !f.is_empty()).collect(),
        hamiltonian: true,
        provenance,
    })
}

/// Coupled NLS pair driven by `g1` (species 0) and `g2` (species 1);
/// Hamiltonian exactly when the two nonlinearities coincide.
pub fn build_coupled_nls_model(
    d: usize,
    k: i32,
    potentials: (Potential, Potential),
    nl1: &[CoupledTerm],
    nl2: &[CoupledTerm],
    convention: OmegaConvention,
) -> Result<ModelSpec> {
    assert!(k >= 1);
    for (name, nl) in [("g1", nl1), ("g2", nl2)] {
        if nl.is_empty() {
            return Err(CoreError::Config(format!("{name} must be nonempty")));
        }
        for t in nl {
            if t.p + t.q < 2 {
                return Err(CoreError::Config(format!(
                    "{name} term (p={}, q={}) is below the cubic threshold",
                    t.p, t.q
                )));
            }
        }
    }
    let basis = Basis::shared(d, k, 2);
    let pots = [potentials.0.clone(), potentials.1.clone()];
    let omega = dispersion(&basis, &pots, convention);

    let mut fields: BTreeMap<usize, PolyVectorField> = BTreeMap::new();
    for (species, nl) in [(0u8, nl1), (1u8, nl2)] {
        for t in nl {
            let mut blocks = Vec::new();
            if t.p > 0 {
                blocks.push(Block {
                    species: 0,
                    delta: 1,
                    count: t.p as usize,
                });
                blocks.push(Block {
                    species: 0,
                    delta: -1,
                    count: t.p as usize,
                });
            }
            if t.q > 0 {
                blocks.push(Block {
                    species: 1,
                    delta: 1,
                    count: t.q as usize,
                });
                blocks.push(Block {
                    species: 1,
                    delta: -1,
                    count: t.q as usize,
                });
            }
            let p = expand_hamiltonian_term(&basis, &blocks, t.lambda)?;
            accumulate_fields(&basis, &p, species, &mut fields)?;
        }
    }

    let provenance = ModelProvenance {
        kind: "coupled_nls".into(),
        d,
        k,
        n_species: 2,
        potentials: pots.to_vec(),
        omega_convention: convention,
        nonlinearity: serde_json::json!({ "g1": nl1, "g2": nl2 }),
    };
    Ok(ModelSpec {
        basis,
        omega,
        fields: fields.into_values().filter(|f| !f.is_empty()).collect(),
        hamiltonian: nl1 == nl2,
        provenance,
    })
}

/// Lower-envelope fit `|Omega| >= gamma / mu^alpha`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DivisorFit {
    pub gamma: f64,
    pub alpha: f64,
}

/// Per-`mu` bucket minimum of `|Omega|`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BucketStat {
    pub mu_sq: u64,
    pub min_abs: f64,
    pub count: u64,
}

#[derive(Clone, Debug)]
pub struct ScanOutcome {
    pub report: ResonanceReport,
    pub fit: DivisorFit,
    pub buckets: Vec<BucketStat>,
}

const MAX_LISTED_VIOLATIONS: usize = 500;

/// Enumerate all multisets of sizes `1..=r` over the basis modulo
/// conjugation, list the non-self-conjugate ones with `|Omega| <= threshold`,
/// and fit the non-resonance envelope `(gamma, alpha)`.
pub fn scan_nonresonance(omega: &FrequencyMap, r: usize, threshold: f64) -> ScanOutcome {
    assert!(r >= 1);
    let basis = omega.basis();
    let dim = basis.dim() as u32;

    struct Local {
        buckets: BTreeMap<u64, (f64, u64)>,
        violations: Vec<(Vec<u32>, f64)>,
        total_violations: usize,
        min_abs: f64,
    }

    let per_first: Vec<Local> = (0..dim)
        .into_par_iter()
        .map(|first| {
            let mut local = Local {
                buckets: BTreeMap::new(),
                violations: Vec::new(),
                total_violations: 0,
                min_abs: f64::INFINITY,
            };
            let mut stack: Vec<u32> = vec![first];
            visit(omega, r, &mut stack, &mut |ids, om| {
                let mut conj: Vec<u32> = ids.iter().map(|&i| i ^ 1).collect();
                conj.sort_unstable();
                // one representative per conjugate pair; Omega flips sign
                if conj.as_slice() < ids {
                    return;
                }
                if conj.as_slice() == ids {
                    return;
                }
                let mut sq: Vec<u64> = ids.iter().map(|&i| basis.weight_sq_of(i)).collect();
                sq.sort_unstable_by(|a, b| b.cmp(a));
                let mu_sq = if sq.len() >= 3 { sq[2] } else { 1 };
                let abs = om.abs();
                local.min_abs = local.min_abs.min(abs);
                let e = local.buckets.entry(mu_sq).or_insert((f64::INFINITY, 0));
                e.0 = e.0.min(abs);
                e.1 += 1;
                if abs <= threshold {
                    local.total_violations += 1;
                    if local.violations.len() < MAX_LISTED_VIOLATIONS {
                        local.violations.push((ids.to_vec(), om));
                    }
                }
            });
            local
        })
        .collect();

    let mut buckets: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    let mut violations = Vec::new();
    let mut total_violations = 0usize;
    let mut min_abs = f64::INFINITY;
    for local in per_first {
        for (k, (m, c)) in local.buckets {
            let e = buckets.entry(k).or_insert((f64::INFINITY, 0));
            e.0 = e.0.min(m);
            e.1 += c;
        }
        total_violations += local.total_violations;
        for v in local.violations {
            if violations.len() < MAX_LISTED_VIOLATIONS {
                violations.push(v);
            }
        }
        min_abs = min_abs.min(local.min_abs);
    }

    let bucket_stats: Vec<BucketStat> = buckets
        .iter()
        .map(|(&mu_sq, &(min, count))| BucketStat {
            mu_sq,
            min_abs: min,
            count,
        })
        .collect();
    let fit = fit_envelope(&bucket_stats);

    let report = ResonanceReport {
        threshold,
        violations: violations
            .into_iter()
            .map(|(ids, om)| ResonantEntry {
                modes: ids.iter().map(|&i| basis.mode(i).clone()).collect(),
                omega_sum: om,
                coef_abs: None,
            })
            .collect(),
        min_divisor: if min_abs.is_finite() { min_abs } else { 0.0 },
        total_found: total_violations,
    };
    ScanOutcome {
        report,
        fit,
        buckets: bucket_stats,
    }
}

/// Depth-first enumeration of non-decreasing id tuples up to length `r`;
/// every nonempty prefix is reported once with its frequency sum.
fn visit(omega: &FrequencyMap, r: usize, stack: &mut Vec<u32>, f: &mut impl FnMut(&[u32], f64)) {
    let om: f64 = stack.iter().map(|&i| omega.omega_id(i)).sum();
    f(stack, om);
    if stack.len() == r {
        return;
    }
    let start = *stack.last().unwrap();
    for next in start..omega.dim() as u32 {
        stack.push(next);
        visit(omega, r, stack, f);
        stack.pop();
    }
}

/// Smallest half-integer `alpha` in `[0, 10]` for which the bucket envelope
/// `min|Omega| * mu^alpha` is non-decreasing in `mu`; `gamma` is its minimum.
fn fit_envelope(buckets: &[BucketStat]) -> DivisorFit {
    if buckets.is_empty() {
        return DivisorFit {
            gamma: 0.0,
            alpha: 0.0,
        };
    }
    let mut chosen = 10.0;
    for half in 0..=20 {
        let alpha = half as f64 * 0.5;
        let mut ok = true;
        let mut prev = f64::NEG_INFINITY;
        for b in buckets {
            let v = b.min_abs * (b.mu_sq as f64).sqrt().powf(alpha);
            if v < prev * (1.0 - 1e-9) {
                ok = false;
                break;
            }
            prev = prev.max(v);
        }
        if ok {
            chosen = alpha;
            break;
        }
    }
    let gamma = buckets
        .iter()
        .map(|b| b.min_abs * (b.mu_sq as f64).sqrt().powf(chosen))
        .fold(f64::INFINITY, f64::min);
    DivisorFit {
        gamma,
        alpha: chosen,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ModeIndex;

    fn id(b: &Basis, a: &[i32], delta: i8, species: u8) -> u32 {
        b.id_of(&ModeIndex::new(a.to_vec(), delta, species))
            .unwrap()
    }

    /// Independent Fourier-product oracle for the cubic field of
    /// `g = lambda (psi conj psi)^2` at `d = 1`: expand over ordered tuples
    /// `(a1, a2, b1, b2)` and differentiate position by position.
    fn enumeration_oracle_coefficient(
        b: &Basis,
        k: i32,
        lambda: f64,
        out: (i32, i8),
        mono: &[(i32, i8)],
    ) -> f64 {
        let norm = lambda / (2.0 * std::f64::consts::PI);
        let target = {
            let ids: Vec<u32> = mono.iter().map(|&(a, d)| id(b, &[a], d, 0)).collect();
            MultiIndex::from_ids(ids).unwrap()
        };
        let mut acc = 0.0;
        for a1 in -k..=k {
            for a2 in -k..=k {
                for b1 in -k..=k {
                    for b2 in -k..=k {
                        if a1 + a2 - b1 - b2 != 0 {
                            continue;
                        }
                        let tuple = [(a1, 1i8), (a2, 1), (b1, -1), (b2, -1)];
                        for pos in 0..4 {
                            let (pa, pd) = tuple[pos];
                            // dP/dz_{(c,-)} feeds F_{(c,+)} and vice versa
                            if (pa, -pd) != out {
                                continue;
                            }
                            let sign = if pd == -1 { 1.0 } else { -1.0 };
                            let rest: Vec<u32> = (0..4)
                                .filter(|&q| q != pos)
                                .map(|q| id(b, &[tuple[q].0], tuple[q].1, 0))
                                .collect();
                            if MultiIndex::from_ids(rest).unwrap() == target {
                                acc += sign * norm;
                            }
                        }
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn nls_cubic_field_matches_enumeration_oracle() {
        let lambda = 0.8;
        let model = build_nls_model(
            1,
            1,
            Potential::Zero,
            &NonlinearitySpec::modulus_only(&[(2, lambda)]),
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let b = model.basis();
        assert_eq!(model.fields().len(), 1);
        let f = &model.fields()[0];
        assert_eq!(f.degree(), 3);

        let out = id(b, &[0], 1, 0);
        let key = MultiIndex::from_ids(vec![
            id(b, &[1], 1, 0),
            id(b, &[-1], 1, 0),
            id(b, &[0], -1, 0),
        ])
        .unwrap();
        let got = f.coefficient(out, &key);
        assert!(got != 0.0);
        let want =
            enumeration_oracle_coefficient(b, 1, lambda, (0, 1), &[(1, 1), (-1, 1), (0, -1)]);
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");

        // spot-check every stored coefficient of the field
        for (out, keym, coef) in f.terms() {
            let m = b.mode(out);
            let mono: Vec<(i32, i8)> = keym
                .ids()
                .iter()
                .map(|&i| (b.mode(i).a[0], b.mode(i).delta))
                .collect();
            let want = enumeration_oracle_coefficient(b, 1, lambda, (m.a[0], m.delta), &mono);
            assert!((coef - want).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_mode_frequency_is_potential_alone() {
        let model = build_nls_model(
            1,
            2,
            Potential::Uniform { seed: 42 },
            &NonlinearitySpec::modulus_only(&[(2, 1.0)]),
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let b = model.basis();
        let zero = id(b, &[0], 1, 0);
        let om0 = model.omega().omega_id(zero);
        assert!(om0 > 0.0 && om0 < 1.0);
    }

    #[test]
    fn model_build_is_deterministic() {
        let nl = NonlinearitySpec::modulus_only(&[(2, 1.0)]);
        let m1 = build_nls_model(
            1,
            3,
            Potential::Uniform { seed: 7 },
            &nl,
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let m2 = build_nls_model(
            1,
            3,
            Potential::Uniform { seed: 7 },
            &nl,
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        assert_eq!(m1.omega().raw(), m2.omega().raw());
        let terms1: Vec<_> = m1.fields()[0]
            .terms()
            .map(|(o, k, c)| (o, k.clone(), c))
            .collect();
        let terms2: Vec<_> = m2.fields()[0]
            .terms()
            .map(|(o, k, c)| (o, k.clone(), c))
            .collect();
        assert_eq!(terms1.len(), terms2.len());
        for (a, b) in terms1.iter().zip(&terms2) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
            assert_eq!(a.2, b.2);
        }
    }

    #[test]
    fn built_fields_pass_symmetry_and_momentum() {
        let nl = NonlinearitySpec {
            modulus: vec![ModulusTerm { p: 2, lambda: 1.0 }],
            symmetric_odd: vec![SymmetricOddTerm { q: 2, coef: 0.5 }],
        };
        let model = build_nls_model(
            1,
            3,
            Potential::Uniform { seed: 3 },
            &nl,
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let b = model.basis();
        for f in model.fields() {
            assert!(f.check_field_symmetry(b, 1e-12).is_empty());
            for (out, key, _) in f.terms() {
                let m = b.mode(out);
                let mut lhs: Vec<i64> = m.a.iter().map(|&x| m.delta as i64 * x as i64).collect();
                for &i in key.ids() {
                    let mm = b.mode(i);
                    for (c, &x) in mm.a.iter().enumerate() {
                        lhs[c] -= mm.delta as i64 * x as i64;
                    }
                }
                assert!(lhs.iter().all(|&x| x == 0), "momentum violated");
            }
        }
        // symmetric term produces the quadratic field
        assert_eq!(model.fields()[0].degree(), 2);
        assert_eq!(model.fields()[1].degree(), 3);
    }

    #[test]
    fn gauge_invariant_fields_are_odd_degree_and_balanced() {
        let model = build_nls_model(
            1,
            2,
            Potential::Uniform { seed: 1 },
            &NonlinearitySpec::modulus_only(&[(2, 1.0), (3, 0.2)]),
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let b = model.basis();
        for f in model.fields() {
            assert!(f.degree() % 2 == 1);
            for (out, key, _) in f.terms() {
                // counting the output as one more entry of its conjugate
                // sign, plus and minus counts balance
                let mut balance = if b.mode(out).delta == 1 { -1i64 } else { 1 };
                for &i in key.ids() {
                    balance += b.mode(i).delta as i64;
                }
                assert_eq!(balance, 0);
            }
        }
    }

    #[test]
    fn coupled_model_flags_and_species() {
        let g1 = vec![CoupledTerm {
            p: 2,
            q: 1,
            lambda: 1.0,
        }];
        let g2 = vec![CoupledTerm {
            p: 1,
            q: 1,
            lambda: 1.0,
        }];
        let model = build_coupled_nls_model(
            1,
            2,
            (
                Potential::Uniform { seed: 5 },
                Potential::Uniform { seed: 6 },
            ),
            &g1,
            &g2,
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        assert!(!model.hamiltonian);
        let b = model.basis();
        for f in model.fields() {
            assert!(f.check_field_symmetry(b, 1e-12).is_empty());
        }
        // degrees: g2 -> cubic on species 1, g1 -> quintic on species 0
        let degrees: Vec<usize> = model.fields().iter().map(|f| f.degree()).collect();
        assert_eq!(degrees, vec![3, 5]);

        let same = build_coupled_nls_model(
            1,
            2,
            (
                Potential::Uniform { seed: 5 },
                Potential::Uniform { seed: 6 },
            ),
            &g2,
            &g2,
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        assert!(same.hamiltonian);

        // omega depends on (a, species) only: conjugate pairs flip sign,
        // species blocks differ by their potentials
        let p0 = id(b, &[1], 1, 0);
        let p1 = id(b, &[1], 1, 1);
        assert_ne!(model.omega().omega_id(p0), model.omega().omega_id(p1));
    }

    #[test]
    fn rectangle_resonance_found_without_potential() {
        let model = build_nls_model(
            2,
            1,
            Potential::Zero,
            &NonlinearitySpec::modulus_only(&[(2, 1.0)]),
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let scan = scan_nonresonance(model.omega(), 4, 1e-12);
        assert!(scan.report.total_found > 0);
        // the rectangle (0,0),(1,0),(1,1),(0,1) with alternating signs
        let b = model.basis();
        let rect = {
            let mut ids = vec![
                id(b, &[0, 0], 1, 0),
                id(b, &[1, 0], -1, 0),
                id(b, &[1, 1], 1, 0),
                id(b, &[0, 1], -1, 0),
            ];
            ids.sort_unstable();
            ids
        };
        let found = scan.report.violations.iter().any(|v| {
            let mut ids: Vec<u32> = v.modes.iter().map(|m| b.id_of(m).unwrap()).collect();
            ids.sort_unstable();
            ids == rect || ids == rect.iter().map(|&i| i ^ 1).collect::<Vec<_>>()
        });
        assert!(found, "rectangle resonance not listed");
    }

    #[test]
    fn seeded_scan_is_resonance_free_at_small_scale() {
        let model = build_nls_model(
            1,
            3,
            Potential::Uniform { seed: 11 },
            &NonlinearitySpec::modulus_only(&[(2, 1.0)]),
            OmegaConvention::Eigenvalue,
        )
        .unwrap();
        let scan = scan_nonresonance(model.omega(), 4, 1e-8);
        assert_eq!(scan.report.total_found, 0);
        assert!(scan.report.min_divisor > 1e-8);
        assert!(scan.fit.gamma > 0.0);
        // the fitted envelope really lower-bounds every bucket
        for bkt in &scan.buckets {
            let bound = scan.fit.gamma / (bkt.mu_sq as f64).sqrt().powf(scan.fit.alpha);
            assert!(bkt.min_abs >= bound * (1.0 - 1e-9));
        }
    }
}
