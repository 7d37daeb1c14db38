//! Truncated spectral basis: signed mode indices, the conjugation involution,
//! weights, frequency maps and state vectors.
//!
//! A mode index is a triple `(a, delta, species)` with `a` a lattice point of
//! `Z^d`, `delta = ±1` distinguishing a mode from its conjugate partner, and a
//! small species tag for systems of coupled equations. The truncation keeps
//! the box `|a_i| <= K` componentwise. Every index is interned into a
//! [`Basis`] which assigns dense ids; conjugate partners sit at adjacent ids
//! so conjugation is `id ^ 1`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One signed mode of the extended index set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    /// Lattice point in `Z^d`.
    pub a: Vec<i32>,
    /// +1 or -1.
    pub delta: i8,
    /// Equation tag; 0 for scalar models, 0/1 for coupled pairs.
    pub species: u8,
}

impl ModeIndex {
    pub fn new(a: Vec<i32>, delta: i8, species: u8) -> Self {
        assert!(delta == 1 || delta == -1, "delta must be ±1");
        ModeIndex { a, delta, species }
    }

    /// `max(1, a_1^2 + ... + a_d^2)`, exactly, as an integer.
    pub fn weight_sq(&self) -> u64 {
        let sq: u64 = self.a.iter().map(|&x| (x as i64 * x as i64) as u64).sum();
        sq.max(1)
    }

    /// `|j| = sqrt(max(1, |a|^2))`; always >= 1.
    pub fn weight(&self) -> f64 {
        (self.weight_sq() as f64).sqrt()
    }

    /// The Laplacian eigenvalue `a_1^2 + ... + a_d^2` (0 at the origin).
    pub fn eigen_sq(&self) -> u64 {
        self.a.iter().map(|&x| (x as i64 * x as i64) as u64).sum()
    }

    /// Flip the sign tag, keeping the lattice point and species.
    pub fn conjugate(&self) -> ModeIndex {
        ModeIndex {
            a: self.a.clone(),
            delta: -self.delta,
            species: self.species,
        }
    }

    /// Flat JSON encoding `[a_1, ..., a_d, delta, species]`.
    pub fn to_flat(&self) -> Vec<i32> {
        let mut v = self.a.clone();
        v.push(self.delta as i32);
        v.push(self.species as i32);
        v
    }

    pub fn from_flat(flat: &[i32], d: usize) -> Result<ModeIndex> {
        if flat.len() != d + 2 {
            return Err(CoreError::Config(format!(
                "flat mode index has {} entries, expected {}",
                flat.len(),
                d + 2
            )));
        }
        let delta = flat[d];
        if delta != 1 && delta != -1 {
            return Err(CoreError::Config(format!("delta must be ±1, got {delta}")));
        }
        Ok(ModeIndex {
            a: flat[..d].to_vec(),
            delta: delta as i8,
            species: flat[d + 1] as u8,
        })
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.delta > 0 { '+' } else { '-' };
        if self.a.len() == 1 {
            write!(f, "({},{sign})", self.a[0])?;
        } else {
            write!(f, "({:?},{sign})", self.a)?;
        }
        if self.species != 0 {
            write!(f, "[{}]", self.species)?;
        }
        Ok(())
    }
}

/// Free-function form of [`ModeIndex::weight`].
pub fn weight(j: &ModeIndex) -> f64 {
    j.weight()
}

/// Free-function form of [`ModeIndex::conjugate`].
pub fn conj_index(j: &ModeIndex) -> ModeIndex {
    j.conjugate()
}

/// All modes `(a, delta, species)` with `|a_i| <= k` componentwise, both
/// signs, `species < n_species`, in the deterministic basis order.
pub fn truncated_index_set(d: usize, k: i32, n_species: u8) -> Vec<ModeIndex> {
    Basis::new(d, k, n_species).modes().to_vec()
}

/// Interned truncated index set with per-id lookup tables.
///
/// Id layout: species-major, then lattice points in lexicographic order,
/// then `delta` (+1 before -1), so `conj(id) = id ^ 1`.
#[derive(Debug)]
pub struct Basis {
    d: usize,
    k: i32,
    n_species: u8,
    modes: Vec<ModeIndex>,
    ids: HashMap<ModeIndex, u32>,
    weight_sq: Vec<u64>,
}

impl Basis {
    pub fn new(d: usize, k: i32, n_species: u8) -> Basis {
        assert!(d >= 1, "dimension must be >= 1");
        assert!(k >= 0, "truncation radius must be >= 0");
        assert!(n_species >= 1, "need at least one species");
        let mut points: Vec<Vec<i32>> = vec![vec![]];
        for _ in 0..d {
            let mut next = Vec::with_capacity(points.len() * (2 * k as usize + 1));
            for p in &points {
                for x in -k..=k {
                    let mut q = p.clone();
                    q.push(x);
                    next.push(q);
                }
            }
            points = next;
        }
        let mut modes = Vec::with_capacity(points.len() * 2 * n_species as usize);
        for species in 0..n_species {
            for p in &points {
                modes.push(ModeIndex::new(p.clone(), 1, species));
                modes.push(ModeIndex::new(p.clone(), -1, species));
            }
        }
        let ids = modes
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i as u32))
            .collect();
        let weight_sq = modes.iter().map(|m| m.weight_sq()).collect();
        Basis {
            d,
            k,
            n_species,
            modes,
            ids,
            weight_sq,
        }
    }

    pub fn shared(d: usize, k: i32, n_species: u8) -> Arc<Basis> {
        Arc::new(Basis::new(d, k, n_species))
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> i32 {
        self.k
    }

    pub fn n_species(&self) -> u8 {
        self.n_species
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn mode(&self, id: u32) -> &ModeIndex {
        &self.modes[id as usize]
    }

    pub fn id_of(&self, m: &ModeIndex) -> Option<u32> {
        self.ids.get(m).copied()
    }

    /// Conjugation at the id level; partners are interleaved.
    #[inline]
    pub fn conj_id(&self, id: u32) -> u32 {
        id ^ 1
    }

    #[inline]
    pub fn weight_sq_of(&self, id: u32) -> u64 {
        self.weight_sq[id as usize]
    }

    #[inline]
    pub fn weight_of(&self, id: u32) -> f64 {
        (self.weight_sq[id as usize] as f64).sqrt()
    }

    /// Id of the in-box mode `(a, delta, species)`, if inside the box.
    pub fn id_of_parts(&self, a: &[i32], delta: i8, species: u8) -> Option<u32> {
        if a.len() != self.d || species >= self.n_species {
            return None;
        }
        if a.iter().any(|&x| x.abs() > self.k) {
            return None;
        }
        let mut point = 0usize;
        let side = (2 * self.k + 1) as usize;
        for &x in a {
            point = point * side + (x + self.k) as usize;
        }
        let id = (species as usize * side.pow(self.d as u32) + point) * 2
            + if delta > 0 { 0 } else { 1 };
        Some(id as u32)
    }
}

/// Real frequency per mode, antisymmetric under conjugation.
#[derive(Clone, Debug)]
pub struct FrequencyMap {
    basis: Arc<Basis>,
    omega: Vec<f64>,
    /// Recorded growth constants: `|omega_a| <= growth_c * |a|^growth_m`.
    pub growth_c: f64,
    pub growth_m: f64,
}

impl FrequencyMap {
    /// Build from base values on the `delta = +1` half; the conjugate half is
    /// filled by antisymmetry, which therefore holds exactly.
    pub fn from_positive_half(basis: Arc<Basis>, f: impl Fn(&ModeIndex) -> f64) -> FrequencyMap {
        let mut omega = vec![0.0; basis.dim()];
        for (i, m) in basis.modes().iter().enumerate() {
            if m.delta == 1 {
                let v = f(m);
                omega[i] = v;
                omega[basis.conj_id(i as u32) as usize] = -v;
            }
        }
        Self::with_growth(basis, omega)
    }

    /// Validating constructor from raw per-id values.
    pub fn from_raw(basis: Arc<Basis>, omega: Vec<f64>) -> Result<FrequencyMap> {
        if omega.len() != basis.dim() {
            return Err(CoreError::DomainMismatch(omega.len(), basis.dim()));
        }
        for id in 0..basis.dim() as u32 {
            let o = omega[id as usize];
            let oc = omega[basis.conj_id(id) as usize];
            if o + oc != 0.0 {
                return Err(CoreError::FrequencyAsymmetry(id));
            }
        }
        Ok(Self::with_growth(basis, omega))
    }

    fn with_growth(basis: Arc<Basis>, omega: Vec<f64>) -> FrequencyMap {
        let growth_m = 2.0;
        let mut growth_c = 0.0f64;
        for (i, &o) in omega.iter().enumerate() {
            let w2 = basis.weight_sq_of(i as u32) as f64;
            growth_c = growth_c.max(o.abs() / w2);
        }
        FrequencyMap {
            basis,
            omega,
            growth_c,
            growth_m,
        }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    #[inline]
    pub fn omega_id(&self, id: u32) -> f64 {
        self.omega[id as usize]
    }

    pub fn raw(&self) -> &[f64] {
        &self.omega
    }
}

/// Complex amplitudes over a truncated basis.
#[derive(Clone, Debug)]
pub struct StateVector {
    basis: Arc<Basis>,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(basis: Arc<Basis>) -> StateVector {
        let amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
        StateVector { basis, amps }
    }

    pub fn from_amps(basis: Arc<Basis>, amps: Vec<Complex64>) -> Result<StateVector> {
        if amps.len() != basis.dim() {
            return Err(CoreError::DomainMismatch(amps.len(), basis.dim()));
        }
        Ok(StateVector { basis, amps })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    #[inline]
    pub fn amp(&self, id: u32) -> Complex64 {
        self.amps[id as usize]
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn set(&mut self, id: u32, v: Complex64) {
        self.amps[id as usize] = v;
    }

    pub fn get(&self, m: &ModeIndex) -> Option<Complex64> {
        self.basis.id_of(m).map(|id| self.amps[id as usize])
    }

    /// The involution: entry at `j` becomes the input entry at `conj(j)`.
    pub fn rho(&self) -> StateVector {
        let mut out = self.clone();
        for id in 0..self.dim() as u32 {
            out.amps[id as usize] = self.amps[self.basis.conj_id(id) as usize];
        }
        out
    }

    /// `max_j |z_{conj(j)} - conj(z_j)|`; zero exactly on real states.
    pub fn reality_residual(&self) -> f64 {
        (0..self.dim() as u32)
            .map(|id| {
                let zc = self.amps[self.basis.conj_id(id) as usize];
                (zc - self.amps[id as usize].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Reality predicate `rho(z) = conj(z)` up to `tol * (1 + max|z_j|)`.
    pub fn is_real(&self, tol: f64) -> bool {
        let scale = 1.0 + self.amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.reality_residual() <= tol * scale
    }

    /// `sqrt(sum_j |j|^{2s} |z_j|^2)`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        assert!(s >= 0.0, "Sobolev index must be >= 0");
        let mut acc = 0.0;
        for (i, z) in self.amps.iter().enumerate() {
            let w2 = self.basis.weight_sq_of(i as u32) as f64;
            acc += w2.powf(s) * z.norm_sqr();
        }
        acc.sqrt()
    }

    pub fn scaled(&self, factor: f64) -> StateVector {
        let mut out = self.clone();
        for a in &mut out.amps {
            *a *= factor;
        }
        out
    }

    /// Seeded random real state normalized to `||z||_s = target_norm`.
    pub fn random_real(basis: Arc<Basis>, s: f64, target_norm: f64, seed: u64) -> StateVector {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = StateVector::zero(basis.clone());
        for id in 0..basis.dim() as u32 {
            if basis.mode(id).delta == 1 {
                let v = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                z.set(id, v);
                z.set(basis.conj_id(id), v.conj());
            }
        }
        let n = z.sobolev_norm(s);
        z.scaled(target_norm / n)
    }
}

/// Serialized record for one state entry.
#[derive(Serialize, Deserialize)]
pub struct StateRecord {
    pub a: Vec<i32>,
    pub delta: i8,
    pub species: u8,
    pub re: f64,
    pub im: f64,
}

impl StateVector {
    pub fn to_records(&self) -> Vec<StateRecord> {
        self.amps
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let m = self.basis.mode(i as u32);
                StateRecord {
                    a: m.a.clone(),
                    delta: m.delta,
                    species: m.species,
                    re: z.re,
                    im: z.im,
                }
            })
            .collect()
    }

    pub fn from_records(basis: Arc<Basis>, records: &[StateRecord]) -> Result<StateVector> {
        let mut z = StateVector::zero(basis.clone());
        for r in records {
            let m = ModeIndex::new(r.a.clone(), r.delta, r.species);
            let id = basis
                .id_of(&m)
                .ok_or_else(|| CoreError::Config(format!("state entry {m} outside basis")))?;
            z.set(id, Complex64::new(r.re, r.im));
        }
        Ok(z)
    }
}
