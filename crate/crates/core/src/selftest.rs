//! Built-in check battery behind `revnorm selftest`: oracle comparisons and
//! the parity/residual/reality invariants, on instances small enough to run
//! in seconds.

use num_complex::Complex64;

use crate::basis::{Basis, FrequencyMap, ModeIndex, StateVector};
use crate::family::{
    build_pseudonorm, drift_rate, drift_via_remainder, pseudonorm_eval, remainder_polynomials,
    solve_homological, squared_sobolev_polynomial,
};
use crate::fitting::fit_loglog;
use crate::flow::{check_reversibility_flow, integrate, IntegrateOptions};
use crate::lie::{lie_derivative, omega_derivative, time_derivative_value};
use crate::models::{
    build_coupled_nls_model, build_nls_model, scan_nonresonance, CoupledTerm, ModulusTerm,
    NonlinearitySpec, OmegaConvention, Potential, SymmetricOddTerm,
};
use crate::oracle::{brute_force_lie, finite_diff_gradient, finite_diff_time_derivative};
use crate::poly::{MultiIndex, Parity, PolyVectorField, ScalarPolynomial};

pub struct CheckResult {
    pub name: &'static str,
    pub failure: Option<String>,
}

pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.failure.is_none()).count()
    }

    pub fn failed(&self) -> usize {
        self.checks.len() - self.passed()
    }
}

type Check = std::result::Result<(), String>;

fn ensure(cond: bool, msg: impl Fn() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn or_fail<T>(r: crate::error::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn id(b: &Basis, a: i32, delta: i8) -> u32 {
    b.id_of(&ModeIndex::new(vec![a], delta, 0)).unwrap()
}

fn b1(k: i32) -> std::sync::Arc<Basis> {
    Basis::shared(1, k, 1)
}

fn random_odd(b: &std::sync::Arc<Basis>, degree: usize, seed: u64) -> ScalarPolynomial {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ScalarPolynomial::zero(degree, b.dim());
    for _ in 0..20 {
        let key = MultiIndex::from_ids(
            (0..degree)
                .map(|_| rng.gen_range(0..b.dim() as u32))
                .collect(),
        )
        .unwrap();
        if key.is_self_conjugate(b) {
            continue;
        }
        let c = rng.gen::<f64>() - 0.5;
        g.add_term(key.clone(), c).unwrap();
        g.add_term(key.conjugate(b), -c).unwrap();
    }
    g
}

fn seeded_omega(b: &std::sync::Arc<Basis>, seed: u64) -> FrequencyMap {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let values: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..b.dim()).map(|_| rng.gen::<f64>()).collect()
    };
    FrequencyMap::from_positive_half(b.clone(), |m| {
        m.eigen_sq() as f64 + values[b.id_of(m).unwrap() as usize]
    })
}

fn test_model() -> crate::models::ModelSpec {
    build_nls_model(
        1,
        3,
        Potential::Uniform { seed: 7 },
        &NonlinearitySpec {
            modulus: vec![ModulusTerm { p: 2, lambda: 1.0 }],
            symmetric_odd: vec![SymmetricOddTerm { q: 2, coef: 0.5 }],
        },
        OmegaConvention::Eigenvalue,
    )
    .unwrap()
}

pub fn run_selftest(corrupt: bool) -> SelftestReport {
    let mut checks: Vec<CheckResult> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Check| {
        let failure = f().err();
        checks.push(CheckResult { name, failure });
    };

    run("weight-floor-at-one", &|| {
        ensure(ModeIndex::new(vec![0], 1, 0).weight() == 1.0, || {
            "zero mode weight != 1".into()
        })?;
        ensure(ModeIndex::new(vec![3, 4], -1, 0).weight() == 5.0, || {
            "pythagorean weight wrong".into()
        })
    });

    run("conjugation-involution", &|| {
        let j = ModeIndex::new(vec![2], 1, 1);
        ensure(j.conjugate().conjugate() == j, || "not involutive".into())?;
        ensure(j.conjugate().weight() == j.weight(), || {
            "weight changed".into()
        })
    });

    run("mu-gap-beta-triples", &|| {
        let b = Basis::shared(1, 5, 1);
        let key = MultiIndex::from_ids(vec![
            id(&b, 5, 1),
            id(&b, 3, 1),
            id(&b, 2, -1),
            id(&b, 1, 1),
        ])
        .unwrap();
        let v = key.mu_gap_beta(&b);
        ensure((v.mu, v.gap, v.beta) == (2.0, 2.0, 15.0), || {
            format!("(5,3,2,1) gave ({}, {}, {})", v.mu, v.gap, v.beta)
        })
    });

    run("omega-sum-antisymmetry", &|| {
        let b = b1(2);
        let om = seeded_omega(&b, 5);
        let key = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 2, -1), id(&b, 0, 1)]).unwrap();
        let v = key.omega_sum(&om) + key.conjugate(&b).omega_sum(&om);
        ensure(v.abs() < 1e-15, || format!("sum + conj sum = {v:e}"))
    });

    run("involution-and-reality", &|| {
        let b = b1(2);
        let z = StateVector::random_real(b.clone(), 1.0, 0.4, 3);
        ensure(z.is_real(1e-14), || "random real state not real".into())?;
        let r = z.rho();
        let rr = r.rho();
        ensure((0..z.dim() as u32).all(|i| rr.amp(i) == z.amp(i)), || {
            "rho not involutive".into()
        })
    });

    run("sobolev-norm-values", &|| {
        let b = b1(2);
        let mut z = StateVector::zero(b.clone());
        z.set(id(&b, 2, 1), Complex64::new(0.5, 0.0));
        ensure((z.sobolev_norm(1.0) - 1.0).abs() < 1e-15, || {
            "single-mode norm wrong".into()
        })
    });

    run("canonical-key-permutation-invariance", &|| {
        let b = b1(2);
        let k1 = MultiIndex::from_ids(vec![id(&b, 2, 1), id(&b, 1, -1), id(&b, 2, 1)]).unwrap();
        let k2 = MultiIndex::from_ids(vec![id(&b, 1, -1), id(&b, 2, 1), id(&b, 2, 1)]).unwrap();
        ensure(k1 == k2, || "permutations gave different keys".into())
    });

    run("poly-eval-monomials", &|| {
        let b = b1(2);
        let mut q = ScalarPolynomial::zero(2, b.dim());
        or_fail(q.add_term(
            MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1)]).unwrap(),
            0.5,
        ))?;
        let mut z = StateVector::zero(b.clone());
        z.set(id(&b, 1, 1), Complex64::new(1.0, 1.0));
        let v = or_fail(q.eval(&z))?;
        ensure((v - Complex64::new(0.0, 1.0)).norm() < 1e-15, || {
            format!("0.5 (1+i)^2 = {v}")
        })
    });

    run("gradient-multiplicity-factor", &|| {
        let b = b1(2);
        let mut q = ScalarPolynomial::zero(2, b.dim());
        or_fail(q.add_term(
            MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1)]).unwrap(),
            0.5,
        ))?;
        let mut z = StateVector::zero(b.clone());
        z.set(id(&b, 1, 1), Complex64::new(3.0, 0.0));
        let g = or_fail(q.gradient(&z))?;
        ensure(
            (g[id(&b, 1, 1) as usize] - Complex64::new(3.0, 0.0)).norm() < 1e-15,
            || "d/dz of 0.5 z^2 at 3 != 3".into(),
        )
    });

    run("gradient-vs-finite-differences", &|| {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let b = b1(2);
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut q = ScalarPolynomial::zero(4, b.dim());
            for _ in 0..12 {
                let key = MultiIndex::from_ids(
                    (0..4).map(|_| rng.gen_range(0..b.dim() as u32)).collect(),
                )
                .unwrap();
                or_fail(q.add_term(key, rng.gen::<f64>() - 0.5))?;
            }
            let mut z = StateVector::zero(b.clone());
            for i in 0..b.dim() as u32 {
                z.set(
                    i,
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
                );
            }
            let exact = or_fail(q.gradient(&z))?;
            let fd = or_fail(finite_diff_gradient(&q, &z, 1e-5))?;
            let scale = exact.iter().map(|v| v.norm()).fold(1e-12, f64::max);
            for (e, a) in exact.iter().zip(&fd) {
                ensure((e - a).norm() <= 1e-6 * scale, || {
                    format!("gradient mismatch {e} vs {a}")
                })?;
            }
        }
        Ok(())
    });

    run("parity-classification", &|| {
        let b = b1(2);
        let mut action = ScalarPolynomial::zero(2, b.dim());
        or_fail(action.add_term(
            MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, -1)]).unwrap(),
            1.0,
        ))?;
        ensure(action.classify_parity(&b, 1e-12) == Parity::Even, || {
            "action not even".into()
        })?;
        let key = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1), id(&b, 2, -1)]).unwrap();
        let mut lone = ScalarPolynomial::zero(3, b.dim());
        or_fail(lone.add_term(key, 1.0))?;
        ensure(lone.classify_parity(&b, 1e-12) == Parity::Neither, || {
            "unpaired term not neither".into()
        })
    });

    run("gamma-class-constant", &|| {
        let b = Basis::shared(1, 3, 1);
        let mut q = ScalarPolynomial::zero(3, b.dim());
        or_fail(q.add_term(
            MultiIndex::from_ids(vec![id(&b, 3, 1), id(&b, 2, 1), id(&b, 1, -1)]).unwrap(),
            1.0,
        ))?;
        let c = q.gamma_class_constant(&b, 0.0, 1.0);
        ensure((c - 4.0 / 6.0).abs() < 1e-15, || format!("C = {c}"))
    });

    run("tclass-constant-both-denominators", &|| {
        let b = b1(2);
        let mut f = PolyVectorField::zero(2, b.dim());
        or_fail(f.add_term(
            id(&b, 2, 1),
            MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, -1)]).unwrap(),
            1.0,
        ))?;
        let as_printed = f.tclass_constant(&b, 2.0, 0.0, false);
        let alternate = f.tclass_constant(&b, 2.0, 0.0, true);
        ensure((as_printed - 2.0).abs() < 1e-15, || {
            format!("printed denominator gave {as_printed}")
        })?;
        ensure((alternate - 4.0).abs() < 1e-15, || {
            format!("alternate denominator gave {alternate}")
        })
    });

    run("field-symmetry-detects-unpaired-term", &|| {
        let b = b1(2);
        let mut f = PolyVectorField::zero(2, b.dim());
        let key = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1)]).unwrap();
        or_fail(f.add_term(id(&b, 2, 1), key.clone(), 0.7))?;
        ensure(
            f.check_field_symmetry(&b, 1e-12).antisymmetry.len() == 1,
            || "single unpaired term not reported".into(),
        )?;
        or_fail(f.add_term(b.conj_id(id(&b, 2, 1)), key.conjugate(&b), -0.7))?;
        ensure(f.check_field_symmetry(&b, 1e-12).is_empty(), || {
            "paired field reported".into()
        })
    });

    run("lie-derivative-vs-brute-force-2-2", &|| {
        lie_oracle_case(2, 2, 1)
    });
    run("lie-derivative-vs-brute-force-3-2", &|| {
        lie_oracle_case(3, 2, 2)
    });
    run("lie-derivative-vs-brute-force-2-3", &|| {
        lie_oracle_case(2, 3, 3)
    });

    run("lie-parity-flip", &|| {
        let model = test_model();
        let b = model.basis();
        let n2 = squared_sobolev_polynomial(b, 2.0);
        for f in model.fields() {
            let lg = or_fail(lie_derivative(b, f, &n2))?;
            ensure(lg.classify_parity(b, 1e-12) == Parity::Odd, || {
                format!("L_F N2 not odd for degree {}", f.degree())
            })?;
        }
        Ok(())
    });

    run("omega-derivative-annihilates-actions", &|| {
        let b = b1(3);
        let om = seeded_omega(&b, 8);
        let n2 = squared_sobolev_polynomial(&b, 1.5);
        let dn = or_fail(omega_derivative(&n2, &om))?;
        ensure(dn.is_empty(), || "d_omega ||z||^2 != 0".into())
    });

    run("homological-solve-unit-example", &|| {
        let b = b1(2);
        let om = FrequencyMap::from_positive_half(b.clone(), |m| m.eigen_sq() as f64);
        let key = MultiIndex::from_ids(vec![id(&b, 1, 1), id(&b, 1, 1), id(&b, 2, -1)]).unwrap();
        let mut g = ScalarPolynomial::zero(3, b.dim());
        or_fail(g.add_term(key.clone(), 1.0))?;
        or_fail(g.add_term(key.conjugate(&b), -1.0))?;
        let n = or_fail(solve_homological(&g, &om, 1e-10))?;
        ensure((n.coefficient(&key) + 0.5).abs() < 1e-15, || {
            format!("b = {}", n.coefficient(&key))
        })
    });

    run("homological-residual-random-odd", &|| {
        let b = b1(3);
        let om = seeded_omega(&b, 21);
        for seed in 0..5u64 {
            let g = random_odd(&b, 3 + (seed % 3) as usize, seed);
            if g.is_empty() {
                continue;
            }
            let mut n = or_fail(solve_homological(&g, &om, 1e-10))?;
            if corrupt && seed == 0 {
                let key = n.terms().next().map(|(k, _)| k.clone()).unwrap();
                let _ = n.add_term(key, 0.123);
            }
            ensure(n.classify_parity(&b, 1e-12) == Parity::Even, || {
                "solution not even".into()
            })?;
            let dn = or_fail(omega_derivative(&n, &om))?;
            let scale = g.max_abs_coeff();
            for (k, a) in g.terms() {
                let r = (dn.coefficient(k) - a).abs();
                ensure(r <= 1e-12 * scale, || {
                    format!("homological residual {r:.3e} at {k}")
                })?;
            }
        }
        Ok(())
    });

    run("homological-rejects-self-conjugate-source", &|| {
        let b = b1(2);
        let om = seeded_omega(&b, 2);
        let key = MultiIndex::from_ids(vec![
            id(&b, 1, 1),
            id(&b, 1, -1),
            id(&b, 2, 1),
            id(&b, 2, -1),
        ])
        .unwrap();
        let mut g = ScalarPolynomial::zero(4, b.dim());
        or_fail(g.add_term(key, 0.7))?;
        ensure(solve_homological(&g, &om, 1e-10).is_err(), || {
            "self-conjugate source accepted".into()
        })
    });

    run("bare-norm-family-without-fields", &|| {
        let b = b1(3);
        let om = seeded_omega(&b, 31);
        let fam = or_fail(build_pseudonorm(&[], &om, 2.0, 4, 1e-10))?;
        let z = StateVector::random_real(b.clone(), 2.0, 0.3, 4);
        let v = or_fail(pseudonorm_eval(&fam, &z))?;
        let n2 = z.sobolev_norm(2.0).powi(2);
        ensure((v - n2).abs() <= 1e-12 * n2, || "N != ||z||^2".into())?;
        let d = or_fail(drift_rate(&fam, &om, &[], &z))?;
        ensure(d == 0.0, || format!("drift = {d:e} for linear flow"))
    });

    run("build-order3-vs-brute-force", &|| {
        // quadratic reversible field on d=1, K=1: N3 is reproducible with
        // the position-wise oracle and a direct coefficient division
        let b = b1(1);
        let om = seeded_omega(&b, 77);
        let mut f2 = PolyVectorField::zero(2, b.dim());
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..8 {
            let out = rng.gen_range(0..b.dim() as u32);
            let key = MultiIndex::from_ids(vec![
                rng.gen_range(0..b.dim() as u32),
                rng.gen_range(0..b.dim() as u32),
            ])
            .unwrap();
            let c = rng.gen::<f64>() - 0.5;
            or_fail(f2.add_term(out, key.clone(), c))?;
            or_fail(f2.add_term(b.conj_id(out), key.conjugate(&b), -c))?;
        }
        let fam = or_fail(build_pseudonorm(
            std::slice::from_ref(&f2),
            &om,
            1.0,
            3,
            1e-10,
        ))?;
        let n2 = squared_sobolev_polynomial(&b, 1.0);
        let g3 = or_fail(brute_force_lie(&f2, &n2))?.scaled(-1.0);
        let n3 = &fam.parts()[1];
        let scale = n3.max_abs_coeff().max(1e-300);
        for (k, a) in g3.terms() {
            let want = a / k.omega_sum(&om);
            ensure(
                (n3.coefficient(k) - want).abs() <= 1e-12 * scale.max(want.abs()),
                || format!("N3 mismatch at {k}"),
            )?;
        }
        Ok(())
    });

    run("nls-field-matches-fourier-oracle", &|| {
        // coefficient of z_{(1,+)} z_{(-1,+)} z_{(0,-)} in F_{(0,+)} for
        // g = (psi conj psi)^2 at K = 1: four ordered arrangements survive
        // the momentum rule, each worth 1/(2 pi)
        let model = build_nls_model(
            1,
            1,
            Potential::Zero,
            &NonlinearitySpec::modulus_only(&[(2, 1.0)]),
            OmegaConvention::Eigenvalue,
        )
        .map_err(|e| e.to_string())?;
        let b = model.basis();
        let f = &model.fields()[0];
        let key = MultiIndex::from_ids(vec![id(b, 1, 1), id(b, -1, 1), id(b, 0, -1)]).unwrap();
        let got = f.coefficient(id(b, 0, 1), &key);
        let want = 4.0 / (2.0 * std::f64::consts::PI);
        ensure((got - want).abs() < 1e-14, || format!("{got} vs {want}"))
    });

    run("model-momentum-selection", &|| {
        let model = test_model();
        let b = model.basis();
        for f in model.fields() {
            for (out, key, _) in f.terms() {
                let m = b.mode(out);
                let mut net: Vec<i64> = m.a.iter().map(|&x| m.delta as i64 * x as i64).collect();
                for &i in key.ids() {
                    let mm = b.mode(i);
                    for (c, &x) in mm.a.iter().enumerate() {
                        net[c] -= mm.delta as i64 * x as i64;
                    }
                }
                ensure(net.iter().all(|&x| x == 0), || {
                    "momentum selection violated".into()
                })?;
            }
        }
        Ok(())
    });

    run("model-field-symmetry", &|| {
        let model = test_model();
        for f in model.fields() {
            ensure(
                f.check_field_symmetry(model.basis(), 1e-12).is_empty(),
                || format!("degree-{} field asymmetric", f.degree()),
            )?;
        }
        Ok(())
    });

    run("gauge-invariant-fields-odd-degree", &|| {
        let model = build_nls_model(
            1,
            2,
            Potential::Uniform { seed: 3 },
            &NonlinearitySpec::modulus_only(&[(2, 1.0), (3, 0.1)]),
            OmegaConvention::Eigenvalue,
        )
        .map_err(|e| e.to_string())?;
        ensure(model.fields().iter().all(|f| f.degree() % 2 == 1), || {
            "even-degree field from modulus powers".into()
        })
    });

    run("coupled-hamiltonian-flag", &|| {
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
        let pots = (
            Potential::Uniform { seed: 5 },
            Potential::Uniform { seed: 6 },
        );
        let m1 = build_coupled_nls_model(1, 2, pots.clone(), &g1, &g2, OmegaConvention::Eigenvalue)
            .map_err(|e| e.to_string())?;
        let m2 = build_coupled_nls_model(1, 2, pots, &g2, &g2, OmegaConvention::Eigenvalue)
            .map_err(|e| e.to_string())?;
        ensure(!m1.hamiltonian && m2.hamiltonian, || {
            "hamiltonian flags wrong".into()
        })
    });

    run("linear-flow-exact-phases", &|| {
        let b = b1(2);
        let om = seeded_omega(&b, 12);
        let model = crate::models::ModelSpec::new(
            b.clone(),
            om,
            vec![],
            true,
            crate::models::ModelProvenance {
                kind: "linear".into(),
                d: 1,
                k: 2,
                n_species: 1,
                potentials: vec![],
                omega_convention: OmegaConvention::Eigenvalue,
                nonlinearity: serde_json::Value::Null,
            },
        );
        let z0 = StateVector::random_real(b.clone(), 2.0, 0.2, 9);
        let traj = or_fail(integrate(
            &model,
            &z0,
            1.5,
            0.05,
            &IntegrateOptions::default(),
        ))?;
        let zt = traj.final_state();
        for i in 0..z0.dim() as u32 {
            let expected = Complex64::from_polar(1.0, -model.omega().omega_id(i) * 1.5) * z0.amp(i);
            ensure((zt.amp(i) - expected).norm() < 1e-13, || {
                "phase drifted".into()
            })?;
        }
        Ok(())
    });

    run("flow-reversibility-and-reality", &|| {
        let model = test_model();
        let z0 = StateVector::random_real(model.basis().clone(), 2.0, 0.1, 15);
        let res = or_fail(check_reversibility_flow(&model, &z0, 0.5, 1e-3, 2.0))?;
        ensure(res <= 1e-9, || format!("reversibility residual {res:.3e}"))?;
        let traj = or_fail(integrate(
            &model,
            &z0,
            0.5,
            1e-3,
            &IntegrateOptions {
                sample_stride: 100,
                ..Default::default()
            },
        ))?;
        for st in &traj.states {
            ensure(st.reality_residual() <= 1e-9 * 0.1, || {
                "reality drifted".into()
            })?;
        }
        Ok(())
    });

    run("drift-matches-symbolic-remainder", &|| {
        let model = test_model();
        let fam = or_fail(build_pseudonorm(
            model.fields(),
            model.omega(),
            2.0,
            3,
            1e-10,
        ))?;
        let remainder = or_fail(remainder_polynomials(&fam, model.fields()))?;
        let z = StateVector::random_real(model.basis().clone(), 2.0, 0.05, 2);
        let a = or_fail(drift_rate(&fam, model.omega(), model.fields(), &z))?;
        let b = or_fail(drift_via_remainder(&remainder, &z))?;
        ensure((a - b).abs() <= 1e-10 * (1.0 + a.abs()), || {
            format!("pointwise {a:e} vs symbolic {b:e}")
        })
    });

    run("drift-matches-time-finite-differences", &|| {
        let model = test_model();
        let fam = or_fail(build_pseudonorm(
            model.fields(),
            model.omega(),
            2.0,
            3,
            1e-10,
        ))?;
        let z0 = StateVector::random_real(model.basis().clone(), 2.0, 0.05, 23);
        let stride = 5usize;
        let dt = 1e-4;
        let traj = or_fail(integrate(
            &model,
            &z0,
            0.02,
            dt,
            &IntegrateOptions {
                sample_stride: stride,
                ..Default::default()
            },
        ))?;
        let fd = or_fail(finite_diff_time_derivative(&fam, &traj))?;
        let sample_dt = stride as f64 * dt;
        let tol = 1e-5f64.max(100.0 * sample_dt * sample_dt);
        for (i, fd_val) in fd.iter().enumerate() {
            let z = &traj.states[i + 1];
            let exact = or_fail(drift_rate(&fam, model.omega(), model.fields(), z))?;
            let scale = exact.abs().max(1e-18);
            ensure((fd_val - exact).abs() <= tol * scale.max(1e-12), || {
                format!("fd {fd_val:e} vs exact {exact:e}")
            })?;
        }
        Ok(())
    });

    run("chain-identity-pointwise-vs-symbolic", &|| {
        let model = test_model();
        let b = model.basis();
        let q = squared_sobolev_polynomial(b, 2.0);
        let z = StateVector::random_real(b.clone(), 2.0, 0.1, 40);
        let direct = or_fail(time_derivative_value(&q, model.omega(), model.fields(), &z))?;
        let mut symbolic = or_fail(omega_derivative(&q, model.omega()))?
            .eval(&z)
            .unwrap();
        for f in model.fields() {
            symbolic += or_fail(lie_derivative(b, f, &q))?.eval(&z).unwrap();
        }
        let symbolic = Complex64::new(0.0, -1.0) * symbolic;
        ensure(
            (direct - symbolic).norm() <= 1e-12 * (1.0 + direct.norm()),
            || format!("{direct} vs {symbolic}"),
        )
    });

    run("theorem-scaling-gap-cubed", &|| {
        let model = test_model();
        let fam = or_fail(build_pseudonorm(
            model.fields(),
            model.omega(),
            2.0,
            3,
            1e-10,
        ))?;
        let zhat = StateVector::random_real(model.basis().clone(), 2.0, 1.0, 11);
        let mut eps = 0.02;
        let (mut xs, mut ys) = (vec![], vec![]);
        for _ in 0..6 {
            let z = zhat.scaled(eps);
            ys.push((or_fail(pseudonorm_eval(&fam, &z))? - eps * eps).abs());
            xs.push(eps);
            eps *= 1.5;
        }
        let fit = fit_loglog(&xs, &ys, false).ok_or("fit failed")?;
        ensure((fit.slope - 3.0).abs() < 0.2, || {
            format!("gap slope {:.3}", fit.slope)
        })
    });

    run("rectangle-resonance-detected", &|| {
        let model = build_nls_model(
            2,
            1,
            Potential::Zero,
            &NonlinearitySpec::modulus_only(&[(2, 1.0)]),
            OmegaConvention::Eigenvalue,
        )
        .map_err(|e| e.to_string())?;
        let scan = scan_nonresonance(model.omega(), 4, 1e-12);
        ensure(scan.report.total_found > 0, || {
            "no resonance found for V = 0".into()
        })
    });

    run("seeded-scan-clean-and-fitted", &|| {
        let model = test_model();
        let scan = scan_nonresonance(model.omega(), 4, 1e-8);
        ensure(scan.report.total_found == 0, || {
            format!("{} resonances at 1e-8", scan.report.total_found)
        })?;
        ensure(scan.fit.gamma > 0.0, || "gamma not positive".into())?;
        for bkt in &scan.buckets {
            let bound = scan.fit.gamma / (bkt.mu_sq as f64).sqrt().powf(scan.fit.alpha);
            ensure(bkt.min_abs >= bound * (1.0 - 1e-9), || {
                "fitted envelope does not lower-bound a bucket".into()
            })?;
        }
        Ok(())
    });

    SelftestReport { checks }
}

fn lie_oracle_case(m: usize, n: usize, seed: u64) -> Check {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let b = b1(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = PolyVectorField::zero(m, b.dim());
    let mut g = ScalarPolynomial::zero(n, b.dim());
    for _ in 0..15 {
        let key = MultiIndex::from_ids((0..m).map(|_| rng.gen_range(0..b.dim() as u32)).collect())
            .unwrap();
        or_fail(f.add_term(
            rng.gen_range(0..b.dim() as u32),
            key,
            rng.gen::<f64>() - 0.5,
        ))?;
        let gkey = MultiIndex::from_ids((0..n).map(|_| rng.gen_range(0..b.dim() as u32)).collect())
            .unwrap();
        or_fail(g.add_term(gkey, rng.gen::<f64>() - 0.5))?;
    }
    let fast = or_fail(lie_derivative(&b, &f, &g))?;
    let slow = or_fail(brute_force_lie(&f, &g))?;
    let scale = fast.max_abs_coeff().max(1e-300);
    for (k, v) in fast.terms() {
        ensure((slow.coefficient(k) - v).abs() <= 1e-12 * scale, || {
            format!("lie mismatch at {k}")
        })?;
    }
    for (k, v) in slow.terms() {
        ensure((fast.coefficient(k) - v).abs() <= 1e-12 * scale, || {
            format!("lie mismatch at {k}")
        })?;
    }
    Ok(())
}
