//! Exact derivatives of circuit expectations with respect to φ and λ.
//!
//! Two routes: the parameter-shift rule (two shifted circuit runs per gate) and adjoint
//! differentiation (one forward and one backward sweep for a whole weighted observable).
//! They agree to rounding; the tests cross-check them against each other and against
//! finite differences.

use num_complex::Complex64;

use super::{build_circuit, AngleSource, Circuit, ParamGroup, ParamVector, PqcTopology};
use crate::qsim::{ObservableSpec, StateVector, Term};
use crate::{Error, Result};

pub const PARAMETER_SHIFT: f64 = std::f64::consts::FRAC_PI_2;

/// Chain-rule factor `∂angle/∂param` and the flat (φ then λ) column of a gate's parameter.
fn source_column(src: AngleSource, n_phi: usize) -> Option<(usize, f64)> {
    match src {
        AngleSource::Fixed => None,
        AngleSource::Phi(i) => Some((i, 1.0)),
        AngleSource::Lam { index, input } => Some((n_phi + index, input)),
    }
}

/// `∂⟨obs⟩/∂θ_index` for a φ or λ coordinate by the ±π/2 shift rule. For λ the shift is
/// applied to the effective angle `λ·s_j` and the result multiplied by `s_j`.
pub fn parameter_shift_derivative(
    s: &[f64],
    params: &ParamVector,
    topo: &PqcTopology,
    obs: &ObservableSpec,
    index: usize,
) -> Result<f64> {
    parameter_shift_derivative_with(s, params, topo, obs, index, PARAMETER_SHIFT)
}

/// Same as [`parameter_shift_derivative`] with a caller-chosen shift in
/// `(⟨obs⟩_{+shift} − ⟨obs⟩_{−shift})/2`. Only `π/2` is exact; other values exist so
/// gradient checks can be shown to fail.
pub fn parameter_shift_derivative_with(
    s: &[f64],
    params: &ParamVector,
    topo: &PqcTopology,
    obs: &ObservableSpec,
    index: usize,
    shift: f64,
) -> Result<f64> {
    let column = match params.locate(index)? {
        (ParamGroup::Phi, i) => i,
        (ParamGroup::Lam, i) => topo.n_phi() + i,
        (ParamGroup::W, _) => {
            return Err(Error::Index(format!("index {index} is an observable weight; use observable_weight_derivative")))
        }
    };
    let circuit = build_circuit(topo, s, &params.phi, &params.lam)?;
    obs.check_qubits(topo.n_qubits())?;
    let mut d = 0.0;
    for (at, src) in circuit.sources.iter().enumerate() {
        if let Some((col, factor)) = source_column(*src, topo.n_phi()) {
            if col == column {
                let plus = observable_value(&circuit.run_shifted(at, shift), obs);
                let minus = observable_value(&circuit.run_shifted(at, -shift), obs);
                d += factor * (plus - minus) / 2.0;
            }
        }
    }
    Ok(d)
}

fn observable_value(psi: &StateVector, obs: &ObservableSpec) -> f64 {
    obs.terms().iter().map(|(w, t)| w * t.expectation_unchecked(psi)).sum()
}

/// `∂⟨O_a⟩/∂w_{a,i} = ⟨ψ|H_{a,i}|ψ⟩`.
pub fn observable_weight_derivative(s: &[f64], params: &ParamVector, topo: &PqcTopology, term: &Term) -> Result<f64> {
    let psi = super::prepare_state(topo, s, params)?;
    term.expectation(&psi)
}

/// Jacobian `J[t][j] = ∂⟨terms[t]⟩/∂θ_j` over the φ then λ coordinates, by parameter shift.
pub fn expectation_jacobian(circuit: &Circuit, terms: &[Term], n_phi: usize, n_lam: usize) -> Vec<Vec<f64>> {
    let mut jac = vec![vec![0.0; n_phi + n_lam]; terms.len()];
    for (at, src) in circuit.sources.iter().enumerate() {
        let Some((col, factor)) = source_column(*src, n_phi) else { continue };
        let plus = circuit.run_shifted(at, PARAMETER_SHIFT);
        let minus = circuit.run_shifted(at, -PARAMETER_SHIFT);
        for (row, t) in jac.iter_mut().zip(terms) {
            row[col] += factor * (t.expectation_unchecked(&plus) - t.expectation_unchecked(&minus)) / 2.0;
        }
    }
    jac
}

/// `Σ_t c_t ∇⟨H_t⟩` over the φ then λ coordinates in a single adjoint sweep.
pub fn adjoint_vjp(circuit: &Circuit, weighted: &[(f64, &Term)], n_phi: usize, n_lam: usize) -> Vec<f64> {
    let mut grad = vec![0.0; n_phi + n_lam];
    let mut phi = circuit.run();
    let dim = phi.dim();
    let mut acc = vec![Complex64::new(0.0, 0.0); dim];
    for &(c, t) in weighted {
        if c == 0.0 {
            continue;
        }
        let h_phi = t.apply_to(&phi);
        for (a, b) in acc.iter_mut().zip(h_phi.amplitudes()) {
            *a += c * b;
        }
    }
    let mut lam = StateVector::from_raw(circuit.n_qubits, acc);
    let mut scratch = phi.clone();
    for (gate, src) in circuit.gates.iter().zip(&circuit.sources).rev() {
        if let Some((col, factor)) = source_column(*src, n_phi) {
            scratch.amps_mut().copy_from_slice(phi.amplitudes());
            scratch.apply_generator(gate);
            // d⟨M⟩/dθ = 2 Re⟨λ|(−i/2) G|φ⟩ = Im⟨λ|G|φ⟩
            grad[col] += factor * lam.inner(&scratch).im;
        }
        let inv = gate.inverse();
        phi.apply_unchecked(&inv);
        lam.apply_unchecked(&inv);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::super::Entangler;
    use super::*;
    use crate::qsim::{Pauli, PauliString};
    use crate::rng_from_seed;
    use rand::Rng;

    fn z(q: usize) -> ObservableSpec {
        ObservableSpec::single(Term::Pauli(PauliString::zs(&[q]).unwrap()))
    }

    fn expectation(s: &[f64], p: &ParamVector, t: &PqcTopology, obs: &ObservableSpec) -> f64 {
        super::super::prepare_state(t, s, p).unwrap().expectation(obs).unwrap()
    }

    fn central_difference(s: &[f64], p: &ParamVector, t: &PqcTopology, obs: &ObservableSpec, j: usize) -> f64 {
        let h = 1e-5;
        let mut up = p.clone();
        up.set(j, p.get(j).unwrap() + h).unwrap();
        let mut down = p.clone();
        down.set(j, p.get(j).unwrap() - h).unwrap();
        (expectation(s, &up, t, obs) - expectation(s, &down, t, obs)) / (2.0 * h)
    }

    #[test]
    fn single_ry_matches_minus_sine() {
        let t = PqcTopology::new(1, 0, Entangler::OneToOne, false, 0).unwrap().without_hadamard_prefix();
        for theta in [0.0, 0.3, 1.7, 3.0, 5.5] {
            let p = ParamVector::new(&t, 0, vec![0.9, theta], vec![], vec![]).unwrap();
            let d = parameter_shift_derivative(&[], &p, &t, &z(0), 1).unwrap();
            let shift_formula = ((theta + PARAMETER_SHIFT).cos() - (theta - PARAMETER_SHIFT).cos()) / 2.0;
            assert!((d + theta.sin()).abs() < 1e-12);
            assert!((d - shift_formula).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_scale_chain_rule() {
        // φ = 0 leaves Rz(λ1 s) Ry(λ0 s)|0⟩, so ⟨Z⟩ = cos(λ0 s)
        let t = PqcTopology::new(1, 1, Entangler::OneToOne, false, 1).unwrap().without_hadamard_prefix();
        for (lam, s) in [(1.0, 0.4), (0.7, -2.0), (2.5, 1.1)] {
            let p = ParamVector::new(&t, 0, vec![0.0; 4], vec![lam, 0.3], vec![]).unwrap();
            let d = parameter_shift_derivative(&[s], &p, &t, &z(0), 4).unwrap();
            assert!((d + s * (lam * s).sin()).abs() < 1e-12, "λ={lam} s={s}");
        }
    }

    #[test]
    fn unreachable_parameters_have_zero_derivative() {
        // final-layer rotations of qubit 1 commute with Z0 through the closing CZ
        let t = PqcTopology::new(2, 2, Entangler::OneToOne, false, 2).unwrap();
        let mut rng = rng_from_seed(0);
        let p = ParamVector::init(&t, 0, &mut rng);
        let last = 2 * t.phi_per_layer();
        for j in [last + 1, last + 3] {
            let d = parameter_shift_derivative(&[0.2, -0.4], &p, &t, &z(0), j).unwrap();
            assert!(d.abs() < 1e-10);
        }
    }

    #[test]
    fn weight_index_and_range_errors() {
        let t = PqcTopology::new(1, 0, Entangler::OneToOne, false, 0).unwrap();
        let p = ParamVector::new(&t, 1, vec![0.0, 0.0], vec![], vec![1.0]).unwrap();
        assert!(matches!(parameter_shift_derivative(&[], &p, &t, &z(0), 2), Err(Error::Index(_))));
        assert!(matches!(parameter_shift_derivative(&[], &p, &t, &z(0), 3), Err(Error::Index(_))));
    }

    #[test]
    fn weight_derivative_examples() {
        let t = PqcTopology::new(1, 0, Entangler::OneToOne, false, 0).unwrap().without_hadamard_prefix();
        let p = ParamVector::new(&t, 0, vec![0.4, 0.0], vec![], vec![]).unwrap();
        let zt = Term::Pauli(PauliString::zs(&[0]).unwrap());
        assert!((observable_weight_derivative(&[], &p, &t, &zt).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(observable_weight_derivative(&[], &p, &t, &Term::projector(vec![])).unwrap(), 0.0);

        let t = PqcTopology::new(3, 2, Entangler::Circular, false, 3).unwrap();
        let mut rng = rng_from_seed(0);
        let p = ParamVector::init(&t, 0, &mut rng);
        let s = [0.1, 0.5, -0.3];
        let zz = Term::Pauli(PauliString::zs(&[0, 1]).unwrap());
        let psi = super::super::prepare_state(&t, &s, &p).unwrap();
        let direct: f64 = psi
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, a)| if ((i >> 2) ^ (i >> 1)) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum();
        assert!((observable_weight_derivative(&s, &p, &t, &zz).unwrap() - direct).abs() < 1e-12);
    }

    fn random_setup(rng: &mut crate::SimRng) -> (PqcTopology, ParamVector, Vec<f64>, ObservableSpec) {
        let n = rng.random_range(1..=4);
        let d = rng.random_range(0..=5);
        let ent = [Entangler::OneToOne, Entangler::Circular, Entangler::AllToAll][rng.random_range(0..3)];
        let trainable = rng.random::<bool>();
        let input_dim = rng.random_range(1..=2 * n);
        let t = PqcTopology::new(n, d, ent, trainable, input_dim).unwrap();
        let mut p = ParamVector::init(&t, 0, rng);
        for l in &mut p.lam {
            *l = rng.random_range(-2.0..2.0);
        }
        let s: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let q = rng.random_range(0..n);
        let paulis = [Pauli::X, Pauli::Y, Pauli::Z];
        let mut ops = vec![(q, paulis[rng.random_range(0..3)])];
        if n > 1 {
            ops.push(((q + 1) % n, Pauli::Z));
        }
        let obs = ObservableSpec::new(vec![
            (rng.random_range(0.5..2.0), Term::Pauli(PauliString::new(ops).unwrap())),
            (rng.random_range(-1.0..1.0), Term::projector(vec![0, (1 << n) - 1])),
        ]);
        (t, p, s, obs)
    }

    #[test]
    fn parameter_shift_matches_finite_differences() {
        let mut rng = rng_from_seed(7);
        for _ in 0..100 {
            let (t, p, s, obs) = random_setup(&mut rng);
            let j = rng.random_range(0..t.n_phi() + t.n_lam());
            let ps = parameter_shift_derivative(&s, &p, &t, &obs, j).unwrap();
            let fd = central_difference(&s, &p, &t, &obs, j);
            assert!((ps - fd).abs() <= 1e-5 * fd.abs().max(1e-4), "ps={ps} fd={fd}");
        }
    }

    #[test]
    fn adjoint_matches_parameter_shift() {
        let mut rng = rng_from_seed(8);
        for _ in 0..50 {
            let (t, p, s, obs) = random_setup(&mut rng);
            let c = build_circuit(&t, &s, &p.phi, &p.lam).unwrap();
            let terms: Vec<Term> = obs.terms().iter().map(|(_, t)| t.clone()).collect();
            let jac = expectation_jacobian(&c, &terms, t.n_phi(), t.n_lam());
            let weighted: Vec<(f64, &Term)> = obs.terms().iter().map(|(w, t)| (*w, t)).collect();
            let adj = adjoint_vjp(&c, &weighted, t.n_phi(), t.n_lam());
            for j in 0..t.n_phi() + t.n_lam() {
                let ps = parameter_shift_derivative(&s, &p, &t, &obs, j).unwrap();
                let from_jac: f64 = obs.terms().iter().zip(&jac).map(|((w, _), row)| w * row[j]).sum();
                assert!((adj[j] - ps).abs() < 1e-10);
                assert!((from_jac - ps).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_shift_is_wrong() {
        let t = PqcTopology::new(1, 0, Entangler::OneToOne, false, 0).unwrap().without_hadamard_prefix();
        let p = ParamVector::new(&t, 0, vec![0.0, 1.0], vec![], vec![]).unwrap();
        let d = parameter_shift_derivative_with(&[], &p, &t, &z(0), 1, std::f64::consts::FRAC_PI_4).unwrap();
        assert!((d + 1f64.sin()).abs() > 0.1);
    }
}
