//! Reference filter on the full 8-dimensional space ancilla 1 ⊗ ancilla 2 ⊗ atom,
//! driven by vacuum, and the map from its state back to the component family.

use crate::error::{Error, Result};
use crate::filter::{Branch, Component, Components, FilterState, ModelParams, KP_EPSILON};
use crate::operator::{dissipator, kron, kron3, partial_trace_ancillas, KetState, Mat2, Mat4, Mat8};
use crate::pulse::{PulseShape, W_EPSILON};
use crate::slh::{build_augmented, hamiltonian_action, AugmentedSystem};

/// Selection matrices of a measurement: homodyne quadratures `f1`, counting `f2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementMatrices {
    pub f1: Mat2,
    pub f2: Mat2,
}

const COMPAT_TOL: f64 = 1e-12;

fn conj(m: &Mat2) -> Mat2 {
    m.adjoint().transpose()
}

/// The three symplectic brackets that must vanish for the outputs to commute.
pub fn compatibility_residuals(f: &MeasurementMatrices) -> [Mat2; 3] {
    let (f1, f2) = (f.f1, f.f2);
    // [A B] [[0, I], [-I, 0]] [C; D] = A D - B C
    [
        f1 * f1.adjoint() - conj(&f1) * f1.transpose(),
        f2 * f1.adjoint() - conj(&f1) * f2.transpose(),
        f2 * f1.transpose() - f1 * f2.transpose(),
    ]
}

pub fn check_compatibility(f: &MeasurementMatrices) -> bool {
    compatibility_residuals(f).iter().all(|m| m.max_abs() <= COMPAT_TOL)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleState {
    pub t: f64,
    pub rho: Mat8,
}

impl OracleState {
    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.rho.hermiticity_error()
    }

    /// Atom excitation probability, read directly from the full state.
    pub fn excitation_probability(&self) -> f64 {
        partial_trace_ancillas(&self.rho, &Mat4::identity())[(0, 0)].re
    }
}

/// Ancillas excited, atom in `eta`.
pub fn build_oracle(params: &ModelParams, t0: f64) -> OracleState {
    let up = KetState::<2>::basis(0).projector();
    OracleState {
        t: t0,
        rho: kron3(&up, &up, &params.eta.projector()),
    }
}

/// The augmented network with its filters.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub system: AugmentedSystem,
}

impl Oracle {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            system: build_augmented(params.kappa1, params.kappa2, params.r, params.pulse1, params.pulse2)?,
        })
    }

    fn lindblad(&self, rho: &Mat8, l: &[Mat8; 2], h: &Mat8) -> Mat8 {
        hamiltonian_action(h, rho) + dissipator(&l[0], rho) + dissipator(&l[1], rho)
    }

    fn homodyne_gain(rho: &Mat8, l: &Mat8) -> (Mat8, f64) {
        let lr = *l * *rho;
        let mean = 2.0 * lr.trace().re;
        (lr + lr.adjoint() - rho.scale_re(mean), mean)
    }

    /// Predicted means of the two homodyne records per unit time.
    pub fn homodyne_means(&self, s: &OracleState) -> (f64, f64) {
        let ops = self.system.at(s.t);
        let m = ops.coupling.map(|l| 2.0 * (l * s.rho).trace().re);
        (m[0], m[1])
    }

    /// Photon-counting intensity of output 2.
    pub fn counting_intensity(&self, s: &OracleState) -> f64 {
        let l = self.system.at(s.t).coupling[1];
        (l.adjoint() * l).trace_with(&s.rho).re
    }

    pub fn hh_step(&self, s: &OracleState, dt: f64, dw1: f64, dw2: f64) -> Result<OracleState> {
        let ops = self.system.at(s.t);
        let (g1, _) = Self::homodyne_gain(&s.rho, &ops.coupling[0]);
        let (g2, _) = Self::homodyne_gain(&s.rho, &ops.coupling[1]);
        let rho = s.rho + self.lindblad(&s.rho, &ops.coupling, &ops.hamiltonian) * dt + g1 * dw1 + g2 * dw2;
        finish(rho, s.t, dt)
    }

    pub fn hp_step(&self, s: &OracleState, dt: f64, dw1: f64, click: bool) -> Result<OracleState> {
        let ops = self.system.at(s.t);
        let l2 = ops.coupling[1];
        let emitted = (l2 * s.rho).mul_adjoint(&l2);
        let intensity = emitted.trace().re;
        if click {
            if intensity <= KP_EPSILON {
                return Err(Error::DegenerateJump { t: s.t, intensity });
            }
            return finish(emitted.scale_re(1.0 / intensity), s.t, dt);
        }
        let (g1, _) = Self::homodyne_gain(&s.rho, &ops.coupling[0]);
        let rho = s.rho + self.lindblad(&s.rho, &ops.coupling, &ops.hamiltonian) * dt + g1 * dw1
            - (emitted - s.rho.scale_re(intensity)) * dt;
        finish(rho, s.t, dt)
    }

    pub fn extract(&self, s: &OracleState) -> Extraction {
        extract_components(s, &self.system.pulses, s.t)
    }
}

fn finish(rho: Mat8, t: f64, dt: f64) -> Result<OracleState> {
    if !rho.is_finite() {
        return Err(Error::IntegrationBlowup { t, dt });
    }
    Ok(OracleState { t: t + dt, rho })
}

/// One component from the full state, or `None` when a pulse weight it
/// divides by is exhausted.
pub fn extract_component(s: &OracleState, pulses: &[PulseShape; 2], t: f64, c: Component) -> Option<Mat2> {
    let w = [pulses[0].w(t), pulses[1].w(t)];
    for (branch, wi) in [(c.first, w[0]), (c.second, w[1])] {
        if branch != Branch::B11 && wi < W_EPSILON {
            return None;
        }
    }
    let q: Mat4 = kron(&c.first.weight_operator(), &c.second.weight_operator()).expect("2 x 2 = 4");
    let m = partial_trace_ancillas(&s.rho, &q).adjoint();
    Some(m.scale_re(1.0 / (c.first.weight(w[0]) * c.second.weight(w[1]))))
}

/// Stored components recovered from an oracle state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extraction {
    pub t: f64,
    pub components: [Option<Mat2>; 10],
}

pub fn extract_components(s: &OracleState, pulses: &[PulseShape; 2], t: f64) -> Extraction {
    Extraction {
        t,
        components: Component::INDEPENDENT.map(|c| extract_component(s, pulses, t, c)),
    }
}

impl Extraction {
    pub fn top(&self) -> Mat2 {
        self.components[0].expect("the 11;11 component needs no pulse weight")
    }

    pub fn excitation_probability(&self) -> f64 {
        self.top()[(0, 0)].re
    }

    pub fn to_state(&self) -> Result<FilterState> {
        let mut rho = Components::zeros();
        for (i, (c, m)) in Component::INDEPENDENT.iter().zip(&self.components).enumerate() {
            rho[i] = m.ok_or(Error::ComponentUnavailable {
                component: c.name(),
                t: self.t,
            })?;
        }
        Ok(FilterState { t: self.t, rho })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{self, excitation_probability, init_state, Filter, HpJumpForm};
    use crate::operator::testing::{random_density, rng};
    use crate::operator::{ground_projector, ONE, ZERO};
    use num_complex::Complex64;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_params(r: f64) -> ModelParams {
        ModelParams {
            kappa1: 1.0,
            kappa2: 0.6,
            r,
            pulse1: PulseShape::Gaussian { omega: 1.46, tau: 3.0 },
            pulse2: PulseShape::Gaussian { omega: 2.92, tau: 4.0 },
            eta: KetState::plus(),
        }
    }

    /// Evolves the oracle with random noise to a generic state.
    fn generic_state(oracle: &Oracle, p: &ModelParams, t_end: f64, seed: u64) -> OracleState {
        let mut noise = rng(seed);
        let dt = 1e-3;
        let mut s = build_oracle(p, -2.0);
        while s.t < t_end {
            let dw1: f64 = StandardNormal.sample(&mut noise);
            let dw2: f64 = StandardNormal.sample(&mut noise);
            s = oracle.hh_step(&s, dt, dw1 * dt.sqrt(), dw2 * dt.sqrt()).unwrap();
            // keep the state normalized so it stays a density matrix
            s.rho = s.rho.scale_re(1.0 / s.trace());
        }
        s
    }

    #[test]
    fn compatibility_examples() {
        let identity = MeasurementMatrices {
            f1: Mat2::identity(),
            f2: Mat2::zeros(),
        };
        assert!(check_compatibility(&identity));
        let split = MeasurementMatrices {
            f1: Mat2::diag([1.0, 0.0]),
            f2: Mat2::diag([0.0, 1.0]),
        };
        assert!(check_compatibility(&split));
        let quadratures = MeasurementMatrices {
            f1: Mat2::from_rows([[ONE, ZERO], [Complex64::new(0.0, 1.0), ZERO]]),
            f2: Mat2::zeros(),
        };
        assert!(!check_compatibility(&quadratures));
    }

    #[test]
    fn compatibility_matches_block_evaluation() {
        // Literal 2x4 · 4x4 · 4x2 products with explicit block matrices.
        fn block(a: &Mat2, b: &Mat2, c: &Mat2, d: &Mat2) -> Mat2 {
            let row = |m: &Mat2, n: &Mat2, i: usize| -> [Complex64; 4] { [m[(i, 0)], m[(i, 1)], n[(i, 0)], n[(i, 1)]] };
            let mut j = [[ZERO; 4]; 4];
            for k in 0..2 {
                j[k][k + 2] = ONE;
                j[k + 2][k] = -ONE;
            }
            let mut out = Mat2::zeros();
            for i in 0..2 {
                let left = row(a, b, i);
                for col in 0..2 {
                    let right = [c[(0, col)], c[(1, col)], d[(0, col)], d[(1, col)]];
                    let mut acc = ZERO;
                    for p in 0..4 {
                        for q in 0..4 {
                            acc += left[p] * j[p][q] * right[q];
                        }
                    }
                    out[(i, col)] = acc;
                }
            }
            out
        }
        let mut r = rng(41);
        let mut mixed = 0;
        for k in 0..100 {
            let entry = |r: &mut rand_chacha::ChaCha8Rng| {
                // small integer entries make the compatible case reachable
                Complex64::new(r.random_range(-1..=1) as f64, if k % 2 == 0 { 0.0 } else { r.random_range(-1..=1) as f64 })
            };
            let f = MeasurementMatrices {
                f1: Mat2::from_fn(|_, _| entry(&mut r)),
                f2: Mat2::from_fn(|_, _| entry(&mut r)),
            };
            let (f1, f2) = (f.f1, f.f2);
            let expected = [
                block(&f1, &conj(&f1), &f1.transpose(), &f1.adjoint()),
                block(&f2, &conj(&f1), &f2.transpose(), &f1.adjoint()),
                block(&f2, &f1, &f2.transpose(), &f1.transpose()),
            ];
            let brute = expected.iter().all(|m| m.max_abs() <= COMPAT_TOL);
            assert_eq!(check_compatibility(&f), brute);
            mixed += brute as usize;
        }
        assert!(mixed > 0, "sample should contain compatible pairs");
    }

    #[test]
    fn initial_state_and_extraction() {
        let p = gaussian_params(0.5);
        let t0 = 3.0 - 6.0 / 1.46;
        let s = build_oracle(&p, t0);
        assert!((s.trace() - 1.0).abs() < 1e-15);
        assert_eq!(s.rho.dim(), 8);
        let extracted = extract_components(&s, &p.pulses(), t0).to_state().unwrap();
        let expected = init_state(&p, t0);
        assert!((extracted.rho - expected.rho).max_abs() < 1e-8);
    }

    #[test]
    fn product_state_extraction() {
        let mut r = rng(42);
        let atom: Mat2 = random_density(&mut r);
        let up = KetState::<2>::basis(0).projector();
        let s = OracleState {
            t: -100.0,
            rho: kron3(&up, &up, &atom),
        };
        let pulses = [PulseShape::RisingExp { gamma: 1.0 }, PulseShape::Vacuum];
        let e = extract_components(&s, &pulses, -100.0);
        let c00 = e.components[9].unwrap();
        assert!(c00.max_abs_diff(&atom) < 1e-12);
        let c11 = e.top();
        assert!(c11.max_abs_diff(&partial_trace_ancillas(&s.rho, &Mat4::identity())) < 1e-15);
    }

    #[test]
    fn exhausted_components_are_flagged() {
        let p = ModelParams {
            pulse1: PulseShape::RisingExp { gamma: 1.0 },
            ..gaussian_params(0.5)
        };
        let s = build_oracle(&p, 1.0);
        let e = extract_components(&s, &p.pulses(), 1.0);
        assert!(e.components[0].is_some());
        assert!(e.components[1].is_none());
        assert!(e.components[3].is_some(), "11;10 only needs the second pulse");
        assert!(matches!(e.to_state(), Err(Error::ComponentUnavailable { component: "10;11", .. })));
    }

    #[test]
    fn idle_without_coupling() {
        let p = ModelParams {
            kappa1: 0.0,
            kappa2: 0.0,
            pulse1: PulseShape::Vacuum,
            pulse2: PulseShape::Vacuum,
            ..gaussian_params(0.3)
        };
        let o = Oracle::new(&p).unwrap();
        let s = build_oracle(&p, 0.0);
        let next = o.hh_step(&s, 1e-2, 0.0, 0.0).unwrap();
        assert_eq!(next.rho, s.rho);
    }

    #[test]
    fn counting_from_excited_atom() {
        let p = ModelParams {
            kappa1: 0.8,
            kappa2: 0.3,
            r: 1.0,
            pulse1: PulseShape::Vacuum,
            pulse2: PulseShape::Vacuum,
            eta: KetState::excited(),
        };
        let o = Oracle::new(&p).unwrap();
        let s = build_oracle(&p, 0.0);
        assert!((o.counting_intensity(&s) - 0.8).abs() < 1e-15);
        let after = o.hp_step(&s, 1e-3, 0.0, true).unwrap();
        let atom = partial_trace_ancillas(&after.rho, &Mat4::identity());
        assert!(atom.max_abs_diff(&ground_projector()) < 1e-15);
        assert!((after.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adjoint_pairings_of_extracted_components() {
        let p = gaussian_params(0.4);
        let o = Oracle::new(&p).unwrap();
        let s = generic_state(&o, &p, 3.2, 43);
        for c in Component::all() {
            let a = extract_component(&s, &p.pulses(), s.t, c).unwrap();
            let b = extract_component(&s, &p.pulses(), s.t, c.dagger()).unwrap();
            assert!(a.max_abs_diff(&b.adjoint()) < 1e-8, "{c}");
        }
    }

    #[test]
    fn homodyne_means_agree() {
        let p = gaussian_params(0.7);
        let o = Oracle::new(&p).unwrap();
        let f = Filter::new(p).unwrap();
        for (t, seed) in [(2.0, 1), (3.0, 2), (4.5, 3)] {
            let s = generic_state(&o, &p, t, seed);
            let fs = o.extract(&s).to_state().unwrap();
            let (a1, a2) = o.homodyne_means(&s);
            let (b1, b2) = f.homodyne_means(&fs);
            assert!((a1 - b1).abs() < 1e-10 && (a2 - b2).abs() < 1e-10);
        }
    }

    #[test]
    fn homodyne_gains_agree_exactly() {
        // A zero-length step with a unit innovation isolates the gain.
        let p = gaussian_params(0.35);
        let o = Oracle::new(&p).unwrap();
        let f = Filter::new(p).unwrap();
        let s = generic_state(&o, &p, 3.4, 44);
        let before = o.extract(&s).to_state().unwrap();
        for (dw1, dw2) in [(1.0, 0.0), (0.0, 1.0)] {
            let eps = 1e-3;
            let stepped = o.hh_step(&s, 0.0, dw1 * eps, dw2 * eps).unwrap();
            let after = o.extract(&stepped).to_state().unwrap();
            let oracle_gain = (after.rho - before.rho) * (1.0 / eps);
            let filter_gain = (f.hh_step(&before, 0.0, dw1, dw2).unwrap().rho) - before.rho;
            assert!((oracle_gain - filter_gain).max_abs() < 1e-10);
        }
    }

    #[test]
    fn drift_agrees_with_oracle_finite_difference() {
        let p = gaussian_params(0.6);
        let o = Oracle::new(&p).unwrap();
        let s = generic_state(&o, &p, 2.8, 45);
        let before = o.extract(&s).to_state().unwrap();
        let dt = 1e-6;
        let after = o.extract(&o.hh_step(&s, dt, 0.0, 0.0).unwrap()).to_state().unwrap();
        let fd = (after.rho - before.rho) * (1.0 / dt);
        let drift = filter::drift_increment(&before, &p, s.t);
        assert!((fd - drift).max_abs() < 1e-4 * drift.max_abs().max(1.0));
    }

    #[test]
    fn derived_jump_agrees_with_oracle() {
        let p = gaussian_params(0.45);
        let o = Oracle::new(&p).unwrap();
        let f = Filter::new(p).unwrap().with_jump_form(HpJumpForm::Derived);
        for (t, seed) in [(2.5, 4), (3.3, 5), (4.1, 6)] {
            let s = generic_state(&o, &p, t, seed);
            let fs = o.extract(&s).to_state().unwrap();
            let kp = f.k_signals(&fs).kp_raw;
            assert!((kp - o.counting_intensity(&s)).abs() < 1e-10);
            let jumped = o.extract(&o.hp_step(&s, 0.0, 0.0, true).unwrap()).to_state().unwrap();
            let filtered = f.hp_step(&fs, 0.0, 0.0, true).unwrap();
            assert!((jumped.rho - filtered.rho).max_abs() < 1e-9);
        }
    }

    #[test]
    fn printed_jump_departs_from_oracle() {
        let p = gaussian_params(0.45);
        let o = Oracle::new(&p).unwrap();
        let f = Filter::new(p).unwrap().with_jump_form(HpJumpForm::AsPrinted);
        let s = generic_state(&o, &p, 3.3, 5);
        let fs = o.extract(&s).to_state().unwrap();
        let kp = f.k_signals(&fs).kp_raw;
        assert!((kp - o.counting_intensity(&s)).abs() > 1e-3);
    }

    #[test]
    fn excitation_probability_consistent() {
        let p = gaussian_params(0.5);
        let o = Oracle::new(&p).unwrap();
        let s = generic_state(&o, &p, 3.0, 46);
        let fs = o.extract(&s).to_state().unwrap();
        assert!((s.excitation_probability() - excitation_probability(&fs)).abs() < 1e-14);
    }
}
