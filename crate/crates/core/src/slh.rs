//! (S, L, H) triples on the 8-dimensional space ancilla 1 ⊗ ancilla 2 ⊗ atom,
//! their concatenation and series products, and the augmented network that
//! replaces the two photon sources by ancilla generators.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{kron3, sigma_minus, Mat2, Mat8, I, ONE, ZERO};
use crate::pulse::PulseShape;

/// Time-dependent operator on the full 8-dimensional space.
#[derive(Clone)]
pub struct OperatorFn(Arc<dyn Fn(f64) -> Mat8 + Send + Sync>);

impl OperatorFn {
    pub fn new(f: impl Fn(f64) -> Mat8 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(m: Mat8) -> Self {
        Self::new(move |_| m)
    }

    pub fn zero() -> Self {
        Self::constant(Mat8::zeros())
    }

    pub fn eval(&self, t: f64) -> Mat8 {
        (self.0)(t)
    }
}

impl fmt::Debug for OperatorFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("OperatorFn(..)")
    }
}

/// Scattering matrix, row-major `n × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scattering {
    n: usize,
    entries: Vec<Complex64>,
}

impl Scattering {
    pub fn identity(n: usize) -> Self {
        let mut entries = vec![ZERO; n * n];
        for i in 0..n {
            entries[i * n + i] = ONE;
        }
        Self { n, entries }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Ok(Self {
            n,
            entries: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn channels(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.n + j]
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::ChannelMismatch {
                left: self.n,
                right: other.n,
            });
        }
        let n = self.n;
        let entries = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum()
            })
            .collect();
        Ok(Self { n, entries })
    }

    pub fn block_diag(&self, other: &Self) -> Self {
        let n = self.n + other.n;
        let mut entries = vec![ZERO; n * n];
        for i in 0..self.n {
            for j in 0..self.n {
                entries[i * n + j] = self.get(i, j);
            }
        }
        for i in 0..other.n {
            for j in 0..other.n {
                entries[(self.n + i) * n + self.n + j] = other.get(i, j);
            }
        }
        Self { n, entries }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let entries = (0..n * n).map(|idx| self.get(idx % n, idx / n).conj()).collect();
        Self { n, entries }
    }

    /// `max |S^† S - I|` and `max |S S^† - I|`, whichever is larger.
    pub fn unitarity_error(&self) -> f64 {
        let id = Self::identity(self.n);
        let err = |m: Self| {
            m.entries
                .iter()
                .zip(&id.entries)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let a = self.adjoint();
        err(a.product(self).expect("same size")).max(err(self.product(&a).expect("same size")))
    }
}

#[derive(Clone, Debug)]
pub struct SlhTriple {
    pub scattering: Scattering,
    pub coupling: Vec<OperatorFn>,
    pub hamiltonian: OperatorFn,
}

impl SlhTriple {
    pub fn new(scattering: Scattering, coupling: Vec<OperatorFn>, hamiltonian: OperatorFn) -> Result<Self> {
        if coupling.len() != scattering.channels() {
            return Err(Error::ChannelMismatch {
                left: scattering.channels(),
                right: coupling.len(),
            });
        }
        Ok(Self {
            scattering,
            coupling,
            hamiltonian,
        })
    }

    /// `(I_n, 0, 0)`.
    pub fn identity(n: usize) -> Self {
        Self {
            scattering: Scattering::identity(n),
            coupling: vec![OperatorFn::zero(); n],
            hamiltonian: OperatorFn::zero(),
        }
    }

    pub fn channels(&self) -> usize {
        self.scattering.channels()
    }

    pub fn coupling_at(&self, t: f64) -> Vec<Mat8> {
        self.coupling.iter().map(|l| l.eval(t)).collect()
    }

    pub fn hamiltonian_at(&self, t: f64) -> Mat8 {
        self.hamiltonian.eval(t)
    }
}

/// `Im{M} = (M - M^†) / 2i`.
pub fn operator_imag(m: &Mat8) -> Mat8 {
    (*m - m.adjoint()).scale(Complex64::new(0.0, -0.5))
}

/// Side-by-side composition `G1 ⊞ G2`.
pub fn concatenate(g1: &SlhTriple, g2: &SlhTriple) -> SlhTriple {
    let (h1, h2) = (g1.hamiltonian.clone(), g2.hamiltonian.clone());
    SlhTriple {
        scattering: g1.scattering.block_diag(&g2.scattering),
        coupling: g1.coupling.iter().chain(&g2.coupling).cloned().collect(),
        hamiltonian: OperatorFn::new(move |t| h1.eval(t) + h2.eval(t)),
    }
}

/// Cascade `G2 ◁ G1`: the output of `g1` feeds `g2`.
pub fn series(g2: &SlhTriple, g1: &SlhTriple) -> Result<SlhTriple> {
    if g1.channels() != g2.channels() {
        return Err(Error::ChannelMismatch {
            left: g2.channels(),
            right: g1.channels(),
        });
    }
    let n = g1.channels();
    let s2 = g2.scattering.clone();
    let scattering = s2.product(&g1.scattering)?;

    let coupling = (0..n)
        .map(|i| {
            let l2 = g2.coupling[i].clone();
            let l1 = g1.coupling.clone();
            let s2 = s2.clone();
            OperatorFn::new(move |t| l2.eval(t) + mixed(i, t, &l1, &s2))
        })
        .collect();

    let (h1, h2) = (g1.hamiltonian.clone(), g2.hamiltonian.clone());
    let (l1, l2) = (g1.coupling.clone(), g2.coupling.clone());
    let hamiltonian = OperatorFn::new(move |t| {
        let cross = (0..n).fold(Mat8::zeros(), |acc, i| {
            acc + l2[i].eval(t).adjoint() * mixed(i, t, &l1, &s2)
        });
        h1.eval(t) + h2.eval(t) + operator_imag(&cross)
    });

    Ok(SlhTriple {
        scattering,
        coupling,
        hamiltonian,
    })
}

/// `(S2 L1)_i` at time `t`.
fn mixed(i: usize, t: f64, l1: &[OperatorFn], s2: &Scattering) -> Mat8 {
    (0..l1.len()).fold(Mat8::zeros(), |acc, j| acc + l1[j].eval(t).scale(s2.get(i, j)))
}

/// Two-port beam splitter with real mixing parameter `r ∈ [0, 1]`.
pub fn beam_splitter(r: f64) -> Result<SlhTriple> {
    let s = beam_splitter_matrix(r)?;
    let rows = s.map(|row| row.map(|x| Complex64::new(x, 0.0)).to_vec());
    SlhTriple::new(
        Scattering::from_rows(&rows)?,
        vec![OperatorFn::zero(), OperatorFn::zero()],
        OperatorFn::zero(),
    )
}

pub fn beam_splitter_matrix(r: f64) -> Result<[[f64; 2]; 2]> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid("r", format!("must lie in [0, 1], got {r}")));
    }
    let c = (1.0 - r * r).sqrt();
    Ok([[c, r], [-r, c]])
}

/// Lowering operators embedded in the 8-dimensional space.
pub fn embedded_lowering() -> [Mat8; 3] {
    let id = Mat2::identity();
    let sm = sigma_minus();
    [kron3(&sm, &id, &id), kron3(&id, &sm, &id), kron3(&id, &id, &sm)]
}

/// Operators of the augmented network at one instant.
#[derive(Clone, Copy, Debug)]
pub struct AugmentedOperators {
    pub scattering: [[f64; 2]; 2],
    pub coupling: [Mat8; 2],
    pub hamiltonian: Mat8,
}

/// Atom plus two ancilla photon generators, followed by a beam splitter.
#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    pub kappa: [f64; 2],
    pub r: f64,
    pub pulses: [PulseShape; 2],
    scattering: [[f64; 2]; 2],
    anc_lowering: [Mat8; 2],
    atom_lowering: Mat8,
}

pub fn build_augmented(
    kappa1: f64,
    kappa2: f64,
    r: f64,
    pulse1: PulseShape,
    pulse2: PulseShape,
) -> Result<AugmentedSystem> {
    for (name, k) in [("kappa1", kappa1), ("kappa2", kappa2)] {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::invalid(name, format!("must be a non-negative rate, got {k}")));
        }
    }
    pulse1.validate()?;
    pulse2.validate()?;
    let [a1, a2, atom] = embedded_lowering();
    Ok(AugmentedSystem {
        kappa: [kappa1, kappa2],
        r,
        pulses: [pulse1, pulse2],
        scattering: beam_splitter_matrix(r)?,
        anc_lowering: [a1, a2],
        atom_lowering: atom,
    })
}

impl AugmentedSystem {
    /// Closed-form `(S_t, L_t(t), H_t(t))`.
    pub fn at(&self, t: f64) -> AugmentedOperators {
        let lambda = [self.pulses[0].lambda(t), self.pulses[1].lambda(t)];
        let sqk = [self.kappa[0].sqrt(), self.kappa[1].sqrt()];
        let sm = self.atom_lowering;
        let sp = sm.adjoint();

        let anc: [Mat8; 2] = [0, 1].map(|i| self.anc_lowering[i].scale(lambda[i]));
        let pre: [Mat8; 2] = [0, 1].map(|i| anc[i] + sm.scale_re(sqk[i]));
        let s = self.scattering;
        let coupling = [0, 1].map(|i| pre[0].scale_re(s[i][0]) + pre[1].scale_re(s[i][1]));

        let mut h = Mat8::zeros();
        for i in 0..2 {
            h += (sp * anc[i]).scale_re(sqk[i]) - (anc[i].adjoint() * sm).scale_re(sqk[i]);
        }
        let hamiltonian = h.scale(Complex64::new(0.0, -0.5));

        AugmentedOperators {
            scattering: s,
            coupling,
            hamiltonian,
        }
    }

    /// The same network assembled from the primitive products,
    /// `S_b ◁ G_atom ◁ (A1 ⊞ A2)`.
    pub fn composed(&self) -> Result<SlhTriple> {
        let [a1, a2] = self.anc_lowering;
        let ancilla = |low: Mat8, p: PulseShape| {
            SlhTriple::new(
                Scattering::identity(1),
                vec![OperatorFn::new(move |t| low.scale(p.lambda(t)))],
                OperatorFn::zero(),
            )
        };
        let generators = concatenate(&ancilla(a1, self.pulses[0])?, &ancilla(a2, self.pulses[1])?);
        let sm = self.atom_lowering;
        let atom = SlhTriple::new(
            Scattering::identity(2),
            self.kappa
                .iter()
                .map(|k| OperatorFn::constant(sm.scale_re(k.sqrt())))
                .collect(),
            OperatorFn::zero(),
        )?;
        series(&beam_splitter(self.r)?, &series(&atom, &generators)?)
    }
}

/// `-i[H, ρ]` helper shared by the oracle.
pub(crate) fn hamiltonian_action(h: &Mat8, rho: &Mat8) -> Mat8 {
    (*h * *rho - *rho * *h).scale(-I)
}
