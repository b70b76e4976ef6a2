//! Conditioned atom state under two single-photon inputs.
//!
//! The state is a family of 2×2 matrices `rho^{jk;mn}` indexed by one ancilla
//! label per channel. Ten of the sixteen are stored; the other six are adjoints.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{
    commutator_with_raising, emission_term, lowering_commutator, lowering_dissipator, sigma_minus, sigma_plus, KetState, Mat2,
};
use crate::oracle::MeasurementMatrices;
use crate::pulse::PulseShape;

/// Smallest counting intensity for which a recorded click can be processed.
pub const KP_EPSILON: f64 = 1e-12;
/// Largest admissible click probability `Kp dt` in a single step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

/// Ancilla label of one channel in `rho^{jk;mn}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    B11,
    B10,
    B01,
    B00,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::B11, Branch::B10, Branch::B01, Branch::B00];

    pub fn label(self) -> &'static str {
        match self {
            Branch::B11 => "11",
            Branch::B10 => "10",
            Branch::B01 => "01",
            Branch::B00 => "00",
        }
    }

    pub fn dagger(self) -> Self {
        match self {
            Branch::B10 => Branch::B01,
            Branch::B01 => Branch::B10,
            b => b,
        }
    }

    /// Label reached when the ancilla lowering operator acts on the right.
    pub fn lowered(self) -> Option<Self> {
        match self {
            Branch::B11 => Some(Branch::B01),
            Branch::B10 => Some(Branch::B00),
            _ => None,
        }
    }

    /// Label reached when the ancilla raising operator acts on the left.
    pub fn raised(self) -> Option<Self> {
        match self {
            Branch::B11 => Some(Branch::B10),
            Branch::B01 => Some(Branch::B00),
            _ => None,
        }
    }

    /// Ancilla operator `Q^{jk}` of the extraction map.
    pub fn weight_operator(self) -> Mat2 {
        match self {
            Branch::B11 => Mat2::identity(),
            Branch::B10 => sigma_minus(),
            Branch::B01 => sigma_plus(),
            Branch::B00 => sigma_plus() * sigma_minus(),
        }
    }

    /// Normalization `w^{jk}` given the pulse tail mass `w`.
    pub fn weight(self, w: f64) -> f64 {
        match self {
            Branch::B11 => 1.0,
            Branch::B10 | Branch::B01 => w.sqrt(),
            Branch::B00 => w,
        }
    }

    fn ordinal(self) -> usize {
        self as usize
    }
}

/// One of the sixteen components `rho^{first;second}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Component {
    pub first: Branch,
    pub second: Branch,
}

const NAMES: [&str; 16] = [
    "11;11", "11;10", "11;01", "11;00", "10;11", "10;10", "10;01", "10;00", "01;11", "01;10", "01;01",
    "01;00", "00;11", "00;10", "00;01", "00;00",
];

impl Component {
    pub const fn new(first: Branch, second: Branch) -> Self {
        Self { first, second }
    }

    /// Stored components, in storage order.
    pub const INDEPENDENT: [Component; 10] = {
        use Branch::*;
        [
            Component::new(B11, B11),
            Component::new(B10, B11),
            Component::new(B00, B11),
            Component::new(B11, B10),
            Component::new(B10, B10),
            Component::new(B01, B10),
            Component::new(B00, B10),
            Component::new(B11, B00),
            Component::new(B10, B00),
            Component::new(B00, B00),
        ]
    };

    pub fn all() -> impl Iterator<Item = Component> {
        Branch::ALL
            .into_iter()
            .flat_map(|a| Branch::ALL.into_iter().map(move |b| Component::new(a, b)))
    }

    pub fn dagger(self) -> Self {
        Self::new(self.first.dagger(), self.second.dagger())
    }

    pub fn name(self) -> &'static str {
        NAMES[self.first.ordinal() * 4 + self.second.ordinal()]
    }

    /// Storage slot and whether the stored matrix must be daggered.
    pub fn slot(self) -> (usize, bool) {
        let find = |c: Component| Self::INDEPENDENT.iter().position(|&x| x == c);
        match find(self) {
            Some(i) => (i, false),
            None => (find(self.dagger()).expect("every component pairs with a stored one"), true),
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The ten stored matrices, also used for increments.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Components(pub [Mat2; 10]);

impl Components {
    pub fn zeros() -> Self {
        Self([Mat2::zeros(); 10])
    }

    pub fn get(&self, c: Component) -> Mat2 {
        let (i, dag) = c.slot();
        if dag {
            self.0[i].adjoint()
        } else {
            self.0[i]
        }
    }

    fn at(&self, first: Option<Branch>, second: Option<Branch>) -> Mat2 {
        match (first, second) {
            (Some(a), Some(b)) => self.get(Component::new(a, b)),
            _ => Mat2::zeros(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|m| m.scale_re(s)))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Mat2::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(Mat2::max_abs).fold(0.0, f64::max)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Mat2, Mat2) -> Mat2) -> Self {
        let mut out = *self;
        for (o, b) in out.0.iter_mut().zip(other.0) {
            *o = f(*o, b);
        }
        out
    }
}

impl Index<usize> for Components {
    type Output = Mat2;
    fn index(&self, i: usize) -> &Mat2 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Components {
    fn index_mut(&mut self, i: usize) -> &mut Mat2 {
        &mut self.0[i]
    }
}

impl Add for Components {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip_with(&rhs, |a, b| a + b)
    }
}

impl AddAssign for Components {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for Components {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip_with(&rhs, |a, b| a - b)
    }
}

impl Mul<f64> for Components {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub rho: Components,
}

impl FilterState {
    pub fn get(&self, c: Component) -> Mat2 {
        self.rho.get(c)
    }

    pub fn top(&self) -> Mat2 {
        self.rho[0]
    }

    pub fn trace(&self) -> f64 {
        self.top().trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.top().hermiticity_error()
    }
}

/// `Pe = Tr[rho^{11;11} |e><e|]`.
pub fn excitation_probability(s: &FilterState) -> f64 {
    s.top()[(0, 0)].re
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub r: f64,
    pub pulse1: PulseShape,
    pub pulse2: PulseShape,
    pub eta: KetState<2>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::invalid(name, format!("must be a non-negative rate, got {k}")));
            }
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::invalid("r", format!("must lie in [0, 1], got {}", self.r)));
        }
        self.pulse1.validate()?;
        self.pulse2.validate()
    }

    pub fn pulses(&self) -> [PulseShape; 2] {
        [self.pulse1, self.pulse2]
    }

    pub fn drive(&self, t: f64) -> Drive {
        self.drive_with(self.pulse1.xi(t), self.pulse2.xi(t))
    }

    /// Drive using left limits of the pulse amplitudes at `t`.
    pub fn drive_left(&self, t: f64) -> Drive {
        self.drive_with(self.pulse1.xi_left(t), self.pulse2.xi_left(t))
    }

    fn drive_with(&self, xi1: Complex64, xi2: Complex64) -> Drive {
        Drive {
            xi1,
            xi2,
            k1: self.kappa1.sqrt(),
            k2: self.kappa2.sqrt(),
            r: self.r,
            s: (1.0 - self.r * self.r).sqrt(),
        }
    }
}

/// Instantaneous coefficients entering the filter equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drive {
    pub xi1: Complex64,
    pub xi2: Complex64,
    /// `sqrt(kappa1)`
    pub k1: f64,
    /// `sqrt(kappa2)`
    pub k2: f64,
    pub r: f64,
    /// `sqrt(1 - r^2)`
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementScheme {
    /// Homodyne detection on both beam-splitter outputs.
    HomodyneHomodyne,
    /// Homodyne detection on output 1, photon counting on output 2.
    HomodynePhotocount,
}

impl MeasurementScheme {
    pub fn matrices(self) -> MeasurementMatrices {
        match self {
            MeasurementScheme::HomodyneHomodyne => MeasurementMatrices {
                f1: Mat2::identity(),
                f2: Mat2::zeros(),
            },
            MeasurementScheme::HomodynePhotocount => MeasurementMatrices {
                f1: Mat2::diag([1.0, 0.0]),
                f2: Mat2::diag([0.0, 1.0]),
            },
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            MeasurementScheme::HomodyneHomodyne => "hh",
            MeasurementScheme::HomodynePhotocount => "hp",
        }
    }
}

/// Which jump term the counting filter applies on a click.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HpJumpForm {
    /// Coefficients exactly as displayed with the joint homodyne/counting filter.
    AsPrinted,
    /// `L rho L^†` of the counting output, expanded over components.
    #[default]
    Derived,
}

/// `|eta><eta|` in the four diagonal-label components, zero elsewhere.
pub fn init_state(params: &ModelParams, t0: f64) -> FilterState {
    use Branch::*;
    let p = params.eta.projector();
    let mut rho = Components::zeros();
    for c in [
        Component::new(B11, B11),
        Component::new(B11, B00),
        Component::new(B00, B11),
        Component::new(B00, B00),
    ] {
        rho[c.slot().0] = p;
    }
    FilterState { t: t0, rho }
}

/// All sixteen components by name, including the six stored as adjoints.
struct View {
    r11_11: Mat2,
    r10_11: Mat2,
    r01_11: Mat2,
    r00_11: Mat2,
    r11_10: Mat2,
    r10_10: Mat2,
    r01_10: Mat2,
    r00_10: Mat2,
    r11_01: Mat2,
    r10_01: Mat2,
    r00_01: Mat2,
    r11_00: Mat2,
    r10_00: Mat2,
    r01_00: Mat2,
    r00_00: Mat2,
}

impl View {
    fn new(c: &Components) -> Self {
        let [r11_11, r10_11, r00_11, r11_10, r10_10, r01_10, r00_10, r11_00, r10_00, r00_00] = c.0;
        Self {
            r11_11,
            r10_11,
            r01_11: r10_11.adjoint(),
            r00_11,
            r11_10,
            r10_10,
            r01_10,
            r00_10,
            r11_01: r11_10.adjoint(),
            r10_01: r01_10.adjoint(),
            r00_01: r00_10.adjoint(),
            r11_00,
            r10_00,
            r01_00: r10_00.adjoint(),
            r00_00,
        }
    }
}

/// `(z11, z12)`; the counting scheme calls the same quantities `k11, k12`.
pub fn z_signals(s: &FilterState, params: &ModelParams, t: f64) -> (f64, f64) {
    signals(&s.rho, &params.drive(t))
}

fn signals(c: &Components, d: &Drive) -> (f64, f64) {
    let v = View::new(c);
    let quad = sigma_plus() + sigma_minus();
    let z11 = d.xi1.conj() * v.r10_11.trace() + d.xi1 * v.r01_11.trace() + d.k1 * v.r11_11.trace_with(&quad);
    let z12 = d.xi2.conj() * v.r11_10.trace() + d.xi2 * v.r11_01.trace() + d.k2 * v.r11_11.trace_with(&quad);
    (z11.re, z12.re)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KSignals {
    pub k11: f64,
    pub k12: f64,
    /// Counting intensity before clamping; may dip below zero numerically.
    pub kp_raw: f64,
    /// `max(kp_raw, 0)`.
    pub kp: f64,
}

pub fn k_signals(s: &FilterState, params: &ModelParams, t: f64, form: HpJumpForm) -> KSignals {
    let d = params.drive(t);
    let (k11, k12) = signals(&s.rho, &d);
    let kp_raw = jump_numerators(&s.rho, &d, form).1;
    KSignals {
        k11,
        k12,
        kp_raw,
        kp: kp_raw.max(0.0),
    }
}

/// Deterministic part of `d rho / dt` for every stored component.
pub fn drift_increment(s: &FilterState, params: &ModelParams, t: f64) -> Components {
    drift(&s.rho, &params.drive(t))
}

pub(crate) fn drift(c: &Components, d: &Drive) -> Components {
    let v = View::new(c);
    let kappa = d.k1 * d.k1 + d.k2 * d.k2;
    let decay = |x: &Mat2| lowering_dissipator(x).scale_re(kappa);
    // [x, σ+] and [σ-, x]
    let right = commutator_with_raising;
    let left = lowering_commutator;
    let a1 = d.xi1 * d.k1;
    let a1c = d.xi1.conj() * d.k1;
    let a2 = d.xi2 * d.k2;
    let a2c = d.xi2.conj() * d.k2;

    Components([
        decay(&v.r11_11) + right(&(v.r01_11 * a1 + v.r11_01 * a2)) + left(&(v.r10_11 * a1c + v.r11_10 * a2c)),
        decay(&v.r10_11) + right(&(v.r00_11 * a1 + v.r10_01 * a2)) + left(&(v.r10_10 * a2c)),
        decay(&v.r00_11) + right(&(v.r00_01 * a2)) + left(&(v.r00_10 * a2c)),
        decay(&v.r11_10) + right(&(v.r01_10 * a1 + v.r11_00 * a2)) + left(&(v.r10_10 * a1c)),
        decay(&v.r10_10) + right(&(v.r00_10 * a1 + v.r10_00 * a2)),
        decay(&v.r01_10) + right(&(v.r01_00 * a2)) + left(&(v.r00_10 * a1c)),
        decay(&v.r00_10) + right(&(v.r00_00 * a2)),
        decay(&v.r11_00) + right(&(v.r01_00 * a1)) + left(&(v.r10_00 * a1c)),
        decay(&v.r10_00) + right(&(v.r00_00 * a1)),
        decay(&v.r00_00),
    ])
}

/// Channel brackets multiplying the homodyne innovations, before mixing by the
/// beam splitter and before subtracting the mean.
fn brackets(c: &Components, d: &Drive) -> (Components, Components) {
    let v = View::new(c);
    let emit1 = |x: &Mat2| emission_term(x).scale_re(d.k1);
    let emit2 = |x: &Mat2| emission_term(x).scale_re(d.k2);
    let (x1, x1c, x2, x2c) = (d.xi1, d.xi1.conj(), d.xi2, d.xi2.conj());

    let b1 = Components([
        v.r10_11 * x1c + v.r01_11 * x1 + emit1(&v.r11_11),
        v.r00_11 * x1 + emit1(&v.r10_11),
        emit1(&v.r00_11),
        v.r10_10 * x1c + v.r01_10 * x1 + emit1(&v.r11_10),
        v.r00_10 * x1 + emit1(&v.r10_10),
        v.r00_10 * x1c + emit1(&v.r01_10),
        emit1(&v.r00_10),
        v.r10_00 * x1c + v.r01_00 * x1 + emit1(&v.r11_00),
        v.r00_00 * x1 + emit1(&v.r10_00),
        emit1(&v.r00_00),
    ]);
    let b2 = Components([
        v.r11_10 * x2c + v.r11_01 * x2 + emit2(&v.r11_11),
        v.r10_10 * x2c + v.r10_01 * x2 + emit2(&v.r10_11),
        v.r00_10 * x2c + v.r00_01 * x2 + emit2(&v.r00_11),
        v.r11_00 * x2 + emit2(&v.r11_10),
        v.r10_00 * x2 + emit2(&v.r10_10),
        v.r01_00 * x2 + emit2(&v.r01_10),
        v.r00_00 * x2 + emit2(&v.r00_10),
        emit2(&v.r11_00),
        emit2(&v.r10_00),
        emit2(&v.r00_00),
    ]);
    (b1, b2)
}

/// Gains of the two homodyne innovations `dW1`, `dW2`.
pub(crate) fn homodyne_gains(c: &Components, d: &Drive) -> (Components, Components) {
    let (b1, b2) = brackets(c, d);
    let (z11, z12) = signals(c, d);
    let mean1 = d.s * z11 + d.r * z12;
    let mean2 = -d.r * z11 + d.s * z12;
    let g1 = b1 * d.s + b2 * d.r - *c * mean1;
    let g2 = b2 * d.s - b1 * d.r - *c * mean2;
    (g1, g2)
}

/// Unnormalized post-click components and the counting intensity.
pub(crate) fn jump_numerators(c: &Components, d: &Drive, form: HpJumpForm) -> (Components, f64) {
    match form {
        HpJumpForm::AsPrinted => printed_jump(c, d),
        HpJumpForm::Derived => derived_jump(c, d),
    }
}

fn printed_jump(c: &Components, d: &Drive) -> (Components, f64) {
    let v = View::new(c);
    let (sm, sp) = (sigma_minus(), sigma_plus());
    let (r, s) = (d.r, d.s);
    let (r2, rs, s2) = (r * r, r * s, s * s);
    let (k1, k2) = (d.k1, d.k2);
    let (x1, x1c, x2, x2c) = (d.xi1, d.xi1.conj(), d.xi2, d.xi2.conj());
    let n1 = x1.norm_sqr();
    let n2 = x2.norm_sqr();
    let c = |z: Complex64| z;
    // σ-·x·σ+, x·σ+, σ-·x, σ+·x
    let sand = |x: &Mat2| sm * *x * sp;
    let rp = |x: &Mat2| *x * sp;
    let lm = |x: &Mat2| sm * *x;
    let lp = |x: &Mat2| sp * *x;

    let num = Components([
        // 11;11
        (v.r00_11 * (2.0 * n1) + rp(&v.r01_11) * c(2.0 * k1 * x1) + lm(&v.r10_11) * c(k1 * x1c) + sand(&v.r11_11) * (k1 * k1)) * r2
            - (v.r10_01 * c(2.0 * x1c * x2)
                + lm(&v.r10_11) * c(k2 * x1c)
                + rp(&v.r11_01) * c(2.0 * k1 * x2)
                + v.r01_10 * c(2.0 * x1 * x2c)
                + lm(&v.r11_10) * c(k1 * x2c)
                + rp(&v.r01_11) * c(2.0 * k2 * x1))
                * rs
            + (v.r11_00 * (2.0 * n2) + lm(&v.r11_10) * c(k2 * x2c) + rp(&v.r11_01) * c(2.0 * k2 * x2) + sand(&v.r11_11) * (k2 * k2)) * s2,
        // 10;11
        (rp(&v.r00_11) * c(2.0 * k1 * x1) + sand(&v.r10_11) * (k1 * k1)) * r2
            - (rp(&v.r10_01) * c(2.0 * k1 * x2)
                + v.r00_10 * c(2.0 * x1 * x2c)
                + lp(&v.r10_10) * c(k1 * x2c)
                + rp(&v.r00_11) * c(2.0 * k2 * x1))
                * rs
            + (v.r10_00 * (2.0 * n2) + lm(&v.r10_10) * c(k2 * x2c) + rp(&v.r10_01) * c(2.0 * k2 * x2) + sand(&v.r10_11) * (k2 * k2)) * s2,
        // 00;11
        sand(&v.r00_11) * (k1 * k1 * r2)
            - (rp(&v.r00_01) * c(2.0 * k1 * x2) + lm(&v.r00_10) * c(k1 * x2c)) * rs
            + (v.r00_00 * (2.0 * n2) + lm(&v.r00_10) * c(k2 * x2c) + rp(&v.r00_01) * c(2.0 * k2 * x2) + sand(&v.r00_11) * (k2 * k2)) * s2,
        // 11;10
        (v.r00_10 * (2.0 * n1) + lm(&v.r10_10) * c(k1 * x1c) + rp(&v.r01_10) * c(2.0 * k1 * x1) + sand(&v.r11_10) * (k1 * k1)) * r2
            - (v.r10_00 * c(2.0 * x1c * x2)
                + lm(&v.r10_10) * c(k2 * x1c)
                + rp(&v.r11_00) * c(2.0 * k1 * x2)
                + rp(&v.r01_10) * c(2.0 * k2 * x1))
                * rs
            + (rp(&v.r11_00) * c(2.0 * k2 * x2) + sand(&v.r11_10) * (k2 * k2)) * s2,
        // 10;10
        (rp(&v.r00_10) * c(2.0 * k1 * x1) + sand(&v.r10_10) * (k1 * k1)) * r2
            - (rp(&v.r10_00) * c(2.0 * k1 * x2) + rp(&v.r00_10) * c(2.0 * k2 * x1)) * rs
            + (rp(&v.r10_00) * c(2.0 * k2 * x2) + sand(&v.r10_10) * (k2 * k2)) * s2,
        // 01;10
        (lm(&v.r00_10) * c(k1 * x1c) + sand(&v.r01_10) * (k1 * k1)) * r2
            - (v.r00_00 * c(2.0 * x1c * x2) + lm(&v.r00_10) * c(k2 * x1c) + rp(&v.r01_00) * c(2.0 * k1 * x2)) * rs
            + (rp(&v.r01_00) * c(2.0 * k2 * x2) + sand(&v.r01_10) * (k2 * k2)) * s2,
        // 00;10
        sand(&v.r00_10) * (k1 * k1 * r2) - rp(&v.r00_00) * c(2.0 * k1 * x2 * rs)
            + (rp(&v.r00_00) * c(2.0 * k2 * x2) + sand(&v.r00_10) * (k2 * k2)) * s2,
        // 11;00
        (v.r00_00 * (2.0 * n1) + lm(&v.r10_00) * c(k1 * x1c) + rp(&v.r01_00) * c(2.0 * k1 * x1) + sand(&v.r11_00) * (k1 * k1)) * r2
            - (lm(&v.r10_00) * c(k2 * x1c) + rp(&v.r01_00) * c(2.0 * k2 * x1)) * rs
            + sand(&v.r11_00) * (k2 * k2 * s2),
        // 10;00
        (rp(&v.r00_00) * c(2.0 * k1 * x1) + sand(&v.r10_00) * (k1 * k1)) * r2 - rp(&v.r00_00) * c(2.0 * k2 * x1 * rs)
            + sand(&v.r10_00) * (k2 * k2 * s2),
        // 00;00
        sand(&v.r00_00) * (k1 * k1 * r2) + sand(&v.r00_00) * (k2 * k2 * s2),
    ]);

    // Tr[(ξa* + ka σ+)(ξb + kb σ-) ρ]
    let pair = |xa: Complex64, ka: f64, xb: Complex64, kb: f64, rho: &Mat2| {
        let left = Mat2::identity() * xa.conj() + sp * ka;
        let right = Mat2::identity() * xb + sm * kb;
        (left * right).trace_with(rho)
    };
    let kp = pair(x1, k1, x1, k1, &v.r11_00) * r2 - pair(x2, k2, x1, k1, &v.r10_01) * rs - pair(x1, k1, x2, k2, &v.r01_10) * rs
        + pair(x2, k2, x2, k2, &v.r00_11) * s2;
    (num, kp.re)
}

fn derived_jump(c: &Components, d: &Drive) -> (Components, f64) {
    let (sm, sp) = (sigma_minus(), sigma_plus());
    let (r, s) = (d.r, d.s);
    let (k1, k2) = (d.k1, d.k2);
    let (x1, x1c, x2, x2c) = (d.xi1, d.xi1.conj(), d.xi2, d.xi2.conj());

    let num = Components(Component::INDEPENDENT.map(|comp| {
        let (a, b) = (comp.first, comp.second);
        let here = c.get(comp);
        let emitted = sm * here * sp;
        // channel 1 labels act on the first index, channel 2 on the second
        let f1 = c.at(a.lowered(), Some(b));
        let g1 = c.at(a.raised(), Some(b));
        let fg1 = c.at(a.lowered().and_then(Branch::raised), Some(b));
        let f2 = c.at(Some(a), b.lowered());
        let g2 = c.at(Some(a), b.raised());
        let fg2 = c.at(Some(a), b.lowered().and_then(Branch::raised));

        let own1 = fg1 * x1.norm_sqr() + f1 * sp * (x1 * k1) + sm * g1 * (x1c * k1) + emitted * (k1 * k1);
        let own2 = fg2 * x2.norm_sqr() + f2 * sp * (x2 * k2) + sm * g2 * (x2c * k2) + emitted * (k2 * k2);
        let cross12 = c.at(a.lowered(), b.raised()) * (x1 * x2c) + f1 * sp * (x1 * k2) + sm * g2 * (x2c * k1) + emitted * (k1 * k2);
        let cross21 = c.at(a.raised(), b.lowered()) * (x2 * x1c) + f2 * sp * (x2 * k1) + sm * g1 * (x1c * k2) + emitted * (k1 * k2);
        own1 * (r * r) + own2 * (s * s) - (cross12 + cross21) * (r * s)
    }));
    let kp = num[0].trace().re;
    (num, kp)
}

/// Numerical integrator for the deterministic (ensemble-averaged) dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MasterMethod {
    #[default]
    Rk4,
    Euler,
}

/// Filter equations bound to one model, with stepping options.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Filter {
    pub params: ModelParams,
    pub jump_form: HpJumpForm,
    /// Divide every component by `Tr rho^{11;11}` after each step.
    pub renormalize: bool,
}

impl Filter {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            jump_form: HpJumpForm::default(),
            renormalize: false,
        })
    }

    pub fn with_jump_form(mut self, form: HpJumpForm) -> Self {
        self.jump_form = form;
        self
    }

    pub fn with_renormalize(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    pub fn init(&self, t0: f64) -> FilterState {
        init_state(&self.params, t0)
    }

    /// Predicted means of the two homodyne records per unit time.
    pub fn homodyne_means(&self, s: &FilterState) -> (f64, f64) {
        let d = self.params.drive(s.t);
        let (z11, z12) = signals(&s.rho, &d);
        (d.s * z11 + d.r * z12, -d.r * z11 + d.s * z12)
    }

    pub fn k_signals(&self, s: &FilterState) -> KSignals {
        k_signals(s, &self.params, s.t, self.jump_form)
    }

    /// Euler–Maruyama step driven by two homodyne innovations.
    pub fn hh_step(&self, s: &FilterState, dt: f64, dw1: f64, dw2: f64) -> Result<FilterState> {
        let d = self.params.drive(s.t);
        let (g1, g2) = homodyne_gains(&s.rho, &d);
        let rho = s.rho + drift(&s.rho, &d) * dt + g1 * dw1 + g2 * dw2;
        self.finish(rho, s.t, dt)
    }

    /// Step of the homodyne/counting filter; `click` records a count in this step.
    pub fn hp_step(&self, s: &FilterState, dt: f64, dw1: f64, click: bool) -> Result<FilterState> {
        let d = self.params.drive(s.t);
        let (num, kp) = jump_numerators(&s.rho, &d, self.jump_form);
        if click {
            if kp <= KP_EPSILON {
                return Err(Error::DegenerateJump { t: s.t, intensity: kp });
            }
            return self.finish(num * (1.0 / kp), s.t, dt);
        }
        let (g1, _) = homodyne_gains(&s.rho, &d);
        // compensated count -Kp dt multiplies (num / Kp - rho)
        let rho = s.rho + drift(&s.rho, &d) * dt + g1 * dw1 - (num - s.rho * kp) * dt;
        self.finish(rho, s.t, dt)
    }

    /// Counting step with the click drawn from `uniform < Kp dt`. Returns the
    /// new state, whether a click occurred, and the unclamped intensity.
    pub fn hp_step_sampled(&self, s: &FilterState, dt: f64, dw1: f64, uniform: f64) -> Result<(FilterState, bool, f64)> {
        let d = self.params.drive(s.t);
        let (num, kp_raw) = jump_numerators(&s.rho, &d, self.jump_form);
        let probability = kp_raw.max(0.0) * dt;
        if probability > MAX_JUMP_PROBABILITY {
            return Err(Error::JumpProbabilityTooLarge { t: s.t, probability });
        }
        let click = uniform < probability;
        let next = if click {
            if kp_raw <= KP_EPSILON {
                return Err(Error::DegenerateJump { t: s.t, intensity: kp_raw });
            }
            self.finish(num * (1.0 / kp_raw), s.t, dt)?
        } else {
            let (g1, _) = homodyne_gains(&s.rho, &d);
            let rho = s.rho + drift(&s.rho, &d) * dt + g1 * dw1 - (num - s.rho * kp_raw) * dt;
            self.finish(rho, s.t, dt)?
        };
        Ok((next, click, kp_raw))
    }

    /// Continuous part of the counting filter with an explicit compensated
    /// count increment `dn - Kp dt` in place of a click decision.
    pub fn hp_step_compensated(&self, s: &FilterState, dt: f64, dw1: f64, dn_innovation: f64) -> Result<FilterState> {
        let d = self.params.drive(s.t);
        let (g1, _) = homodyne_gains(&s.rho, &d);
        let mut rho = s.rho + drift(&s.rho, &d) * dt + g1 * dw1;
        if dn_innovation != 0.0 {
            let (num, kp) = jump_numerators(&s.rho, &d, self.jump_form);
            if kp <= KP_EPSILON {
                return Err(Error::DegenerateJump { t: s.t, intensity: kp });
            }
            rho += (num * (1.0 / kp) - s.rho) * dn_innovation;
        }
        self.finish(rho, s.t, dt)
    }

    /// One step of the ensemble-averaged dynamics.
    pub fn master_step(&self, s: &FilterState, dt: f64, method: MasterMethod) -> Result<FilterState> {
        let p = &self.params;
        let rho = match method {
            MasterMethod::Euler => s.rho + drift(&s.rho, &p.drive(s.t)) * dt,
            MasterMethod::Rk4 => {
                let mid = p.drive(s.t + 0.5 * dt);
                let k1 = drift(&s.rho, &p.drive(s.t));
                let k2 = drift(&(s.rho + k1 * (0.5 * dt)), &mid);
                let k3 = drift(&(s.rho + k2 * (0.5 * dt)), &mid);
                let k4 = drift(&(s.rho + k3 * dt), &p.drive_left(s.t + dt));
                s.rho + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            }
        };
        self.finish(rho, s.t, dt)
    }

    fn finish(&self, mut rho: Components, t: f64, dt: f64) -> Result<FilterState> {
        if self.renormalize {
            let tr = rho[0].trace().re;
            if tr.is_finite() && tr > 0.0 {
                rho = rho * (1.0 / tr);
            }
        }
        if !rho.is_finite() {
            return Err(Error::IntegrationBlowup { t, dt });
        }
        Ok(FilterState { t: t + dt, rho })
    }
}

#[cfg(test)]
pub(crate) mod reference {
    //! Second implementation over all sixteen components, built from the label
    //! maps rather than the per-component displays.
    use super::*;
    use crate::operator::{commutator, dissipator};

    pub type Full = [[Mat2; 4]; 4];

    pub fn expand(c: &Components) -> Full {
        let mut full = [[Mat2::zeros(); 4]; 4];
        for comp in Component::all() {
            full[comp.first.ordinal()][comp.second.ordinal()] = c.get(comp);
        }
        full
    }

    pub fn contract(full: &Full) -> Components {
        Components(Component::INDEPENDENT.map(|c| full[c.first.ordinal()][c.second.ordinal()]))
    }

    fn at(full: &Full, a: Option<Branch>, b: Option<Branch>) -> Mat2 {
        match (a, b) {
            (Some(a), Some(b)) => full[a.ordinal()][b.ordinal()],
            _ => Mat2::zeros(),
        }
    }

    pub fn drift(full: &Full, d: &Drive) -> Full {
        let (sm, sp) = (sigma_minus(), sigma_plus());
        let mut out = [[Mat2::zeros(); 4]; 4];
        for comp in Component::all() {
            let (a, b) = (comp.first, comp.second);
            let x = full[a.ordinal()][b.ordinal()];
            let mut dx = dissipator(&sm, &x).scale_re(d.k1 * d.k1 + d.k2 * d.k2);
            dx += commutator(&at(full, a.lowered(), Some(b)), &sp) * (d.xi1 * d.k1);
            dx += commutator(&sm, &at(full, a.raised(), Some(b))) * (d.xi1.conj() * d.k1);
            dx += commutator(&at(full, Some(a), b.lowered()), &sp) * (d.xi2 * d.k2);
            dx += commutator(&sm, &at(full, Some(a), b.raised())) * (d.xi2.conj() * d.k2);
            out[a.ordinal()][b.ordinal()] = dx;
        }
        out
    }

    pub fn gains(full: &Full, d: &Drive) -> (Full, Full) {
        let (sm, sp) = (sigma_minus(), sigma_plus());
        let top = full[0][0];
        let quad = sp + sm;
        let z11 = (d.xi1.conj() * full[1][0].trace() + d.xi1 * full[2][0].trace() + d.k1 * top.trace_with(&quad)).re;
        let z12 = (d.xi2.conj() * full[0][1].trace() + d.xi2 * full[0][2].trace() + d.k2 * top.trace_with(&quad)).re;
        let mut g1 = [[Mat2::zeros(); 4]; 4];
        let mut g2 = [[Mat2::zeros(); 4]; 4];
        for comp in Component::all() {
            let (a, b) = (comp.first, comp.second);
            let x = full[a.ordinal()][b.ordinal()];
            let b1 = at(full, a.lowered(), Some(b)) * d.xi1 + at(full, a.raised(), Some(b)) * d.xi1.conj() + (x * sp + sm * x) * d.k1;
            let b2 = at(full, Some(a), b.lowered()) * d.xi2 + at(full, Some(a), b.raised()) * d.xi2.conj() + (x * sp + sm * x) * d.k2;
            g1[a.ordinal()][b.ordinal()] = b1 * d.s + b2 * d.r - x * (d.s * z11 + d.r * z12);
            g2[a.ordinal()][b.ordinal()] = b2 * d.s - b1 * d.r - x * (-d.r * z11 + d.s * z12);
        }
        (g1, g2)
    }

    pub fn axpy(x: &Full, y: &Full, a: f64) -> Full {
        let mut out = *x;
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += y[i][j] * a;
            }
        }
        out
    }
}
