//! Dense complex matrices on the small Hilbert spaces used throughout the crate.
//!
//! Basis convention: the excited state is the first basis vector, so
//! `|e> = (1, 0)`, `|g> = (0, 1)` and the lowering operator is `|g><e|`.
//! Ancillas use the same convention with `|up>` in place of `|e>`.
//! Composite spaces are ordered ancilla 1 ⊗ ancilla 2 ⊗ atom.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Square complex matrix of fixed dimension `N`, stored row-major by value.
#[derive(Clone, Copy, PartialEq)]
pub struct CMatrix<const N: usize> {
    data: [[Complex64; N]; N],
}

pub type Mat2 = CMatrix<2>;
pub type Mat4 = CMatrix<4>;
pub type Mat8 = CMatrix<8>;

impl<const N: usize> CMatrix<N> {
    pub const DIM: usize = N;

    pub const fn zeros() -> Self {
        Self {
            data: [[ZERO; N]; N],
        }
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.data[i][i] = ONE;
        }
        m
    }

    pub const fn from_rows(data: [[Complex64; N]; N]) -> Self {
        Self { data }
    }

    pub fn from_real(rows: [[f64; N]; N]) -> Self {
        Self::from_fn(|i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.data[i][j] = f(i, j);
            }
        }
        m
    }

    /// Diagonal matrix with the given real entries.
    pub fn diag(values: [f64; N]) -> Self {
        let mut m = Self::zeros();
        for (i, v) in values.into_iter().enumerate() {
            m.data[i][i] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        N
    }

    pub fn rows(&self) -> &[[Complex64; N]; N] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.data[j][i] = self.data[i][j].conj();
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.data[j][i] = self.data[i][j];
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..N).map(|i| self.data[i][i]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = *self;
        for row in m.data.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    pub fn scale_re(&self, s: f64) -> Self {
        let mut m = *self;
        for row in m.data.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|r| r.iter())
            .map(|x| x.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .flat_map(|r| r.iter())
            .all(|x| x.re.is_finite() && x.im.is_finite())
    }

    /// Deviation from hermiticity, `max |A - A^†|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Expectation `Tr[self · op]`.
    pub fn trace_with(&self, op: &Self) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..N {
            for k in 0..N {
                acc += self.data[i][k] * op.data[k][i];
            }
        }
        acc
    }

    /// Product with the second factor's adjoint, `self · other^†`.
    pub fn mul_adjoint(&self, other: &Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                let mut acc = ZERO;
                for k in 0..N {
                    acc += self.data[i][k] * other.data[j][k].conj();
                }
                m.data[i][j] = acc;
            }
        }
        m
    }
}

impl<const N: usize> Default for CMatrix<N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const N: usize> fmt::Debug for CMatrix<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix<{N}> [")?;
        for row in &self.data {
            write!(f, "  ")?;
            for x in row {
                write!(f, "{:+.6e}{:+.6e}i  ", x.re, x.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<const N: usize> Index<(usize, usize)> for CMatrix<N> {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for CMatrix<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i][j]
    }
}

impl<const N: usize> Add for CMatrix<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const N: usize> AddAssign for CMatrix<N> {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..N {
            for j in 0..N {
                self.data[i][j] += rhs.data[i][j];
            }
        }
    }
}

impl<const N: usize> Sub for CMatrix<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<const N: usize> SubAssign for CMatrix<N> {
    fn sub_assign(&mut self, rhs: Self) {
        for i in 0..N {
            for j in 0..N {
                self.data[i][j] -= rhs.data[i][j];
            }
        }
    }
}

impl<const N: usize> Neg for CMatrix<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale_re(-1.0)
    }
}

impl<const N: usize> Mul for CMatrix<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.data[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    m.data[i][j] += a * rhs.data[k][j];
                }
            }
        }
        m
    }
}

impl<const N: usize> Mul<Complex64> for CMatrix<N> {
    type Output = Self;
    fn mul(self, rhs: Complex64) -> Self {
        self.scale(rhs)
    }
}

impl<const N: usize> Mul<CMatrix<N>> for Complex64 {
    type Output = CMatrix<N>;
    fn mul(self, rhs: CMatrix<N>) -> CMatrix<N> {
        rhs.scale(self)
    }
}

impl<const N: usize> Mul<f64> for CMatrix<N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale_re(rhs)
    }
}

impl<const N: usize> Mul<CMatrix<N>> for f64 {
    type Output = CMatrix<N>;
    fn mul(self, rhs: CMatrix<N>) -> CMatrix<N> {
        rhs.scale_re(self)
    }
}

/// Normalized pure state of dimension `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KetState<const N: usize> {
    amplitudes: [Complex64; N],
}

impl<const N: usize> KetState<N> {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(amplitudes: [Complex64; N]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes the given amplitudes; fails only on the zero vector.
    pub fn normalized(amplitudes: [Complex64; N]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self {
            amplitudes: amplitudes.map(|a| a / norm),
        })
    }

    pub fn amplitudes(&self) -> &[Complex64; N] {
        &self.amplitudes
    }

    pub fn basis(index: usize) -> Self {
        let mut amplitudes = [ZERO; N];
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    /// `|psi><psi|`.
    pub fn projector(&self) -> CMatrix<N> {
        CMatrix::from_fn(|i, j| self.amplitudes[i] * self.amplitudes[j].conj())
    }
}

impl KetState<2> {
    pub fn excited() -> Self {
        Self::basis(0)
    }

    pub fn ground() -> Self {
        Self::basis(1)
    }

    /// `(|e> + |g>)/sqrt(2)`.
    pub fn plus() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { amplitudes: [a, a] }
    }
}

/// Lowering operator `|g><e|`.
pub fn sigma_minus() -> Mat2 {
    Mat2::from_real([[0.0, 0.0], [1.0, 0.0]])
}

/// Raising operator `|e><g|`.
pub fn sigma_plus() -> Mat2 {
    Mat2::from_real([[0.0, 1.0], [0.0, 0.0]])
}

pub fn excited_projector() -> Mat2 {
    Mat2::diag([1.0, 0.0])
}

pub fn ground_projector() -> Mat2 {
    Mat2::diag([0.0, 1.0])
}

/// Kronecker product. `C` must equal `A * B`.
pub fn kron<const A: usize, const B: usize, const C: usize>(
    a: &CMatrix<A>,
    b: &CMatrix<B>,
) -> Result<CMatrix<C>> {
    if A * B != C {
        return Err(Error::DimensionMismatch {
            expected: A * B,
            found: C,
        });
    }
    let mut m = CMatrix::<C>::zeros();
    for i in 0..A {
        for j in 0..A {
            let aij = a[(i, j)];
            for k in 0..B {
                for l in 0..B {
                    m[(i * B + k, j * B + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    Ok(m)
}

/// Embeds `anc1 ⊗ anc2 ⊗ atom` into the 8-dimensional composite space.
pub fn kron3(anc1: &Mat2, anc2: &Mat2, atom: &Mat2) -> Mat8 {
    let left: Mat4 = kron(anc1, anc2).expect("2 x 2 = 4");
    kron(&left, atom).expect("4 x 2 = 8")
}

/// Lindblad dissipator `L ρ L^† − ½(L^†L ρ + ρ L^†L)`.
pub fn dissipator<const N: usize>(l: &CMatrix<N>, rho: &CMatrix<N>) -> CMatrix<N> {
    let ldl = l.adjoint() * *l;
    (*l * *rho).mul_adjoint(l) - (ldl * *rho + *rho * ldl).scale_re(0.5)
}

/// `[A, B] = AB − BA`.
pub fn commutator<const N: usize>(a: &CMatrix<N>, b: &CMatrix<N>) -> CMatrix<N> {
    *a * *b - *b * *a
}

/// `D[σ-] x` for a 2×2 `x`, in closed form.
pub fn lowering_dissipator(x: &Mat2) -> Mat2 {
    let [[a, b], [c, _]] = x.data;
    Mat2::from_rows([[-a, -0.5 * b], [-0.5 * c, a]])
}

/// `[x, σ+]` in closed form.
pub fn commutator_with_raising(x: &Mat2) -> Mat2 {
    let [[a, _], [c, d]] = x.data;
    Mat2::from_rows([[-c, a - d], [ZERO, c]])
}

/// `[σ-, x]` in closed form.
pub fn lowering_commutator(x: &Mat2) -> Mat2 {
    let [[a, b], [_, d]] = x.data;
    Mat2::from_rows([[-b, ZERO], [a - d, b]])
}

/// `x σ+ + σ- x` in closed form.
pub fn emission_term(x: &Mat2) -> Mat2 {
    let [[a, b], [c, _]] = x.data;
    Mat2::from_rows([[ZERO, a], [a, b + c]])
}

/// Atom-space matrix `M` with `Tr[M X] = Tr[ρ̃ (W ⊗ X)]` for every atom operator
/// `X`, where `W` acts on the two-ancilla block.
pub fn partial_trace_ancillas(rho: &Mat8, weight: &Mat4) -> Mat2 {
    let mut m = Mat2::zeros();
    for s in 0..2 {
        for sp in 0..2 {
            let mut acc = ZERO;
            for a in 0..4 {
                for b in 0..4 {
                    let w = weight[(b, a)];
                    if w != ZERO {
                        acc += rho[(a * 2 + s, b * 2 + sp)] * w;
                    }
                }
            }
            m[(s, sp)] = acc;
        }
    }
    m
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn random_matrix<const N: usize>(rng: &mut impl Rng) -> CMatrix<N> {
        CMatrix::from_fn(|_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    pub fn random_hermitian<const N: usize>(rng: &mut impl Rng) -> CMatrix<N> {
        let a: CMatrix<N> = random_matrix(rng);
        (a + a.adjoint()).scale_re(0.5)
    }

    /// Random density matrix `A A^† / Tr`.
    pub fn random_density<const N: usize>(rng: &mut impl Rng) -> CMatrix<N> {
        let a: CMatrix<N> = random_matrix(rng);
        let p = a.mul_adjoint(&a);
        let tr = p.trace().re;
        p.scale_re(1.0 / tr)
    }
}
