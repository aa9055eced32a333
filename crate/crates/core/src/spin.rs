//! Operator algebra for the small fixed-dimension Hilbert spaces of the NV
//! ground state: the electron spin-1 triplet (dim 3) and its product with the
//! 15N nuclear spin-1/2 (dim 6).
//!
//! Basis ordering convention (fixed everywhere): electron projections in the
//! order m_S = -1, 0, +1; nuclear projections in the order m_I = +1/2, -1/2.
//! The six-dimensional product basis is lexicographic with m_S outer and m_I
//! inner, i.e. index = 2 * electron_index + nuclear_index. All other modules
//! address states through [`BasisLabel`]s, never through raw indices.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<C64>;

/// Electron spin projection m_S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpinProj {
    MinusOne,
    Zero,
    PlusOne,
}

impl SpinProj {
    pub const ALL: [SpinProj; 3] = [SpinProj::MinusOne, SpinProj::Zero, SpinProj::PlusOne];

    /// Basis index in the three-dimensional electron space.
    pub fn index(self) -> usize {
        match self {
            SpinProj::MinusOne => 0,
            SpinProj::Zero => 1,
            SpinProj::PlusOne => 2,
        }
    }

    /// The projection quantum number as a float.
    pub fn value(self) -> f64 {
        match self {
            SpinProj::MinusOne => -1.0,
            SpinProj::Zero => 0.0,
            SpinProj::PlusOne => 1.0,
        }
    }
}

/// Nuclear spin projection m_I of the 15N nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NuclearProj {
    /// m_I = +1/2 (first in the basis ordering).
    Up,
    /// m_I = -1/2.
    Down,
}

impl NuclearProj {
    pub const ALL: [NuclearProj; 2] = [NuclearProj::Up, NuclearProj::Down];

    pub fn index(self) -> usize {
        match self {
            NuclearProj::Up => 0,
            NuclearProj::Down => 1,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            NuclearProj::Up => 0.5,
            NuclearProj::Down => -0.5,
        }
    }
}

/// Label of a product-basis state. `nuclear` is `None` in the
/// three-dimensional electron-only space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub electron: SpinProj,
    pub nuclear: Option<NuclearProj>,
}

impl BasisLabel {
    pub fn electron_only(m_s: SpinProj) -> Self {
        BasisLabel { electron: m_s, nuclear: None }
    }

    pub fn product(m_s: SpinProj, m_i: NuclearProj) -> Self {
        BasisLabel { electron: m_s, nuclear: Some(m_i) }
    }

    /// Flat index of the label in its Hilbert space (dim 3 or 6).
    pub fn index(self) -> usize {
        match self.nuclear {
            None => self.electron.index(),
            Some(n) => 2 * self.electron.index() + n.index(),
        }
    }

    pub fn dim(self) -> usize {
        if self.nuclear.is_some() { 6 } else { 3 }
    }
}

/// A complex square matrix acting on one of the fixed spin spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    m: CMat,
}

impl Operator {
    pub fn from_matrix(m: CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operators are square");
        Operator { m }
    }

    pub fn identity(dim: usize) -> Self {
        Operator { m: CMat::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Operator { m: CMat::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn dagger(&self) -> Operator {
        Operator { m: self.m.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator { m: &self.m * C64::new(s, 0.0) }
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.m.adjoint();
        (&self.m - adj).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// Matrix element `<row|A|col>` by basis label.
    pub fn element(&self, row: BasisLabel, col: BasisLabel) -> C64 {
        self.m[(row.index(), col.index())]
    }
}

impl std::ops::Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m + &rhs.m }
    }
}

impl std::ops::Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m - &rhs.m }
    }
}

impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { m: &self.m * &rhs.m }
    }
}

/// Standard spin-1 operators (S_x, S_y, S_z) in the basis {|-1>, |0>, |+1>}.
pub fn spin1_operators() -> (Operator, Operator, Operator) {
    let f = 1.0 / 2.0_f64.sqrt();
    let r = |x: f64| C64::new(x, 0.0);
    let i = |x: f64| C64::new(0.0, x);
    let z = C64::new(0.0, 0.0);

    let sx = CMat::from_row_slice(3, 3, &[z, r(f), z, r(f), z, r(f), z, r(f), z]);
    let sy = CMat::from_row_slice(3, 3, &[z, i(f), z, i(-f), z, i(f), z, i(-f), z]);
    let sz = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![r(-1.0), z, r(1.0)]));
    (Operator { m: sx }, Operator { m: sy }, Operator { m: sz })
}

/// Spin-1/2 operators (I_x, I_z) in the basis {|+1/2>, |-1/2>}.
pub fn spin_half_operators() -> (Operator, Operator) {
    let r = |x: f64| C64::new(x, 0.0);
    let z = C64::new(0.0, 0.0);
    let ix = CMat::from_row_slice(2, 2, &[z, r(0.5), r(0.5), z]);
    let iz = CMat::from_row_slice(2, 2, &[r(0.5), z, z, r(-0.5)]);
    (Operator { m: ix }, Operator { m: iz })
}

/// Kronecker product, first factor outer: `tensor(a, b)[i*db + k, j*db + l] = a[i,j] b[k,l]`.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator { m: a.m.kronecker(&b.m) }
}

/// Electron populations of a state, with the nuclear-resolved diagonal
/// retained in six-dimensional mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Populations {
    /// P(m_S), indexed by `SpinProj::index()`. Marginal over m_I in dim 6.
    pub electron: [f64; 3],
    /// Diagonal P(m_S, m_I) in basis order; `None` in dim 3.
    pub nuclear_resolved: Option<[f64; 6]>,
}

impl Populations {
    pub fn p(&self, m_s: SpinProj) -> f64 {
        self.electron[m_s.index()]
    }

    pub fn total(&self) -> f64 {
        self.electron.iter().sum()
    }
}

/// Density matrix over one of the fixed spin spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    m: CMat,
}

/// Validation slacks for [`DensityState::from_matrix`].
pub const TRACE_TOL: f64 = 1e-8;
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const POSITIVITY_SLACK: f64 = 1e-7;

impl DensityState {
    /// Pure basis state |label><label|.
    pub fn pure(label: BasisLabel) -> Self {
        let dim = label.dim();
        let mut m = CMat::zeros(dim, dim);
        m[(label.index(), label.index())] = C64::new(1.0, 0.0);
        DensityState { m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityState { m: CMat::identity(dim, dim) / C64::new(dim as f64, 0.0) }
    }

    /// Statistical mixture sum_k w_k rho_k. Weights must sum to 1.
    pub fn mixture(parts: &[(f64, &DensityState)]) -> Self {
        assert!(!parts.is_empty());
        let dim = parts[0].1.dim();
        let mut m = CMat::zeros(dim, dim);
        for (w, rho) in parts {
            m += &rho.m * C64::new(*w, 0.0);
        }
        DensityState { m }
    }

    /// Validating constructor enforcing the density-matrix invariants
    /// (trace within 1e-8 of 1, Hermitian to 1e-10, eigenvalues >= -1e-7).
    pub fn from_matrix(m: CMat) -> Result<Self> {
        let state = DensityState { m };
        state.validate(TRACE_TOL, HERMITICITY_TOL, POSITIVITY_SLACK)?;
        Ok(state)
    }

    /// Wrap a matrix without validation (for integrator internals).
    pub(crate) fn from_matrix_unchecked(m: CMat) -> Self {
        DensityState { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// Purity Tr(rho^2).
    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.m.adjoint();
        (&self.m - adj).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        let mut vals: Vec<f64> = herm.symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn validate(&self, trace_tol: f64, herm_tol: f64, pos_slack: f64) -> Result<()> {
        let tr_dev = (self.trace() - 1.0).abs();
        if tr_dev > trace_tol {
            return Err(Error::NotNormalized { deviation: tr_dev, limit: trace_tol });
        }
        let herm = self.hermiticity_deviation();
        if herm > herm_tol {
            return Err(Error::NotHermitian { deviation: herm });
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -pos_slack {
            return Err(Error::NotPositive { eigenvalue: min_eig });
        }
        Ok(())
    }

    /// Diagonal populations. Rejects states whose trace deviates from 1 by
    /// more than 1e-6.
    pub fn populations(&self) -> Result<Populations> {
        let tr_dev = (self.trace() - 1.0).abs();
        if tr_dev > 1e-6 {
            return Err(Error::NotNormalized { deviation: tr_dev, limit: 1e-6 });
        }
        Ok(populations_unchecked(&self.m))
    }
}

/// Diagonal populations of a (possibly slightly unnormalized) matrix.
pub(crate) fn populations_unchecked(m: &CMat) -> Populations {
    match m.nrows() {
        3 => {
            let mut electron = [0.0; 3];
            for (k, e) in electron.iter_mut().enumerate() {
                *e = m[(k, k)].re;
            }
            Populations { electron, nuclear_resolved: None }
        }
        6 => {
            let mut diag = [0.0; 6];
            for (k, d) in diag.iter_mut().enumerate() {
                *d = m[(k, k)].re;
            }
            let electron = [diag[0] + diag[1], diag[2] + diag[3], diag[4] + diag[5]];
            Populations { electron, nuclear_resolved: Some(diag) }
        }
        d => panic!("unsupported Hilbert space dimension {d}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn comm(a: &Operator, b: &Operator) -> CMat {
        a.matrix() * b.matrix() - b.matrix() * a.matrix()
    }

    #[test]
    fn spin1_z_diagonal() {
        let (_, _, sz) = spin1_operators();
        for (m, label) in [(-1.0, SpinProj::MinusOne), (0.0, SpinProj::Zero), (1.0, SpinProj::PlusOne)] {
            let l = BasisLabel::electron_only(label);
            assert_eq!(sz.element(l, l), C64::new(m, 0.0));
        }
    }

    #[test]
    fn spin1_x_matrix_element() {
        let (sx, _, _) = spin1_operators();
        let e = sx.element(
            BasisLabel::electron_only(SpinProj::Zero),
            BasisLabel::electron_only(SpinProj::MinusOne),
        );
        assert_abs_diff_eq!(e.re, 1.0 / 2.0_f64.sqrt(), epsilon = 1e-15);
        assert_eq!(e.im, 0.0);
    }

    #[test]
    fn spin1_su2_commutator() {
        let (sx, sy, sz) = spin1_operators();
        let lhs = comm(&sx, &sy);
        let rhs = sz.matrix() * C64::new(0.0, 1.0);
        let dev = (lhs - rhs).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-15, "[Sx,Sy] - iSz deviation {dev}");
    }

    #[test]
    fn spin1_hermitian() {
        let (sx, sy, sz) = spin1_operators();
        for op in [&sx, &sy, &sz] {
            assert!(op.is_hermitian(1e-14));
        }
    }

    #[test]
    fn spin_half_identities() {
        let (ix, iz) = spin_half_operators();
        assert_eq!(iz.matrix()[(0, 0)].re, 0.5);
        assert_eq!(iz.matrix()[(1, 1)].re, -0.5);
        assert_abs_diff_eq!(iz.trace().re, 0.0, epsilon = 1e-16);
        // I_x^2 = Id/4
        let sq = ix.matrix() * ix.matrix();
        let dev = (sq - CMat::identity(2, 2) * C64::new(0.25, 0.0))
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-16);
        assert!(ix.is_hermitian(1e-14) && iz.is_hermitian(1e-14));
    }

    #[test]
    fn tensor_with_identities() {
        let (_, _, sz) = spin1_operators();
        let (_, iz) = spin_half_operators();
        let a = tensor(&sz, &Operator::identity(2));
        let expect_a = [-1.0, -1.0, 0.0, 0.0, 1.0, 1.0];
        for (k, &v) in expect_a.iter().enumerate() {
            assert_eq!(a.matrix()[(k, k)].re, v);
        }
        let b = tensor(&Operator::identity(3), &iz);
        let expect_b = [0.5, -0.5, 0.5, -0.5, 0.5, -0.5];
        for (k, &v) in expect_b.iter().enumerate() {
            assert_eq!(b.matrix()[(k, k)].re, v);
        }
        assert_eq!(a.dim(), 6);
        let id = tensor(&Operator::identity(3), &Operator::identity(2));
        assert_eq!(id.matrix(), &CMat::identity(6, 6));
    }

    #[test]
    fn tensor_trace_multiplicative() {
        // random Hermitian matrices with fixed entries
        let a = {
            let mut m = CMat::zeros(3, 3);
            m[(0, 0)] = C64::new(0.3, 0.0);
            m[(1, 1)] = C64::new(-1.2, 0.0);
            m[(2, 2)] = C64::new(0.7, 0.0);
            m[(0, 1)] = C64::new(0.5, 0.25);
            m[(1, 0)] = C64::new(0.5, -0.25);
            Operator::from_matrix(m)
        };
        let b = {
            let mut m = CMat::zeros(2, 2);
            m[(0, 0)] = C64::new(1.4, 0.0);
            m[(1, 1)] = C64::new(0.2, 0.0);
            m[(0, 1)] = C64::new(-0.1, 0.9);
            m[(1, 0)] = C64::new(-0.1, -0.9);
            Operator::from_matrix(m)
        };
        let t = tensor(&a, &b);
        let lhs = t.trace();
        let rhs = a.trace() * b.trace();
        assert_abs_diff_eq!(lhs.re, rhs.re, epsilon = 1e-14);
        assert_abs_diff_eq!(lhs.im, rhs.im, epsilon = 1e-14);
    }

    #[test]
    fn tensor_associative_exact() {
        let (sx, _, sz) = spin1_operators();
        let (ix, _) = spin_half_operators();
        let left = tensor(&tensor(&sz, &ix), &sx);
        let right = tensor(&sz, &tensor(&ix, &sx));
        assert_eq!(left.matrix(), right.matrix());
    }

    #[test]
    fn populations_pure_state() {
        let rho = DensityState::pure(BasisLabel::product(SpinProj::MinusOne, NuclearProj::Up));
        let p = rho.populations().unwrap();
        assert_eq!(p.p(SpinProj::MinusOne), 1.0);
        assert_eq!(p.p(SpinProj::Zero), 0.0);
        assert_eq!(p.p(SpinProj::PlusOne), 0.0);
        assert_eq!(p.nuclear_resolved.unwrap()[0], 1.0);
    }

    #[test]
    fn populations_maximally_mixed() {
        let rho = DensityState::maximally_mixed(6);
        let p = rho.populations().unwrap();
        for m in SpinProj::ALL {
            assert_abs_diff_eq!(p.p(m), 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn populations_rejects_unnormalized() {
        let m = CMat::identity(3, 3); // trace 3
        let rho = DensityState::from_matrix_unchecked(m);
        assert!(rho.populations().is_err());
    }

    #[test]
    fn density_validation() {
        assert!(DensityState::from_matrix(CMat::identity(3, 3)).is_err());
        let ok = DensityState::from_matrix(CMat::identity(3, 3) / C64::new(3.0, 0.0));
        assert!(ok.is_ok());
        // negative eigenvalue
        let mut m = CMat::zeros(3, 3);
        m[(0, 0)] = C64::new(1.5, 0.0);
        m[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(matches!(
            DensityState::from_matrix(m),
            Err(Error::NotPositive { .. })
        ));
    }

    #[test]
    fn purity_and_eigenvalues() {
        let rho = DensityState::maximally_mixed(3);
        assert_abs_diff_eq!(rho.purity(), 1.0 / 3.0, epsilon = 1e-14);
        let eigs = rho.eigenvalues();
        for e in eigs {
            assert_abs_diff_eq!(e, 1.0 / 3.0, epsilon = 1e-12);
        }
    }
}
