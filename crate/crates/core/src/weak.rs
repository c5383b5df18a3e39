//! Weak projection of one OAM mode onto the polarization pointer, followed by a
//! strong (post-selected) measurement of angular position.
//!
//! Pointer basis ordering is `(H, V)` with the pointer prepared in `|V> = (0, 1)`.
//! The coupling is `U = exp(i·sinα·π_ell⊗σ2/2)`, evolved exactly; the weak value is
//! then read off with the first-order estimator `w = (<σ1> - i<σ2>)/sinα`, so any
//! higher-order-in-α bias is visible in the output.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64 as C64;

use crate::state::{AngularBasis, OamState};
use crate::{Error, Result};

/// Post-selection probabilities below this are treated as a vanishing `<F|I>`.
pub const MIN_POSTSELECTION_PROB: f64 = 1e-30;

/// Two-component polarization state `(H, V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pointer(pub [C64; 2]);

impl Pointer {
    pub const H: Pointer = Pointer([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    pub const V: Pointer = Pointer([C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);

    pub fn new(h: C64, v: C64) -> Self {
        Pointer([h, v])
    }

    pub fn h(&self) -> C64 {
        self.0[0]
    }

    pub fn v(&self) -> C64 {
        self.0[1]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    pub fn normalized(&self) -> Result<Pointer> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::domain("zero pointer state"));
        }
        Ok(Pointer([self.0[0] / n, self.0[1] / n]))
    }
}

/// 2x2 complex matrix, row-major.
pub type Mat2 = [[C64; 2]; 2];

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub const SIGMA1: Mat2 = [[ZERO, ONE], [ONE, ZERO]];
pub const SIGMA2: Mat2 = [[ZERO, C64::new(0.0, -1.0)], [I, ZERO]];
pub const SIGMA3: Mat2 = [[ONE, ZERO], [ZERO, C64::new(-1.0, 0.0)]];

pub fn mat2_apply(m: &Mat2, p: &Pointer) -> Pointer {
    Pointer([
        m[0][0] * p.0[0] + m[0][1] * p.0[1],
        m[1][0] * p.0[0] + m[1][1] * p.0[1],
    ])
}

fn expectation(m: &Mat2, p: &Pointer) -> f64 {
    let mp = mat2_apply(m, p);
    (p.0[0].conj() * mp.0[0] + p.0[1].conj() * mp.0[1]).re
}

/// Amplitudes over (OAM mode) x (polarization), index `[ell + l_max][pol]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    l_max: i32,
    amps: Vec<[C64; 2]>,
}

impl JointState {
    /// `|Psi> ⊗ |pointer>`.
    pub fn product(state: &OamState, pointer: Pointer) -> Self {
        Self {
            l_max: state.l_max(),
            amps: state
                .amplitudes()
                .iter()
                .map(|a| [a * pointer.0[0], a * pointer.0[1]])
                .collect(),
        }
    }

    pub fn l_max(&self) -> i32 {
        self.l_max
    }

    pub fn amplitudes(&self) -> &[[C64; 2]] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps
            .iter()
            .map(|[h, v]| h.norm_sqr() + v.norm_sqr())
            .sum()
    }

    /// Contracts the OAM register with `<theta_n|`, leaving an unnormalised pointer.
    pub fn project_angle(&self, basis: &AngularBasis, n: usize) -> Result<Pointer> {
        if basis.dim() != self.amps.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: self.amps.len(),
            });
        }
        let mut out = [ZERO; 2];
        for (ell, [h, v]) in (-self.l_max..=self.l_max).zip(&self.amps) {
            let w = basis.overlap(n, ell);
            out[0] += w * h;
            out[1] += w * v;
        }
        Ok(Pointer(out))
    }
}

/// Strength and target of the weak projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSpec {
    alpha: f64,
    target_ell: i32,
}

impl CouplingSpec {
    pub const DEFAULT_ALPHA: f64 = std::f64::consts::PI / 9.0;

    pub fn new(alpha: f64, target_ell: i32) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&alpha) {
            return Err(Error::domain(format!("alpha must lie in [0, π/2], got {alpha}")));
        }
        Ok(Self { alpha, target_ell })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn target_ell(&self) -> i32 {
        self.target_ell
    }
}

/// `U = I + π_ell ⊗ (R - I)` with `R = exp(i·sinα·σ2/2)`, a real rotation of the pointer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingUnitary {
    l_max: i32,
    target_ell: i32,
    block: Mat2,
}

impl CouplingUnitary {
    pub fn new(spec: CouplingSpec, l_max: i32) -> Result<Self> {
        if spec.target_ell.abs() > l_max {
            return Err(Error::domain(format!(
                "target ell = {} outside [-{l_max}, {l_max}]",
                spec.target_ell
            )));
        }
        // exp(iφσ2) = cosφ·I + i·sinφ·σ2, and iσ2 = [[0, 1], [-1, 0]]
        let phi = spec.alpha.sin() / 2.0;
        let (s, c) = phi.sin_cos();
        let block = [
            [C64::new(c, 0.0), C64::new(s, 0.0)],
            [C64::new(-s, 0.0), C64::new(c, 0.0)],
        ];
        Ok(Self {
            l_max,
            target_ell: spec.target_ell,
            block,
        })
    }

    /// The pointer rotation applied to the targeted mode.
    pub fn block(&self) -> &Mat2 {
        &self.block
    }

    pub fn apply(&self, joint: &JointState) -> Result<JointState> {
        if joint.l_max != self.l_max {
            return Err(Error::DimensionMismatch {
                expected: crate::state::dim_for(self.l_max),
                found: joint.amps.len(),
            });
        }
        let mut out = joint.clone();
        let i = (self.target_ell + self.l_max) as usize;
        let p = mat2_apply(&self.block, &Pointer(out.amps[i]));
        out.amps[i] = p.0;
        Ok(out)
    }

    /// Dense `(2d x 2d)` matrix in the ordering `index = 2·(ell + l_max) + pol`.
    pub fn to_dense(&self) -> nalgebra::DMatrix<C64> {
        let d = crate::state::dim_for(self.l_max);
        let mut m = nalgebra::DMatrix::<C64>::identity(2 * d, 2 * d);
        let i = (self.target_ell + self.l_max) as usize;
        for r in 0..2 {
            for c in 0..2 {
                m[(2 * i + r, 2 * i + c)] = self.block[r][c];
            }
        }
        m
    }
}

pub fn coupling_unitary(spec: CouplingSpec, l_max: i32) -> Result<CouplingUnitary> {
    CouplingUnitary::new(spec, l_max)
}

/// Conditional pointer state after post-selection on `theta_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostSelected {
    pub pointer: Pointer,
    pub probability: f64,
}

/// Exact coupling followed by angular post-selection.
pub fn weak_then_strong(state: &OamState, spec: CouplingSpec, theta_index: usize) -> Result<PostSelected> {
    let basis = AngularBasis::for_l_max(state.l_max());
    if theta_index >= basis.dim() {
        return Err(Error::domain(format!(
            "theta index {theta_index} outside [0, {})",
            basis.dim()
        )));
    }
    // <F|I> must not vanish, whatever the coupling does to the conditional pointer
    let reference = basis.angle_overlap(theta_index, state)?.norm_sqr();
    if !(reference >= MIN_POSTSELECTION_PROB) {
        return Err(Error::DegeneratePostSelection {
            ell: Some(spec.target_ell),
            probability: reference,
        });
    }
    let u = CouplingUnitary::new(spec, state.l_max())?;
    let evolved = u.apply(&JointState::product(state, Pointer::V))?;
    let raw = evolved.project_angle(&basis, theta_index)?;
    let probability = raw.norm_sqr();
    if !(probability >= MIN_POSTSELECTION_PROB) {
        return Err(Error::DegeneratePostSelection {
            ell: Some(spec.target_ell),
            probability,
        });
    }
    Ok(PostSelected {
        pointer: raw.normalized()?,
        probability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliExpectations {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

pub fn pauli_expectations(pointer: &Pointer) -> Result<PauliExpectations> {
    let p = pointer.normalized()?;
    Ok(PauliExpectations {
        sigma1: expectation(&SIGMA1, &p),
        sigma2: expectation(&SIGMA2, &p),
        sigma3: expectation(&SIGMA3, &p),
    })
}

/// Per-ell weak values with the Pauli expectations they were inverted from.
///
/// `values[i] · sinα = sigma1[i] - i·sigma2[i]` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakValueScan {
    pub l_max: i32,
    pub alpha: f64,
    pub values: Vec<C64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Standard errors on `(Re w, Im w)`.
    pub err_re: Vec<f64>,
    pub err_im: Vec<f64>,
}

impl WeakValueScan {
    /// Builds a scan by inverting the pointer expectations.
    pub fn from_pauli(
        l_max: i32,
        alpha: f64,
        sigma1: Vec<f64>,
        sigma2: Vec<f64>,
        err1: Vec<f64>,
        err2: Vec<f64>,
    ) -> Result<Self> {
        let d = crate::state::dim_for(l_max);
        for len in [sigma1.len(), sigma2.len(), err1.len(), err2.len()] {
            if len != d {
                return Err(Error::DimensionMismatch { expected: d, found: len });
            }
        }
        let s = alpha.sin();
        if !(s > 0.0) {
            return Err(Error::domain("sin(alpha) must be positive to invert the pointer shift"));
        }
        let values = sigma1
            .iter()
            .zip(&sigma2)
            .map(|(&s1, &s2)| C64::new(s1, -s2) / s)
            .collect();
        Ok(Self {
            l_max,
            alpha,
            values,
            sigma1,
            sigma2,
            err_re: err1.into_iter().map(|e| e / s).collect(),
            err_im: err2.into_iter().map(|e| e / s).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn ells(&self) -> impl Iterator<Item = i32> {
        -self.l_max..=self.l_max
    }

    pub fn value(&self, ell: i32) -> Option<C64> {
        (ell.abs() <= self.l_max).then(|| self.values[(ell + self.l_max) as usize])
    }
}

/// Exact pointer states for every `ell` in the scan, in ascending `ell`.
pub fn pointer_scan(state: &OamState, alpha: f64, theta_index: usize) -> Result<Vec<PostSelected>> {
    state
        .ells()
        .map(|ell| weak_then_strong(state, CouplingSpec::new(alpha, ell)?, theta_index))
        .collect()
}

/// Noiseless direct measurement: scan the weak projection over all modes and invert.
pub fn direct_measure(state: &OamState, alpha: f64, theta_index: usize) -> Result<WeakValueScan> {
    if !(alpha.sin() > 0.0) {
        return Err(Error::domain("direct measurement needs sin(alpha) > 0"));
    }
    let pointers = pointer_scan(state, alpha, theta_index)?;
    let d = pointers.len();
    let (mut s1, mut s2) = (Vec::with_capacity(d), Vec::with_capacity(d));
    for p in &pointers {
        let e = pauli_expectations(&p.pointer)?;
        s1.push(e.sigma1);
        s2.push(e.sigma2);
    }
    WeakValueScan::from_pauli(state.l_max(), alpha, s1, s2, vec![0.0; d], vec![0.0; d])
}

/// The ideal weak values `<theta_n|ell><ell|Psi>/<theta_n|Psi>`.
pub fn ideal_weak_values(state: &OamState, theta_index: usize) -> Result<Vec<C64>> {
    let basis = AngularBasis::for_l_max(state.l_max());
    let denom = basis.angle_overlap(theta_index, state)?;
    if !(denom.norm_sqr() >= MIN_POSTSELECTION_PROB) {
        return Err(Error::DegeneratePostSelection {
            ell: None,
            probability: denom.norm_sqr(),
        });
    }
    Ok(state
        .iter()
        .map(|(ell, a)| basis.overlap(theta_index, ell) * a / denom)
        .collect())
}
