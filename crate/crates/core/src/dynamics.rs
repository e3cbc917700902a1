//! Exact dynamics of the two-level decaying system in the flavor basis.
//!
//! With |B_L> = p|B0> + q|B0bar> and |B_H> = p|B0> - q|B0bar> the effective
//! Hamiltonian is non-Hermitian and its eigenvectors are not orthogonal, so
//! every closed form here is derived from the eigen-expansion
//! |B0> = (|B_L> + |B_H>) / 2p and |B0bar> = (|B_L> - |B_H>) / 2q.
//!
//! CP-conjugate quantities (B0bar preselection, |B0bar_decay> = s|B0> + r|B0bar>
//! postselection) follow from the B0 ones by exchanging p and q.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Mat2;
use crate::params::{Complex, FlavorState, MesonParams, MixingParams, Postselection};

/// Flavor-basis state a|B0> + b|B0bar> reached after `delta_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolvedState {
    pub a: Complex,
    pub b: Complex,
    pub delta_t: f64,
}

impl EvolvedState {
    pub fn norm_sqr(&self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr()
    }

    /// Amplitude <c0 B0 + c1 B0bar | self>.
    pub fn project(&self, (c0, c1): (Complex, Complex)) -> Complex {
        c0.conj() * self.a + c1.conj() * self.b
    }
}

/// Weak value of the normalized time-development operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakValue {
    pub value: Complex,
}

/// Mixing coefficients seen from the given preselected flavor: (p, q) for B0,
/// (q, p) for B0bar.
fn oriented(mix: &MixingParams, flavor: FlavorState) -> MixingParams {
    match flavor {
        FlavorState::B0 => *mix,
        FlavorState::B0bar => mix.swapped(),
    }
}

fn check_time(delta_t: f64) -> Result<()> {
    if delta_t.is_nan() {
        return Err(invalid("delta_t", "must not be NaN"));
    }
    if delta_t < 0.0 {
        return Err(Error::NegativeTime(delta_t));
    }
    Ok(())
}

/// Flavor-basis Hamiltonian
/// H = (m - i Gamma/2) I - (dm - i dGamma/2) (p/2q |B0><B0bar| + q/2p |B0bar><B0|).
pub fn build_hamiltonian(mp: &MesonParams, mix: &MixingParams) -> Result<Mat2> {
    let (p, q) = (mix.p(), mix.q());
    if p.norm() == 0.0 {
        return Err(invalid("p", "must be non-zero to build the Hamiltonian"));
    }
    if q.norm() == 0.0 {
        return Err(invalid("q", "must be non-zero to build the Hamiltonian"));
    }
    let diag = Complex::new(mp.m(), -0.5 * mp.gamma());
    let kappa = Complex::new(mp.delta_m(), -0.5 * mp.delta_gamma());
    Ok(Mat2([[diag, -kappa * p / (2.0 * q)], [-kappa * q / (2.0 * p), diag]]))
}

/// Normalized operator A = (2/dm) [H - (m - i Gamma/2)], equal to
/// diag(-1, +1) on (B_L, B_H) when the widths coincide.
pub fn normalized_operator(mp: &MesonParams, mix: &MixingParams) -> Result<Mat2> {
    let dm = mp.delta_m();
    if dm == 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    let h = build_hamiltonian(mp, mix)?;
    let shift = Mat2::identity().scale(Complex::new(mp.m(), -0.5 * mp.gamma()));
    Ok((h - shift).scale(Complex::new(2.0 / dm, 0.0)))
}

/// e^{-i m_X t - Gamma_X t/2} for X = L, H, with the common e^{-i m t} phase
/// factored out so the relative phase stays accurate for large m.
fn eigen_phases(mp: &MesonParams, t: f64) -> (Complex, Complex) {
    let common = Complex::from_polar(1.0, -mp.m() * t);
    let half = 0.5 * mp.delta_m() * t;
    let e_l = common * Complex::from_polar((-0.5 * mp.gamma_l() * t).exp(), half);
    let e_h = common * Complex::from_polar((-0.5 * mp.gamma_h() * t).exp(), -half);
    (e_l, e_h)
}

/// Evolves a flavor eigenstate by e^{-i delta_t H}.
pub fn evolve(flavor: FlavorState, delta_t: f64, mp: &MesonParams, mix: &MixingParams) -> Result<EvolvedState> {
    check_time(delta_t)?;
    let m = oriented(mix, flavor);
    if m.p().norm() == 0.0 {
        return Err(invalid("p", "flavor eigenstate undefined for vanishing mixing coefficient"));
    }
    let (e_l, e_h) = eigen_phases(mp, delta_t);
    let same = 0.5 * (e_l + e_h);
    let other = 0.5 * (e_l - e_h) * m.q() / m.p();
    Ok(match flavor {
        FlavorState::B0 => EvolvedState { a: same, b: other, delta_t },
        FlavorState::B0bar => EvolvedState { a: other, b: same, delta_t },
    })
}

/// Probability that the meson has not decayed after `delta_t`.
pub fn survival_probability(flavor: FlavorState, delta_t: f64, mp: &MesonParams, mix: &MixingParams) -> Result<f64> {
    check_time(delta_t)?;
    let m = oriented(mix, flavor);
    let p2 = m.abs_p().powi(2);
    let q2 = m.abs_q().powi(2);
    if p2 == 0.0 {
        return Err(invalid("p", "flavor eigenstate undefined for vanishing mixing coefficient"));
    }
    let t = delta_t;
    // |a|^2 + (|q|/|p|)^2 |b|^2 with a, b the same- and opposite-flavor
    // amplitudes; exactly 1 at t = 0
    let squares = (-mp.gamma_l() * t).exp() + (-mp.gamma_h() * t).exp();
    let cross = 2.0 * (-mp.gamma() * t).exp() * (mp.delta_m() * t).cos();
    Ok(0.25 * (squares + cross) + (q2 / p2) * 0.25 * (squares - cross))
}

/// Coefficients of the four time structures in the postselected transition
/// probability:
///
/// P(t) = even * (e^{-G_L t} + e^{-G_H t})/2 + cos * e^{-G t} cos(dm t)
///      + odd * (e^{-G_L t} - e^{-G_H t})/2 + sin * e^{-G t} sin(dm t)
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionTerms {
    pub even: f64,
    pub cos: f64,
    pub odd: f64,
    pub sin: f64,
}

impl TransitionTerms {
    pub fn new(post: &Postselection, flavor: FlavorState, mix: &MixingParams) -> Result<Self> {
        let m = oriented(mix, flavor);
        let (ap, aq) = (m.abs_p(), m.abs_q());
        if ap == 0.0 {
            return Err(invalid("p", "flavor eigenstate undefined for vanishing mixing coefficient"));
        }
        let (ar, as_) = (post.abs_r(), post.abs_s());
        let rel = post.theta() - m.varphi();
        let a = 0.5 * ar * ar;
        let b = 0.5 * (aq * as_ / ap).powi(2);
        let cross = ar * aq * as_ / ap;
        Ok(Self { even: a + b, cos: a - b, odd: cross * rel.cos(), sin: -cross * rel.sin() })
    }

    pub fn eval(&self, mp: &MesonParams, t: f64) -> f64 {
        let el = (-mp.gamma_l() * t).exp();
        let eh = (-mp.gamma_h() * t).exp();
        let eg = (-mp.gamma() * t).exp();
        let (s, c) = (mp.delta_m() * t).sin_cos();
        self.even * 0.5 * (el + eh) + self.cos * eg * c + self.odd * 0.5 * (el - eh) + self.sin * eg * s
    }

    /// Integral of the transition probability over [0, inf).
    pub fn integral(&self, mp: &MesonParams) -> f64 {
        let (gl, gh, g, dm) = (mp.gamma_l(), mp.gamma_h(), mp.gamma(), mp.delta_m());
        let d = g * g + dm * dm;
        self.even * 0.5 * (1.0 / gl + 1.0 / gh)
            + self.cos * g / d
            + self.odd * 0.5 * (1.0 / gl - 1.0 / gh)
            + self.sin * dm / d
    }

    /// First moment of the transition probability over [0, inf).
    pub fn first_moment(&self, mp: &MesonParams) -> f64 {
        let (gl, gh, g, dm) = (mp.gamma_l(), mp.gamma_h(), mp.gamma(), mp.delta_m());
        let d = g * g + dm * dm;
        self.even * 0.5 * (1.0 / (gl * gl) + 1.0 / (gh * gh))
            + self.cos * (g * g - dm * dm) / (d * d)
            + self.odd * 0.5 * (1.0 / (gl * gl) - 1.0 / (gh * gh))
            + self.sin * 2.0 * g * dm / (d * d)
    }
}

/// |<B_decay | B0(delta_t)>|^2, or its CP conjugate
/// |<B0bar_decay | B0bar(delta_t)>|^2 for `FlavorState::B0bar`.
pub fn transition_probability(
    post: &Postselection,
    flavor: FlavorState,
    delta_t: f64,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<f64> {
    check_time(delta_t)?;
    Ok(TransitionTerms::new(post, flavor, mix)?.eval(mp, delta_t))
}

/// Weak value <phi|A|psi>/<phi|psi> for the B0 preselection and the
/// postselection `post`, with A the normalized operator.
pub fn weak_value(mp: &MesonParams, mix: &MixingParams, post: &Postselection) -> Result<WeakValue> {
    weak_value_for(FlavorState::B0, mp, mix, post)
}

/// Weak value for either preselected flavor; B0bar uses the CP-conjugate
/// postselection.
///
/// Closed form: A_w = -(1 - i dGamma/(2 dm)) (q s*)/(p r*), which for equal
/// widths is -(|q||s|/|p||r|) e^{i(theta - varphi)}.
pub fn weak_value_for(
    flavor: FlavorState,
    mp: &MesonParams,
    mix: &MixingParams,
    post: &Postselection,
) -> Result<WeakValue> {
    if post.r().norm() == 0.0 {
        return Err(Error::SingularPostselection);
    }
    if mp.delta_m() == 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    let m = oriented(mix, flavor);
    if m.p().norm() == 0.0 {
        return Err(invalid("p", "flavor eigenstate undefined for vanishing mixing coefficient"));
    }
    let width_factor = Complex::new(1.0, -0.5 * mp.delta_gamma() / mp.delta_m());
    let value = -width_factor * (m.q() * post.s().conj()) / (m.p() * post.r().conj());
    Ok(WeakValue { value })
}

/// First-order weak-value approximation e^{-Gamma t} |<phi|psi>|^2 e^{2 g Im A_w}
/// with coupling g = dm t / 2.
pub fn linear_approx_probability(
    post: &Postselection,
    flavor: FlavorState,
    delta_t: f64,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<f64> {
    check_time(delta_t)?;
    let aw = weak_value_for(flavor, mp, mix, post)?;
    let g = 0.5 * mp.delta_m() * delta_t;
    let overlap = post.abs_r().powi(2);
    Ok((-mp.gamma() * delta_t).exp() * overlap * (2.0 * g * aw.value.im).exp())
}
