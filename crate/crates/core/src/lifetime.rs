//! Decay-time distributions and effective lifetimes, with and without
//! postselection.

use serde::{Deserialize, Serialize};

use crate::density::{ExpTrigDensity, Support};
use crate::dynamics::TransitionTerms;
use crate::error::{invalid, Error, Result};
use crate::params::{Complex, FlavorState, MesonParams, MixingParams, Postselection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeResult {
    /// Effective lifetime in ps.
    pub tau_eff: f64,
    /// tau_eff * Gamma.
    pub amplification_ratio: f64,
}

impl LifetimeResult {
    fn new(tau_eff: f64, mp: &MesonParams) -> Result<Self> {
        if !(tau_eff.is_finite() && tau_eff > 0.0) {
            return Err(Error::NumericFailure {
                context: "effective lifetime",
                detail: format!("non-positive lifetime {tau_eff}"),
            });
        }
        Ok(Self { tau_eff, amplification_ratio: tau_eff * mp.gamma() })
    }
}

fn check_time(delta_t: f64) -> Result<()> {
    if delta_t < 0.0 {
        return Err(Error::NegativeTime(delta_t));
    }
    if delta_t.is_nan() {
        return Err(invalid("delta_t", "must not be NaN"));
    }
    Ok(())
}

/// Decay-time density of an initial B0 without postselection, -d/dt of the
/// survival probability. Use `mix.swapped()` for an initial B0bar.
pub fn pdf_unselected(delta_t: f64, mp: &MesonParams, mix: &MixingParams) -> Result<f64> {
    check_time(delta_t)?;
    let p2 = mix.abs_p().powi(2);
    if p2 == 0.0 {
        return Err(invalid("p", "flavor eigenstate undefined for vanishing mixing coefficient"));
    }
    let q2 = mix.abs_q().powi(2);
    let t = delta_t;
    let (gl, gh, g, dm) = (mp.gamma_l(), mp.gamma_h(), mp.gamma(), mp.delta_m());
    let (s, c) = (dm * t).sin_cos();
    Ok((gl * (-gl * t).exp() + gh * (-gh * t).exp()) / (4.0 * p2)
        + (p2 - q2) / (2.0 * p2) * (-g * t).exp() * (dm * s + g * c))
}

/// Mean decay time of an initial B0 without postselection.
pub fn lifetime_unselected(mp: &MesonParams, mix: &MixingParams) -> Result<LifetimeResult> {
    let p2 = mix.abs_p().powi(2);
    if p2 == 0.0 {
        return Err(invalid("p", "flavor eigenstate undefined for vanishing mixing coefficient"));
    }
    let q2 = mix.abs_q().powi(2);
    let (gl, gh, g, dm) = (mp.gamma_l(), mp.gamma_h(), mp.gamma(), mp.delta_m());
    let tau = (1.0 / gl + 1.0 / gh) / (4.0 * p2) + (p2 - q2) / (2.0 * p2) * g / (g * g + dm * dm);
    LifetimeResult::new(tau, mp)
}

fn normalized_terms(
    post: &Postselection,
    flavor: FlavorState,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<(TransitionTerms, f64)> {
    let terms = TransitionTerms::new(post, flavor, mix)?;
    let norm = terms.integral(mp);
    if norm.is_nan() || norm <= 0.0 {
        return Err(Error::DegenerateNormalization(norm));
    }
    Ok((terms, norm))
}

/// Conditional decay-time density for the transition flavor -> postselected
/// state, with the full widths Gamma_L, Gamma_H.
pub fn conditional_pdf_exact(
    delta_t: f64,
    post: &Postselection,
    flavor: FlavorState,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<f64> {
    check_time(delta_t)?;
    let (terms, norm) = normalized_terms(post, flavor, mp, mix)?;
    Ok(terms.eval(mp, delta_t) / norm)
}

/// Conditional density under the equal-width approximation Gamma_L = Gamma_H = Gamma,
/// as a reusable density object (sampling, CDF, moments).
pub fn conditional_density_equalwidth(
    post: &Postselection,
    flavor: FlavorState,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<ExpTrigDensity> {
    let terms = TransitionTerms::new(post, flavor, mix)?;
    ExpTrigDensity::new(mp.gamma(), mp.delta_m(), terms.even, terms.cos, terms.sin, Support::Positive)
}

/// Conditional density under the equal-width approximation. The widths of
/// `mp` enter only through their average.
pub fn conditional_pdf_equalwidth(
    delta_t: f64,
    post: &Postselection,
    flavor: FlavorState,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<f64> {
    check_time(delta_t)?;
    Ok(conditional_density_equalwidth(post, flavor, mp, mix)?.pdf(delta_t))
}

/// Weak value with equal widths, -(q s*)/(p r*) seen from `flavor`.
fn equal_width_weak_value(flavor: FlavorState, mix: &MixingParams, post: &Postselection) -> Result<Complex> {
    if post.r().norm() == 0.0 {
        return Err(Error::SingularPostselection);
    }
    let (p, q) = match flavor {
        FlavorState::B0 => (mix.p(), mix.q()),
        FlavorState::B0bar => (mix.q(), mix.p()),
    };
    if p.norm() == 0.0 {
        return Err(invalid("p", "flavor eigenstate undefined for vanishing mixing coefficient"));
    }
    Ok(-(q * post.s().conj()) / (p * post.r().conj()))
}

/// Effective lifetime with postselection in the equal-width approximation,
/// written in terms of the weak value A_w.
pub fn effective_lifetime(
    post: &Postselection,
    flavor: FlavorState,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<LifetimeResult> {
    let aw = equal_width_weak_value(flavor, mix, post)?;
    let (g, dm) = (mp.gamma(), mp.delta_m());
    let d = g * g + dm * dm;
    let m2 = aw.norm_sqr();
    let num = (1.0 + m2) / (g * g) + (1.0 - m2) * (g * g - dm * dm) / (d * d) + 4.0 * aw.im * g * dm / (d * d);
    let den = (1.0 + m2) / g + (1.0 - m2) * g / d + 2.0 * aw.im * dm / d;
    if den.is_nan() || den <= 0.0 {
        return Err(Error::DegenerateNormalization(den));
    }
    LifetimeResult::new(num / den, mp)
}

/// Effective lifetime as the ratio of the first moment to the normalization
/// of the exact transition probability. Valid for unequal widths and for
/// r = 0; agrees with `effective_lifetime` when the widths coincide.
pub fn effective_lifetime_moments(
    post: &Postselection,
    flavor: FlavorState,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<LifetimeResult> {
    let (terms, norm) = normalized_terms(post, flavor, mp, mix)?;
    LifetimeResult::new(terms.first_moment(mp) / norm, mp)
}

/// First-order expansion (1/Gamma)(1 + Im A_w dm/Gamma).
pub fn effective_lifetime_first_order(
    post: &Postselection,
    flavor: FlavorState,
    mp: &MesonParams,
    mix: &MixingParams,
) -> Result<f64> {
    let aw = equal_width_weak_value(flavor, mix, post)?;
    let g = mp.gamma();
    Ok((1.0 + aw.im * mp.delta_m() / g) / g)
}

/// P(t | B0 -> B_decay) - P(t | B0bar -> B0bar_decay) in the equal-width
/// approximation. Requires |p| = |q|.
pub fn cp_difference(delta_t: f64, post: &Postselection, mp: &MesonParams, mix: &MixingParams) -> Result<f64> {
    if (mix.abs_p() - mix.abs_q()).abs() > 1e-12 {
        return Err(invalid("|p|", "the CP difference assumes |p| = |q|"));
    }
    if post.r().norm() == 0.0 {
        return Err(Error::SingularPostselection);
    }
    Ok(conditional_pdf_equalwidth(delta_t, post, FlavorState::B0, mp, mix)?
        - conditional_pdf_equalwidth(delta_t, post, FlavorState::B0bar, mp, mix)?)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    use super::*;
    use crate::dynamics::survival_probability;
    use crate::quad::integrate_to_infinity;
    use crate::testing::{random_mixing, random_post};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn symmetric(varphi: f64) -> MixingParams {
        MixingParams::from_phase(FRAC_1_SQRT_2, varphi).unwrap()
    }

    #[test]
    fn unselected_pdf_limits_and_derivative() {
        let mp = MesonParams::b_meson();
        let mix = symmetric(0.7);
        for &t in &[0.0f64, 0.5, 2.0, 7.0] {
            let expected = mp.gamma() * (-mp.gamma() * t).exp();
            assert!((pdf_unselected(t, &mp, &mix).unwrap() - expected).abs() < 1e-15);
        }
        let mp = MesonParams::new(0.5, 1.1, 0.55, 0.8).unwrap();
        let mix = MixingParams::from_phase(0.8, 0.3).unwrap();
        let h = 1e-5;
        for i in 1..80 {
            let t = 0.1 * i as f64;
            let fd = -(survival_probability(FlavorState::B0, t + h, &mp, &mix).unwrap()
                - survival_probability(FlavorState::B0, t - h, &mp, &mix).unwrap())
                / (2.0 * h);
            assert!((fd - pdf_unselected(t, &mp, &mix).unwrap()).abs() < 1e-6);
        }
        let total = integrate_to_infinity(|t| pdf_unselected(t, &mp, &mix).unwrap(), 0.0, 1e-12).unwrap().value;
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn unselected_lifetime_against_quadrature() {
        let mp = MesonParams::b_meson();
        let lt = lifetime_unselected(&mp, &symmetric(0.2)).unwrap();
        assert!((lt.tau_eff - 1.519).abs() < 1e-12);
        assert!((lt.amplification_ratio - 1.0).abs() < 1e-12);
        for (mp, mix) in [
            (MesonParams::new(0.5, 1.1, 0.55, 0.8).unwrap(), MixingParams::from_phase(0.8, 0.3).unwrap()),
            (MesonParams::b_meson(), MixingParams::from_phase(0.8, -1.0).unwrap()),
        ] {
            let lt = lifetime_unselected(&mp, &mix).unwrap();
            let oracle =
                integrate_to_infinity(|t| t * pdf_unselected(t, &mp, &mix).unwrap(), 0.0, 1e-12).unwrap().value;
            assert!(((lt.tau_eff - oracle) / oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn conditional_exact_normalization_against_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..40 {
            let mp = MesonParams::new(
                0.3,
                rng.random_range(0.4..1.4),
                rng.random_range(0.4..1.0),
                rng.random_range(0.4..1.0),
            )
            .unwrap();
            let mix = random_mixing(&mut rng);
            let post = random_post(&mut rng);
            for flavor in [FlavorState::B0, FlavorState::B0bar] {
                let terms = TransitionTerms::new(&post, flavor, &mix).unwrap();
                let quad = integrate_to_infinity(|t| terms.eval(&mp, t), 0.0, 1e-12).unwrap().value;
                assert!((quad - terms.integral(&mp)).abs() < 1e-9);
                let total =
                    integrate_to_infinity(|t| conditional_pdf_exact(t, &post, flavor, &mp, &mix).unwrap(), 0.0, 1e-12)
                        .unwrap()
                        .value;
                assert!((total - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn equal_width_limit_agrees_with_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mp = MesonParams::b_meson();
        for _ in 0..50 {
            let mix = random_mixing(&mut rng);
            let post = random_post(&mut rng);
            for flavor in [FlavorState::B0, FlavorState::B0bar] {
                for i in 0..30 {
                    let t = 0.3 * i as f64;
                    let a = conditional_pdf_exact(t, &post, flavor, &mp, &mix).unwrap();
                    let b = conditional_pdf_equalwidth(t, &post, flavor, &mp, &mix).unwrap();
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn balanced_postselection_gives_pure_exponential() {
        let mp = MesonParams::b_meson();
        let mix = symmetric(0.4);
        let post = Postselection::from_abs_theta(FRAC_1_SQRT_2, 0.4).unwrap();
        for &t in &[0.0f64, 1.0, 3.0] {
            let got = conditional_pdf_equalwidth(t, &post, FlavorState::B0, &mp, &mix).unwrap();
            assert!((got - mp.gamma() * (-mp.gamma() * t).exp()).abs() < 1e-14);
        }
        let lt = effective_lifetime(&post, FlavorState::B0, &mp, &mix).unwrap();
        assert!((lt.tau_eff - 1.519).abs() < 1e-12);
    }

    #[test]
    fn small_r_shifts_density_to_later_times() {
        let mp = MesonParams::b_meson();
        let mix = symmetric(0.0);
        let mean = |r: f64| {
            conditional_density_equalwidth(&Postselection::from_abs_theta(r, 0.0).unwrap(), FlavorState::B0, &mp, &mix)
                .unwrap()
                .mean()
        };
        assert!(mean(0.1) > mean(0.5));
        assert!(mean(0.5) > mean(0.9));
    }

    #[test]
    fn weak_value_form_matches_moment_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mp = MesonParams::b_meson();
        for _ in 0..200 {
            let mix = random_mixing(&mut rng);
            let post = random_post(&mut rng);
            for flavor in [FlavorState::B0, FlavorState::B0bar] {
                let a = effective_lifetime(&post, flavor, &mp, &mix).unwrap().tau_eff;
                let b = effective_lifetime_moments(&post, flavor, &mp, &mix).unwrap().tau_eff;
                let c = conditional_density_equalwidth(&post, flavor, &mp, &mix).unwrap().mean();
                assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
                assert!((a - c).abs() < 1e-12 * a);
            }
        }
    }

    #[test]
    fn pure_flavor_postselection_against_quadrature() {
        // |r| = 1: A_w = 0
        let mp = MesonParams::b_meson();
        let mix = symmetric(0.77);
        let post = Postselection::from_abs_theta(1.0, 0.3).unwrap();
        let lt = effective_lifetime(&post, FlavorState::B0, &mp, &mix).unwrap();
        let oracle = integrate_to_infinity(
            |t| t * conditional_pdf_equalwidth(t, &post, FlavorState::B0, &mp, &mix).unwrap(),
            0.0,
            1e-12,
        )
        .unwrap()
        .value;
        assert!((lt.tau_eff - oracle).abs() < 1e-9);
        let none = Postselection::from_abs_theta(0.0, 0.0).unwrap();
        assert!(matches!(effective_lifetime(&none, FlavorState::B0, &mp, &mix), Err(Error::SingularPostselection)));
    }

    #[test]
    fn first_order_expansion() {
        let mix = symmetric(0.3);
        let post = Postselection::from_abs_theta(0.6, 0.3).unwrap();
        let mp = MesonParams::b_meson();
        let fo = effective_lifetime_first_order(&post, FlavorState::B0, &mp, &mix).unwrap();
        assert!((fo - 1.519).abs() < 1e-12);

        let gamma = 1.0 / 1.519;
        let post = Postselection::from_abs_theta(0.4, -1.0).unwrap();
        let discrepancy = |ratio: f64| {
            let mp = MesonParams::from_averages(1.0, ratio * gamma, gamma, 0.0).unwrap();
            let exact = effective_lifetime(&post, FlavorState::B0, &mp, &mix).unwrap().tau_eff;
            let fo = effective_lifetime_first_order(&post, FlavorState::B0, &mp, &mix).unwrap();
            ((fo - exact) / exact).abs()
        };
        assert!(discrepancy(0.01) < 1e-3);
        let r = discrepancy(0.02) / discrepancy(0.005);
        assert!((12.0..20.0).contains(&r), "ratio {r}");
    }

    #[test]
    fn amplification_symmetric_under_supplementary_relative_phase() {
        let mp = MesonParams::b_meson();
        let varphi = 0.775;
        let mix = symmetric(varphi);
        for &x in &[-1.2f64, -0.4, 0.3, 1.0] {
            for &r in &[0.2, 0.5, 0.8] {
                let a = Postselection::from_abs_theta(r, varphi + x).unwrap();
                let b = Postselection::from_abs_theta(r, varphi + std::f64::consts::PI - x).unwrap();
                let ta = effective_lifetime(&a, FlavorState::B0, &mp, &mix).unwrap().tau_eff;
                let tb = effective_lifetime(&b, FlavorState::B0, &mp, &mix).unwrap().tau_eff;
                assert!((ta - tb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormal_pair_recovers_unselected_lifetime() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let mp = MesonParams::new(
                0.2,
                rng.random_range(0.3..1.3),
                rng.random_range(0.4..1.0),
                rng.random_range(0.4..1.0),
            )
            .unwrap();
            let mix = random_mixing(&mut rng);
            let post = random_post(&mut rng);
            let mut num = 0.0;
            let mut den = 0.0;
            for ps in [post, post.orthogonal()] {
                let terms = TransitionTerms::new(&ps, FlavorState::B0, &mix).unwrap();
                let w = terms.integral(&mp);
                num += w * effective_lifetime_moments(&ps, FlavorState::B0, &mp, &mix).unwrap().tau_eff;
                den += w;
            }
            // weights sum to the integral of the survival probability
            let unselected_mean =
                integrate_to_infinity(|t| t * pdf_unselected(t, &mp, &mix).unwrap(), 0.0, 1e-12).unwrap().value;
            let survival_integral = lifetime_unselected(&mp, &mix).unwrap().tau_eff;
            assert!((den - survival_integral).abs() < 1e-10);
            // E[t] over the transition probability is the second moment of the
            // decay density divided by two.
            let second_half =
                integrate_to_infinity(|t| 0.5 * t * t * pdf_unselected(t, &mp, &mix).unwrap(), 0.0, 1e-12)
                    .unwrap()
                    .value;
            assert!((num - second_half).abs() < 1e-8 * second_half, "{num} vs {second_half}");
            assert!(unselected_mean > 0.0);
        }
    }

    #[test]
    fn cp_difference_properties() {
        let mp = MesonParams::b_meson();
        let post = Postselection::from_abs_theta(0.4, 0.7).unwrap();
        for i in 0..40 {
            let t = 0.2 * i as f64;
            assert!(cp_difference(t, &post, &mp, &symmetric(0.0)).unwrap().abs() < 1e-15);
        }
        let tau = mp.tau();
        let plus = cp_difference(tau, &post, &mp, &symmetric(0.5)).unwrap();
        let minus = cp_difference(tau, &post, &mp, &symmetric(-0.5)).unwrap();
        assert!(plus * minus < 0.0);
        assert!(cp_difference(1.0, &post, &mp, &MixingParams::from_phase(0.6, 0.1).unwrap()).is_err());
    }

    #[test]
    fn cp_difference_shape() {
        // With each density multiplied back by its own normalization the
        // difference is exactly 2 |r||s| cos(theta) sin(varphi) e^{-Gamma t} sin(dm t)
        // (times Gamma^0). The two normalizations differ at O(dm/Gamma), the same
        // order as the oscillating term, so the literal difference is only
        // approximately proportional to this shape.
        let gamma = 1.0 / 1.519;
        for ratio in [0.05, 0.77] {
            let mp = MesonParams::from_averages(1.0, ratio * gamma, gamma, 0.0).unwrap();
            let varphi = 0.6;
            let mix = symmetric(varphi);
            for &(r, theta) in &[(0.3f64, 0.2f64), (0.6, -0.9), (0.5, FRAC_PI_2)] {
                let post = Postselection::from_abs_theta(r, theta).unwrap();
                let nb = TransitionTerms::new(&post, FlavorState::B0, &mix).unwrap().integral(&mp);
                let nbar = TransitionTerms::new(&post, FlavorState::B0bar, &mix).unwrap().integral(&mp);
                for i in 0..20 {
                    let t = 0.25 * i as f64;
                    let diff = nb * conditional_pdf_equalwidth(t, &post, FlavorState::B0, &mp, &mix).unwrap()
                        - nbar * conditional_pdf_equalwidth(t, &post, FlavorState::B0bar, &mp, &mix).unwrap();
                    let shape = 2.0
                        * r
                        * (1.0 - r * r).sqrt()
                        * theta.cos()
                        * varphi.sin()
                        * (-gamma * t).exp()
                        * (mp.delta_m() * t).sin();
                    assert!((diff - shape).abs() < 1e-14, "t={t}: {diff} vs {shape}");
                }
                let literal = cp_difference(mp.tau(), &post, &mp, &mix).unwrap();
                assert!(literal.is_finite());
            }
        }
    }
}
