//! Constants derived from the game primitives that parameterize the
//! equilibrium machine: the effective discount factor, the belief-drift speed
//! `lambda`, the reputation floor `eta_star`, the per-type mixing counters
//! `k_j`, and the counting bounds `K` and `M`.

use crate::error::{GameError, MachineError};
use num_rational::BigRational;
use crate::stage_game::GameParams;

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedConstants {
    /// Effective discount factor on low-state periods:
    /// `delta_hat = δ(1−p_h)/(1−δ p_h)`.
    pub delta_hat: f64,
    /// `p_h / (1 - p_h)`.
    pub rho_star: f64,
    /// The construction's target lie frequency.
    pub rho: f64,
    /// A rational `n/l` strictly between `rho` and `rho_star`, scaled so that
    /// `n/(l+1)` also exceeds `rho`.
    pub n_over_l: (u64, u64),
    /// Midpoint of `n/l` and `n/(l+1)`.
    pub rho_tilde: f64,
    /// Midpoint of `n/l` and `rho_star`.
    pub rho_hat: f64,
    /// Belief-drift speed: reputation moves by factors `1 ± lambda·(…)` per
    /// low-state observation.
    pub lambda: f64,
    /// Reputation floor: the highest-cost type's posterior never drops below
    /// this on the equilibrium path.
    pub eta_star: f64,
    /// Mixing counters for type index `j ≥ 2` (0-based); entries 0 and 1 are
    /// unused and set to 0. Only populated for three or more types.
    pub k: Vec<u64>,
    /// Upper bound on the length of a rebounding spell.
    pub cap_rebound: u64,
    /// Belief-depletion bound used inside `m_bound`.
    pub m_hat: u64,
    /// Upper bound on the number of low-state periods spent in Class 2.
    pub m_bound: u64,
}

/// Largest `lambda` for which reputation still grows geometrically when the
/// sender lies with frequency `rho_hat`:
/// root of `(1−ρ̂)·ln(1+λρ*) + ρ̂·ln(1−λ(1−ρ*)) = 0`.
fn lambda_growth_root(rho_hat: f64, rho_star: f64) -> f64 {
    let g = |lambda: f64| {
        (1.0 - rho_hat) * (1.0 + lambda * rho_star).ln()
            + rho_hat * (1.0 - lambda * (1.0 - rho_star)).ln()
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / (1.0 - rho_star) - 1e-12;
    // g(0+) is positive (slope rho_star - rho_hat > 0) and g -> -inf at hi.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The geometric reputation-growth factor at lie frequency `rho`:
/// `(1+λρ*)^{1−ρ} (1−λ(1−ρ*))^ρ`. Lying less than `ρ*` grows reputation
/// (factor > 1); lying more shrinks it.
pub fn reputation_growth_factor(lambda: f64, rho_star: f64, rho: f64) -> f64 {
    (1.0 + lambda * rho_star).powf(1.0 - rho) * (1.0 - lambda * (1.0 - rho_star)).powf(rho)
}

/// The simplest fraction strictly inside the open interval `(lo, hi)`,
/// `0 <= lo < hi`, found by Stern-Brocot (continued-fraction) descent in
/// exact rational arithmetic so strictness survives tiny intervals.
fn simplest_between_rat(lo: &BigRational, hi: &BigRational) -> BigRational {
    let one: BigRational = num_traits::One::one();
    let fl = lo.floor();
    if fl.clone() + one.clone() < *hi {
        return fl + one;
    }
    let frac_lo = lo - fl.clone();
    let frac_hi = hi - fl.clone();
    if num_traits::Zero::is_zero(&frac_lo) {
        // The interval hugs the integer from above: fl + 1/k works for the
        // first k with 1/k below the upper endpoint.
        let k = frac_hi.recip().floor() + one;
        return fl + k.recip();
    }
    fl + simplest_between_rat(&frac_hi.recip(), &frac_lo.recip()).recip()
}

fn select_fraction(rho_lo: f64, rho_hi: f64) -> Result<(u64, u64), GameError> {
    // A fraction n/l in (rho_lo, rho_hi), then scaled so n/(l+1) > rho_lo.
    if !(rho_lo >= 0.0 && rho_lo < rho_hi && rho_hi.is_finite()) {
        return Err(GameError::InvalidArgument(format!(
            "no fraction found in ({rho_lo}, {rho_hi})"
        )));
    }
    let mut lo = BigRational::from_float(rho_lo)
        .ok_or_else(|| GameError::InvalidArgument(format!("non-finite bound {rho_lo}")))?;
    let mut hi = BigRational::from_float(rho_hi)
        .ok_or_else(|| GameError::InvalidArgument(format!("non-finite bound {rho_hi}")))?;
    // The simplest fraction can be so close to an endpoint that it rounds
    // onto it in f64; re-descend on the shrunk interval until the fraction is
    // strictly interior in f64 terms as well.
    let (n, l) = 'search: {
        for _ in 0..128 {
            let frac = simplest_between_rat(&lo, &hi);
            let pair = (
                num_traits::ToPrimitive::to_u64(frac.numer()),
                num_traits::ToPrimitive::to_u64(frac.denom()),
            );
            let (n, l) = match pair {
                (Some(n), Some(l)) if n >= 1 && l >= 1 => (n, l),
                _ => break,
            };
            let ratio = n as f64 / l as f64;
            if ratio > rho_lo && ratio < rho_hi {
                break 'search (n, l);
            }
            if ratio <= rho_lo {
                lo = frac;
            } else {
                hi = frac;
            }
        }
        return Err(GameError::InvalidArgument(format!(
            "no fraction found in ({rho_lo}, {rho_hi})"
        )));
    };
    // Scale by j so that (n j)/(l j + 1) > rho_lo.
    let margin = (n as f64 - rho_lo * l as f64).max(f64::MIN_POSITIVE);
    let j = ((rho_lo / margin).ceil() as u64).saturating_add(1).max(1);
    match (n.checked_mul(j), l.checked_mul(j)) {
        (Some(nj), Some(lj)) => Ok((nj, lj)),
        _ => Err(GameError::InvalidArgument(format!(
            "fraction in ({rho_lo}, {rho_hi}) too close to the boundary to scale"
        ))),
    }
}

pub fn derive_constants(params: &GameParams, rho: f64) -> Result<DerivedConstants, MachineError> {
    params.max_cost_below_one().map_err(GameError::from)?;
    derive_constants_allowing_ethical(params, rho)
}

/// As [`derive_constants`], but without the cost cap. Used for the auxiliary
/// machine of the composite construction, whose highest cost may be ethical.
pub fn derive_constants_allowing_ethical(
    params: &GameParams,
    rho: f64,
) -> Result<DerivedConstants, MachineError> {
    params.validate().map_err(GameError::from)?;
    let p_h = params.p_h;
    let rho_star = params.rho_star();
    if !(0.0..rho_star).contains(&rho) {
        return Err(GameError::InvalidArgument(format!(
            "rho must lie in [0, rho_star={rho_star}), got {rho}"
        ))
        .into());
    }
    let delta_hat = params.delta_hat();

    // With rho = 0 the machine starts absorbed and the drift constants are
    // inert; pick them as if a small positive frequency were targeted.
    let rho_eff = if rho > 0.0 { rho } else { rho_star / 4.0 };
    let (n, l) = select_fraction(rho_eff, rho_star).map_err(MachineError::Game)?;
    let n_over_l = n as f64 / l as f64;
    let rho_tilde = 0.5 * (n_over_l + n as f64 / (l as f64 + 1.0));
    let rho_hat = 0.5 * (n_over_l + rho_star);
    // Strict in exact arithmetic; allow one-ulp collapses when rho hugs
    // rho_star.
    debug_assert!(rho <= rho_tilde && rho_tilde <= n_over_l && n_over_l <= rho_hat + 1e-15);
    debug_assert!(rho_hat <= rho_star);

    let lambda_cap = (1.0 - (1.0 - rho_star).sqrt()) / (1.0 - rho_star);
    let lambda = 0.9 * lambda_growth_root(rho_hat, rho_star).min(lambda_cap);

    let n_types = params.n_types();
    let prior = &params.prior;
    let mut k = vec![0u64; n_types];
    for j in 2..n_types {
        // smallest k with
        // (1−(1−ρ*)π_1)·(π_j/k)/(π_2+…+π_{j−1}+π_j/k) ≤ ρ*.
        let lead = 1.0 - (1.0 - rho_star) * prior[0];
        let mid: f64 = prior[1..j].iter().sum();
        let mut kk = 1u64;
        loop {
            let share = prior[j] / kk as f64;
            if lead * share / (mid + share) <= rho_star + 1e-15 {
                break;
            }
            kk += 1;
            if kk > 1_000_000 {
                return Err(GameError::InvalidArgument(format!(
                    "mixing counter for type {j} did not converge"
                ))
                .into());
            }
        }
        k[j] = kk;
    }

    // Reputation floor: at least (1−ρ*)π_1, raised (for three or more types)
    // until (π_1−η)/(π_1(1−η)) ≤ min_j (π_j/k_j)/(π_2+…+π_j).
    let floor = (1.0 - rho_star) * prior[0];
    let eta_star = if n_types <= 2 {
        floor
    } else {
        let r = (2..n_types)
            .map(|j| {
                let tail: f64 = prior[1..=j].iter().sum();
                (prior[j] / k[j] as f64) / tail
            })
            .fold(f64::INFINITY, f64::min);
        let f = |eta: f64| (prior[0] - eta) / (prior[0] * (1.0 - eta));
        if f(floor) <= r {
            floor
        } else {
            // Solve f(eta) = r exactly (f is decreasing, f(pi_1) = 0).
            let root = prior[0] * (r - 1.0) / (r * prior[0] - 1.0);
            root.max(floor)
        }
    };
    debug_assert!(eta_star >= floor - 1e-12 && eta_star < prior[0]);

    let c1 = params.costs[0];
    let cap_rebound = (((p_h + (1.0 - c1) * p_h) / (c1 * (1.0 - p_h).powi(2))).ceil() as i64)
        .max(1) as u64;
    let m_hat = ((1.0 / prior[0]).ln() / (1.0 / (1.0 - rho_star)).sqrt().ln()).ceil() as u64 + 1;
    let k_sum: u64 = k.iter().sum();
    let m_bound = k_sum + m_hat;

    Ok(DerivedConstants {
        delta_hat,
        rho_star,
        rho,
        n_over_l: (n, l),
        rho_tilde,
        rho_hat,
        lambda,
        eta_star,
        k,
        cap_rebound,
        m_hat,
        m_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stage_game::CostView;
    use approx::assert_abs_diff_eq;

    fn baseline(delta: f64) -> GameParams {
        GameParams::new(0.25, delta, vec![0.5, 0.2], vec![0.5, 0.5], CostView::NonConsequentialist)
            .unwrap()
    }

    #[test]
    fn delta_hat_and_rebound_bound() {
        let c = derive_constants(&baseline(0.9), 0.3).unwrap();
        assert_abs_diff_eq!(c.delta_hat, 27.0 / 31.0, epsilon = 1e-15);
        assert_eq!(c.cap_rebound, 2);
    }

    #[test]
    fn ordering_of_drift_constants() {
        let c = derive_constants(&baseline(0.99), 0.3).unwrap();
        let nl = c.n_over_l.0 as f64 / c.n_over_l.1 as f64;
        assert!(c.rho < c.rho_tilde);
        assert!(c.rho_tilde < nl);
        assert!(nl < c.rho_hat);
        assert!(c.rho_hat < c.rho_star);
    }

    #[test]
    fn lambda_satisfies_growth_and_cap() {
        let c = derive_constants(&baseline(0.99), 0.3).unwrap();
        assert!(c.lambda > 0.0);
        let factor = reputation_growth_factor(c.lambda, c.rho_star, c.rho_hat);
        assert!(factor > 1.0, "growth factor {factor} at rho_hat must exceed 1");
        let cap = (1.0 - (1.0 - c.rho_star).sqrt()) / (1.0 - c.rho_star);
        assert!(c.lambda < cap);
    }

    #[test]
    fn growth_factor_crosses_one_at_rho_star_boundary() {
        let c = derive_constants(&baseline(0.99), 0.3).unwrap();
        assert!(reputation_growth_factor(c.lambda, c.rho_star, c.rho) > 1.0);
        assert!(reputation_growth_factor(c.lambda, c.rho_star, c.rho_star + 0.05) < 1.0);
        // Hand-checked reference values for the map itself.
        assert_abs_diff_eq!(
            reputation_growth_factor(0.05, 1.0 / 3.0, 0.3),
            1.00140,
            epsilon = 5e-5
        );
        assert_abs_diff_eq!(
            reputation_growth_factor(0.05, 1.0 / 3.0, 0.4),
            0.99636,
            epsilon = 5e-5
        );
    }

    #[test]
    fn mixing_counter_three_types() {
        let p = GameParams::new(
            0.25,
            0.9,
            vec![0.5, 0.3, 0.1],
            vec![0.4, 0.3, 0.3],
            CostView::NonConsequentialist,
        )
        .unwrap();
        let c = derive_constants(&p, 0.2).unwrap();
        assert_eq!(c.k[2], 2);
        // Reputation floor solves the belief inequality with equality here.
        assert_abs_diff_eq!(c.eta_star, 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(c.m_bound, c.m_hat + 2);
    }

    #[test]
    fn eta_star_floor_for_two_types() {
        let c = derive_constants(&baseline(0.99), 0.3).unwrap();
        assert_abs_diff_eq!(c.eta_star, (1.0 - 1.0 / 3.0) * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_rho_at_or_above_rho_star() {
        assert!(derive_constants(&baseline(0.99), 1.0 / 3.0).is_err());
        assert!(derive_constants(&baseline(0.99), 0.5).is_err());
    }
}
