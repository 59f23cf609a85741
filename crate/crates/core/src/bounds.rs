//! Closed-form payoff bounds and target payoff vectors.
//!
//! Every formula is generic over [`Scalar`], so each bound is available both in
//! double precision and in exact rational arithmetic. Entry `j` of a payoff
//! vector is type `c_j`'s discounted-average payoff; `costs[0]` is the highest
//! lying cost.

use crate::error::GameError;
use crate::scalar::Scalar;
use crate::stage_game::GameParams;

/// The polytope containing all continuation payoff vectors of the explicit
/// equilibrium, described by its four vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct PolytopeVStar {
    /// Full-honesty vertex: every entry `p_h`.
    pub v_h: Vec<f64>,
    /// Best-equilibrium vertex `v*`.
    pub v_star: Vec<f64>,
    /// Zero-first-entry mixture of the trusted block and the punishment cell.
    pub v_bar: Vec<f64>,
    /// Lowest vertex: mixture of honesty and punishment with first entry 0.
    pub v_under: Vec<f64>,
    /// Punishment weight pinning the first entry of `v_under` to zero.
    pub p_star: f64,
    /// Trusted-block weight pinning the first entry of `v_bar` to zero.
    pub q_star: f64,
}

fn require_costs_below_one(costs: &[f64]) -> Result<(), GameError> {
    if costs.is_empty() {
        return Err(GameError::BadCosts("empty".into()));
    }
    if costs[0] >= 1.0 {
        return Err(GameError::RequiresCostsBelowOne(costs[0]));
    }
    Ok(())
}

/// Basis payoff vectors: full honesty with trust (`v^H`), full lying with
/// trust (`v^L`), full lying against passivity (`v^N`).
pub fn payoff_basis_in<S: Scalar>(p_h: &S, costs: &[S]) -> (Vec<S>, Vec<S>, Vec<S>) {
    let one_minus = S::one() - p_h.clone();
    let v_h = costs.iter().map(|_| p_h.clone()).collect();
    let v_l = costs
        .iter()
        .map(|c| p_h.clone() + (S::one() - c.clone()) * one_minus.clone())
        .collect();
    let v_n = costs.iter().map(|c| -(c.clone() * one_minus.clone())).collect();
    (v_h, v_l, v_n)
}

pub fn payoff_basis(params: &GameParams) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    payoff_basis_in(&params.p_h, &params.costs)
}

/// Highest equilibrium payoff per type:
/// `v*_j = p_h (1 + (c_1 - c_j) / (2 p_h + c_1 (1 - 2 p_h)))`.
pub fn v_star_in<S: Scalar>(p_h: &S, costs: &[S]) -> Vec<S> {
    let two = S::from_int(2);
    let c1 = costs[0].clone();
    let denom = two.clone() * p_h.clone() + c1.clone() * (S::one() - two * p_h.clone());
    costs
        .iter()
        .map(|c| p_h.clone() * (S::one() + (c1.clone() - c.clone()) / denom.clone()))
        .collect()
}

pub fn v_star(params: &GameParams) -> Result<Vec<f64>, GameError> {
    require_costs_below_one(&params.costs)?;
    Ok(v_star_in(&params.p_h, &params.costs))
}

/// Optimal commitment (persuasion) payoff: `v**_j = p_h + p_h (1 - c_j)`.
pub fn v_star_star_in<S: Scalar>(p_h: &S, costs: &[S]) -> Vec<S> {
    costs
        .iter()
        .map(|c| p_h.clone() + p_h.clone() * (S::one() - c.clone()))
        .collect()
}

pub fn v_star_star(params: &GameParams) -> Vec<f64> {
    v_star_star_in(&params.p_h, &params.costs)
}

/// Highest equilibrium payoff when only consequential lies are costed:
/// `v†_j = p_h (2 - c_j) / (2 - c_1)`.
pub fn v_dagger_in<S: Scalar>(p_h: &S, costs: &[S]) -> Vec<S> {
    let two = S::from_int(2);
    let denom = two.clone() - costs[0].clone();
    costs
        .iter()
        .map(|c| p_h.clone() * (two.clone() - c.clone()) / denom.clone())
        .collect()
}

pub fn v_dagger(params: &GameParams) -> Result<Vec<f64>, GameError> {
    require_costs_below_one(&params.costs)?;
    Ok(v_dagger_in(&params.p_h, &params.costs))
}

/// Upper and lower equilibrium payoff bounds for an ethical type (cost ≥ 1)
/// in a population whose highest cost is `c_1`:
/// `vbar = p_h (2 - c)`, `vunder = p_h (c_1 - c) / (1 + c_1)`.
pub fn ethical_bounds_in<S: Scalar>(p_h: &S, c1: &S, c: &S) -> (S, S) {
    let two = S::from_int(2);
    let vbar = p_h.clone() * (two - c.clone());
    let vunder = p_h.clone() * (c1.clone() - c.clone()) / (S::one() + c1.clone());
    (vbar, vunder)
}

pub fn ethical_bounds(params: &GameParams, c: f64) -> Result<(f64, f64), GameError> {
    if c < 1.0 {
        return Err(GameError::InvalidArgument(format!("ethical cost must be >= 1, got {c}")));
    }
    if c > params.costs[0] {
        return Err(GameError::InvalidArgument(format!(
            "ethical cost {c} exceeds the highest cost {}",
            params.costs[0]
        )));
    }
    Ok(ethical_bounds_in(&params.p_h, &params.costs[0], &c))
}

/// Whether the commitment payoff is attainable for every non-ethical type.
#[derive(Clone, Debug, PartialEq)]
pub enum CommitmentAttainability {
    /// Attainable; carries the cheapest ethical cost `c*` as witness.
    Attainable { witness: f64 },
    /// An ethical type exists but punishment is too weak: `c_1 (c* - 1) > 2`.
    TooCostly { witness: f64 },
    /// No ethical type exists; the low-bound regime applies instead.
    NoEthicalType,
}

impl CommitmentAttainability {
    pub fn is_attainable(&self) -> bool {
        matches!(self, CommitmentAttainability::Attainable { .. })
    }
}

/// Tests `c_1 (c* - 1) <= 2`, where `c*` is the smallest cost ≥ 1.
pub fn commitment_attainable(params: &GameParams) -> Result<CommitmentAttainability, GameError> {
    if !params.costs.iter().any(|&c| c < 1.0) {
        return Err(GameError::InvalidArgument(
            "no cost below 1: at least one non-ethical type required".into(),
        ));
    }
    let c_star = params.costs.iter().copied().filter(|&c| c >= 1.0).fold(f64::INFINITY, f64::min);
    if !c_star.is_finite() {
        return Ok(CommitmentAttainability::NoEthicalType);
    }
    if params.costs[0] * (c_star - 1.0) <= 2.0 {
        Ok(CommitmentAttainability::Attainable { witness: c_star })
    } else {
        Ok(CommitmentAttainability::TooCostly { witness: c_star })
    }
}

fn check_rho_range(rho: f64, rho_star: f64) -> Result<(), GameError> {
    if !(0.0..=rho_star + 1e-15).contains(&rho) {
        return Err(GameError::InvalidArgument(format!(
            "rho must lie in [0, rho_star={rho_star}], got {rho}"
        )));
    }
    Ok(())
}

/// Simple three-way mixture target at lie frequency `rho`:
/// `[(1-ρ) c_1 v^H + ρ c_1 v^L + ρ (1-c_1) v^N] / (ρ (1-c_1) + c_1)`.
///
/// Kept alongside [`v_target`] because it does *not* reach `v*` at `ρ = ρ*`;
/// the calibrated mixture below does. Both are accepted as machine presets.
pub fn v_rho_mixture_in<S: Scalar>(p_h: &S, costs: &[S], rho: &S) -> Vec<S> {
    let (v_h, v_l, v_n) = payoff_basis_in(p_h, costs);
    let c1 = costs[0].clone();
    let denom = rho.clone() * (S::one() - c1.clone()) + c1.clone();
    let w_h = (S::one() - rho.clone()) * c1.clone() / denom.clone();
    let w_l = rho.clone() * c1.clone() / denom.clone();
    let w_n = rho.clone() * (S::one() - c1) / denom;
    mix3(&v_h, &v_l, &v_n, &w_h, &w_l, &w_n)
}

pub fn v_rho_mixture(params: &GameParams, rho: f64) -> Result<Vec<f64>, GameError> {
    require_costs_below_one(&params.costs)?;
    check_rho_range(rho, params.rho_star())?;
    Ok(v_rho_mixture_in(&params.p_h, &params.costs, &rho))
}

/// Weights (on `v^H`, `v^L`, `v^N`) of the simple mixture above.
pub fn v_rho_mixture_weights(params: &GameParams, rho: f64) -> Result<(f64, f64, f64), GameError> {
    require_costs_below_one(&params.costs)?;
    check_rho_range(rho, params.rho_star())?;
    let c1 = params.costs[0];
    let denom = rho * (1.0 - c1) + c1;
    Ok(((1.0 - rho) * c1 / denom, rho * c1 / denom, rho * (1.0 - c1) / denom))
}

/// Calibrated target weights at lie frequency `rho`: the mixture
/// `q(ρ)·[ρ v^L + (1-ρ) v^H] + (1-q(ρ))·v^N` with
/// `q(ρ) = (p_h + c_1(1-p_h)) / (p_h + c_1(1-p_h) + ρ(1-c_1)(1-p_h))`,
/// chosen so the highest-cost type's payoff equals `p_h` for every `rho`
/// (its upper-bound constraint binds). Returns weights on (v^H, v^L, v^N).
pub fn v_target_weights_in<S: Scalar>(p_h: &S, c1: &S, rho: &S) -> (S, S, S) {
    let one_minus = S::one() - p_h.clone();
    let base = p_h.clone() + c1.clone() * one_minus.clone();
    let q = base.clone()
        / (base + rho.clone() * (S::one() - c1.clone()) * one_minus);
    (
        q.clone() * (S::one() - rho.clone()),
        q.clone() * rho.clone(),
        S::one() - q,
    )
}

pub fn v_target_weights(params: &GameParams, rho: f64) -> Result<(f64, f64, f64), GameError> {
    require_costs_below_one(&params.costs)?;
    check_rho_range(rho, params.rho_star())?;
    let (a, b, c) = v_target_weights_in(&params.p_h, &params.costs[0], &rho);
    Ok((a, b, c))
}

/// Calibrated target payoff vector at lie frequency `rho`; equals `v^H` at
/// `rho = 0` and `v*` at `rho = ρ*`.
pub fn v_target_in<S: Scalar>(p_h: &S, costs: &[S], rho: &S) -> Vec<S> {
    let (v_h, v_l, v_n) = payoff_basis_in(p_h, costs);
    let (w_h, w_l, w_n) = v_target_weights_in(p_h, &costs[0], rho);
    mix3(&v_h, &v_l, &v_n, &w_h, &w_l, &w_n)
}

pub fn v_target(params: &GameParams, rho: f64) -> Result<Vec<f64>, GameError> {
    require_costs_below_one(&params.costs)?;
    check_rho_range(rho, params.rho_star())?;
    Ok(v_target_in(&params.p_h, &params.costs, &rho))
}

/// The polytope of equilibrium continuation payoffs.
pub fn polytope(params: &GameParams) -> Result<PolytopeVStar, GameError> {
    require_costs_below_one(&params.costs)?;
    let p_h = params.p_h;
    let c1 = params.costs[0];
    let rho_star = params.rho_star();
    let (v_h, v_l, v_n) = payoff_basis(params);
    let v_star = v_star(params)?;

    // Trusted block at frequency rho_star, entry 1 = p_h + rho_star(1-c1)(1-p_h).
    let block1 = p_h + rho_star * (1.0 - c1) * (1.0 - p_h);
    // q* zeroes the first entry of q*·block + (1-q*)·v^N.
    let q_star = (c1 * (1.0 - p_h)) / (block1 + c1 * (1.0 - p_h));
    let v_bar: Vec<f64> = (0..params.n_types())
        .map(|j| {
            q_star * (rho_star * v_l[j] + (1.0 - rho_star) * v_h[j]) + (1.0 - q_star) * v_n[j]
        })
        .collect();

    // p* zeroes the first entry of p*·v^H + (1-p*)·v^N.
    let p_star = c1 * (1.0 - p_h) / (p_h + c1 * (1.0 - p_h));
    let v_under: Vec<f64> =
        (0..params.n_types()).map(|j| p_star * v_h[j] + (1.0 - p_star) * v_n[j]).collect();

    debug_assert!(v_bar[0].abs() < 1e-12);
    debug_assert!(v_under[0].abs() < 1e-12);
    Ok(PolytopeVStar { v_h, v_star, v_bar, v_under, p_star, q_star })
}

impl PolytopeVStar {
    /// Barycentric coordinates (`pL`, `pN`) of the four vertices, in convex
    /// (counterclockwise) order: v^H, v*, v̄, v_under.
    fn vertex_coords(&self, params: &GameParams) -> [(f64, f64); 4] {
        let rho_star = params.rho_star();
        let q = {
            let (_, w_l, w_n) =
                v_target_weights_in(&params.p_h, &params.costs[0], &rho_star);
            (w_l, w_n)
        };
        [
            (0.0, 0.0),
            q,
            (self.q_star * rho_star, 1.0 - self.q_star),
            (0.0, 1.0 - self.p_star),
        ]
    }

    /// How far outside the polytope the payoff vector described by weights
    /// `(pH, pL, pN)` on `(v^H, v^L, v^N)` lies: 0 inside, otherwise the
    /// largest signed distance beyond a face (in barycentric units), or the
    /// worst simplex violation when the weights are not a distribution.
    pub fn violation(&self, params: &GameParams, weights: [f64; 3]) -> f64 {
        let (p_l, p_n) = (weights[1], weights[2]);
        let sum = weights[0] + p_l + p_n;
        let mut worst = (sum - 1.0).abs().max(-weights.iter().cloned().fold(0.0, f64::min));
        let vs = self.vertex_coords(params);
        for i in 0..4 {
            let (x0, y0) = vs[i];
            let (x1, y1) = vs[(i + 1) % 4];
            let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt().max(1e-12);
            let cross = (x1 - x0) * (p_n - y0) - (y1 - y0) * (p_l - x0);
            worst = worst.max(-cross / len);
        }
        worst.max(0.0)
    }

    /// Whether weights `(pH, pL, pN)` on `(v^H, v^L, v^N)` describe a payoff
    /// vector inside the polytope, up to `tol`.
    pub fn contains_weights(&self, params: &GameParams, weights: [f64; 3], tol: f64) -> bool {
        self.violation(params, weights) <= tol
    }
}

/// Punishment-phase payoff target at lie frequency `rho_prime`:
/// `w(ρ') = [ρ'(1-p_h) c_1 v^H + (1-ρ') p_h v^O + ρ' p_h v^N] / (p_h + ρ'(1-p_h) c_1)`
/// with `v^O = 0`. The first entry is identically zero; at `ρ' = ρ*` the
/// vector equals `(vunder(c_1), …, vunder(c_n))`.
pub fn w_of_rho_prime_in<S: Scalar>(p_h: &S, costs: &[S], rho_prime: &S) -> Vec<S> {
    let (v_h, _, v_n) = payoff_basis_in(p_h, costs);
    let c1 = costs[0].clone();
    let one_minus = S::one() - p_h.clone();
    let denom = p_h.clone() + rho_prime.clone() * one_minus.clone() * c1.clone();
    let w_h = rho_prime.clone() * one_minus * c1 / denom.clone();
    let w_n = rho_prime.clone() * p_h.clone() / denom;
    (0..costs.len()).map(|j| w_h.clone() * v_h[j].clone() + w_n.clone() * v_n[j].clone()).collect()
}

pub fn w_of_rho_prime(params: &GameParams, rho_prime: f64) -> Result<Vec<f64>, GameError> {
    let rho_star = params.rho_star();
    if !(rho_star - 1e-12..=1.0 + 1e-12).contains(&rho_prime) {
        return Err(GameError::InvalidArgument(format!(
            "rho_prime must lie in [rho_star={rho_star}, 1], got {rho_prime}"
        )));
    }
    Ok(w_of_rho_prime_in(&params.p_h, &params.costs, &rho_prime))
}

/// Weights of `w(ρ')` on the profiles (Honest,Trust), (AlwaysHigh,NeverTrust),
/// (Honest,NeverTrust): `(pH, pN, pO)`.
pub fn w_weights(params: &GameParams, rho_prime: f64) -> (f64, f64, f64) {
    let p_h = params.p_h;
    let c1 = params.costs[0];
    let denom = p_h + rho_prime * (1.0 - p_h) * c1;
    (
        rho_prime * (1.0 - p_h) * c1 / denom,
        rho_prime * p_h / denom,
        (1.0 - rho_prime) * p_h / denom,
    )
}

fn mix3<S: Scalar>(
    v_h: &[S],
    v_l: &[S],
    v_n: &[S],
    w_h: &S,
    w_l: &S,
    w_n: &S,
) -> Vec<S> {
    (0..v_h.len())
        .map(|j| {
            w_h.clone() * v_h[j].clone()
                + w_l.clone() * v_l[j].clone()
                + w_n.clone() * v_n[j].clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use crate::stage_game::CostView;
    use approx::assert_abs_diff_eq;
    use num_rational::BigRational;

    fn baseline() -> GameParams {
        GameParams::new(0.25, 0.9, vec![0.5, 0.2], vec![0.5, 0.5], CostView::NonConsequentialist)
            .unwrap()
    }

    #[test]
    fn v_star_hand_values() {
        let v = v_star(&baseline()).unwrap();
        assert_abs_diff_eq!(v[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.35, epsilon = 1e-15);
    }

    #[test]
    fn v_star_rejects_ethical_costs() {
        let p = GameParams::new(
            0.25,
            0.9,
            vec![1.5, 0.2],
            vec![0.5, 0.5],
            CostView::NonConsequentialist,
        )
        .unwrap();
        assert!(matches!(v_star(&p), Err(GameError::RequiresCostsBelowOne(_))));
    }

    #[test]
    fn v_star_approaches_commitment_as_c1_approaches_one() {
        let p = GameParams::new(
            0.25,
            0.9,
            vec![1.0 - 1e-9, 0.2],
            vec![0.5, 0.5],
            CostView::NonConsequentialist,
        )
        .unwrap();
        let v = v_star(&p).unwrap();
        let vv = v_star_star(&p);
        assert_abs_diff_eq!(v[1], 0.45, epsilon = 1e-6);
        assert_abs_diff_eq!(v[1], vv[1], epsilon = 1e-6);
    }

    #[test]
    fn v_star_star_hand_values() {
        let vv = v_star_star(&baseline());
        assert_abs_diff_eq!(vv[0], 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(vv[1], 0.45, epsilon = 1e-15);
        // c = 1 removes the persuasion surplus; c = 0 doubles p_h.
        let p1 = GameParams::new(
            0.25,
            0.9,
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            CostView::NonConsequentialist,
        )
        .unwrap();
        let v = v_star_star(&p1);
        assert_abs_diff_eq!(v[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn v_dagger_hand_values_and_ordering() {
        let p = baseline();
        let vd = v_dagger(&p).unwrap();
        assert_abs_diff_eq!(vd[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(vd[1], 0.30, epsilon = 1e-15);
        let vs = v_star(&p).unwrap();
        assert!(p.p_h < vd[1] && vd[1] < vs[1]);
    }

    #[test]
    fn ethical_bounds_hand_values() {
        let mk = |c1: f64| {
            GameParams::new(
                0.25,
                0.9,
                vec![c1, 0.5],
                vec![0.5, 0.5],
                CostView::NonConsequentialist,
            )
            .unwrap()
        };
        let (vb, vu) = ethical_bounds(&mk(1.5), 1.5).unwrap();
        assert_abs_diff_eq!(vb, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(vu, 0.0, epsilon = 1e-15);
        let (vb, vu) = ethical_bounds(&mk(4.0), 1.5).unwrap();
        assert_abs_diff_eq!(vb, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(vu, 0.125, epsilon = 1e-15);
        let (vb, vu) = ethical_bounds(&mk(2.0), 2.0).unwrap();
        assert_abs_diff_eq!(vb, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vu, 0.0, epsilon = 1e-15);
        assert!(ethical_bounds(&mk(2.0), 0.5).is_err());
    }

    #[test]
    fn commitment_attainability_cases() {
        let mk = |costs: Vec<f64>| {
            let n = costs.len();
            GameParams::new(
                0.25,
                0.9,
                costs,
                vec![1.0 / n as f64; n],
                CostView::NonConsequentialist,
            )
            .unwrap()
        };
        assert_eq!(
            commitment_attainable(&mk(vec![1.5, 0.5])).unwrap(),
            CommitmentAttainability::Attainable { witness: 1.5 }
        );
        assert_eq!(
            commitment_attainable(&mk(vec![4.0, 0.5])).unwrap(),
            CommitmentAttainability::TooCostly { witness: 4.0 }
        );
        // Cost exactly 1 is attainable regardless of the highest cost.
        assert_eq!(
            commitment_attainable(&mk(vec![2.0, 1.0, 0.5])).unwrap(),
            CommitmentAttainability::Attainable { witness: 1.0 }
        );
        assert_eq!(
            commitment_attainable(&mk(vec![0.5, 0.2])).unwrap(),
            CommitmentAttainability::NoEthicalType
        );
        assert!(commitment_attainable(&mk(vec![2.0, 1.5])).is_err());
    }

    #[test]
    fn v_rho_mixture_endpoints_and_discrepancy() {
        let p = baseline();
        let at0 = v_rho_mixture(&p, 0.0).unwrap();
        assert_abs_diff_eq!(at0[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(at0[1], 0.25, epsilon = 1e-15);
        // At rho = rho_star the simple mixture does NOT reach v*.
        let at_rs = v_rho_mixture(&p, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(at_rs[0], 0.1875, epsilon = 1e-12);
        assert_abs_diff_eq!(at_rs[1], 0.30, epsilon = 1e-12);
    }

    #[test]
    fn v_target_endpoints_exact_in_rationals() {
        let ph = ratio(1, 4);
        let costs = vec![ratio(1, 2), ratio(1, 5)];
        let rho_star = ratio(1, 3);
        let zero: BigRational = ratio(0, 1);
        let at0 = v_target_in(&ph, &costs, &zero);
        assert_eq!(at0, vec![ratio(1, 4), ratio(1, 4)]);
        let at_rs = v_target_in(&ph, &costs, &rho_star);
        let vs = v_star_in(&ph, &costs);
        assert_eq!(at_rs, vs);
        assert_eq!(at_rs, vec![ratio(1, 4), ratio(7, 20)]);
    }

    #[test]
    fn v_target_weights_hand_values() {
        let p = baseline();
        let (wh, wl, wn) = v_target_weights(&p, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(wh, 5.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wl, 5.0 / 18.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wn, 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn polytope_hand_values() {
        let p = baseline();
        let poly = polytope(&p).unwrap();
        assert_eq!(poly.v_h, vec![0.25, 0.25]);
        assert_abs_diff_eq!(poly.v_star[1], 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(poly.v_bar[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(poly.v_bar[1], 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(poly.v_under[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(poly.v_under[1], 0.09, epsilon = 1e-12);
        assert_abs_diff_eq!(poly.p_star, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(poly.q_star, 0.5, epsilon = 1e-12);
        // Entrywise ordering of the vertices.
        for j in 0..2 {
            assert!(poly.v_star[j] >= poly.v_bar[j] - 1e-12);
            assert!(poly.v_star[j] >= poly.v_h[j] - 1e-12);
            assert!(poly.v_under[j] <= poly.v_bar[j] + 1e-12);
            assert!(poly.v_under[j] <= poly.v_h[j] + 1e-12);
        }
        assert!(poly.v_under[1] < poly.v_bar[1] && poly.v_under[1] < poly.v_h[1]);
    }

    #[test]
    fn polytope_membership() {
        let p = baseline();
        let poly = polytope(&p).unwrap();
        // Vertices and target weights are members; far-off points are not.
        assert!(poly.contains_weights(&p, [1.0, 0.0, 0.0], 1e-9));
        assert!(poly.contains_weights(&p, [0.6, 0.0, 0.4], 1e-9));
        let (wh, wl, wn) = v_target_weights(&p, 0.3).unwrap();
        assert!(poly.contains_weights(&p, [wh, wl, wn], 1e-9));
        let (wh, wl, wn) = v_rho_mixture_weights(&p, 0.3).unwrap();
        assert!(poly.contains_weights(&p, [wh, wl, wn], 1e-9));
        assert!(!poly.contains_weights(&p, [0.0, 0.0, 1.0], 1e-9));
        assert!(!poly.contains_weights(&p, [0.0, 1.0, 0.0], 1e-9));
    }

    #[test]
    fn w_of_rho_prime_hand_values() {
        let p = GameParams::new(
            0.25,
            0.9,
            vec![1.5, 0.5],
            vec![0.5, 0.5],
            CostView::NonConsequentialist,
        )
        .unwrap();
        let at_star = w_of_rho_prime(&p, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(at_star[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(at_star[1], 0.10, epsilon = 1e-12);
        let at_one = w_of_rho_prime(&p, 1.0).unwrap();
        assert_abs_diff_eq!(at_one[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(at_one[1], 0.1875 / 1.375, epsilon = 1e-12);
        // Entries beyond the first strictly increase in rho_prime.
        let mut prev = at_star[1];
        for k in 1..=10 {
            let rp = 1.0 / 3.0 + (k as f64) * (2.0 / 30.0);
            let w = w_of_rho_prime(&p, rp.min(1.0)).unwrap();
            assert!(w[1] > prev);
            prev = w[1];
        }
        assert!(w_of_rho_prime(&p, 0.2).is_err());
    }

    #[test]
    fn w_at_rho_star_equals_vunder_exact() {
        let ph = ratio(1, 4);
        let costs = vec![ratio(3, 2), ratio(1, 2)];
        let rho_star = ratio(1, 3);
        let w = w_of_rho_prime_in(&ph, &costs, &rho_star);
        for (j, c) in costs.iter().enumerate() {
            let (_, vu) = ethical_bounds_in(&ph, &costs[0], c);
            assert_eq!(w[j], vu);
        }
    }

    #[test]
    fn v_star_monotone_in_c1() {
        let mut prev = 0.0;
        for k in 3..9 {
            let c1 = k as f64 / 10.0;
            let p = GameParams::new(
                0.25,
                0.9,
                vec![c1, 0.2],
                vec![0.5, 0.5],
                CostView::NonConsequentialist,
            )
            .unwrap();
            let v = v_star(&p).unwrap();
            assert!(v[1] > prev);
            prev = v[1];
        }
    }
}
