//! A small dense two-phase simplex solver, generic over [`Scalar`] so the
//! occupation-measure programs can be solved in exact rational arithmetic
//! (zero tolerances) as well as in double precision.
//!
//! Bland's rule is used in both phases, so the solver terminates on
//! degenerate vertices without perturbation.

use crate::scalar::Scalar;

/// maximize `objective · x` subject to `eq` rows holding with equality,
/// `ub` rows holding with `≤`, and `x ≥ 0`.
#[derive(Clone, Debug)]
pub struct LinearProgram<S> {
    pub objective: Vec<S>,
    pub eq: Vec<(Vec<S>, S)>,
    pub ub: Vec<(Vec<S>, S)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimplexError {
    Infeasible,
    Unbounded,
}

/// Optimal value and an optimal vertex.
pub fn solve<S: Scalar>(lp: &LinearProgram<S>) -> Result<(S, Vec<S>), SimplexError> {
    let n = lp.objective.len();
    debug_assert!(lp.eq.iter().chain(lp.ub.iter()).all(|(row, _)| row.len() == n));
    let n_slack = lp.ub.len();
    let m = lp.eq.len() + lp.ub.len();

    // Structural columns, then one slack per ub row, then one artificial per
    // row (unused artificials are simply never made basic).
    let n_total = n + n_slack + m;
    let mut a: Vec<Vec<S>> = Vec::with_capacity(m);
    let mut b: Vec<S> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut artificial_rows: Vec<usize> = Vec::new();

    let add_row = |row: &[S], rhs: &S, slack: Option<usize>, idx: usize,
                       a: &mut Vec<Vec<S>>, b: &mut Vec<S>, basis: &mut Vec<usize>,
                       artificial_rows: &mut Vec<usize>| {
        let mut full = vec![S::zero(); n_total];
        let negate = *rhs < S::zero();
        for (j, v) in row.iter().enumerate() {
            full[j] = if negate { -v.clone() } else { v.clone() };
        }
        let rhs = if negate { -rhs.clone() } else { rhs.clone() };
        let mut basic_col = None;
        if let Some(s) = slack {
            full[n + s] = if negate { -S::one() } else { S::one() };
            if !negate {
                basic_col = Some(n + s);
            }
        }
        let col = match basic_col {
            Some(c) => c,
            None => {
                let art = n + n_slack + idx;
                full[art] = S::one();
                artificial_rows.push(idx);
                art
            }
        };
        a.push(full);
        b.push(rhs);
        basis.push(col);
    };

    let mut idx = 0;
    for (row, rhs) in &lp.eq {
        add_row(row, rhs, None, idx, &mut a, &mut b, &mut basis, &mut artificial_rows);
        idx += 1;
    }
    for (s, (row, rhs)) in lp.ub.iter().enumerate() {
        add_row(row, rhs, Some(s), idx, &mut a, &mut b, &mut basis, &mut artificial_rows);
        idx += 1;
    }

    let art_start = n + n_slack;

    // Phase 1: maximize minus the sum of artificials.
    if !artificial_rows.is_empty() {
        let mut obj = vec![S::zero(); n_total];
        let mut objval = S::zero();
        for &r in &artificial_rows {
            for j in 0..art_start {
                obj[j] = obj[j].clone() + a[r][j].clone();
            }
            objval = objval - b[r].clone();
        }
        run_phase(&mut a, &mut b, &mut basis, &mut obj, &mut objval, n_total)
            .map_err(|_| SimplexError::Infeasible)?;
        if objval < -S::tol() {
            return Err(SimplexError::Infeasible);
        }
        // Drive leftover (degenerate) artificials out of the basis.
        let rows: Vec<usize> =
            (0..basis.len()).filter(|&r| basis[r] >= art_start).collect();
        let mut drop_rows = Vec::new();
        for r in rows {
            let mut pivoted = false;
            for j in 0..art_start {
                if !a[r][j].is_zero_within_tol() {
                    pivot(&mut a, &mut b, &mut basis, r, j);
                    pivoted = true;
                    break;
                }
            }
            if !pivoted {
                drop_rows.push(r); // redundant constraint
            }
        }
        drop_rows.sort_unstable();
        for &r in drop_rows.iter().rev() {
            a.remove(r);
            b.remove(r);
            basis.remove(r);
        }
        // Forbid artificials from re-entering: zero their columns.
        for row in a.iter_mut() {
            for j in art_start..n_total {
                row[j] = S::zero();
            }
        }
    }

    // Phase 2: the real objective, expressed over the current basis.
    let mut obj = vec![S::zero(); n_total];
    for j in 0..n {
        obj[j] = lp.objective[j].clone();
    }
    let mut objval = S::zero();
    for r in 0..basis.len() {
        let v = basis[r];
        if !obj[v].is_zero_within_tol() {
            let factor = obj[v].clone();
            for j in 0..n_total {
                obj[j] = obj[j].clone() - factor.clone() * a[r][j].clone();
            }
            objval = objval + factor * b[r].clone();
        }
    }
    run_phase(&mut a, &mut b, &mut basis, &mut obj, &mut objval, n_total)
        .map_err(|_| SimplexError::Unbounded)?;

    let mut x = vec![S::zero(); n];
    for r in 0..basis.len() {
        if basis[r] < n {
            x[basis[r]] = b[r].clone();
        }
    }
    Ok((objval, x))
}

struct UnboundedPhase;

fn run_phase<S: Scalar>(
    a: &mut [Vec<S>],
    b: &mut [S],
    basis: &mut [usize],
    obj: &mut [S],
    objval: &mut S,
    n_total: usize,
) -> Result<(), UnboundedPhase> {
    loop {
        // Bland's rule: smallest-index column with positive reduced cost.
        let entering = (0..n_total).find(|&j| obj[j] > S::tol());
        let Some(c) = entering else { return Ok(()) };
        // Ratio test, ties broken by smallest basic-variable index.
        let mut best: Option<(usize, S)> = None;
        for r in 0..a.len() {
            if a[r][c] > S::tol() {
                let ratio = b[r].clone() / a[r][c].clone();
                best = match best {
                    None => Some((r, ratio)),
                    Some((br, bratio)) => {
                        if ratio < bratio
                            || (ratio == bratio && basis[r] < basis[br])
                        {
                            Some((r, ratio))
                        } else {
                            Some((br, bratio))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = best else { return Err(UnboundedPhase) };
        let factor = obj[c].clone();
        pivot(a, b, basis, r, c);
        for j in 0..n_total {
            obj[j] = obj[j].clone() - factor.clone() * a[r][j].clone();
        }
        *objval = objval.clone() + factor * b[r].clone();
    }
}

fn pivot<S: Scalar>(a: &mut [Vec<S>], b: &mut [S], basis: &mut [usize], r: usize, c: usize) {
    let p = a[r][c].clone();
    for v in a[r].iter_mut() {
        *v = v.clone() / p.clone();
    }
    b[r] = b[r].clone() / p;
    for i in 0..a.len() {
        if i != r && !a[i][c].is_zero_within_tol() {
            let f = a[i][c].clone();
            for j in 0..a[i].len() {
                a[i][j] = a[i][j].clone() - f.clone() * a[r][j].clone();
            }
            b[i] = b[i].clone() - f * b[r].clone();
        }
    }
    basis[r] = c;
}
