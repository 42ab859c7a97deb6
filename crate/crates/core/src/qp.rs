//! Small dense convex QPs solved with a primal active-set method:
//!
//! ```text
//! minimize ½ xᵀHx + cᵀx   s.t.  0 ≤ x_i ≤ u_i,  (optionally) Σ x_i = 1
//! ```
//!
//! With `sum_to_one` and no upper bounds this is the fully constrained
//! least-squares problem on the probability simplex; without it and with
//! `H = MᵀM` it is Lawson–Hanson NNLS. Ties in pivoting always go to the
//! lowest index.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Problem constraints.
#[derive(Debug, Clone, Default)]
pub struct Constraints {
    /// Impose `Σ x = 1`.
    pub sum_to_one: bool,
    /// Optional upper bounds (`None` = unbounded above).
    pub upper: Option<Vec<f64>>,
}

impl Constraints {
    pub fn simplex() -> Self {
        Self {
            sum_to_one: true,
            upper: None,
        }
    }

    pub fn nonneg() -> Self {
        Self::default()
    }

    pub fn boxed(upper: Vec<f64>) -> Self {
        Self {
            sum_to_one: false,
            upper: Some(upper),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest violation of the KKT conditions at `x`.
    pub kkt_residual: f64,
}

pub fn objective(h: &DMatrix<f64>, c: &DVector<f64>, x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    0.5 * xv.dot(&(h * &xv)) + c.dot(&xv)
}

/// Solve the QP. `tol` is a relative tolerance on multiplier signs.
pub fn solve(h: &DMatrix<f64>, c: &DVector<f64>, cons: &Constraints, tol: f64) -> Result<QpSolution> {
    let n = c.len();
    if h.nrows() != n || h.ncols() != n || n == 0 {
        return Err(Error::Dimension(format!(
            "QP with {}x{} Hessian and {} linear terms",
            h.nrows(),
            h.ncols(),
            n
        )));
    }
    if h.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite QP data".into()));
    }
    let upper: Vec<f64> = match &cons.upper {
        Some(u) if u.len() != n => {
            return Err(Error::Dimension("upper bound length mismatch".into()));
        }
        Some(u) => u.clone(),
        None => vec![f64::INFINITY; n],
    };
    if upper.iter().any(|&u| u.is_nan() || u < 0.0) {
        return Err(Error::Value("upper bounds must be non-negative".into()));
    }
    if cons.sum_to_one && cons.upper.is_some() {
        let total: f64 = upper.iter().sum();
        if total < 1.0 {
            return Err(Error::Value("infeasible: upper bounds sum below one".into()));
        }
    }

    let scale = h
        .iter()
        .chain(c.iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let kkt_tol = tol.max(1e-14) * scale;

    // Feasible start: uniform point on the simplex, or the origin.
    let (mut x, mut state) = if cons.sum_to_one {
        let mut x = vec![1.0 / n as f64; n];
        let mut state = vec![Bound::Free; n];
        if cons.upper.is_some() {
            // fill greedily in index order
            let mut left = 1.0;
            for i in 0..n {
                let v = upper[i].min(left);
                x[i] = v;
                left -= v;
                state[i] = if v == 0.0 {
                    Bound::Lower
                } else if v == upper[i] {
                    Bound::Upper
                } else {
                    Bound::Free
                };
            }
            if state.iter().all(|&s| s != Bound::Free) {
                if let Some(i) = (0..n).find(|&i| state[i] == Bound::Upper) {
                    state[i] = Bound::Free;
                }
            }
        }
        (x, state)
    } else {
        (vec![0.0; n], vec![Bound::Lower; n])
    };

    let max_iter = 50 * n + 100;
    let mut iterations = 0;
    let mut nu = 0.0;
    loop {
        iterations += 1;
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        let fixed_value = |i: usize, state: &[Bound]| match state[i] {
            Bound::Lower => 0.0,
            Bound::Upper => upper[i],
            Bound::Free => unreachable!(),
        };
        // Equality-constrained subproblem on the free set.
        let mut z = x.clone();
        for i in 0..n {
            if state[i] != Bound::Free {
                z[i] = fixed_value(i, &state);
            }
        }
        let k = free.len();
        if k > 0 {
            let dim = if cons.sum_to_one { k + 1 } else { k };
            let mut a = DMatrix::<f64>::zeros(dim, dim);
            let mut b = DVector::<f64>::zeros(dim);
            for (p, &i) in free.iter().enumerate() {
                let mut rhs = -c[i];
                for j in 0..n {
                    if state[j] != Bound::Free {
                        rhs -= h[(i, j)] * z[j];
                    }
                }
                b[p] = rhs;
                for (q, &j) in free.iter().enumerate() {
                    a[(p, q)] = h[(i, j)];
                }
                if cons.sum_to_one {
                    a[(p, k)] = 1.0;
                    a[(k, p)] = 1.0;
                }
            }
            if cons.sum_to_one {
                let fixed_sum: f64 = (0..n).filter(|&i| state[i] != Bound::Free).map(|i| z[i]).sum();
                b[k] = 1.0 - fixed_sum;
            }
            let sol = solve_linear(a.clone(), b.clone())?;
            let residual = (&a * &sol - &b).amax();
            if residual > 1e-9 * scale * (1.0 + b.amax()) {
                // Inconsistent system: the objective is unbounded below on the
                // free face unless a bound stops a null-space descent direction.
                let p = null_space_descent(h, c, &x, &free, cons.sum_to_one)?;
                let mut t_min = f64::INFINITY;
                let mut block = None;
                for (q, &i) in free.iter().enumerate() {
                    let t = if p[q] < 0.0 {
                        x[i] / -p[q]
                    } else if p[q] > 0.0 && upper[i].is_finite() {
                        (upper[i] - x[i]) / p[q]
                    } else {
                        continue;
                    };
                    if t < t_min {
                        t_min = t;
                        block = Some((i, if p[q] < 0.0 { Bound::Lower } else { Bound::Upper }));
                    }
                }
                let Some((bi, bound)) = block else {
                    return Err(Error::Numerical("QP is unbounded below".into()));
                };
                for (q, &i) in free.iter().enumerate() {
                    x[i] += t_min * p[q];
                }
                state[bi] = bound;
                x[bi] = if bound == Bound::Lower { 0.0 } else { upper[bi] };
                if iterations >= max_iter {
                    break;
                }
                continue;
            }
            for (p, &i) in free.iter().enumerate() {
                z[i] = sol[p];
            }
            nu = if cons.sum_to_one { sol[k] } else { 0.0 };
        } else if cons.sum_to_one {
            return Err(Error::Numerical("active set left no free variable".into()));
        }

        let feasible = free.iter().all(|&i| z[i] >= 0.0 && z[i] <= upper[i]);
        if feasible {
            x = z;
            // Multipliers of the bound constraints.
            let g = gradient(h, c, &x);
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                let violation = match state[i] {
                    Bound::Free => continue,
                    Bound::Lower => -(g[i] + nu),
                    Bound::Upper => g[i] + nu,
                };
                if violation > kkt_tol && worst.is_none_or(|(_, w)| violation > w) {
                    worst = Some((i, violation));
                }
            }
            match worst {
                Some((i, _)) if iterations < max_iter => state[i] = Bound::Free,
                _ => break,
            }
        } else {
            // Step towards z until the first bound blocks.
            let mut t_min = 1.0;
            let mut block: Option<(usize, Bound)> = None;
            for &i in &free {
                let p = z[i] - x[i];
                let (t, bound) = if p < 0.0 {
                    (x[i] / -p, Bound::Lower)
                } else if p > 0.0 && upper[i].is_finite() {
                    ((upper[i] - x[i]) / p, Bound::Upper)
                } else {
                    continue;
                };
                if t < t_min || (block.is_none() && t <= t_min) {
                    t_min = t;
                    block = Some((i, bound));
                }
            }
            let t = t_min.clamp(0.0, 1.0);
            for &i in &free {
                x[i] += t * (z[i] - x[i]);
            }
            match block {
                Some((i, bound)) => {
                    state[i] = bound;
                    x[i] = if bound == Bound::Lower { 0.0 } else { upper[i] };
                }
                None => x = z,
            }
            if iterations >= max_iter {
                break;
            }
        }
    }

    for (xi, &u) in x.iter_mut().zip(&upper) {
        *xi = xi.clamp(0.0, u);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("active-set iterate is not finite".into()));
    }
    let kkt = kkt_residual(h, c, &x, &upper, cons.sum_to_one);
    Ok(QpSolution {
        objective: objective(h, c, &x),
        x,
        iterations,
        kkt_residual: kkt,
    })
}

fn gradient(h: &DMatrix<f64>, c: &DVector<f64>, x: &[f64]) -> Vec<f64> {
    let xv = DVector::from_column_slice(x);
    (h * xv + c).iter().copied().collect()
}

/// Steepest descent direction on the free face projected onto the null space
/// of the reduced Hessian (and of the sum constraint).
fn null_space_descent(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    x: &[f64],
    free: &[usize],
    sum_to_one: bool,
) -> Result<Vec<f64>> {
    let k = free.len();
    let rows = if sum_to_one { k + 1 } else { k };
    let mut a = DMatrix::<f64>::zeros(rows.max(k), k);
    for (p, &i) in free.iter().enumerate() {
        for (q, &j) in free.iter().enumerate() {
            a[(p, q)] = h[(i, j)];
        }
        if sum_to_one {
            a[(k, p)] = 1.0;
        }
    }
    let g = gradient(h, c, x);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let smax = svd.singular_values.amax().max(1.0);
    let mut p = vec![0.0; k];
    for (r, &sv) in svd.singular_values.iter().enumerate() {
        if sv > 1e-10 * smax {
            continue;
        }
        let dot: f64 = (0..k).map(|q| v_t[(r, q)] * g[free[q]]).sum();
        for q in 0..k {
            p[q] -= dot * v_t[(r, q)];
        }
    }
    if p.iter().all(|v| v.abs() < 1e-300) {
        return Err(Error::Numerical("singular QP subproblem without descent direction".into()));
    }
    Ok(p)
}

fn solve_linear(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(sol) = a.clone().lu().solve(&b) {
        if sol.iter().all(|v| v.is_finite()) {
            return Ok(sol);
        }
    }
    // Singular subproblem: least-norm solution.
    let eps = 1e-13 * a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    a.svd(true, true)
        .solve(&b, eps)
        .map_err(|e| Error::Numerical(format!("singular QP subproblem: {e}")))
}

/// KKT violation of a feasible point (stationarity on free variables,
/// multiplier signs on bounded ones, primal feasibility).
pub fn kkt_residual(h: &DMatrix<f64>, c: &DVector<f64>, x: &[f64], upper: &[f64], sum_to_one: bool) -> f64 {
    let g = gradient(h, c, x);
    let n = x.len();
    let eps = 1e-12;
    let at_lower = |i: usize| x[i] <= eps;
    let at_upper = |i: usize| upper[i].is_finite() && x[i] >= upper[i] - eps;
    let nu = if sum_to_one {
        let free: Vec<usize> = (0..n).filter(|&i| !at_lower(i) && !at_upper(i)).collect();
        if free.is_empty() {
            // best multiplier from the bounded set
            -(0..n).map(|i| g[i]).fold(f64::INFINITY, f64::min)
        } else {
            -free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64
        }
    } else {
        0.0
    };
    let mut worst = 0.0f64;
    for i in 0..n {
        let s = g[i] + nu;
        let v = if at_lower(i) {
            (-s).max(0.0)
        } else if at_upper(i) {
            s.max(0.0)
        } else {
            s.abs()
        };
        worst = worst.max(v);
        worst = worst.max((-x[i]).max(0.0));
    }
    if sum_to_one {
        worst = worst.max((x.iter().sum::<f64>() - 1.0).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive oracle: try every support set, solve the equality QP on it,
    /// keep the best feasible point.
    fn enumerate_oracle(h: &DMatrix<f64>, c: &DVector<f64>, simplex: bool) -> f64 {
        let n = c.len();
        let mut best = if simplex { f64::INFINITY } else { 0.0 };
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let k = support.len();
            let dim = if simplex { k + 1 } else { k };
            let mut a = DMatrix::zeros(dim, dim);
            let mut b = DVector::zeros(dim);
            for (p, &i) in support.iter().enumerate() {
                b[p] = -c[i];
                for (q, &j) in support.iter().enumerate() {
                    a[(p, q)] = h[(i, j)];
                }
                if simplex {
                    a[(p, k)] = 1.0;
                    a[(k, p)] = 1.0;
                }
            }
            if simplex {
                b[k] = 1.0;
            }
            let Some(sol) = a.lu().solve(&b) else { continue };
            let mut x = vec![0.0; n];
            for (p, &i) in support.iter().enumerate() {
                x[i] = sol[p];
            }
            if x.iter().all(|&v| v >= -1e-12) {
                best = best.min(objective(h, c, &x));
            }
        }
        best
    }

    fn spd(seed: &[f64], n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n + 2, n, |i, j| seed[(i * n + j) % seed.len()] + 0.1 * (i == j) as u8 as f64);
        a.transpose() * a + DMatrix::identity(n, n) * 1e-3
    }

    #[test]
    fn identity_simplex_interior() {
        let h = DMatrix::identity(3, 3);
        let target = [0.2, 0.3, 0.5];
        let c = -DVector::from_column_slice(&target);
        let sol = solve(&h, &c, &Constraints::simplex(), 1e-12).unwrap();
        for (a, b) in sol.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn nonneg_clips_negative_direction() {
        let h = DMatrix::identity(2, 2);
        let c = DVector::from_column_slice(&[1.0, -2.0]);
        let sol = solve(&h, &c, &Constraints::nonneg(), 1e-12).unwrap();
        assert_eq!(sol.x, vec![0.0, 2.0]);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn box_bounds_respected() {
        let h = DMatrix::identity(3, 3);
        let c = DVector::from_column_slice(&[-2.0, 0.5, -0.3]);
        let sol = solve(&h, &c, &Constraints::boxed(vec![1.0; 3]), 1e-12).unwrap();
        assert_eq!(sol.x, vec![1.0, 0.0, 0.3]);
    }

    #[test]
    fn singular_hessian_on_simplex() {
        let h = DMatrix::zeros(3, 3);
        let c = DVector::from_column_slice(&[0.3, 0.1, 0.2]);
        let sol = solve(&h, &c, &Constraints::simplex(), 1e-12).unwrap();
        assert!((sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let h = DMatrix::identity(2, 2);
        assert!(solve(&h, &DVector::zeros(3), &Constraints::simplex(), 1e-9).is_err());
        assert!(solve(&h, &DVector::from_column_slice(&[f64::NAN, 0.0]), &Constraints::simplex(), 1e-9).is_err());
    }

    proptest! {
        #[test]
        fn matches_enumeration(
            seed in proptest::collection::vec(-1.0f64..1.0, 30),
            lin in proptest::collection::vec(-2.0f64..2.0, 5),
            n in 1usize..6,
            simplex in any::<bool>(),
        ) {
            let h = spd(&seed, n);
            let c = DVector::from_column_slice(&lin[..n]);
            let cons = if simplex { Constraints::simplex() } else { Constraints::nonneg() };
            let sol = solve(&h, &c, &cons, 1e-12).unwrap();
            let oracle = enumerate_oracle(&h, &c, simplex);
            prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
            if simplex {
                prop_assert!((sol.x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            prop_assert!(sol.objective <= oracle + 1e-9 * (1.0 + oracle.abs()),
                "active set {} vs enumeration {}", sol.objective, oracle);
            prop_assert!(sol.kkt_residual < 1e-7);
        }
    }
}
