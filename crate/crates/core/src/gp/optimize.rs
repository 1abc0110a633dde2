//! Derivative-free simplex minimizer used for hyperparameter search.
//!
//! This is the classic Nelder-Mead method with the widely used defaults:
//! initial vertex displacements of 5% per coordinate (0.00025 absolute for
//! zero coordinates), reflection 1, expansion 2, contraction 0.5, shrink 0.5,
//! and a combined position/value tolerance stop. The likelihood surface it
//! runs on is cheap (a handful of Cholesky factorizations per step for the
//! problem sizes here), so robustness is worth more than gradient speed.

pub(crate) struct SimplexResult {
    pub x: Vec<f64>,
    pub fx: f64,
    #[allow(dead_code)]
    pub iterations: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const NONZERO_STEP: f64 = 0.05;
const ZERO_STEP: f64 = 0.00025;

/// Minimize `f` starting from `x0`. The objective may return `INFINITY` to
/// mark infeasible points; it must never return NaN.
pub(crate) fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    max_iter: usize,
    xatol: f64,
    fatol: f64,
) -> SimplexResult {
    let dim = x0.len();
    assert!(dim > 0, "cannot optimize a zero-dimensional point");

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for k in 0..dim {
        let mut v = x0.to_vec();
        if v[k] != 0.0 {
            v[k] *= 1.0 + NONZERO_STEP;
        } else {
            v[k] = ZERO_STEP;
        }
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    sort_simplex(&mut simplex, &mut values);

    let mut iterations = 1usize;
    while iterations < max_iter {
        if converged(&simplex, &values, xatol, fatol) {
            break;
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }
        let worst = simplex[dim].clone();

        let blend = |a: f64| -> Vec<f64> {
            // Point at centroid + a*(centroid - worst); a > 0 reflects away
            // from the worst vertex, a < 0 steps toward it.
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + a * (c - w))
                .collect()
        };

        let reflected = blend(REFLECT);
        let f_reflected = f(&reflected);
        let mut shrink = false;

        if f_reflected < values[0] {
            let expanded = blend(REFLECT * EXPAND);
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                simplex[dim] = expanded;
                values[dim] = f_expanded;
            } else {
                simplex[dim] = reflected;
                values[dim] = f_reflected;
            }
        } else if f_reflected < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = f_reflected;
        } else if f_reflected < values[dim] {
            let outside = blend(REFLECT * CONTRACT);
            let f_outside = f(&outside);
            if f_outside <= f_reflected {
                simplex[dim] = outside;
                values[dim] = f_outside;
            } else {
                shrink = true;
            }
        } else {
            let inside = blend(-CONTRACT);
            let f_inside = f(&inside);
            if f_inside < values[dim] {
                simplex[dim] = inside;
                values[dim] = f_inside;
            } else {
                shrink = true;
            }
        }

        if shrink {
            let best = simplex[0].clone();
            for j in 1..=dim {
                for (x, b) in simplex[j].iter_mut().zip(&best) {
                    *x = b + SHRINK * (*x - b);
                }
                values[j] = f(&simplex[j]);
            }
        }

        sort_simplex(&mut simplex, &mut values);
        iterations += 1;
    }

    SimplexResult {
        x: simplex.swap_remove(0),
        fx: values[0],
        iterations,
    }
}

fn sort_simplex(simplex: &mut [Vec<f64>], values: &mut [f64]) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN objective"));
    let old_simplex: Vec<Vec<f64>> = simplex.to_vec();
    let old_values: Vec<f64> = values.to_vec();
    for (slot, &src) in order.iter().enumerate() {
        simplex[slot] = old_simplex[src].clone();
        values[slot] = old_values[src];
    }
}

fn converged(simplex: &[Vec<f64>], values: &[f64], xatol: f64, fatol: f64) -> bool {
    let best = &simplex[0];
    let mut max_dx = 0f64;
    for v in &simplex[1..] {
        for (a, b) in v.iter().zip(best) {
            max_dx = max_dx.max((a - b).abs());
        }
    }
    let mut max_df = 0f64;
    for &fv in &values[1..] {
        max_df = max_df.max((fv - values[0]).abs());
    }
    max_dx <= xatol && max_df <= fatol
}
