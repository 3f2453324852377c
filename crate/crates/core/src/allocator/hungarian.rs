//! Exact minimum-cost assignment on a square matrix (Jonker–Volgenant style
//! potentials, O(n^3)).

use crate::error::{Error, Result};
use crate::real::Real;
use ndarray::Array2;

/// Factor applied to the largest finite entry to build the internal
/// surrogate for infeasible (infinite) entries.
const INFEASIBLE_SURROGATE_FACTOR: f64 = 1e6;

/// Solve the assignment problem for a square cost matrix. Entries must be
/// nonnegative; `T::infinity()` marks an infeasible pairing and is replaced
/// internally by a large finite surrogate so the solver stays total.
///
/// Returns the row→column permutation and its total cost summed over the
/// *original* entries in row order (infinite if an infeasible pairing was
/// unavoidable).
pub fn solve<T: Real>(cost: &Array2<T>) -> Result<(Vec<usize>, T)> {
    let (rows, cols) = cost.dim();
    if rows != cols {
        return Err(Error::InvalidInput(format!(
            "cost matrix must be square, got {rows}x{cols}"
        )));
    }
    if rows == 0 {
        return Ok((Vec::new(), T::zero()));
    }

    // Replace infeasible markers with a finite surrogate.
    let mut max_finite = T::zero();
    let mut has_infinite = false;
    for &v in cost.iter() {
        if v.is_infinite() {
            has_infinite = true;
        } else {
            max_finite = max_finite.max(v);
        }
    }
    let work: Array2<T> = if has_infinite {
        let surrogate = if max_finite > T::zero() {
            max_finite * T::of(INFEASIBLE_SURROGATE_FACTOR)
        } else {
            T::of(INFEASIBLE_SURROGATE_FACTOR)
        };
        cost.map(|&v| if v.is_infinite() { surrogate } else { v })
    } else {
        cost.clone()
    };

    let n = rows;
    // job[w] = row assigned to column w; column n is a virtual sink.
    let mut job: Vec<Option<usize>> = vec![None; n + 1];
    let mut row_pot = vec![T::zero(); n];
    let mut col_pot = vec![T::zero(); n + 1];

    for row in 0..n {
        let mut w_cur = n;
        job[w_cur] = Some(row);
        let mut min_to = vec![T::infinity(); n + 1];
        let mut prev = vec![usize::MAX; n + 1];
        let mut in_tree = vec![false; n + 1];

        while let Some(r) = job[w_cur] {
            in_tree[w_cur] = true;
            let mut delta = T::infinity();
            let mut w_next = 0;
            for w in 0..n {
                if !in_tree[w] {
                    let reduced = work[(r, w)] - row_pot[r] - col_pot[w];
                    if reduced < min_to[w] {
                        min_to[w] = reduced;
                        prev[w] = w_cur;
                    }
                    if min_to[w] < delta {
                        delta = min_to[w];
                        w_next = w;
                    }
                }
            }
            for w in 0..=n {
                if in_tree[w] {
                    if let Some(r2) = job[w] {
                        row_pot[r2] += delta;
                    }
                    col_pot[w] -= delta;
                } else {
                    min_to[w] -= delta;
                }
            }
            w_cur = w_next;
        }

        // Augment along the alternating path back to the sink.
        while w_cur != n {
            let w_prev = prev[w_cur];
            job[w_cur] = job[w_prev];
            w_cur = w_prev;
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for w in 0..n {
        let r = job[w].expect("every column is assigned");
        assignment[r] = w;
    }
    let mut total = T::zero();
    for (r, &w) in assignment.iter().enumerate() {
        total += cost[(r, w)];
    }
    Ok((assignment, total))
}

#[cfg(test)]
pub(crate) fn brute_force<T: Real>(cost: &Array2<T>) -> (Vec<usize>, T) {
    let n = cost.nrows();
    let mut best: Option<(Vec<usize>, T)> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p| {
        let mut total = T::zero();
        for (r, &w) in p.iter().enumerate() {
            total += cost[(r, w)];
        }
        if best.as_ref().map_or(true, |(_, b)| total < *b) {
            best = Some((p.to_vec(), total));
        }
    });
    best.unwrap()
}

#[cfg(test)]
fn permute<F: FnMut(&[usize])>(xs: &mut Vec<usize>, k: usize, visit: &mut F) {
    if k == xs.len() {
        visit(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute(xs, k + 1, visit);
        xs.swap(k, i);
    }
}
