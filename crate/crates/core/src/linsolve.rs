//! Exact sparse linear algebra over ℚ for ansatz-coefficient matching.
//!
//! Systems produced by the extraction step are sparse and moderately sized
//! (hundreds to a few thousand unknowns), so a sparse row-echelon reduction
//! with exact rational arithmetic is used throughout. Row elimination against
//! a fixed pivot is data-parallel; the pivot order is fixed, so the result is
//! identical whether or not the parallel path is enabled.

use num_rational::BigRational;
use num_traits::{One, Zero};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::expr::Rat;

/// One sparse equation `Σ coeff·x_col = rhs`.
#[derive(Debug, Clone, Default)]
pub struct Row {
    /// Sorted by column, coefficients nonzero.
    pub cols: Vec<(usize, Rat)>,
    pub rhs: Rat,
}

impl Row {
    pub fn new(mut cols: Vec<(usize, Rat)>, rhs: Rat) -> Self {
        cols.retain(|(_, c)| !c.is_zero());
        cols.sort_by_key(|(i, _)| *i);
        Row { cols, rhs }
    }

    fn coeff(&self, col: usize) -> Option<&Rat> {
        self.cols
            .binary_search_by_key(&col, |(i, _)| *i)
            .ok()
            .map(|k| &self.cols[k].1)
    }

    fn is_trivial(&self) -> bool {
        self.cols.is_empty() && self.rhs.is_zero()
    }

    /// `self -= factor · pivot` as a sorted-merge.
    fn eliminate(&mut self, factor: &Rat, pivot: &Row) {
        let mut out = Vec::with_capacity(self.cols.len() + pivot.cols.len());
        let (mut i, mut j) = (0, 0);
        while i < self.cols.len() && j < pivot.cols.len() {
            match self.cols[i].0.cmp(&pivot.cols[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(self.cols[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push((pivot.cols[j].0, -(factor * &pivot.cols[j].1)));
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let c = &self.cols[i].1 - factor * &pivot.cols[j].1;
                    if !c.is_zero() {
                        out.push((self.cols[i].0, c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.cols[i..]);
        for (col, c) in &pivot.cols[j..] {
            out.push((*col, -(factor * c)));
        }
        self.cols = out;
        self.rhs = &self.rhs - factor * &pivot.rhs;
    }
}

/// `Σ coeff·x = rhs` per row, over `n_cols` unknowns.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub n_cols: usize,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Solved(Solution),
    /// No solution; carries a reduced row `0 = rhs` with nonzero rhs.
    Inconsistent,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Particular solution with all free unknowns set to zero. Pivots are
    /// chosen left to right, so with complexity-ordered columns this is the
    /// canonical minimal representative.
    pub particular: Vec<Rat>,
    /// Basis of the homogeneous solution space, one vector per free column.
    pub nullspace: Vec<Vec<Rat>>,
}

pub fn solve(system: LinearSystem) -> SolveOutcome {
    #[cfg(feature = "parallel")]
    {
        solve_par(system)
    }
    #[cfg(not(feature = "parallel"))]
    {
        solve_seq(system)
    }
}

pub fn solve_seq(system: LinearSystem) -> SolveOutcome {
    reduce(system, |rows, factors, pivot| {
        for (row, factor) in rows.iter_mut().zip(factors) {
            if let Some(f) = factor {
                row.eliminate(f, pivot);
            }
        }
    })
}

#[cfg(feature = "parallel")]
pub fn solve_par(system: LinearSystem) -> SolveOutcome {
    reduce(system, |rows, factors, pivot| {
        rows.par_iter_mut()
            .zip(factors.par_iter())
            .for_each(|(row, factor)| {
                if let Some(f) = factor {
                    row.eliminate(f, pivot);
                }
            });
    })
}

fn reduce<E>(system: LinearSystem, eliminate_all: E) -> SolveOutcome
where
    E: Fn(&mut [Row], &[Option<Rat>], &Row),
{
    let n_cols = system.n_cols;
    let mut rows = system.rows;
    rows.retain(|r| !r.is_trivial());
    let mut pivot_rows: Vec<Row> = Vec::new();
    let mut pivot_cols: Vec<usize> = Vec::new();

    for col in 0..n_cols {
        // Deterministic pivot choice: the first remaining row with a leading
        // entry in this column (rows are already reduced against all earlier
        // pivot columns, so a nonzero entry here is necessarily leading).
        let Some(at) = rows
            .iter()
            .position(|r| r.cols.first().is_some_and(|(c, _)| *c == col))
        else {
            continue;
        };
        let mut pivot = rows.swap_remove(at);
        let lead = pivot.cols[0].1.clone();
        if !lead.is_one() {
            for (_, c) in &mut pivot.cols {
                *c /= &lead;
            }
            pivot.rhs /= &lead;
        }
        let factors: Vec<Option<Rat>> = rows.iter().map(|r| r.coeff(col).cloned()).collect();
        eliminate_all(&mut rows, &factors, &pivot);
        rows.retain(|r| !r.is_trivial());
        // Back-substitute into the earlier pivot rows.
        let factors: Vec<Option<Rat>> =
            pivot_rows.iter().map(|r| r.coeff(col).cloned()).collect();
        eliminate_all(&mut pivot_rows, &factors, &pivot);
        pivot_rows.push(pivot);
        pivot_cols.push(col);
    }

    if rows.iter().any(|r| r.cols.is_empty() && !r.rhs.is_zero()) {
        return SolveOutcome::Inconsistent;
    }
    debug_assert!(rows.iter().all(|r| r.is_trivial()));

    let mut particular = vec![Rat::zero(); n_cols];
    for (row, &col) in pivot_rows.iter().zip(&pivot_cols) {
        particular[col] = row.rhs.clone();
    }

    let mut nullspace = Vec::new();
    let is_pivot = {
        let mut flags = vec![false; n_cols];
        for &c in &pivot_cols {
            flags[c] = true;
        }
        flags
    };
    for free in 0..n_cols {
        if is_pivot[free] {
            continue;
        }
        let mut v = vec![Rat::zero(); n_cols];
        v[free] = Rat::one();
        for (row, &col) in pivot_rows.iter().zip(&pivot_cols) {
            if let Some(c) = row.coeff(free) {
                v[col] = -c.clone();
            }
        }
        nullspace.push(v);
    }

    SolveOutcome::Solved(Solution {
        particular,
        nullspace,
    })
}

/// Nonzero-ness of a square determinant, by fraction-free elimination on a
/// dense copy. Used by the normality heuristic.
pub fn det_is_nonzero(mut m: Vec<Vec<BigRational>>) -> bool {
    let n = m.len();
    for col in 0..n {
        let Some(at) = (col..n).find(|&r| !m[r][col].is_zero()) else {
            return false;
        };
        m.swap(col, at);
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let f = &m[r][col] / &m[col][col];
            for c in col..n {
                let sub = &f * &m[col][c];
                m[r][c] -= sub;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rat {
        Rat::from_integer(n.into())
    }

    fn system(rows: &[(&[(usize, i64)], i64)], n_cols: usize) -> LinearSystem {
        LinearSystem {
            n_cols,
            rows: rows
                .iter()
                .map(|(cols, rhs)| {
                    Row::new(
                        cols.iter().map(|&(i, c)| (i, r(c))).collect(),
                        r(*rhs),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn solves_unique() {
        // x + y = 3, x - y = 1  =>  x = 2, y = 1
        let s = system(&[(&[(0, 1), (1, 1)], 3), (&[(0, 1), (1, -1)], 1)], 2);
        let SolveOutcome::Solved(sol) = solve_seq(s) else {
            panic!("expected a solution");
        };
        assert_eq!(sol.particular, vec![r(2), r(1)]);
        assert!(sol.nullspace.is_empty());
    }

    #[test]
    fn detects_inconsistency() {
        let s = system(&[(&[(0, 1)], 1), (&[(0, 2)], 3)], 1);
        assert!(matches!(solve_seq(s), SolveOutcome::Inconsistent));
    }

    #[test]
    fn nullspace_of_underdetermined() {
        // x + y + z = 0 (homogeneous): two free columns.
        let s = system(&[(&[(0, 1), (1, 1), (2, 1)], 0)], 3);
        let SolveOutcome::Solved(sol) = solve_seq(s) else {
            panic!()
        };
        assert_eq!(sol.particular, vec![r(0); 3]);
        assert_eq!(sol.nullspace.len(), 2);
        for v in &sol.nullspace {
            let sum: Rat = v.iter().cloned().sum();
            assert!(sum.is_zero());
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_sequential() {
        let s = system(
            &[
                (&[(0, 2), (2, 1), (3, -1)], 4),
                (&[(1, 1), (2, -3)], 0),
                (&[(0, 1), (1, 1), (3, 2)], 5),
                (&[(2, 5), (3, 1)], 1),
            ],
            5,
        );
        match (solve_seq(s.clone()), solve_par(s)) {
            (SolveOutcome::Solved(a), SolveOutcome::Solved(b)) => {
                assert_eq!(a.particular, b.particular);
                assert_eq!(a.nullspace, b.nullspace);
            }
            _ => panic!("both paths must solve"),
        }
    }

    #[test]
    fn determinant_sign_free_check() {
        let m = vec![vec![r(1), r(2)], vec![r(2), r(4)]];
        assert!(!det_is_nonzero(m));
        let m = vec![vec![r(0), r(1)], vec![r(1), r(0)]];
        assert!(det_is_nonzero(m));
    }
}
