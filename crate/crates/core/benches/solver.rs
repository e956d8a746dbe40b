//! Exact sparse solver benchmarks: the sequential elimination path against
//! the rayon-parallel one on ansatz-shaped systems.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_rational::BigRational;

use jetgamma_core::linsolve::{solve_seq, LinearSystem, Row};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Sparse band-plus-overlap system resembling the monomial-matching matrices
/// produced by the extraction step.
fn ansatz_like_system(cols: usize, rows: usize, seed: u64) -> LinearSystem {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    let mut next = move || {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        state.wrapping_mul(0x2545F4914F6CDD1D)
    };
    let mut out_rows = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut cols_entries = Vec::new();
        let band = (r * cols) / rows;
        for k in 0..8 {
            let col = (band + (next() as usize % 17) * k) % cols;
            let num = (next() % 9) as i64 - 4;
            if num != 0 {
                cols_entries.push((col, rat(num, (next() % 3 + 1) as i64)));
            }
        }
        let rhs = rat((next() % 7) as i64 - 3, 1);
        out_rows.push(Row::new(cols_entries, rhs));
    }
    LinearSystem {
        n_cols: cols,
        rows: out_rows,
    }
}

fn bench_solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("rref");
    for &(cols, rows) in &[(128usize, 192usize), (384, 512), (768, 1024)] {
        let system = ansatz_like_system(cols, rows, 42);
        group.bench_with_input(
            BenchmarkId::new("sequential", format!("{cols}x{rows}")),
            &system,
            |b, s| b.iter(|| black_box(solve_seq(s.clone()))),
        );
        #[cfg(feature = "parallel")]
        group.bench_with_input(
            BenchmarkId::new("parallel", format!("{cols}x{rows}")),
            &system,
            |b, s| b.iter(|| black_box(jetgamma_core::linsolve::solve_par(s.clone()))),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_solver);
criterion_main!(benches);
