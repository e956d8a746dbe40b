//! End-to-end benchmarks of the extraction pipeline and the recursion on the
//! bundled operator tuples. With the `parallel` feature on, each workload is
//! also run inside a single-thread pool for a like-for-like comparison with
//! the data-parallel path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use jetgamma_core::context::{Ctx, JetContext, Parity, Space};
use jetgamma_core::expr::{parse_expr, parse_operator_entry};
use jetgamma_core::gamma::{extract_gamma, AnsatzSpec};
use jetgamma_core::jetcalc::Functional;
use jetgamma_core::magri::{verify_hierarchy, HierarchyState};
use jetgamma_core::operators::{OperatorTuple, TotalOperator};

fn op1(ctx: &Ctx, s: &str) -> TotalOperator {
    TotalOperator::scalar_op(
        ctx,
        parse_operator_entry(ctx, s).unwrap(),
        Space {
            dim: 1,
            parity: Parity::Odd,
        },
        Space::kappa(ctx),
    )
    .unwrap()
}

fn liouville() -> OperatorTuple {
    let ctx = JetContext::builder()
        .independents(["x", "y"])
        .dependent("u", Parity::Even)
        .parameter_group(["p"], Parity::Odd)
        .parameter_group(["q"], Parity::Odd)
        .build()
        .unwrap();
    OperatorTuple::new(vec![
        op1(&ctx, "u_x + 1/2*D_x"),
        op1(&ctx, "u_y + 1/2*D_y"),
    ])
    .unwrap()
}

fn kdv() -> OperatorTuple {
    let ctx = JetContext::builder()
        .independents(["x"])
        .dependent("u", Parity::Even)
        .parameter_group(["p"], Parity::Odd)
        .parameter_group(["q"], Parity::Odd)
        .build()
        .unwrap();
    OperatorTuple::new(vec![
        op1(&ctx, "D_x"),
        op1(&ctx, "-1/2*D_x^3 + 2*u*D_x + u_x"),
    ])
    .unwrap()
}

fn run_extractions() {
    let tuple = liouville();
    let spec = AnsatzSpec::for_tuple(&tuple);
    black_box(extract_gamma(&tuple, &spec, None).unwrap());
    let pair = kdv();
    let spec = AnsatzSpec::for_tuple(&pair).with_order(2);
    black_box(extract_gamma(&pair, &spec, None).unwrap());
}

fn run_magri() {
    let pair = kdv();
    let h0 = Functional::new(parse_expr(pair.ctx(), "u").unwrap());
    let mut state =
        HierarchyState::seed(pair.op(0).clone(), pair.op(1).clone(), h0).unwrap();
    state.extend_to(3).unwrap();
    black_box(verify_hierarchy(&state).unwrap());
}

fn bench_extraction(c: &mut Criterion) {
    let mut group = c.benchmark_group("extraction");
    group.sample_size(10);
    group.bench_function("default-threads", |b| b.iter(run_extractions));
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        group.bench_function("one-thread", |b| b.iter(|| pool.install(run_extractions)));
    }
    group.finish();
}

fn bench_magri(c: &mut Criterion) {
    let mut group = c.benchmark_group("magri");
    group.sample_size(10);
    group.bench_function("kdv-chain-depth-3", |b| b.iter(run_magri));
    group.finish();
}

criterion_group!(benches, bench_extraction, bench_magri);
criterion_main!(benches);
