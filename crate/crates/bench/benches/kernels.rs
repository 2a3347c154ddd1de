use criterion::{criterion_group, criterion_main};

criterion_group!(benches, mct_bench::forward_backward, mct_bench::meta_step, mct_bench::hadamard);
criterion_main!(benches);
