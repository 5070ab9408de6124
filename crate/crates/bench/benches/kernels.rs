use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fmfd_bench::{scaled_state, state_pair, two_body_state};
use fmfd_core::fft::FftNd;
use fmfd_core::{slater_dm, trace_distance, ComplexField, HartreeOptions, HartreePropagator, TwoBodyPropagator};

fn fft3(c: &mut Criterion) {
    for n in [24, 48] {
        let fft = FftNd::new(n, 3);
        let state = scaled_state(7, n).unwrap();
        let field: ComplexField = state.orbitals()[1].clone();
        c.bench_function(&format!("fft3_forward_inverse_n{n}"), |b| {
            b.iter_batched_ref(
                || field.values().to_vec(),
                |data| {
                    fft.forward(data);
                    fft.inverse(data);
                },
                BatchSize::LargeInput,
            )
        });
    }
}

fn hartree_step(c: &mut Criterion) {
    for (n_particles, n) in [(19, 24), (57, 24)] {
        let set = scaled_state(n_particles, n).unwrap();
        let prop = HartreePropagator::new(&set, HartreeOptions::new(1e-3)).unwrap();
        c.bench_function(&format!("hartree_step_N{n_particles}_n{n}"), |b| {
            b.iter_batched_ref(|| set.clone(), |s| prop.step(s, 0).unwrap(), BatchSize::LargeInput)
        });
    }
}

fn trace_distance_low_rank(c: &mut Criterion) {
    let (a, b) = state_pair(19, 24).unwrap();
    c.bench_function("trace_distance_N19_n24", |bench| {
        bench.iter(|| trace_distance(&slater_dm(&a).unwrap(), &slater_dm(&b).unwrap()).unwrap())
    });
}

fn two_body_step(c: &mut Criterion) {
    let state = two_body_state(8).unwrap();
    let prop = TwoBodyPropagator::new(&state, 1e-3).unwrap();
    c.bench_function("two_body_step_n8", |b| {
        b.iter_batched_ref(|| state.clone(), |s| prop.step(s, 0).unwrap(), BatchSize::LargeInput)
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = fft3, hartree_step, trace_distance_low_rank, two_body_step
}
criterion_main!(benches);
