use criterion::{black_box, criterion_group, criterion_main, Criterion};
use soundscape_bench::test_clip;
use soundscape_core::{log_mel, resample, stft_magnitude};

fn stft(c: &mut Criterion) {
    let clip = test_clip(32_000, 10.0);
    c.bench_function("stft_magnitude 10s 1024/320", |b| {
        b.iter(|| stft_magnitude(black_box(&clip), 1024, 320).unwrap())
    });
    let mag = stft_magnitude(&clip, 1024, 320).unwrap();
    c.bench_function("log_mel 64 bands", |b| b.iter(|| log_mel(black_box(&mag), 64, 0.0, 16_000.0).unwrap()));
}

fn resampling(c: &mut Criterion) {
    let clip = test_clip(44_100, 10.0);
    c.bench_function("resample 44100 -> 32000, 10s", |b| b.iter(|| resample(black_box(&clip), 32_000).unwrap()));
}

criterion_group!(benches, stft, resampling);
criterion_main!(benches);
