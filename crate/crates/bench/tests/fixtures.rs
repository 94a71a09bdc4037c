use soundscape_bench::{score_set, test_clip};

#[test]
fn fixtures_are_deterministic() {
    let (a, la) = score_set(20, 7);
    let (b, lb) = score_set(20, 7);
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert!(a.iter().all(|m| m.n_windows() == 7));
    assert_eq!(test_clip(8_000, 1.5).samples(), test_clip(8_000, 1.5).samples());
}

#[test]
fn clip_length_and_range() {
    let clip = test_clip(32_000, 2.0);
    assert_eq!(clip.len(), 64_000);
    assert!(clip.samples().iter().all(|v| v.abs() <= 0.5));
}
