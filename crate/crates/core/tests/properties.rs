use advpad_core::advgen::{cae_loss, cae_loss_with_grad, CaeArch, CaeModel, DualLossConfig};
use advpad_core::candidates::AdversarialCandidate;
use advpad_core::dataset::{preprocess, Label};
use advpad_core::evaluation::{error_rates, hter, tdr_at_fdr, ScoreSet};
use advpad_core::pad::bce_loss;
use advpad_core::pixels::Image;
use advpad_core::selection::{filter, inertia, kmeans, pick, SelectionConfig};
use advpad_core::transform::{apply, TransformKind, TransformSpace, TransformVector};
use ndarray::Array4;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(seed: u64, c: usize, h: usize, w: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_shape_fn((c, h, w), |_| rng.gen_range(0.0..1.0))
}

/// Exhaustive sweep over every distinct score, ascending; returns (detected PAs, PA count, threshold).
fn tdr_oracle(scores: &[f64], labels: &[Label], fdr: f64) -> (usize, usize, f64) {
    let bona: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == Label::Bonafide).map(|(s, _)| *s).collect();
    let pa: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == Label::Attack).map(|(s, _)| *s).collect();
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut threshold = f64::INFINITY;
    for t in ts {
        let fd = bona.iter().filter(|&&s| s >= t).count() as f64 / bona.len() as f64;
        if fd <= fdr {
            threshold = t;
            break;
        }
    }
    (pa.iter().filter(|&&s| s >= threshold).count(), pa.len(), threshold)
}

fn score_set() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    (2usize..300, any::<u64>(), prop::bool::ANY).prop_map(|(n, seed, coarse)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<Label> = (0..n).map(|_| if rng.gen_bool(0.5) { Label::Attack } else { Label::Bonafide }).collect();
        labels[0] = Label::Bonafide;
        labels[1] = Label::Attack;
        // Coarse scores force ties between and within classes.
        let scores = (0..n)
            .map(|_| if coarse { rng.gen_range(0..12) as f64 / 11.0 } else { rng.gen_range(0.0..1.0) })
            .collect();
        (scores, labels)
    })
}

fn candidate(i: usize, label: Label, rng: &mut ChaCha8Rng) -> AdversarialCandidate {
    let f_score = rng.gen_range(0.0..1.0);
    let mut t = TransformVector::identity();
    t.0[0] = rng.gen_range(-15..=15) as f64;
    t.0[1] = rng.gen_range(-15..=15) as f64;
    AdversarialCandidate {
        id: format!("c{i:05}"),
        source_id: format!("src{i}"),
        label,
        t,
        mse: rng.gen_range(0.0..0.02),
        f_score,
        image: None,
        embedding: Some(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]),
        selected: false,
    }
}

fn embed_stored(c: &AdversarialCandidate) -> advpad_core::Result<Vec<f32>> {
    Ok(c.embedding.clone().expect("test candidates carry embeddings"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_vectors_stay_on_grid_and_round_trip(seed in any::<u64>()) {
        let space = TransformSpace::default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = space.sample(&mut rng);
        prop_assert!(space.validate_vector(&t).is_ok());
        let u = space.normalize(&t).unwrap();
        prop_assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
        let back = space.denormalize(&u).unwrap();
        for (a, b) in back.values().iter().zip(t.values()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn apply_keeps_shape_and_unit_range(seed in any::<u64>(), size in 4usize..24) {
        let space = TransformSpace::default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = space.sample(&mut rng);
        let img = image(seed, 1, size, size + 3);
        let out = apply(&img, &t).unwrap();
        prop_assert_eq!(out.dim(), img.dim());
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn identity_vector_leaves_images_unchanged(seed in any::<u64>()) {
        let img = image(seed, 1, 20, 20);
        let out = apply(&img, &TransformVector::identity()).unwrap();
        prop_assert_eq!(&out, &img);
    }

    #[test]
    fn brightness_matches_closed_form(v in 0.0f32..1.0, step in 0usize..11) {
        let b = 0.5 + step as f64 * 0.1;
        let img = Image::from_elem((1, 6, 6), v);
        let out = apply(&img, &TransformVector::identity().with(TransformKind::Brightness, b)).unwrap();
        let expect = (v * b as f32).clamp(0.0, 1.0);
        prop_assert!(out.iter().all(|&o| (o - expect).abs() < 1e-6));
    }

    #[test]
    fn preprocess_is_in_range_and_idempotent_up_to_range_map(seed in any::<u64>(), h in 1usize..40, w in 1usize..40) {
        let img = image(seed, 1, h, w);
        let out = preprocess(&img, 16).unwrap();
        prop_assert_eq!(out.dim(), (1, 16, 16));
        prop_assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
        let unit = out.mapv(|v| (v + 1.0) / 2.0);
        let again = preprocess(&unit, 16).unwrap();
        for (a, b) in again.iter().zip(out.iter()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn tdr_matches_exhaustive_sweep((scores, labels) in score_set(), fdr_i in 0usize..4) {
        let fdr = [0.0, 0.001, 0.01, 0.1][fdr_i];
        let set = ScoreSet::new("d", scores.clone(), labels.clone()).unwrap();
        let (tdr, thr) = tdr_at_fdr(&set, fdr).unwrap();
        let (hits, n_pa, othr) = tdr_oracle(&scores, &labels, fdr);
        prop_assert_eq!((tdr * n_pa as f64 / 100.0).round() as usize, hits);
        prop_assert_eq!(thr, othr);
    }

    #[test]
    fn error_rates_are_percentages_and_hter_is_their_mean((scores, labels) in score_set(), thr in 0.0f64..1.0) {
        let set = ScoreSet::new("d", scores, labels).unwrap();
        let (a, b, h) = error_rates(&set, thr).unwrap();
        prop_assert!((0.0..=100.0).contains(&a) && (0.0..=100.0).contains(&b));
        prop_assert_eq!(h, hter(a, b));
        prop_assert_eq!(h, (a + b) / 2.0);
    }

    #[test]
    fn bce_is_non_negative(p in 0.0f64..=1.0, attack in prop::bool::ANY) {
        let y = if attack { 1.0 } else { 0.0 };
        prop_assert!(bce_loss(&[p], &[y]) >= 0.0);
    }

    #[test]
    fn cae_loss_is_monotone_in_lambda(seed in any::<u64>(), l1 in 0.0f64..1.0, dl in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array4::from_shape_fn((2, 1, 4, 4), |_| rng.gen_range(-1.0f32..1.0));
        let t = Array4::from_shape_fn((2, 1, 4, 4), |_| rng.gen_range(-1.0f32..1.0));
        let yh = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let y = [0.0, 1.0];
        let a = cae_loss(&x, &t, &yh, &y, &DualLossConfig { lambda: l1 }).unwrap();
        let b = cae_loss(&x, &t, &yh, &y, &DualLossConfig { lambda: l1 + dl }).unwrap();
        prop_assert!(b.total >= a.total);
        prop_assert_eq!(a.res, b.res);
        prop_assert!(a.res >= 0.0 && a.adv >= 0.0);
    }

    #[test]
    fn cae_outputs_stay_in_model_range(seed in 0u64..1000) {
        let cae = CaeModel::new(CaeArch { channels: 1, image_size: 8, widths: vec![4, 8], conditioned: true }, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array4::from_shape_fn((2, 1, 8, 8), |_| rng.gen_range(-1.0f32..1.0));
        let t: Vec<Vec<f64>> = (0..2).map(|_| (0..10).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let out = cae.reconstruct(&x, &t).unwrap();
        prop_assert_eq!(out.dim(), x.dim());
        prop_assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kmeans_beats_random_assignments(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let km = kmeans(&pts, k, 100, 5, seed).unwrap();
        prop_assert!((km.inertia - inertia(&pts, &km.assignments, &km.centroids)).abs() < 1e-9);
        for _ in 0..200 {
            let assign: Vec<usize> = (0..pts.len()).map(|_| rng.gen_range(0..k)).collect();
            let mut cents = vec![vec![0.0; 3]; k];
            let mut counts = vec![0usize; k];
            for (p, &a) in pts.iter().zip(&assign) {
                counts[a] += 1;
                for d in 0..3 {
                    cents[a][d] += p[d];
                }
            }
            for (c, n) in cents.iter_mut().zip(&counts) {
                if *n > 0 {
                    c.iter_mut().for_each(|v| *v /= *n as f64);
                }
            }
            prop_assert!(km.inertia <= inertia(&pts, &assign, &cents) + 1e-9);
        }
    }

    #[test]
    fn lloyd_iterations_never_raise_inertia(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..40).map(|_| (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let km = kmeans(&pts, k, 50, 1, seed).unwrap();
        for w in km.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "trace {:?}", km.trace);
        }
    }

    #[test]
    fn selection_respects_filter_budget_and_order(seed in any::<u64>(), n in 1usize..120, k in 1usize..5, s in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<AdversarialCandidate> = (0..n)
            .map(|i| candidate(i, if i % 2 == 0 { Label::Bonafide } else { Label::Attack }, &mut rng))
            .collect();
        let cfg = SelectionConfig { k, s, seed, ..SelectionConfig::default() };
        let filtered = filter(&pool, &cfg);
        let mut shuffled = pool.clone();
        shuffled.reverse();
        let swap = rng.gen_range(0..shuffled.len());
        shuffled.swap(0, swap);
        let filtered_b = filter(&shuffled, &cfg);
        for label in Label::BOTH {
            let a = pick(filtered.class(label), &cfg, &embed_stored).unwrap();
            let b = pick(filtered_b.class(label), &cfg, &embed_stored).unwrap();
            prop_assert_eq!(&a.picked, &b.picked);
            prop_assert!(a.picked.len() <= k * s);
            for p in &a.picked {
                let c = pool.iter().find(|c| c.id == p.id).unwrap();
                prop_assert!(c.mse < cfg.mse_threshold);
                prop_assert!(c.adversarial());
                prop_assert_eq!(c.label, label);
            }
        }
    }
}

#[test]
fn cae_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Array4::from_shape_fn((1, 1, 4, 4), |_| rng.gen_range(-1.0f32..1.0));
    let t = Array4::from_shape_fn((1, 1, 4, 4), |_| rng.gen_range(-1.0f32..1.0));
    let cfg = DualLossConfig { lambda: 0.1 };
    for y in [0.0, 1.0] {
        let z = [0.3];
        let (_, gx, gz) = cae_loss_with_grad(&x, &t, &z, &[y], &cfg).unwrap();
        let f = |xp: &Array4<f32>, zz: f64| {
            let p = 1.0 / (1.0 + (-zz).exp());
            cae_loss(xp, &t, &[p], &[y], &cfg).unwrap().total
        };
        let h = 1e-3f32;
        for i in 0..16 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_slice_mut().unwrap()[i] += h;
            xm.as_slice_mut().unwrap()[i] -= h;
            let num = (f(&xp, z[0]) - f(&xm, z[0])) / (2.0 * h as f64);
            let ana = gx.as_slice().unwrap()[i] as f64;
            assert!((num - ana).abs() / num.abs().max(ana.abs()).max(1e-8) <= 1e-3, "x[{i}]: {num} vs {ana}");
        }
        let hz = 1e-5;
        let num = (f(&x, z[0] + hz) - f(&x, z[0] - hz)) / (2.0 * hz);
        assert!((num - gz[0]).abs() / num.abs().max(1e-8) <= 1e-3, "z: {num} vs {}", gz[0]);
    }
}
