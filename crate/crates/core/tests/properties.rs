use conewalk::harness::ExperimentConfig;
use conewalk::linalg::{eig_herm, psd_sqrt};
use conewalk::stats::{chi2_cdf, ks_distance};
use conewalk::{
    convolve_points, sample_radial_matrix, sample_stiefel_frame, semigroup_convolve, BesselParam, ContractionSampler,
    Field, HermitianMatrix, Matrix, PsdMatrix, RadialLaw, SeedSequence,
};
use proptest::prelude::*;

fn field_strategy() -> impl Strategy<Value = Field> {
    prop_oneof![Just(Field::Real), Just(Field::Complex)]
}

/// A PSD point from a seed: the root of G*G for a small Gaussian G.
fn point(q: usize, field: Field, seed: u64, scale: f64) -> PsdMatrix {
    let mut rng = SeedSequence::new(seed).stream(0);
    let g = conewalk::rng::gaussian_matrix(q + 1, q, field, &mut rng);
    let sq = HermitianMatrix::new(g.adjoint_matmul(&g).scale(scale)).unwrap();
    psd_sqrt(&PsdMatrix::new(sq).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn convolution_respects_support_bound(
        q in 1usize..=3, field in field_strategy(), extra in 0.0f64..40.0,
        seed in any::<u64>(), sr in 0.01f64..10.0, ss in 0.01f64..10.0,
    ) {
        let rho = field.dim() as f64 * (q as f64 - 0.5) + 1.0;
        let sampler = ContractionSampler::new(BesselParam::new(rho + 0.5 + extra, q, field).unwrap()).unwrap();
        let (r, s) = (point(q, field, seed, sr), point(q, field, seed ^ 1, ss));
        let mut rng = SeedSequence::new(seed).stream(9);
        for _ in 0..5 {
            let t = convolve_points(&r, &s, &sampler, &mut rng).unwrap();
            prop_assert!(t.frob_norm() <= r.frob_norm() + s.frob_norm() + 1e-8);
            let eig = eig_herm(t.as_herm()).unwrap();
            prop_assert!(eig.values[0] >= -1e-9 * (1.0 + t.frob_norm()));
        }
    }

    #[test]
    fn zero_is_the_neutral_element(q in 1usize..=3, field in field_strategy(), seed in any::<u64>()) {
        let rho = field.dim() as f64 * (q as f64 - 0.5) + 1.0;
        let sampler = ContractionSampler::new(BesselParam::new(rho + 2.0, q, field).unwrap()).unwrap();
        let r = point(q, field, seed, 1.0);
        let zero = PsdMatrix::zeros(q, field);
        let mut rng = SeedSequence::new(seed).stream(1);
        let t = convolve_points(&r, &zero, &sampler, &mut rng).unwrap();
        prop_assert!(t.as_herm().as_matrix().sub(r.as_herm().as_matrix()).frob_norm() < 1e-12);
    }

    #[test]
    fn semigroup_convolution_adds_squares(q in 1usize..=3, field in field_strategy(), seed in any::<u64>()) {
        let (r, s) = (point(q, field, seed, 2.0), point(q, field, seed ^ 7, 0.5));
        let u = semigroup_convolve(&r, &s).unwrap();
        let want = r.square().as_matrix().add(s.square().as_matrix());
        prop_assert!(u.square().as_matrix().sub(&want).frob_norm() < 1e-9 * (1.0 + want.frob_norm()));
        let v = semigroup_convolve(&s, &r).unwrap();
        prop_assert!(u.as_herm().as_matrix().sub(v.as_herm().as_matrix()).frob_norm() < 1e-9);
    }

    #[test]
    fn stiefel_frames_are_orthonormal(p in 1usize..12, q in 1usize..4, field in field_strategy(), seed in any::<u64>()) {
        prop_assume!(q <= p);
        let mut rng = SeedSequence::new(seed).stream(0);
        let f = sample_stiefel_frame(p, q, field, &mut rng).unwrap();
        let gram = f.adjoint_matmul(&f);
        let id = Matrix::identity(q, field);
        prop_assert!(gram.sub(&id).frob_norm() < 1e-10);
    }

    #[test]
    fn radial_matrices_have_the_drawn_radius(p in 1usize..10, seed in any::<u64>(), a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let law = RadialLaw::two_point(a, b, 0.5).unwrap();
        let mut rng = SeedSequence::new(seed).stream(0);
        let x = sample_radial_matrix(p, &law, Field::Real, &mut rng).unwrap();
        let r = x.frob_norm();
        prop_assert!((r - a).abs() < 1e-10 * (1.0 + a) || (r - b).abs() < 1e-10 * (1.0 + b));
    }

    #[test]
    fn chi2_cdf_is_a_distribution_function(p in 1u64..200, x in 0.0f64..400.0, dx in 0.0f64..10.0) {
        let (f0, f1) = (chi2_cdf(p, x), chi2_cdf(p, x + dx));
        prop_assert!((0.0..=1.0).contains(&f0));
        prop_assert!(f1 + 1e-15 >= f0);
    }

    #[test]
    fn ks_distance_is_bounded(mut xs in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        xs.sort_by(f64::total_cmp);
        let d = ks_distance(&xs, |x| ((x + 5.0) / 10.0).clamp(0.0, 1.0));
        prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-12 && d <= 1.0);
    }

    #[test]
    fn seeds_give_stable_config_hashes(seed in any::<u64>(), reps in 1usize..1_000_000) {
        let text = format!(r#"{{"experiment":"kappa","name":"k","q":1,"mu_grid":[3.0],"replicates":{reps},"master_seed":{seed}}}"#);
        let a = ExperimentConfig::from_json(&text).unwrap();
        let b = ExperimentConfig::from_json(&a.to_json()).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
        prop_assert_eq!(b.master_seed, seed);
    }
}
