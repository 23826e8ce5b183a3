use conewalk::linalg::vectorize_herm;
use conewalk::{Field, LawSpec, SeedSequence};

/// Monte Carlo moments of a law against its reported moment data.
fn check_moments(spec: &str, draws: usize) {
    let spec: LawSpec = serde_json::from_str(spec).unwrap();
    let law = spec.build().unwrap();
    let md = law.moments();
    let mut rng = SeedSequence::new(77).stream(0);
    let mut sums = [0.0f64; 4];
    let mut sq_sums = [0.0f64; 4];
    let k = vectorize_herm(md.sigma2.as_herm()).dim();
    let mut mean = vec![0.0; k];
    let mut second = vec![vec![0.0; k]; k];
    for _ in 0..draws {
        let s = law.sample(&mut rng);
        let sq = s.square();
        let r2 = sq.trace();
        let r = r2.sqrt();
        let powers = [r, r2, r2 * r, r2 * r2];
        for i in 0..4 {
            sums[i] += powers[i];
            sq_sums[i] += powers[i] * powers[i];
        }
        let v = vectorize_herm(&sq).values;
        for a in 0..k {
            mean[a] += v[a];
            for b in 0..k {
                second[a][b] += v[a] * v[b];
            }
        }
    }
    let n = draws as f64;
    let exact = [md.m1, md.m2, md.m3, md.m4];
    for i in 0..4 {
        let m = sums[i] / n;
        let se = ((sq_sums[i] / n - m * m).max(0.0) / n).sqrt();
        assert!((m - exact[i]).abs() <= 5.0 * se + 1e-12 * exact[i].abs(), "m{}: {m} vs {}", i + 1, exact[i]);
    }
    let sigma2 = vectorize_herm(md.sigma2.as_herm()).values;
    for a in 0..k {
        let m = mean[a] / n;
        assert!((m - sigma2[a]).abs() <= 0.02 * (1.0 + sigma2[a].abs()), "sigma2[{a}]: {m} vs {}", sigma2[a]);
        for b in 0..k {
            let c = second[a][b] / n - m * mean[b] / n;
            let t = md.sigma2_image_cov.get(a, b);
            assert!((c - t).abs() <= 0.05 * (1.0 + t.abs()), "cov[{a}][{b}]: {c} vs {t}");
        }
    }
}

#[test]
fn scalar_laws_match_their_moments() {
    check_moments(r#"{"type":"scalar_two_point","a":1.0,"b":2.0,"p_a":0.5}"#, 200_000);
    check_moments(r#"{"type":"scalar_uniform","lo":0.5,"hi":2.0}"#, 200_000);
    check_moments(r#"{"type":"scalar_log_normal","log_mean":0.1,"log_sd":0.4}"#, 400_000);
}

#[test]
fn matrix_laws_match_their_moments() {
    check_moments(r#"{"type":"point_mass","atom":[[2.0,0.5],[0.5,1.0]]}"#, 1000);
    check_moments(
        r#"{"type":"finite_mixture","atoms":[{"diag":[1.0,2.0]},{"root_of":[[2.0,0.5],[0.5,1.0]]}],"weights":[0.3,0.7]}"#,
        200_000,
    );
    check_moments(
        r#"{"type":"finite_mixture","atoms":[{"re":[[1.0,0.2],[0.2,1.0]],"im":[[0.0,0.3],[-0.3,0.0]]},{"diag":[0.5,1.5]}],"weights":[0.5,0.5]}"#,
        200_000,
    );
}

#[test]
fn two_point_law_moments_by_hand() {
    let law = conewalk::RadialLaw::two_point(1.0, 2.0, 0.5).unwrap();
    let md = law.moments();
    assert_eq!(law.field(), Field::Real);
    assert!((md.m1 - 1.5).abs() < 1e-15);
    assert!((md.m2 - 2.5).abs() < 1e-15);
    assert!((md.m4 - 8.5).abs() < 1e-15);
    assert!((md.sigma2_scalar() - 2.5).abs() < 1e-15);
}
