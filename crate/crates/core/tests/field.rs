use enhperc::lattice::UNIFORM_BITS;
use enhperc::{BondKind, RandomField};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const DRAWS: i64 = 1_000_000;
const BINS: usize = 100;

fn draws(field: &RandomField, kind: BondKind) -> impl Iterator<Item = f64> + '_ {
    let scale = (1u64 << UNIFORM_BITS) as f64;
    (0..DRAWS).map(move |i| {
        let n = i / 1000;
        let m = 2 * (i % 1000) - 1000 + n % 2;
        field.raw_uniform(m, n, kind) as f64 / scale
    })
}

#[test]
fn uniforms_pass_chi_square_and_mean() {
    let field = RandomField::new(20240501);
    let critical = ChiSquared::new((BINS - 1) as f64).unwrap().inverse_cdf(0.999);
    for kind in BondKind::ALL {
        let mut counts = [0u64; BINS];
        let mut sum = 0.0;
        for y in draws(&field, kind) {
            assert!((0.0..1.0).contains(&y));
            counts[(y * BINS as f64) as usize] += 1;
            sum += y;
        }
        let expected = DRAWS as f64 / BINS as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < critical, "{kind:?}: chi2 {chi2} >= {critical}");
        let mean = sum / DRAWS as f64;
        let sigma = (1.0 / 12.0 / DRAWS as f64).sqrt();
        assert!((mean - 0.5).abs() < 5.0 * sigma, "{kind:?}: mean {mean}");
    }
}

#[test]
fn bond_kinds_and_seeds_are_uncorrelated() {
    let a = RandomField::new(7);
    let b = RandomField::derive(7, 1);
    let pairs: [(Vec<f64>, Vec<f64>); 3] = [
        (draws(&a, BondKind::Ne).collect(), draws(&a, BondKind::Vert).collect()),
        (draws(&a, BondKind::Ne).collect(), draws(&a, BondKind::Nw).collect()),
        (draws(&a, BondKind::Ne).collect(), draws(&b, BondKind::Ne).collect()),
    ];
    for (x, y) in &pairs {
        let n = x.len() as f64;
        let cov = x.iter().zip(y).map(|(u, v)| (u - 0.5) * (v - 0.5)).sum::<f64>() / n;
        let corr = cov * 12.0;
        assert!(corr.abs() * n.sqrt() < 5.0, "correlation {corr}");
    }
}
