use fineforge_core::pooling::{
    gaussian_weights, global_mean, hard_chunk_mask, hard_window_radius, pool, PoolingConfig,
    TokenMatrix,
};
use proptest::prelude::*;

/// Direct evaluation of the pooling formulas without any numerical shifting.
fn oracle(rows: &[Vec<f64>], mask: &[bool], k_chunks: usize, sigma: f64, alpha: f64) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let t_eff = mask.iter().rposition(|&m| m).unwrap() + 1;
    let m: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let msum: f64 = m.iter().sum();
    let global: Vec<f64> = (0..d)
        .map(|j| rows.iter().zip(&m).map(|(r, mt)| mt * r[j]).sum::<f64>() / msum)
        .collect();
    let mut out = vec![global.clone()];
    for k in 1..=k_chunks {
        let c = k as f64 / (k_chunks + 1) as f64 * t_eff as f64;
        let kern: Vec<f64> = (1..=rows.len())
            .map(|t| m[t - 1] * (-0.5 * ((t as f64 - c) / (sigma * t_eff as f64)).powi(2)).exp())
            .collect();
        let z: f64 = kern.iter().sum();
        let local: Vec<f64> = (0..d)
            .map(|j| rows.iter().zip(&kern).map(|(r, w)| w / z * r[j]).sum())
            .collect();
        out.push(
            (0..d)
                .map(|j| (1.0 - alpha) * global[j] + alpha * local[j])
                .collect(),
        );
    }
    out
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>)> {
    (1usize..=64, 1usize..=8).prop_flat_map(|(t, d)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), t),
            prop::collection::vec(prop::bool::weighted(0.85), t),
        )
            .prop_map(|(rows, mut mask)| {
                if !mask.iter().any(|&m| m) {
                    mask[0] = true;
                }
                (rows, mask)
            })
    })
}

proptest! {
    #[test]
    fn pool_matches_direct_formula(
        (rows, mask) in instance(),
        k in 1usize..=6,
        sigma in 0.05f64..1.0,
        alpha in 0.0f64..=1.0,
    ) {
        let tm = TokenMatrix::from_rows(&rows).unwrap().with_mask(mask.clone()).unwrap();
        let cfg = PoolingConfig { chunks: k, sigma, alpha, ..Default::default() };
        let got = pool(&tm, &cfg).unwrap();
        let want = oracle(&rows, &mask, k, sigma, alpha);
        for (g, w) in got.embeddings().zip(&want) {
            for (a, b) in g.iter().zip(w) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn weights_are_a_distribution((rows, mask) in instance(), sigma in 0.001f64..2.0) {
        let tm = TokenMatrix::from_rows(&rows).unwrap().with_mask(mask.clone()).unwrap();
        let cfg = PoolingConfig { sigma, ..Default::default() };
        for k in 1..=cfg.chunks {
            let w = gaussian_weights(&tm, &cfg, k).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (wt, &m) in w.iter().zip(&mask) {
                prop_assert!(*wt >= 0.0);
                if !m { prop_assert_eq!(*wt, 0.0); }
            }
        }
    }

    #[test]
    fn chunks_stay_in_convex_hull((rows, mask) in instance(), sigma in 0.01f64..1.0) {
        let tm = TokenMatrix::from_rows(&rows).unwrap().with_mask(mask.clone()).unwrap();
        let cfg = PoolingConfig { sigma, ..Default::default() };
        let p = pool(&tm, &cfg).unwrap();
        let d = rows[0].len();
        for j in 0..d {
            let vals = rows.iter().zip(&mask).filter(|(_, &m)| m).map(|(r, _)| r[j]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            for c in &p.chunks {
                prop_assert!(c[j] >= lo - 1e-12 && c[j] <= hi + 1e-12);
            }
        }
        prop_assert_eq!(global_mean(&tm).unwrap(), p.global);
    }
}

#[test]
fn hard_mask_radius_at_every_center() {
    let tm = TokenMatrix::from_rows(&vec![vec![1.0]; 100]).unwrap();
    let cfg = PoolingConfig::default();
    let r = hard_window_radius(&cfg, 100);
    assert!((r - 0.05 * 100.0 * (2.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
    for k in 1..=5 {
        let mask = hard_chunk_mask(&tm, &cfg, k).unwrap();
        let sel: Vec<f64> = (0..100).filter(|&i| mask[i]).map(|i| (i + 1) as f64).collect();
        let c = cfg.center(k, 100);
        let (lo, hi) = (sel[0], *sel.last().unwrap());
        assert!((hi - c - r).abs() <= 1.0, "k={k}");
        assert!((c - lo - r).abs() <= 1.0, "k={k}");
        // Window is contiguous.
        assert_eq!(sel.len() as f64, hi - lo + 1.0);
    }
}
