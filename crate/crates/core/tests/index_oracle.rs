use fineforge_core::index::{normalize, EmbeddingStore, Hit, MatchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_store(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> EmbeddingStore {
    let rows: Vec<(String, Vec<f32>)> = (0..n)
        .map(|i| {
            (
                format!("t{:05}", (i * 7919) % n),
                (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
            )
        })
        .collect();
    EmbeddingStore::build(dim, rows).unwrap()
}

/// Full scan: score everything, sort, filter, truncate.
fn exhaustive(store: &EmbeddingStore, q: &[f64], cfg: &MatchConfig) -> Vec<Hit> {
    let unit = normalize(q).unwrap();
    let mut all: Vec<Hit> = (0..store.len())
        .map(|i| Hit {
            template_id: store.ids()[i].clone(),
            similarity: store
                .vector(i)
                .iter()
                .zip(&unit)
                .fold(0.0, |acc, (a, b)| acc + f64::from(*a) * b),
        })
        .collect();
    all.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.template_id.cmp(&b.template_id))
    });
    all.into_iter()
        .filter(|h| h.similarity >= cfg.threshold)
        .take(cfg.top_m)
        .collect()
}

#[test]
fn query_equals_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 16;
    let store = random_store(&mut rng, 1000, dim);
    for threshold in [-0.9, 0.0, 0.3, 0.5] {
        for top_m in [1, 5, 50] {
            let cfg = MatchConfig { threshold, top_m, include_global: true };
            for _ in 0..20 {
                let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert_eq!(store.query(&q, &cfg).unwrap(), exhaustive(&store, &q, &cfg));
            }
        }
    }
}

#[test]
fn raising_threshold_never_adds_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let store = random_store(&mut rng, 500, 8);
    for _ in 0..50 {
        let q: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut prev: Option<Vec<String>> = None;
        for t in [-0.5, 0.0, 0.2, 0.4, 0.6, 0.8] {
            let cfg = MatchConfig { threshold: t, top_m: 1000, include_global: true };
            let ids: Vec<String> = store.query(&q, &cfg).unwrap().into_iter().map(|h| h.template_id).collect();
            if let Some(p) = &prev {
                assert!(ids.iter().all(|id| p.contains(id)));
            }
            prev = Some(ids);
        }
    }
}

#[test]
fn positive_scaling_is_invisible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let store = random_store(&mut rng, 300, 12);
    let cfg = MatchConfig { threshold: 0.1, top_m: 10, include_global: true };
    for _ in 0..50 {
        let q: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = store.query(&q, &cfg).unwrap();
        // Powers of two scale exactly.
        for c in [0.25, 8.0, 1024.0] {
            let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
            assert_eq!(store.query(&scaled, &cfg).unwrap(), base);
        }
        let scaled: Vec<f64> = q.iter().map(|v| v * 3.7).collect();
        let other = store.query(&scaled, &cfg).unwrap();
        assert_eq!(other.len(), base.len());
        for (a, b) in other.iter().zip(&base) {
            assert_eq!(a.template_id, b.template_id);
            assert!((a.similarity - b.similarity).abs() < 1e-12);
        }
    }
}

#[test]
fn persistence_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let store = random_store(&mut rng, 200, 10);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.fineemb");
    store.save(&path).unwrap();
    let loaded = EmbeddingStore::load(&path).unwrap();
    assert_eq!(loaded, store);
    let cfg = MatchConfig { threshold: 0.0, ..Default::default() };
    for _ in 0..20 {
        let q: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert_eq!(loaded.query(&q, &cfg).unwrap(), store.query(&q, &cfg).unwrap());
    }
}
