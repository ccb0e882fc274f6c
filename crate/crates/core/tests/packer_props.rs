use fineforge_core::packer::{pack_document, TokenBudgetState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn budget_is_never_exceeded(
        pairs in prop::collection::vec(0usize..300, 0..10),
        doc_tokens in 0u64..1000,
        carry in 0u64..500,
        seed in any::<u64>(),
    ) {
        let state = TokenBudgetState { carry };
        let out = pack_document(pairs.clone(), doc_tokens, state, seed, "d");
        let kept: u64 = out.kept.iter().map(|&t| t as u64).sum();
        if pairs.is_empty() {
            prop_assert_eq!(out.state, state);
        } else {
            prop_assert!(kept <= doc_tokens + carry);
            prop_assert_eq!(out.state.carry, carry + doc_tokens - kept);
        }
    }
}

#[test]
fn conservation_over_long_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut state = TokenBudgetState::default();
    let (mut doc_sum, mut kept_sum) = (0u64, 0u64);
    for d in 0..10_000 {
        let doc_tokens = rng.gen_range(50..2000u64);
        let pairs: Vec<usize> = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(10..900)).collect();
        let out = pack_document(pairs, doc_tokens, state, 3, &d.to_string());
        doc_sum += doc_tokens;
        kept_sum += out.kept_tokens;
        state = out.state;
    }
    assert_eq!(doc_sum, kept_sum + state.carry);
}
