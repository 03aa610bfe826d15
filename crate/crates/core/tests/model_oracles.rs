mod oracle;

#[test]
fn forward_matches_straight_line_oracle() {
    oracle::check_forward_oracle(20, 1).unwrap();
}

#[test]
fn degenerate_windows_and_frozen_context() {
    oracle::check_degeneracy(100, 2).unwrap();
}

#[test]
fn attention_weights_are_distributions() {
    oracle::check_attention_invariants(1000, 3).unwrap();
}

#[test]
fn gradients_match_central_differences() {
    oracle::check_gradients(&[11, 12, 13, 14, 15]).unwrap();
}
