mod common;

use proptest::prelude::*;
use rwasim::ledger::{AccountId, Amount, Ledger, Payload};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_op_sequences_keep_ledger_invariants(ops in common::ledger_ops()) {
        common::check_ledger(ops).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn underfunded_deferred_transfer_is_dropped_at_inclusion() {
    let mut l = Ledger::default();
    let (a, b) = (AccountId(1), AccountId(2));
    l.register_identity(a);
    l.register_identity(b);
    l.mint(a, Amount::from_units(1.0));
    let ok = l.next_tx_id();
    l.submit_tx(ok, Payload::CurrencyTransfer { from: a, to: b, amount: Amount::from_units(1.0) }).unwrap();
    let late = l.next_tx_id();
    l.submit_tx(late, Payload::CurrencyTransfer { from: a, to: b, amount: Amount::from_units(1.0) }).unwrap();
    l.advance_clock(5);
    assert_eq!(l.balance(b), Amount::from_units(1.0));
    assert_eq!(l.rejections().len(), 1);
    assert_eq!(l.rejections()[0].tx, late);
    assert_eq!(l.total_currency(), Amount::from_units(1.0));
}

#[test]
fn full_block_seals_without_waiting() {
    let mut l = Ledger::default();
    for _ in 0..10 {
        l.mint(AccountId(0), Amount::from_micros(1));
    }
    assert_eq!(l.chain().len(), 1);
    assert_eq!(l.chain()[0].sealed_at, 0);
    assert_eq!(l.mempool().len(), 0);
}
