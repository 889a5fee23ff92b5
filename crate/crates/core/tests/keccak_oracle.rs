//! Keccak-256 and storage keys checked against the reference sponge in
//! `support/keccak.rs`.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod support;

use support::keccak as reference;
use tct_core::asm::{mapping_key, AbiType, StorageKind, StorageVar};
use tct_core::words::{keccak256, Address, Selector, Word256};

fn hex32(s: &str) -> [u8; 32] {
    let v = hex::decode(s).unwrap();
    v.try_into().unwrap()
}

#[test]
fn published_vectors() {
    let cases: [(&[u8], &str); 4] = [
        (b"", "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"),
        (b"abc", "4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"),
        (b"The quick brown fox jumps over the lazy dog", "4d741b6f1eb29cb2a9b9911c82f56fa8d73b04959d3d9d222895df6c0b28aa15"),
        (&[0u8; 64], "ad3228b676f7d3cd4284a5443f17f1962b36e491b30a40b2405849e597ba5fb5"),
    ];
    for (input, want) in cases {
        assert_eq!(reference::keccak256(input), hex32(want), "reference on {input:?}");
        assert_eq!(keccak256(input).0, hex32(want), "library on {input:?}");
    }
}

#[test]
fn function_selectors() {
    assert_eq!(Selector::of_signature("transfer(address,uint256)").0, [0xa9, 0x05, 0x9c, 0xbb]);
    assert_eq!(Selector::of_signature("balanceOf(address)").0, [0x70, 0xa0, 0x82, 0x31]);
}

fn reference_storage_key(key: Word256, slot: Word256) -> Word256 {
    let mut pre = Vec::with_capacity(64);
    pre.extend_from_slice(&key.to_be_bytes());
    pre.extend_from_slice(&slot.to_be_bytes());
    Word256::from_be_bytes(reference::keccak256(&pre))
}

#[test]
fn storage_keys_for_random_slots_and_addresses() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let mut a = [0u8; 20];
        rng.fill(&mut a);
        let who = Address(a);
        let slot = Word256::from_u64(rng.gen_range(0..1u64 << 32));
        let var = StorageVar { name: "m".into(), slot, kind: StorageKind::Mapping, value_type: AbiType::Uint256 };
        let got = var.storage_key(Some(who.to_word())).unwrap();
        assert_eq!(got, reference_storage_key(who.to_word(), slot), "slot {slot:?} key {who}");
    }
}

proptest! {
    #[test]
    fn library_matches_reference(data in proptest::collection::vec(any::<u8>(), 0..400)) {
        prop_assert_eq!(keccak256(&data).0, reference::keccak256(&data));
    }

    #[test]
    fn mapping_key_matches_reference(key in any::<[u8; 32]>(), slot in any::<[u8; 32]>()) {
        let (k, s) = (Word256::from_be_bytes(key), Word256::from_be_bytes(slot));
        prop_assert_eq!(mapping_key(k, s), reference_storage_key(k, s));
    }
}
