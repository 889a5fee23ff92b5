//! The prelude's wrapping-arithmetic axioms as executable checks over
//! unbounded integers.

use num_bigint::BigInt;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tct_core::words::Word256;

pub const GUARD: &str = "Zero <= a && a < TwoE256 && Zero <= b && b < TwoE256";

/// The clauses below, as they appear in the prelude.
pub const CLAUSES: [&str; 6] = [
    "a+b < TwoE256 ==> evmadd(a,b) == a+b",
    "a+b >= TwoE256 ==> evmadd(a,b) == a+b-TwoE256",
    "evmadd(a,b) >= a ==> evmadd(a,b) == a+b",
    "a >= b ==> evmsub(a,b) == a-b",
    "a < b ==> evmsub(a,b) == a-b+TwoE256",
    "evmsub(a,b) <= a ==> evmsub(a,b) == a-b",
];

pub type Clause = fn(&BigInt, &BigInt, &BigInt, &BigInt, &BigInt) -> Option<bool>;

/// `(a, b, add, sub, 2^256)` to `None` when the antecedent is false, else
/// whether the consequent holds.
pub const CHECKS: [Clause; 6] = [
    |a, b, add, _, m| (a + b < *m).then(|| *add == a + b),
    |a, b, add, _, m| (a + b >= *m).then(|| *add == a + b - m),
    |a, b, add, _, _| (add >= a).then(|| *add == a + b),
    |a, b, _, sub, _| (a >= b).then(|| *sub == a - b),
    |a, b, _, sub, m| (a < b).then(|| *sub == a - b + m),
    |a, b, _, sub, _| (sub <= a).then(|| *sub == a - b),
];

pub fn int(w: Word256) -> BigInt {
    BigInt::from(w.to_biguint())
}

pub fn sample(rng: &mut ChaCha8Rng) -> Word256 {
    let max = Word256::ZERO.wrapping_sub(Word256::from_u64(1));
    match rng.gen_range(0..6) {
        0 => Word256::from_u64(rng.gen_range(0..4)),
        1 => max.wrapping_sub(Word256::from_u64(rng.gen_range(0..4))),
        2 => Word256::pow2(rng.gen_range(0..256)).wrapping_add(Word256::from_u64(rng.gen_range(0..3))),
        3 => Word256::from_u64(rng.gen()),
        _ => {
            let mut b = [0u8; 32];
            rng.fill(&mut b);
            Word256::from_be_bytes(b)
        }
    }
}

/// Checks every clause on `n` random pairs. Returns how often each clause
/// applied and the failing `(clause, a, b)` triples.
pub fn check_random_pairs(seed: u64, n: usize) -> ([usize; 6], Vec<(usize, Word256, Word256)>) {
    use rand::SeedableRng;
    use tct_core::words::{evm_add, evm_sub};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = BigInt::from(1u8) << 256;
    let mut applied = [0usize; 6];
    let mut failures = Vec::new();
    for _ in 0..n {
        let (wa, wb) = (sample(&mut rng), sample(&mut rng));
        let (a, b) = (int(wa), int(wb));
        let (add, sub) = (int(evm_add(wa, wb)), int(evm_sub(wa, wb)));
        for (i, check) in CHECKS.iter().enumerate() {
            match check(&a, &b, &add, &sub, &m) {
                Some(true) => applied[i] += 1,
                Some(false) => failures.push((i, wa, wb)),
                None => {}
            }
        }
    }
    (applied, failures)
}

/// Whether the prelude states exactly the checked clauses.
pub fn prelude_matches(axioms: &str) -> Result<(), String> {
    let flat: String = axioms.split_whitespace().collect();
    for c in CLAUSES {
        let want: String = format!("{GUARD} && {c}").split_whitespace().collect();
        if !flat.contains(&want) {
            return Err(format!("prelude lacks `{c}`"));
        }
    }
    let count = axioms.lines().filter(|l| l.contains("==> evmadd") || l.contains("==> evmsub")).count();
    if count != CLAUSES.len() {
        return Err(format!("prelude has {count} arithmetic axioms, {} are checked", CLAUSES.len()));
    }
    Ok(())
}
