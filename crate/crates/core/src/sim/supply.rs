use num_bigint::BigUint;

use crate::vm::WorldState;
use crate::words::Address;

/// A token whose balances no longer add up to its total supply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupplyViolation {
    pub sum: BigUint,
    pub total_supply: BigUint,
    /// Storage keys the sum could not attribute to any account.
    pub unexplained: usize,
}

impl std::fmt::Display for SupplyViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sum(balances) = {} but totalSupply = {}", self.sum, self.total_supply)?;
        if self.unexplained > 0 {
            write!(f, " ({} unattributed storage keys)", self.unexplained)?;
        }
        Ok(())
    }
}

/// Checks `sum(balances) == totalSupply` for the token at `token`, summing
/// over mathematical integers so wrapped balances show up.
pub fn check_supply(world: &WorldState, token: Address) -> Result<(), SupplyViolation> {
    let sum: BigUint = world.mapping_entries(token, "balances").iter().map(|(_, v)| v.to_biguint()).sum();
    let total_supply = world.get_var(token, "totalSupply", None).map(|w| w.to_biguint()).unwrap_or_default();
    let unexplained = world.unexplained_keys(token).len();
    if sum == total_supply && unexplained == 0 {
        Ok(())
    } else {
        Err(SupplyViolation { sum, total_supply, unexplained })
    }
}
