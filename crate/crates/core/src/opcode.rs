//! The supported EVM instruction subset.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Stop,
    Add,
    Mul,
    Sub,
    Div,
    Mod,
    Lt,
    Gt,
    Eq,
    IsZero,
    And,
    Or,
    Not,
    Sha3,
    Origin,
    Caller,
    CallDataLoad,
    CallDataSize,
    Pop,
    MLoad,
    MStore,
    SLoad,
    SStore,
    Jump,
    JumpI,
    Pc,
    JumpDest,
    /// PUSH1..PUSH32
    Push(u8),
    /// DUP1..DUP16
    Dup(u8),
    /// SWAP1..SWAP16
    Swap(u8),
    Call,
    CallCode,
    Return,
    DelegateCall,
    StaticCall,
    Revert,
}

const FIXED: &[(Opcode, u8, &str)] = &[
    (Opcode::Stop, 0x00, "STOP"),
    (Opcode::Add, 0x01, "ADD"),
    (Opcode::Mul, 0x02, "MUL"),
    (Opcode::Sub, 0x03, "SUB"),
    (Opcode::Div, 0x04, "DIV"),
    (Opcode::Mod, 0x06, "MOD"),
    (Opcode::Lt, 0x10, "LT"),
    (Opcode::Gt, 0x11, "GT"),
    (Opcode::Eq, 0x14, "EQ"),
    (Opcode::IsZero, 0x15, "ISZERO"),
    (Opcode::And, 0x16, "AND"),
    (Opcode::Or, 0x17, "OR"),
    (Opcode::Not, 0x19, "NOT"),
    (Opcode::Sha3, 0x20, "SHA3"),
    (Opcode::Origin, 0x32, "ORIGIN"),
    (Opcode::Caller, 0x33, "CALLER"),
    (Opcode::CallDataLoad, 0x35, "CALLDATALOAD"),
    (Opcode::CallDataSize, 0x36, "CALLDATASIZE"),
    (Opcode::Pop, 0x50, "POP"),
    (Opcode::MLoad, 0x51, "MLOAD"),
    (Opcode::MStore, 0x52, "MSTORE"),
    (Opcode::SLoad, 0x54, "SLOAD"),
    (Opcode::SStore, 0x55, "SSTORE"),
    (Opcode::Jump, 0x56, "JUMP"),
    (Opcode::JumpI, 0x57, "JUMPI"),
    (Opcode::Pc, 0x58, "PC"),
    (Opcode::JumpDest, 0x5b, "JUMPDEST"),
    (Opcode::Call, 0xf1, "CALL"),
    (Opcode::CallCode, 0xf2, "CALLCODE"),
    (Opcode::Return, 0xf3, "RETURN"),
    (Opcode::DelegateCall, 0xf4, "DELEGATECALL"),
    (Opcode::StaticCall, 0xfa, "STATICCALL"),
    (Opcode::Revert, 0xfd, "REVERT"),
];

impl Opcode {
    pub fn byte(self) -> u8 {
        match self {
            Opcode::Push(n) => 0x5f + n,
            Opcode::Dup(n) => 0x7f + n,
            Opcode::Swap(n) => 0x8f + n,
            op => FIXED.iter().find(|(o, _, _)| *o == op).map(|(_, b, _)| *b).unwrap(),
        }
    }

    pub fn from_byte(b: u8) -> Option<Opcode> {
        match b {
            0x60..=0x7f => Some(Opcode::Push(b - 0x5f)),
            0x80..=0x8f => Some(Opcode::Dup(b - 0x7f)),
            0x90..=0x9f => Some(Opcode::Swap(b - 0x8f)),
            _ => FIXED.iter().find(|(_, byte, _)| *byte == b).map(|(o, _, _)| *o),
        }
    }

    /// Number of immediate bytes following the opcode.
    pub fn immediate_len(self) -> usize {
        match self {
            Opcode::Push(n) => n as usize,
            _ => 0,
        }
    }

    /// (items popped, items pushed)
    pub fn stack_io(self) -> (usize, usize) {
        use Opcode::*;
        match self {
            Stop | JumpDest => (0, 0),
            Add | Mul | Sub | Div | Mod | Lt | Gt | Eq | And | Or | Sha3 => (2, 1),
            IsZero | Not | CallDataLoad | MLoad | SLoad => (1, 1),
            Origin | Caller | CallDataSize | Pc | Push(_) => (0, 1),
            Pop | Jump => (1, 0),
            MStore | SStore | JumpI | Return | Revert => (2, 0),
            Dup(n) => (n as usize, n as usize + 1),
            Swap(n) => (n as usize + 1, n as usize + 1),
            Call | CallCode => (7, 1),
            DelegateCall | StaticCall => (6, 1),
        }
    }

    pub fn is_call(self) -> bool {
        matches!(self, Opcode::Call | Opcode::CallCode | Opcode::DelegateCall | Opcode::StaticCall)
    }

    /// Unit gas cost charged before the instruction executes.
    pub fn gas_cost(self) -> u64 {
        match self {
            Opcode::SLoad => 50,
            Opcode::SStore => 100,
            Opcode::Sha3 => 10,
            Opcode::Call | Opcode::CallCode | Opcode::DelegateCall | Opcode::StaticCall => 40,
            Opcode::JumpDest | Opcode::Stop => 1,
            _ => 3,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Opcode::Push(n) => write!(f, "PUSH{n}"),
            Opcode::Dup(n) => write!(f, "DUP{n}"),
            Opcode::Swap(n) => write!(f, "SWAP{n}"),
            op => f.write_str(FIXED.iter().find(|(o, _, _)| o == op).map(|(_, _, m)| *m).unwrap()),
        }
    }
}

impl FromStr for Opcode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        let upper = s.to_ascii_uppercase();
        let sized = |prefix: &str, max: u8| -> Option<u8> {
            let n: u8 = upper.strip_prefix(prefix)?.parse().ok()?;
            (1..=max).contains(&n).then_some(n)
        };
        if let Some(n) = sized("PUSH", 32) {
            return Ok(Opcode::Push(n));
        }
        if let Some(n) = sized("DUP", 16) {
            return Ok(Opcode::Dup(n));
        }
        if let Some(n) = sized("SWAP", 16) {
            return Ok(Opcode::Swap(n));
        }
        if upper == "KECCAK256" {
            return Ok(Opcode::Sha3);
        }
        FIXED.iter().find(|(_, _, m)| *m == upper).map(|(o, _, _)| *o).ok_or(())
    }
}
