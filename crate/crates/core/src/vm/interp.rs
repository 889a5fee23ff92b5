use std::collections::BTreeMap;
use std::rc::Rc;

use super::{Aux, PathBuffer, Receipt, Status, Transaction, TraceEvent, TrapReason, VmConfig, WorldState};
use crate::opcode::Opcode;
use crate::words::{keccak256, Address, Word256};

/// How a frame ended.
enum Halt {
    Success(Vec<u8>),
    Revert(Vec<u8>),
    Trap(TrapReason),
}

/// Runs `tx` against `state`. Committed runs keep their writes; reverted runs
/// leave `state` storage exactly as it was.
pub fn execute_transaction(state: &mut WorldState, tx: &Transaction, cfg: &VmConfig) -> Receipt {
    let mut it = Interp {
        state,
        cfg,
        origin: tx.origin,
        trace: Vec::new(),
        path: PathBuffer::default(),
        gas: 0,
        journal: Vec::new(),
        jumpdests: BTreeMap::new(),
    };
    let result = it.run_frame(0, tx.to, tx.origin, tx.calldata(), false);
    let (status, output) = match result {
        Ok(Halt::Success(out)) => (Status::Committed, out),
        Ok(Halt::Revert(out)) => (Status::Reverted(TrapReason::Revert), out),
        Ok(Halt::Trap(r)) | Err(r) => (Status::Reverted(r), Vec::new()),
    };
    if !status.is_committed() {
        it.rollback(0);
    }
    let path_hash = it.path.hash();
    Receipt { status, trace: it.trace, path: it.path, path_hash, gas_used: it.gas, output }
}

struct Interp<'s> {
    state: &'s mut WorldState,
    cfg: &'s VmConfig,
    origin: Address,
    trace: Vec<TraceEvent>,
    path: PathBuffer,
    gas: u64,
    /// (account, key, previous value) for every SSTORE, oldest first.
    journal: Vec<(Address, Word256, Word256)>,
    jumpdests: BTreeMap<Address, Rc<Vec<bool>>>,
}

fn jumpdest_map(code: &[u8]) -> Vec<bool> {
    let mut map = vec![false; code.len()];
    let mut pc = 0;
    while pc < code.len() {
        let op = Opcode::from_byte(code[pc]);
        if op == Some(Opcode::JumpDest) {
            map[pc] = true;
        }
        pc += 1 + op.map(Opcode::immediate_len).unwrap_or(0);
    }
    map
}

struct Memory {
    bytes: Vec<u8>,
    limit: usize,
}

impl Memory {
    fn range(&mut self, offset: Word256, len: Word256) -> Result<(usize, usize), TrapReason> {
        let len = len.to_usize().ok_or(TrapReason::MemoryLimit)?;
        if len == 0 {
            return Ok((0, 0));
        }
        let offset = offset.to_usize().ok_or(TrapReason::MemoryLimit)?;
        let end = offset.checked_add(len).ok_or(TrapReason::MemoryLimit)?;
        if end > self.limit {
            return Err(TrapReason::MemoryLimit);
        }
        if end > self.bytes.len() {
            self.bytes.resize(end.div_ceil(32) * 32, 0);
        }
        Ok((offset, len))
    }

    fn read(&mut self, offset: Word256, len: Word256) -> Result<(usize, usize, Vec<u8>), TrapReason> {
        let (o, l) = self.range(offset, len)?;
        Ok((o, l, self.bytes[o..o + l].to_vec()))
    }
}

impl Interp<'_> {
    fn rollback(&mut self, to: usize) {
        while self.journal.len() > to {
            let (addr, key, old) = self.journal.pop().unwrap();
            self.state.sstore(addr, key, old);
        }
    }

    fn jumpdests_of(&mut self, addr: Address, code: &[u8]) -> Rc<Vec<bool>> {
        self.jumpdests.entry(addr).or_insert_with(|| Rc::new(jumpdest_map(code))).clone()
    }

    /// Executes one call frame. `Err` aborts the whole transaction.
    fn run_frame(
        &mut self,
        depth: usize,
        contract: Address,
        caller: Address,
        calldata: Vec<u8>,
        is_static: bool,
    ) -> Result<Halt, TrapReason> {
        let code = self.state.accounts.get(&contract).map(|a| a.code.clone()).unwrap_or_default();
        let valid_dest = self.jumpdests_of(contract, &code);
        let mut stack: Vec<Word256> = Vec::with_capacity(32);
        let mut mem = Memory { bytes: Vec::new(), limit: self.cfg.max_memory };
        let mut pc = 0usize;
        loop {
            let Some(&byte) = code.get(pc) else {
                return Ok(Halt::Success(Vec::new()));
            };
            let Some(op) = Opcode::from_byte(byte) else {
                return Ok(Halt::Trap(TrapReason::InvalidOpcode(byte)));
            };
            self.gas += op.gas_cost();
            if self.gas > self.cfg.gas_limit {
                return Err(TrapReason::OutOfGas);
            }
            let (npop, npush) = op.stack_io();
            if stack.len() < npop {
                return Ok(Halt::Trap(TrapReason::StackUnderflow));
            }
            if stack.len() - npop + npush > 1024 {
                return Ok(Halt::Trap(TrapReason::StackOverflow));
            }
            let popped: Vec<Word256> = (0..npop).map(|_| stack.pop().unwrap()).collect();
            let mut next = pc + 1 + op.immediate_len();
            let mut aux = None;
            let mut pushed: Vec<Word256> = Vec::with_capacity(npush);
            let a = popped.first().copied().unwrap_or_default();
            let b = popped.get(1).copied().unwrap_or_default();
            macro_rules! trap {
                ($r:expr) => {
                    return Ok(Halt::Trap($r))
                };
            }
            macro_rules! mem_try {
                ($e:expr) => {
                    match $e {
                        Ok(v) => v,
                        Err(r) => trap!(r),
                    }
                };
            }
            match op {
                Opcode::Stop | Opcode::JumpDest => {}
                Opcode::Add => pushed.push(a.wrapping_add(b)),
                Opcode::Mul => pushed.push(a.wrapping_mul(b)),
                Opcode::Sub => pushed.push(a.wrapping_sub(b)),
                Opcode::Div => pushed.push(a.evm_div(b)),
                Opcode::Mod => pushed.push(a.evm_mod(b)),
                Opcode::Lt => pushed.push(Word256::from_bool(a < b)),
                Opcode::Gt => pushed.push(Word256::from_bool(a > b)),
                Opcode::Eq => pushed.push(Word256::from_bool(a == b)),
                Opcode::IsZero => pushed.push(Word256::from_bool(a.is_zero())),
                Opcode::And => pushed.push(a.bitand(b)),
                Opcode::Or => pushed.push(a.bitor(b)),
                Opcode::Not => pushed.push(a.bitnot()),
                Opcode::Sha3 => {
                    let (o, l, data) = mem_try!(mem.read(a, b));
                    let h = keccak256(&data).to_word();
                    if l == 64 {
                        let idx = Word256::from_be_slice(&data[..32]);
                        let slot = Word256::from_be_slice(&data[32..]);
                        self.state.preimages.insert(h, (idx, slot));
                    }
                    aux = Some(Aux::Memory { offset: o, len: l });
                    pushed.push(h);
                }
                Opcode::Origin => pushed.push(self.origin.to_word()),
                Opcode::Caller => pushed.push(caller.to_word()),
                Opcode::CallDataLoad => {
                    let mut word = [0u8; 32];
                    if let Some(off) = a.to_usize() {
                        for (i, w) in word.iter_mut().enumerate() {
                            if let Some(b) = off.checked_add(i).and_then(|j| calldata.get(j)) {
                                *w = *b;
                            }
                        }
                    }
                    pushed.push(Word256::from_be_bytes(word));
                }
                Opcode::CallDataSize => pushed.push(Word256::from_u64(calldata.len() as u64)),
                Opcode::Pop => {}
                Opcode::MLoad => {
                    let (o, l, data) = mem_try!(mem.read(a, Word256::from_u64(32)));
                    aux = Some(Aux::Memory { offset: o, len: l });
                    pushed.push(Word256::from_be_slice(&data));
                }
                Opcode::MStore => {
                    let (o, l) = mem_try!(mem.range(a, Word256::from_u64(32)));
                    mem.bytes[o..o + 32].copy_from_slice(&b.to_be_bytes());
                    aux = Some(Aux::Memory { offset: o, len: l });
                }
                Opcode::SLoad => {
                    let v = self.state.sload(&contract, &a);
                    aux = Some(Aux::Storage { key: a, value: v });
                    pushed.push(v);
                }
                Opcode::SStore => {
                    if is_static {
                        trap!(TrapReason::StaticWrite);
                    }
                    let old = self.state.sload(&contract, &a);
                    self.journal.push((contract, a, old));
                    self.state.sstore(contract, a, b);
                    aux = Some(Aux::Storage { key: a, value: b });
                }
                Opcode::Jump | Opcode::JumpI => {
                    let taken = op == Opcode::Jump || !b.is_zero();
                    if taken {
                        match a.to_usize() {
                            Some(t) if valid_dest.get(t).copied().unwrap_or(false) => next = t,
                            _ => trap!(TrapReason::InvalidJumpDest(a.to_usize().unwrap_or(usize::MAX))),
                        }
                    }
                    aux = Some(Aux::Jump { next_pc: next });
                }
                Opcode::Pc => pushed.push(Word256::from_u64(pc as u64)),
                Opcode::Push(n) => {
                    let n = n as usize;
                    let start = (pc + 1).min(code.len());
                    let end = (pc + 1 + n).min(code.len());
                    let mut imm = code[start..end].to_vec();
                    imm.resize(n, 0);
                    pushed.push(Word256::from_be_slice(&imm));
                }
                Opcode::Dup(n) => {
                    let n = n as usize;
                    let mut after = vec![popped[n - 1]];
                    after.extend(popped.iter().copied());
                    pushed.extend(after.into_iter().rev());
                }
                Opcode::Swap(n) => {
                    let mut after = popped.clone();
                    after.swap(0, n as usize);
                    pushed.extend(after.into_iter().rev());
                }
                Opcode::Call | Opcode::StaticCall | Opcode::CallCode | Opcode::DelegateCall => {
                    let with_value = matches!(op, Opcode::Call | Opcode::CallCode);
                    let callee = Address::from_word(popped[1]);
                    let rest = if with_value { &popped[3..] } else { &popped[2..] };
                    if with_value && !popped[2].is_zero() {
                        trap!(TrapReason::NonZeroValue);
                    }
                    let (ao, al, args) = mem_try!(mem.read(rest[0], rest[1]));
                    let (ro, rl) = mem_try!(mem.range(rest[2], rest[3]));
                    let event = TraceEvent {
                        depth,
                        pc,
                        op,
                        contract,
                        popped,
                        pushed: Vec::new(),
                        aux: Some(Aux::Call { callee, args_offset: ao, args_len: al, ret_offset: ro, ret_len: rl }),
                    };
                    self.path.record(&event);
                    let idx = self.trace.len();
                    self.trace.push(event);
                    if matches!(op, Opcode::CallCode | Opcode::DelegateCall) {
                        trap!(TrapReason::UnsupportedCall(op.to_string()));
                    }
                    if depth + 1 > self.cfg.max_call_depth {
                        return Err(TrapReason::CallDepthExceeded);
                    }
                    let checkpoint = self.journal.len();
                    let sub_static = is_static || op == Opcode::StaticCall;
                    let (success, out) = match self.run_frame(depth + 1, callee, contract, args, sub_static)? {
                        Halt::Success(out) => (true, out),
                        Halt::Revert(out) => {
                            self.rollback(checkpoint);
                            (false, out)
                        }
                        Halt::Trap(_) => {
                            self.rollback(checkpoint);
                            (false, Vec::new())
                        }
                    };
                    let n = rl.min(out.len());
                    mem.bytes[ro..ro + n].copy_from_slice(&out[..n]);
                    let flag = Word256::from_bool(success);
                    self.trace[idx].pushed = vec![flag];
                    stack.push(flag);
                    pc = next;
                    continue;
                }
                Opcode::Return | Opcode::Revert => {
                    let (o, l, data) = mem_try!(mem.read(a, b));
                    aux = Some(Aux::Memory { offset: o, len: l });
                    let ev = TraceEvent { depth, pc, op, contract, popped, pushed, aux };
                    self.trace.push(ev);
                    return Ok(if op == Opcode::Return { Halt::Success(data) } else { Halt::Revert(data) });
                }
            }
            stack.extend(pushed.iter().copied());
            let ev = TraceEvent { depth, pc, op, contract, popped, pushed, aux };
            if op == Opcode::JumpI {
                self.path.record(&ev);
            }
            self.trace.push(ev);
            if op == Opcode::Stop {
                return Ok(Halt::Success(Vec::new()));
            }
            pc = next;
        }
    }
}
