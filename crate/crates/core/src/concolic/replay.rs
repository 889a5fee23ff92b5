use std::collections::{BTreeMap, HashMap};

use super::svt::{EnvVar, Node, NodeId, NodeKind, Sort, Svt, SvtOp};
use super::{CmpOp, Expr, Func, Location, ReplayError, StraightLine, Stmt, Target, TempType, Touched};
use crate::asm::{AbiType, ContractManifest, ManifestRegistry, StorageKind};
use crate::opcode::Opcode;
use crate::vm::{Aux, TraceEvent, Transaction};
use crate::words::{Address, Selector, Word256};

/// Replays `trace` (produced by executing `tx`) into straight-line code.
pub fn replay(trace: &[TraceEvent], manifests: &ManifestRegistry, tx: &Transaction) -> Result<StraightLine, ReplayError> {
    let entry = manifests.get(&tx.to).ok_or(ReplayError::NoManifest(tx.to))?;
    let func = entry
        .function_by_selector(tx.selector)
        .ok_or_else(|| ReplayError::UnknownFunction { class: entry.name.clone(), selector: tx.selector })?;
    let params: Vec<(String, AbiType)> = func.params.iter().map(|p| (p.name.clone(), p.ty)).collect();
    let mut m = Machine {
        manifests,
        tx,
        svt: Svt::new(),
        frames: Vec::new(),
        stmts: Vec::new(),
        temps: Vec::new(),
        memo: HashMap::new(),
        param_nodes: HashMap::new(),
        env_nodes: HashMap::new(),
        params,
        touched: Vec::new(),
    };
    let entry_node = m.env(EnvVar::EntryContract);
    let origin_node = m.env(EnvVar::Origin);
    m.frames.push(Frame::new(tx.to, entry_node, origin_node, Calldata::Entry));
    m.touched.push(Touched { class: entry.name.clone(), address: tx.to, reference: Expr::Env(EnvVar::EntryContract) });
    for ev in trace {
        m.step(ev)?;
    }
    while m.frames.len() > 1 {
        m.exit_frame()?;
    }
    let before = m.stmts.len();
    m.stmts.retain(|s| *s != Stmt::Assume(Expr::Bool(true)));
    let trivial_removed = before - m.stmts.len();
    Ok(StraightLine {
        stmts: m.stmts,
        temps: m.temps,
        entry: tx.to,
        entry_class: entry.name.clone(),
        function: func.name.clone(),
        selector: tx.selector,
        params: m.params,
        touched: m.touched,
        trivial_removed,
    })
}

enum Calldata {
    Entry,
    /// Caller memory cells overlapping the argument range, keyed relative to
    /// the range start. `None` marks a cell with unknown contents.
    Region { cells: BTreeMap<isize, Option<NodeId>>, len: usize },
}

struct Pending {
    flag: Option<Word256>,
    ret_offset: usize,
    ret_len: usize,
    mark: usize,
}

struct Frame {
    contract: Address,
    contract_node: NodeId,
    caller_node: NodeId,
    stack: Vec<NodeId>,
    /// 32-byte cells by start offset; `None` is a cell with unknown contents.
    memory: BTreeMap<usize, Option<NodeId>>,
    calldata: Calldata,
    returned: Vec<(usize, Option<NodeId>)>,
    returned_len: usize,
    pending: Option<Pending>,
}

impl Frame {
    fn new(contract: Address, contract_node: NodeId, caller_node: NodeId, calldata: Calldata) -> Frame {
        Frame {
            contract,
            contract_node,
            caller_node,
            stack: Vec::new(),
            memory: BTreeMap::new(),
            calldata,
            returned: Vec::new(),
            returned_len: 0,
            pending: None,
        }
    }

    fn mem_write(&mut self, offset: usize, cell: Option<NodeId>) {
        let lo = offset.saturating_sub(31);
        let stale: Vec<usize> = self.memory.range(lo..offset + 32).map(|(k, _)| *k).collect();
        for k in stale {
            self.memory.remove(&k);
        }
        self.memory.insert(offset, cell);
    }

    fn mem_clear(&mut self, offset: usize, len: usize) {
        if len == 0 {
            return;
        }
        let lo = offset.saturating_sub(31);
        let stale: Vec<usize> = self.memory.range(lo..offset + len).map(|(k, _)| *k).collect();
        for k in stale {
            self.memory.remove(&k);
        }
    }

    /// Exact cell at `offset`, `Err(())` if only partially covered, `Ok(None)` if untouched.
    fn mem_cell(&self, offset: usize) -> Result<Option<NodeId>, ()> {
        let lo = offset.saturating_sub(31);
        let mut hit = None;
        for (k, c) in self.memory.range(lo..offset + 32) {
            if *k == offset && c.is_some() {
                hit = *c;
            } else {
                return Err(());
            }
        }
        Ok(hit)
    }
}

struct Machine<'a> {
    manifests: &'a ManifestRegistry,
    tx: &'a Transaction,
    svt: Svt,
    frames: Vec<Frame>,
    stmts: Vec<Stmt>,
    temps: Vec<TempType>,
    memo: HashMap<NodeId, Expr>,
    param_nodes: HashMap<usize, NodeId>,
    env_nodes: HashMap<EnvVar, NodeId>,
    params: Vec<(String, AbiType)>,
    touched: Vec<Touched>,
}

fn address_mask() -> Word256 {
    Word256::pow2(160).wrapping_sub(Word256::ONE)
}

impl<'a> Machine<'a> {
    fn top(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("entry frame")
    }

    fn env(&mut self, e: EnvVar) -> NodeId {
        if let Some(id) = self.env_nodes.get(&e) {
            return *id;
        }
        let value = match e {
            EnvVar::Origin => self.tx.origin.to_word(),
            EnvVar::EntryContract => self.tx.to.to_word(),
        };
        let id = self.svt.add(Node { kind: NodeKind::Env(e), value, sort: Sort::Int, address: true });
        self.env_nodes.insert(e, id);
        id
    }

    fn opaque(&mut self, what: &str, value: Word256) -> NodeId {
        self.svt.add(Node { kind: NodeKind::Opaque(what.to_string()), value, sort: Sort::Int, address: false })
    }

    fn new_temp(&mut self, ty: TempType) -> u32 {
        self.temps.push(ty);
        self.temps.len() as u32
    }

    fn mismatch(ev: &TraceEvent, detail: String) -> ReplayError {
        ReplayError::StackMismatch { depth: ev.depth, pc: ev.pc, detail }
    }

    fn step(&mut self, ev: &TraceEvent) -> Result<(), ReplayError> {
        while self.frames.len() > ev.depth + 1 {
            self.exit_frame()?;
        }
        if self.frames.len() != ev.depth + 1 {
            return Err(Self::mismatch(ev, "event deeper than the active call stack".into()));
        }
        if self.top().contract != ev.contract {
            return Err(Self::mismatch(ev, format!("event contract {} but frame contract {}", ev.contract, self.top().contract)));
        }
        let n = ev.popped.len();
        let height = self.top().stack.len();
        if height < n {
            return Err(Self::mismatch(ev, format!("{} pops {n} from a symbolic stack of {height}", ev.op)));
        }
        let mut args = Vec::with_capacity(n);
        for (i, want) in ev.popped.iter().enumerate() {
            let id = self.top().stack[height - 1 - i];
            let got = self.svt.get(id).value;
            if got != *want {
                return Err(Self::mismatch(
                    ev,
                    format!("operand {i} of {}: symbolic {} is {got}, trace has {want}", ev.op, self.svt.render(id)),
                ));
            }
            args.push(id);
        }
        self.top().stack.truncate(height - n);

        let pushed = self.exec(ev, &args)?;
        if ev.op.is_call() {
            return Ok(());
        }
        if pushed.len() != ev.pushed.len() {
            return Err(Self::mismatch(ev, format!("{} pushes {} symbolic values, trace has {}", ev.op, pushed.len(), ev.pushed.len())));
        }
        for (id, want) in pushed.iter().zip(&ev.pushed) {
            let got = self.svt.get(*id).value;
            if got != *want {
                return Err(Self::mismatch(ev, format!("{} result {} is {got}, trace has {want}", ev.op, self.svt.render(*id))));
            }
        }
        self.top().stack.extend(pushed);
        Ok(())
    }

    fn result(&mut self, ev: &TraceEvent, kind: NodeKind, sort: Sort, address: bool) -> NodeId {
        let value = ev.pushed.first().copied().unwrap_or_default();
        self.svt.add(Node { kind, value, sort, address })
    }

    fn exec(&mut self, ev: &TraceEvent, a: &[NodeId]) -> Result<Vec<NodeId>, ReplayError> {
        let value = ev.pushed.first().copied().unwrap_or_default();
        Ok(match ev.op {
            Opcode::Stop | Opcode::JumpDest | Opcode::Pop | Opcode::Jump => vec![],
            Opcode::Push(_) | Opcode::Pc | Opcode::CallDataSize => vec![self.svt.constant(value)],
            Opcode::Dup(n) => {
                let n = n as usize;
                let mut after = vec![a[n - 1]];
                after.extend_from_slice(a);
                after.into_iter().rev().collect()
            }
            Opcode::Swap(n) => {
                let mut after = a.to_vec();
                after.swap(0, n as usize);
                after.into_iter().rev().collect()
            }
            Opcode::Origin => vec![self.env(EnvVar::Origin)],
            Opcode::Caller => {
                let c = self.top().caller_node;
                vec![c]
            }
            Opcode::Add => vec![self.binop(ev, SvtOp::EvmAdd, a)],
            Opcode::Sub => vec![self.binop(ev, SvtOp::EvmSub, a)],
            Opcode::Mul => vec![self.binop(ev, SvtOp::EvmMul, a)],
            Opcode::Div | Opcode::Mod => vec![self.division(ev, a)?],
            Opcode::Lt => vec![self.binop(ev, SvtOp::Lt, a)],
            Opcode::Gt => vec![self.binop(ev, SvtOp::Gt, a)],
            Opcode::Eq => vec![self.binop(ev, SvtOp::Eq, a)],
            Opcode::Or => vec![self.binop(ev, SvtOp::Or, a)],
            Opcode::IsZero => vec![self.unop(ev, SvtOp::IsZero, a[0])],
            Opcode::Not => vec![self.unop(ev, SvtOp::Not, a[0])],
            Opcode::And => vec![self.and(ev, a)],
            Opcode::Sha3 => vec![self.sha3(ev, a)?],
            Opcode::CallDataLoad => vec![self.calldataload(ev, a[0])?],
            Opcode::MLoad => {
                let off = self.const_offset(ev, a[0])?;
                let cell = self.top().mem_cell(off);
                vec![match cell {
                    Ok(Some(id)) => id,
                    Ok(None) => self.svt.constant(Word256::ZERO),
                    Err(()) => self.opaque("memory", value),
                }]
            }
            Opcode::MStore => {
                let off = self.const_offset(ev, a[0])?;
                self.top().mem_write(off, Some(a[1]));
                vec![]
            }
            Opcode::SLoad => {
                let (loc, ty) = self.location(a[0])?;
                let t = self.new_temp(ty);
                self.stmts.push(Stmt::Assign { target: Target::Temp(t), expr: Expr::Read(Box::new(loc)), value });
                vec![self.result(ev, NodeKind::StorageRead { temp: t }, Sort::Int, ty == TempType::Address)]
            }
            Opcode::SStore => {
                let (loc, _) = self.location(a[0])?;
                let e = self.int_atom(a[1])?;
                self.stmts.push(Stmt::Assign { target: Target::Storage(loc), expr: e, value: ev.popped[1] });
                vec![]
            }
            Opcode::JumpI => {
                let cond = a[1];
                let taken = !ev.popped[1].is_zero();
                let stmt = if self.svt.is_const(cond) {
                    Stmt::Assume(Expr::Bool(true))
                } else {
                    let c = self.atom(cond)?;
                    let bool_sorted = self.svt.get(cond).sort == Sort::Bool;
                    Stmt::Assume(match (bool_sorted, taken) {
                        (true, true) => c,
                        (true, false) => Expr::Not(Box::new(c)),
                        (false, true) => Expr::Cmp(CmpOp::Ne, Box::new(c), Box::new(Expr::Word(Word256::ZERO))),
                        (false, false) => Expr::Cmp(CmpOp::Eq, Box::new(c), Box::new(Expr::Word(Word256::ZERO))),
                    })
                };
                self.stmts.push(stmt);
                vec![]
            }
            Opcode::Call | Opcode::StaticCall => {
                self.enter_call(ev, a)?;
                vec![]
            }
            // The VM records these and then traps the calling frame.
            Opcode::CallCode | Opcode::DelegateCall => vec![],
            Opcode::Return | Opcode::Revert => {
                let off = self.const_offset(ev, a[0])?;
                let len = self.const_offset(ev, a[1])?;
                let frame = self.top();
                frame.returned = (0..len.div_ceil(32))
                    .map(|k| {
                        let cell = frame.mem_cell(off + 32 * k).ok().flatten();
                        (32 * k, cell)
                    })
                    .collect();
                frame.returned_len = len;
                vec![]
            }
        })
    }

    fn const_offset(&self, ev: &TraceEvent, id: NodeId) -> Result<usize, ReplayError> {
        if !self.svt.is_const(id) {
            return Err(ReplayError::Unsupported(format!(
                "{} at pc {} with symbolic offset {}",
                ev.op,
                ev.pc,
                self.svt.render(id)
            )));
        }
        self.svt
            .get(id)
            .value
            .to_usize()
            .ok_or_else(|| ReplayError::Unsupported(format!("{} offset out of range", ev.op)))
    }

    fn binop(&mut self, ev: &TraceEvent, op: SvtOp, a: &[NodeId]) -> NodeId {
        if self.svt.is_const(a[0]) && self.svt.is_const(a[1]) {
            let v = ev.pushed[0];
            return self.svt.constant(v);
        }
        let sort = match op {
            SvtOp::Lt | SvtOp::Gt | SvtOp::Eq => Sort::Bool,
            _ => Sort::Int,
        };
        self.result(ev, NodeKind::Op(op, vec![a[0], a[1]]), sort, false)
    }

    fn unop(&mut self, ev: &TraceEvent, op: SvtOp, x: NodeId) -> NodeId {
        if self.svt.is_const(x) {
            return self.svt.constant(ev.pushed[0]);
        }
        let sort = if op == SvtOp::IsZero { Sort::Bool } else { Sort::Int };
        self.result(ev, NodeKind::Op(op, vec![x]), sort, false)
    }

    fn and(&mut self, ev: &TraceEvent, a: &[NodeId]) -> NodeId {
        let mask = address_mask();
        let masked = if self.svt.is_const(a[1]) && self.svt.get(a[1]).value == mask {
            Some(a[0])
        } else if self.svt.is_const(a[0]) && self.svt.get(a[0]).value == mask {
            Some(a[1])
        } else {
            None
        };
        match masked {
            Some(x) if !self.svt.is_const(x) => {
                self.result(ev, NodeKind::Partial32B { lo: 12, hi: 31, child: x }, Sort::Int, true)
            }
            _ => self.binop(ev, SvtOp::And, a),
        }
    }

    fn division(&mut self, ev: &TraceEvent, a: &[NodeId]) -> Result<NodeId, ReplayError> {
        let op = if ev.op == Opcode::Div { SvtOp::EvmDiv } else { SvtOp::EvmMod };
        let (x, d) = (a[0], a[1]);
        // The selector word divided down to its 4-byte selector is a constant.
        if op == SvtOp::EvmDiv
            && matches!(self.svt.get(x).kind, NodeKind::Opaque(_))
            && self.svt.is_const(d)
            && self.svt.get(d).value == Word256::pow2(224)
        {
            return Ok(self.svt.constant(ev.pushed[0]));
        }
        if self.svt.is_const(x) && self.svt.is_const(d) {
            return Ok(self.svt.constant(ev.pushed[0]));
        }
        if !self.svt.is_const(d) {
            let e = self.int_atom(d)?;
            let zero = self.svt.get(d).value.is_zero();
            let cmp = if zero { CmpOp::Eq } else { CmpOp::Ne };
            self.stmts.push(Stmt::Assume(Expr::Cmp(cmp, Box::new(e), Box::new(Expr::Word(Word256::ZERO)))));
            if zero {
                return Ok(self.svt.constant(Word256::ZERO));
            }
        }
        Ok(self.result(ev, NodeKind::Op(op, vec![x, d]), Sort::Int, false))
    }

    fn sha3(&mut self, ev: &TraceEvent, a: &[NodeId]) -> Result<NodeId, ReplayError> {
        let value = ev.pushed[0];
        let (Ok(off), Ok(len)) = (self.const_offset(ev, a[0]), self.const_offset(ev, a[1])) else {
            return Ok(self.opaque("hash over symbolic range", value));
        };
        if len % 32 != 0 || len == 0 {
            return Ok(self.opaque("hash over unaligned range", value));
        }
        let mut kids = Vec::new();
        for k in 0..len / 32 {
            let cell = self.top().mem_cell(off + 32 * k);
            kids.push(match cell {
                Ok(Some(id)) => id,
                Ok(None) => self.svt.constant(Word256::ZERO),
                Err(()) => self.opaque("memory", Word256::ZERO),
            });
        }
        Ok(self.result(ev, NodeKind::Sha3(kids), Sort::Int, false))
    }

    fn calldataload(&mut self, ev: &TraceEvent, off: NodeId) -> Result<NodeId, ReplayError> {
        let value = ev.pushed[0];
        let off = self.const_offset(ev, off)?;
        let depth = self.frames.len();
        let frame = &self.frames[depth - 1];
        let node = match &frame.calldata {
            Calldata::Entry => {
                let nargs = self.params.len();
                if off >= 4 && (off - 4) % 32 == 0 && (off - 4) / 32 < nargs {
                    let i = (off - 4) / 32;
                    return Ok(self.param(i, value));
                }
                if off >= 4 + 32 * self.tx.args.len() {
                    return Ok(self.svt.constant(Word256::ZERO));
                }
                return Ok(self.opaque("calldata word", value));
            }
            Calldata::Region { cells, len } => {
                let rel = off as isize;
                if off >= *len {
                    None
                } else {
                    let mut exact = None;
                    let mut overlap = false;
                    for (k, c) in cells.range(rel - 31..rel + 32) {
                        if *k == rel && c.is_some() && off + 32 <= *len {
                            exact = *c;
                        } else {
                            overlap = true;
                        }
                    }
                    match (exact, overlap) {
                        (Some(id), false) => Some(Ok(id)),
                        (_, true) => Some(Err(())),
                        (None, false) => None,
                    }
                }
            }
        };
        Ok(match node {
            Some(Ok(id)) => id,
            Some(Err(())) => self.opaque("calldata word", value),
            None => self.svt.constant(Word256::ZERO),
        })
    }

    fn param(&mut self, i: usize, value: Word256) -> NodeId {
        if let Some(id) = self.param_nodes.get(&i) {
            return *id;
        }
        let (name, ty) = self.params[i].clone();
        let id = self.svt.add(Node {
            kind: NodeKind::Param { index: i, name },
            value,
            sort: Sort::Int,
            address: ty == AbiType::Address,
        });
        self.param_nodes.insert(i, id);
        id
    }

    fn manifest_of(&self, addr: &Address) -> Result<&'a ContractManifest, ReplayError> {
        self.manifests.get(addr).ok_or(ReplayError::NoManifest(*addr))
    }

    fn location(&mut self, key: NodeId) -> Result<(Location, TempType), ReplayError> {
        let (addr, contract_node) = {
            let f = self.frames.last().expect("frame");
            (f.contract, f.contract_node)
        };
        let m = self.manifest_of(&addr)?;
        let k = self.svt.get(key).clone();
        let (var, index) = match &k.kind {
            NodeKind::Const => {
                let var = m
                    .storage_by_slot(k.value)
                    .filter(|v| v.kind == StorageKind::Scalar)
                    .ok_or_else(|| ReplayError::UnknownStorageSlot { class: m.name.clone(), slot: k.value })?;
                (var, None)
            }
            NodeKind::Sha3(kids) if kids.len() == 2 && self.svt.is_const(kids[1]) => {
                let slot = self.svt.get(kids[1]).value;
                let var = m
                    .storage_by_slot(slot)
                    .filter(|v| v.kind == StorageKind::Mapping)
                    .ok_or_else(|| ReplayError::UnknownStorageSlot { class: m.name.clone(), slot })?;
                (var, Some(kids[0]))
            }
            _ => return Err(ReplayError::OpaqueKey(self.svt.render(key))),
        };
        let contract = self.atom(contract_node)?;
        let index = match index {
            Some(i) => Some(self.int_atom(i)?),
            None => None,
        };
        let ty = match var.value_type {
            AbiType::Address => TempType::Address,
            AbiType::Uint256 => TempType::Uint256,
        };
        Ok((Location { class: m.name.clone(), var: var.name.clone(), contract, index }, ty))
    }

    fn int_atom(&mut self, id: NodeId) -> Result<Expr, ReplayError> {
        let e = self.atom(id)?;
        Ok(if self.svt.get(id).sort == Sort::Bool { Expr::BoolToInt(Box::new(e)) } else { e })
    }

    /// Flattens a node into an atom, emitting temps for compound subtrees in post-order.
    fn atom(&mut self, id: NodeId) -> Result<Expr, ReplayError> {
        if let Some(e) = self.memo.get(&id) {
            return Ok(e.clone());
        }
        let n = self.svt.get(id).clone();
        let e = match &n.kind {
            NodeKind::Const if n.sort == Sort::Bool => Expr::Bool(!n.value.is_zero()),
            NodeKind::Const => Expr::Word(n.value),
            NodeKind::Param { name, .. } => Expr::Param(name.clone()),
            NodeKind::Env(e) => Expr::Env(*e),
            NodeKind::StorageRead { temp } => Expr::Temp(*temp),
            NodeKind::Partial32B { lo: 12, hi: 31, child } => {
                let c = self.svt.get(*child);
                if !c.address || c.value != n.value {
                    return Err(ReplayError::Unsupported(format!(
                        "masked value {} is not a plain address",
                        self.svt.render(id)
                    )));
                }
                self.atom(*child)?
            }
            NodeKind::Partial32B { .. } => {
                return Err(ReplayError::Unsupported(format!("partial word {}", self.svt.render(id))))
            }
            NodeKind::Sha3(_) => {
                return Err(ReplayError::Unsupported(format!(
                    "hash {} used outside a storage key",
                    self.svt.render(id)
                )))
            }
            NodeKind::Opaque(_) => {
                let t = self.new_temp(TempType::Uint256);
                self.stmts.push(Stmt::Havoc { temp: t, value: n.value });
                Expr::Temp(t)
            }
            NodeKind::Op(op, kids) => {
                let kids = kids.clone();
                let mut args = Vec::new();
                for k in &kids {
                    args.push(self.atom(*k)?);
                }
                let int = |m: &Self, i: usize, e: Expr| -> Expr {
                    if m.svt.get(kids[i]).sort == Sort::Bool {
                        Expr::BoolToInt(Box::new(e))
                    } else {
                        e
                    }
                };
                let mut ints: Vec<Expr> = Vec::new();
                for (i, a) in args.iter().enumerate() {
                    ints.push(int(self, i, a.clone()));
                }
                let call = |f: Func, v: Vec<Expr>| (Expr::Call(f, v), TempType::Uint256);
                let (expr, ty) = match op {
                    SvtOp::EvmAdd => call(Func::EvmAdd, ints),
                    SvtOp::EvmSub => call(Func::EvmSub, ints),
                    SvtOp::EvmMul => call(Func::EvmMul, ints),
                    SvtOp::EvmDiv => call(Func::EvmDiv, ints),
                    SvtOp::EvmMod => call(Func::EvmMod, ints),
                    SvtOp::And => call(Func::EvmAnd, ints),
                    SvtOp::Or => call(Func::EvmOr, ints),
                    SvtOp::Not => call(Func::EvmNot, ints),
                    SvtOp::Lt | SvtOp::Gt => {
                        let c = if *op == SvtOp::Lt { CmpOp::Lt } else { CmpOp::Gt };
                        let mut it = ints.into_iter();
                        let (x, y) = (it.next().unwrap(), it.next().unwrap());
                        (Expr::Cmp(c, Box::new(x), Box::new(y)), TempType::Bool)
                    }
                    SvtOp::Eq => {
                        let both_bool = kids.iter().all(|k| self.svt.get(*k).sort == Sort::Bool);
                        let v = if both_bool { args } else { ints };
                        let mut it = v.into_iter();
                        let (x, y) = (it.next().unwrap(), it.next().unwrap());
                        (Expr::Cmp(CmpOp::Eq, Box::new(x), Box::new(y)), TempType::Bool)
                    }
                    SvtOp::IsZero => {
                        let x = args.into_iter().next().unwrap();
                        if self.svt.get(kids[0]).sort == Sort::Bool {
                            (Expr::Not(Box::new(x)), TempType::Bool)
                        } else {
                            (Expr::Cmp(CmpOp::Eq, Box::new(x), Box::new(Expr::Word(Word256::ZERO))), TempType::Bool)
                        }
                    }
                };
                let t = self.new_temp(ty);
                self.stmts.push(Stmt::Assign { target: Target::Temp(t), expr, value: n.value });
                Expr::Temp(t)
            }
        };
        self.memo.insert(id, e.clone());
        Ok(e)
    }

    fn enter_call(&mut self, ev: &TraceEvent, a: &[NodeId]) -> Result<(), ReplayError> {
        let Some(Aux::Call { callee, args_offset, args_len, ret_offset, ret_len }) = ev.aux.clone() else {
            return Err(Self::mismatch(ev, "call event without call data".into()));
        };
        let addr_node = a[1];
        let caller_node = self.top().contract_node;
        let lo = args_offset as isize;
        let mut cells = BTreeMap::new();
        if args_len > 0 {
            let frame = self.top();
            for (k, c) in frame.memory.range(args_offset.saturating_sub(31)..args_offset + args_len) {
                cells.insert(*k as isize - lo, *c);
            }
        }
        if let Some(m) = self.manifests.get(&callee) {
            if let Some(sel) = selector_in(&cells, &self.svt) {
                if let Some(f) = m.function_by_selector(sel) {
                    let want = 4 + 32 * f.params.len();
                    if args_len != want {
                        return Err(ReplayError::MarshallingMismatch(format!(
                            "{}.{} takes {want} bytes of calldata, call passes {args_len}",
                            m.name, f.name
                        )));
                    }
                }
            }
            let reference = self.atom(addr_node)?;
            if !self.touched.iter().any(|t| t.reference == reference && t.class == m.name) {
                self.touched.push(Touched { class: m.name.clone(), address: callee, reference });
            }
        }
        let mark = self.stmts.len();
        self.top().pending = Some(Pending { flag: ev.pushed.first().copied(), ret_offset, ret_len, mark });
        self.frames.push(Frame::new(callee, addr_node, caller_node, Calldata::Region { cells, len: args_len }));
        Ok(())
    }

    fn exit_frame(&mut self) -> Result<(), ReplayError> {
        let done = self.frames.pop().expect("callee frame");
        let caller = self.top();
        let Some(p) = caller.pending.take() else {
            return Err(ReplayError::StackMismatch { depth: 0, pc: 0, detail: "frame exit without a pending call".into() });
        };
        let Some(flag) = p.flag else {
            return Err(ReplayError::StackMismatch { depth: 0, pc: 0, detail: "call without a recorded result".into() });
        };
        let success = !flag.is_zero();
        if !success && self.stmts[p.mark..].iter().any(|s| s.is_storage_assign()) {
            return Err(ReplayError::RevertedSubcallWrites);
        }
        let n = p.ret_len.min(done.returned_len);
        let caller = self.top();
        caller.mem_clear(p.ret_offset, n);
        for (rel, cell) in &done.returned {
            if rel + 32 <= n {
                caller.memory.insert(p.ret_offset + rel, *cell);
            } else if *rel < n {
                caller.memory.insert(p.ret_offset + rel, None);
            }
        }
        let f = self.svt.constant(flag);
        self.top().stack.push(f);
        Ok(())
    }
}

/// Selector of outgoing calldata when the word ending at byte 4 is a known constant.
fn selector_in(cells: &BTreeMap<isize, Option<NodeId>>, svt: &Svt) -> Option<Selector> {
    let id = (*cells.get(&-28)?)?;
    if !svt.is_const(id) {
        return None;
    }
    let b = svt.get(id).value.to_be_bytes();
    Some(Selector([b[28], b[29], b[30], b[31]]))
}
