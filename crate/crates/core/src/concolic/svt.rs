//! Symbolic value trees.

use std::fmt::Write as _;

use crate::words::Word256;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnvVar {
    /// `tx.origin`; also `msg.sender` of the entry frame.
    Origin,
    /// Address of the contract the transaction enters.
    EntryContract,
}

impl EnvVar {
    pub fn vc_name(self) -> &'static str {
        match self {
            EnvVar::Origin => "tx_origin",
            EnvVar::EntryContract => "entry_contract",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Int,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvtOp {
    EvmAdd,
    EvmSub,
    EvmMul,
    EvmDiv,
    EvmMod,
    Lt,
    Gt,
    Eq,
    IsZero,
    Not,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Const,
    Param { index: usize, name: String },
    Env(EnvVar),
    /// Result of an SLOAD, already bound to temp `temp`.
    StorageRead { temp: u32 },
    Op(SvtOp, Vec<NodeId>),
    /// Hash over consecutive 32-byte memory words.
    Sha3(Vec<NodeId>),
    /// Bytes `lo..=hi` of the child word (big-endian byte numbering).
    Partial32B { lo: u8, hi: u8, child: NodeId },
    /// A value with no symbolic description (unaligned calldata, mixed memory).
    Opaque(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    /// Concrete value observed on the traced run.
    pub value: Word256,
    pub sort: Sort,
    /// Known to hold a 20-byte address.
    pub address: bool,
}

/// Append-only node arena; children always precede parents.
#[derive(Debug, Clone, Default)]
pub struct Svt {
    nodes: Vec<Node>,
}

impl Svt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: Word256) -> NodeId {
        self.add(Node { kind: NodeKind::Const, value, sort: Sort::Int, address: false })
    }

    pub fn get(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_const(&self, id: NodeId) -> bool {
        self.nodes[id].kind == NodeKind::Const
    }

    /// Tree rendering for diagnostics.
    pub fn render(&self, id: NodeId) -> String {
        let mut s = String::new();
        self.render_into(id, &mut s);
        s
    }

    fn render_into(&self, id: NodeId, s: &mut String) {
        let n = &self.nodes[id];
        match &n.kind {
            NodeKind::Const => {
                let _ = write!(s, "Const({})", n.value);
            }
            NodeKind::Param { name, .. } => {
                let _ = write!(s, "Param({name})");
            }
            NodeKind::Env(e) => {
                let _ = write!(s, "Env({})", e.vc_name());
            }
            NodeKind::StorageRead { temp } => {
                let _ = write!(s, "StorageRead(tmp{temp})");
            }
            NodeKind::Op(op, kids) => {
                let _ = write!(s, "{op:?}(");
                self.render_list(kids, s);
                s.push(')');
            }
            NodeKind::Sha3(kids) => {
                s.push_str("Sha3(");
                self.render_list(kids, s);
                s.push(')');
            }
            NodeKind::Partial32B { lo, hi, child } => {
                let _ = write!(s, "Partial32B(({lo}, {hi}), ");
                self.render_into(*child, s);
                s.push(')');
            }
            NodeKind::Opaque(what) => {
                let _ = write!(s, "Opaque({what})");
            }
        }
    }

    fn render_list(&self, kids: &[NodeId], s: &mut String) {
        for (i, k) in kids.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            self.render_into(*k, s);
        }
    }
}
