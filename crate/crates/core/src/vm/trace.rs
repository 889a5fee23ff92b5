//! Line-oriented trace dump.
//!
//! ```text
//! # tct-trace v1
//! # tx origin=<addr> to=<addr> selector=<0x8 hex> args=<w,w,...|->
//! # status committed            (or: # status reverted <reason json>)
//! <depth>\t<pc>\t<OPCODE>\t<contract>\t<popped>\t<pushed>\t<aux>
//! ```
//!
//! `popped` is top of stack first and `pushed` is in push order; both are
//! comma-separated hex words or `-`. `aux` is one of `-`, `storage:KEY:VALUE`,
//! `call:CALLEE:ARGS_OFF:ARGS_LEN:RET_OFF:RET_LEN`, `jump:NEXT_PC`,
//! `mem:OFF:LEN`.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Aux, Status, Transaction, TraceEvent, TrapReason};
use crate::opcode::Opcode;
use crate::words::Word256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("trace line {line}: {msg}")]
pub struct TraceParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDump {
    pub tx: Transaction,
    pub status: Status,
    pub events: Vec<TraceEvent>,
}

fn words(ws: &[Word256]) -> String {
    if ws.is_empty() {
        return "-".to_string();
    }
    ws.iter().map(|w| w.to_hex()).collect::<Vec<_>>().join(",")
}

pub fn write_trace_dump(tx: &Transaction, status: &Status, events: &[TraceEvent]) -> String {
    let mut s = String::from("# tct-trace v1\n");
    let _ = writeln!(s, "# tx origin={} to={} selector={} args={}", tx.origin, tx.to, tx.selector, words(&tx.args));
    match status {
        Status::Committed => s.push_str("# status committed\n"),
        Status::Reverted(r) => {
            let _ = writeln!(s, "# status reverted {}", serde_json::to_string(r).unwrap_or_default());
        }
    }
    for e in events {
        let aux = match &e.aux {
            None => "-".to_string(),
            Some(Aux::Storage { key, value }) => format!("storage:{}:{}", key.to_hex(), value.to_hex()),
            Some(Aux::Call { callee, args_offset, args_len, ret_offset, ret_len }) => {
                format!("call:{callee}:{args_offset}:{args_len}:{ret_offset}:{ret_len}")
            }
            Some(Aux::Jump { next_pc }) => format!("jump:{next_pc}"),
            Some(Aux::Memory { offset, len }) => format!("mem:{offset}:{len}"),
        };
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.depth,
            e.pc,
            e.op,
            e.contract,
            words(&e.popped),
            words(&e.pushed),
            aux
        );
    }
    s
}

pub fn parse_trace_dump(text: &str) -> Result<TraceDump, TraceParseError> {
    let mut tx = None;
    let mut status = None;
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| TraceParseError { line, msg };
        let l = raw.trim_end();
        if l.is_empty() {
            continue;
        }
        if let Some(h) = l.strip_prefix("# tx ") {
            tx = Some(parse_tx(h).map_err(err)?);
            continue;
        }
        if let Some(st) = l.strip_prefix("# status ") {
            status = Some(if st == "committed" {
                Status::Committed
            } else if let Some(r) = st.strip_prefix("reverted ") {
                let reason: TrapReason = serde_json::from_str(r).map_err(|e| err(e.to_string()))?;
                Status::Reverted(reason)
            } else {
                return Err(err(format!("bad status `{st}`")));
            });
            continue;
        }
        if l.starts_with('#') {
            continue;
        }
        events.push(parse_event(l).map_err(err)?);
    }
    let tx = tx.ok_or(TraceParseError { line: 0, msg: "missing `# tx` header".into() })?;
    let status = status.unwrap_or(Status::Committed);
    Ok(TraceDump { tx, status, events })
}

fn parse_words(s: &str) -> Result<Vec<Word256>, String> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',').map(|w| w.parse::<Word256>().map_err(|e| e.to_string())).collect()
}

fn num(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("bad number `{s}`"))
}

fn parse_tx(h: &str) -> Result<Transaction, String> {
    let mut origin = None;
    let mut to = None;
    let mut selector = None;
    let mut args = Vec::new();
    for field in h.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| format!("bad field `{field}`"))?;
        match k {
            "origin" => origin = Some(v.parse().map_err(|e| format!("{e}"))?),
            "to" => to = Some(v.parse().map_err(|e| format!("{e}"))?),
            "selector" => selector = Some(v.parse().map_err(|e| format!("{e}"))?),
            "args" => args = parse_words(v)?,
            _ => return Err(format!("unknown field `{k}`")),
        }
    }
    Ok(Transaction {
        origin: origin.ok_or("missing origin")?,
        to: to.ok_or("missing to")?,
        selector: selector.ok_or("missing selector")?,
        args,
        theorem_hash: None,
    })
}

fn parse_event(l: &str) -> Result<TraceEvent, String> {
    let cols: Vec<&str> = l.split('\t').collect();
    if cols.len() != 7 {
        return Err(format!("expected 7 tab-separated columns, found {}", cols.len()));
    }
    let op: Opcode = cols[2].parse().map_err(|_| format!("unknown opcode `{}`", cols[2]))?;
    let aux = if cols[6] == "-" {
        None
    } else {
        let parts: Vec<&str> = cols[6].split(':').collect();
        Some(match parts.as_slice() {
            ["storage", k, v] => Aux::Storage {
                key: k.parse().map_err(|e| format!("{e}"))?,
                value: v.parse().map_err(|e| format!("{e}"))?,
            },
            ["call", c, ao, al, ro, rl] => Aux::Call {
                callee: c.parse().map_err(|e| format!("{e}"))?,
                args_offset: num(ao)?,
                args_len: num(al)?,
                ret_offset: num(ro)?,
                ret_len: num(rl)?,
            },
            ["jump", n] => Aux::Jump { next_pc: num(n)? },
            ["mem", o, n] => Aux::Memory { offset: num(o)?, len: num(n)? },
            _ => return Err(format!("bad aux `{}`", cols[6])),
        })
    };
    Ok(TraceEvent {
        depth: num(cols[0])?,
        pc: num(cols[1])?,
        op,
        contract: cols[3].parse().map_err(|e| format!("{e}"))?,
        popped: parse_words(cols[4])?,
        pushed: parse_words(cols[5])?,
        aux,
    })
}
