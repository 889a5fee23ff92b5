//! Theorems, multi-path merging, theorem hashes and the repository file.
//!
//! # Theorem hash
//!
//! `keccak256(address[20] ++ selector[4] ++ utf8(canonical hypothesis) ++ 0x00
//! ++ path_hash[32] * n)` with the path hashes sorted ascending. The zero byte
//! ends the hypothesis text, which never contains one.
//!
//! # Repository file
//!
//! One line of JSON, a newline, then the raw 32-byte path hashes of every
//! theorem, theorem by theorem in header order and in insertion order within
//! a theorem:
//!
//! ```text
//! {"format":"tct-repo-1","theorems":[{"hash":"0x..","address":"0x..","selector":"0x..","hypothesis":"..","paths":2}]}
//! <64 bytes>
//! ```
//!
//! Storing another path under an existing hypothesis therefore grows the
//! file by 32 bytes plus at most a digit of the path count. Superseded
//! theorem hashes are not stored: the hash of each insertion-order prefix of
//! a theorem's paths is recomputed on load and kept as an alias.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::{eval_hypothesis, parse_spec, EvalContext, ParseError, SpecExpr};
use crate::words::{keccak256, Address, Hash32, Selector};

const FORMAT: &str = "tct-repo-1";

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt repository: {0}")]
    CorruptRepository(String),
    #[error("bad hypothesis `{text}`: {source}")]
    Hypothesis { text: String, source: ParseError },
}

/// `(f, phi, ph)`: entry function, hypothesis and the proven paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem {
    pub address: Address,
    pub selector: Selector,
    /// Canonical hypothesis text.
    pub hypothesis: String,
    /// Distinct, in insertion order.
    pub path_hashes: Vec<Hash32>,
}

pub fn theorem_hash(address: &Address, selector: &Selector, hypothesis: &str, paths: &[Hash32]) -> Hash32 {
    let mut sorted = paths.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut buf = Vec::with_capacity(25 + hypothesis.len() + 32 * sorted.len());
    buf.extend_from_slice(&address.0);
    buf.extend_from_slice(&selector.0);
    buf.extend_from_slice(hypothesis.as_bytes());
    buf.push(0);
    for p in &sorted {
        buf.extend_from_slice(&p.0);
    }
    keccak256(&buf)
}

impl Theorem {
    pub fn new(address: Address, selector: Selector, hypothesis: &SpecExpr, path_hashes: Vec<Hash32>) -> Theorem {
        let mut t = Theorem { address, selector, hypothesis: hypothesis.canonical(), path_hashes: Vec::new() };
        for p in path_hashes {
            t.add_path(p);
        }
        t
    }

    pub fn hash(&self) -> Hash32 {
        theorem_hash(&self.address, &self.selector, &self.hypothesis, &self.path_hashes)
    }

    pub fn contains_path(&self, p: &Hash32) -> bool {
        self.path_hashes.contains(p)
    }

    /// Returns false if the path was already present.
    pub fn add_path(&mut self, p: Hash32) -> bool {
        if self.contains_path(&p) {
            return false;
        }
        self.path_hashes.push(p);
        true
    }

    pub fn parsed_hypothesis(&self) -> Result<SpecExpr, RepoError> {
        parse_spec(&self.hypothesis).map_err(|source| RepoError::Hypothesis { text: self.hypothesis.clone(), source })
    }

    /// Hashes this theorem had before its later paths were added.
    fn prefix_hashes(&self) -> Vec<Hash32> {
        (1..self.path_hashes.len())
            .map(|k| theorem_hash(&self.address, &self.selector, &self.hypothesis, &self.path_hashes[..k]))
            .collect()
    }

    /// Single-theorem exchange form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("theorem serializes")
    }

    pub fn from_json(text: &str) -> Result<Theorem, RepoError> {
        let raw: Theorem = serde_json::from_str(text).map_err(|e| RepoError::CorruptRepository(e.to_string()))?;
        let hyp = raw.parsed_hypothesis()?;
        if raw.path_hashes.is_empty() {
            return Err(RepoError::CorruptRepository("theorem without path hashes".into()));
        }
        Ok(Theorem::new(raw.address, raw.selector, &hyp, raw.path_hashes))
    }
}

/// Result of an applicability query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Applicable {
    /// Theorems whose hypothesis holds, ordered by hash.
    pub hashes: Vec<Hash32>,
    /// Theorems skipped because their hypothesis could not be evaluated.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Repository {
    theorems: BTreeMap<Hash32, Theorem>,
    aliases: BTreeMap<Hash32, Hash32>,
    index: BTreeMap<(Address, Selector), BTreeSet<Hash32>>,
    path: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    theorems: Vec<HeaderEntry>,
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    hash: Hash32,
    address: Address,
    selector: Selector,
    hypothesis: String,
    paths: usize,
}

impl Repository {
    pub fn new() -> Repository {
        Repository::default()
    }

    /// Repository persisted at `path`; an absent file gives an empty one.
    pub fn open(path: &Path) -> Result<Repository, RepoError> {
        let mut r = if path.exists() { Repository::load(path)? } else { Repository::new() };
        r.path = Some(path.to_path_buf());
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Repository, RepoError> {
        let bytes = std::fs::read(path).map_err(|source| RepoError::Io { path: path.display().to_string(), source })?;
        let mut r = Repository::from_bytes(&bytes)?;
        r.path = Some(path.to_path_buf());
        Ok(r)
    }

    pub fn backing_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.theorems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theorems.is_empty()
    }

    /// Current theorems ordered by hash.
    pub fn iter(&self) -> impl Iterator<Item = (&Hash32, &Theorem)> {
        self.theorems.iter()
    }

    /// Maps a current or superseded hash to the current one.
    pub fn resolve(&self, h: &Hash32) -> Option<Hash32> {
        if self.theorems.contains_key(h) {
            return Some(*h);
        }
        self.aliases.get(h).copied()
    }

    pub fn get(&self, h: &Hash32) -> Option<&Theorem> {
        self.resolve(h).and_then(|c| self.theorems.get(&c))
    }

    pub fn aliases(&self) -> &BTreeMap<Hash32, Hash32> {
        &self.aliases
    }

    pub fn for_entry(&self, address: Address, selector: Selector) -> Vec<(&Hash32, &Theorem)> {
        self.index
            .get(&(address, selector))
            .map(|set| set.iter().filter_map(|h| self.theorems.get_key_value(h)).collect())
            .unwrap_or_default()
    }

    /// Adds `path` to the theorem for `(address, selector, hypothesis)`,
    /// creating it if needed, and returns its current hash.
    pub fn add_theorem(&mut self, address: Address, selector: Selector, hypothesis: &SpecExpr, path: Hash32) -> Hash32 {
        let canonical = hypothesis.canonical();
        let existing = self
            .for_entry(address, selector)
            .into_iter()
            .find(|(_, t)| t.hypothesis == canonical)
            .map(|(h, _)| *h);
        match existing {
            Some(old) => {
                let mut t = self.theorems.remove(&old).expect("indexed theorem exists");
                if !t.add_path(path) {
                    self.theorems.insert(old, t);
                    return old;
                }
                let new = t.hash();
                self.unindex(address, selector, &old);
                self.aliases.insert(old, new);
                for target in self.aliases.values_mut() {
                    if *target == old {
                        *target = new;
                    }
                }
                self.insert_current(new, t);
                new
            }
            None => {
                let t = Theorem::new(address, selector, hypothesis, vec![path]);
                let h = t.hash();
                self.insert_current(h, t);
                h
            }
        }
    }

    /// Merges every path of `t` into the repository.
    pub fn add(&mut self, t: &Theorem) -> Result<Hash32, RepoError> {
        let hyp = t.parsed_hypothesis()?;
        let mut h = None;
        for p in &t.path_hashes {
            h = Some(self.add_theorem(t.address, t.selector, &hyp, *p));
        }
        h.ok_or_else(|| RepoError::CorruptRepository("theorem without path hashes".into()))
    }

    fn insert_current(&mut self, h: Hash32, t: Theorem) {
        self.index.entry((t.address, t.selector)).or_default().insert(h);
        self.theorems.insert(h, t);
    }

    fn unindex(&mut self, address: Address, selector: Selector, h: &Hash32) {
        if let Some(set) = self.index.get_mut(&(address, selector)) {
            set.remove(h);
        }
    }

    /// Theorems for the entry whose hypothesis holds under `ctx`.
    pub fn find_applicable(&self, address: Address, selector: Selector, ctx: &EvalContext<'_>) -> Applicable {
        let mut out = Applicable::default();
        for (h, t) in self.for_entry(address, selector) {
            let verdict = t.parsed_hypothesis().map_err(|e| e.to_string()).and_then(|e| eval_hypothesis(&e, ctx).map_err(|e| e.to_string()));
            match verdict {
                Ok(true) => out.hashes.push(*h),
                Ok(false) => {}
                Err(e) => {
                    log::warn!("theorem {h} skipped: {e}");
                    out.warnings.push(format!("theorem {h} skipped: {e}"));
                }
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT.into(),
            theorems: self
                .theorems
                .iter()
                .map(|(h, t)| HeaderEntry {
                    hash: *h,
                    address: t.address,
                    selector: t.selector,
                    hypothesis: t.hypothesis.clone(),
                    paths: t.path_hashes.len(),
                })
                .collect(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for t in self.theorems.values() {
            for p in &t.path_hashes {
                out.extend_from_slice(&p.0);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Repository, RepoError> {
        let corrupt = |m: String| RepoError::CorruptRepository(m);
        if bytes.iter().all(|b| b.is_ascii_whitespace()) {
            return Ok(Repository::new());
        }
        let nl = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| corrupt("missing header line".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| corrupt(format!("header: {e}")))?;
        if header.format != FORMAT {
            return Err(corrupt(format!("unknown format `{}`", header.format)));
        }
        let mut payload = &bytes[nl + 1..];
        let mut r = Repository::new();
        for e in header.theorems {
            if e.paths == 0 {
                return Err(corrupt(format!("theorem {} has no path hashes", e.hash)));
            }
            if payload.len() < 32 * e.paths {
                return Err(corrupt("path payload is truncated".into()));
            }
            let mut t = Theorem { address: e.address, selector: e.selector, hypothesis: e.hypothesis, path_hashes: Vec::new() };
            for chunk in payload[..32 * e.paths].chunks_exact(32) {
                let mut p = [0u8; 32];
                p.copy_from_slice(chunk);
                if !t.add_path(Hash32(p)) {
                    return Err(corrupt(format!("theorem {} lists a path hash twice", e.hash)));
                }
            }
            payload = &payload[32 * e.paths..];
            let canonical = t.parsed_hypothesis()?.canonical();
            if canonical != t.hypothesis {
                return Err(corrupt(format!("theorem {}: hypothesis is not in canonical form", e.hash)));
            }
            if t.hash() != e.hash {
                return Err(corrupt(format!("digest mismatch for theorem {}", e.hash)));
            }
            if r.theorems.contains_key(&e.hash) || r.for_entry(t.address, t.selector).iter().any(|(_, x)| x.hypothesis == t.hypothesis) {
                return Err(corrupt(format!("theorem {} duplicates another entry", e.hash)));
            }
            for old in t.prefix_hashes() {
                r.aliases.insert(old, e.hash);
            }
            r.insert_current(e.hash, t);
        }
        if !payload.is_empty() {
            return Err(corrupt(format!("{} unexpected trailing bytes", payload.len())));
        }
        Ok(r)
    }

    /// Writes to the backing file (temp file then rename).
    pub fn persist(&self) -> Result<(), RepoError> {
        let path = self.path.as_ref().ok_or_else(|| RepoError::Io {
            path: "<memory>".into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "repository has no backing file"),
        })?;
        self.persist_to(path)
    }

    pub fn persist_to(&self, path: &Path) -> Result<(), RepoError> {
        let io = |source| RepoError::Io { path: path.display().to_string(), source };
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "repo".into());
        let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
        {
            let mut f = std::fs::File::create(&tmp).map_err(io)?;
            f.write_all(&self.to_bytes()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        std::fs::rename(&tmp, path).map_err(io)
    }
}
