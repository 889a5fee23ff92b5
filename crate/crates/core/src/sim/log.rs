use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Flow {
    A,
    B,
    C,
    Setup,
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flow::A => "A",
            Flow::B => "B",
            Flow::C => "C",
            Flow::Setup => "S",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Issuer,
    Service,
    Node,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Issuer => "issuer",
            Party::Service => "service",
            Party::Node => "node",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    /// A message between parties; `wire_bytes` counts the TCT attachment only.
    Message { from: Party, to: Party, what: String, wire_bytes: usize },
    Decision { party: Party, what: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    /// Sequence number of the flow run this entry belongs to.
    pub run: usize,
    pub flow: Flow,
    pub step: usize,
    pub record: Record,
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}.{} ", self.run, self.flow, self.step)?;
        match &self.record {
            Record::Message { from, to, what, wire_bytes } => write!(f, "{from} -> {to}: {what} [{wire_bytes}B]"),
            Record::Decision { party, what } => write!(f, "{party}: {what}"),
        }
    }
}

/// Ordered record of every message and decision. Contains no timing data,
/// so replaying a scenario reproduces it exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProtocolLog {
    pub entries: Vec<Entry>,
    runs: usize,
}

impl ProtocolLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a new flow run and returns its sequence number.
    pub fn begin(&mut self) -> usize {
        self.runs += 1;
        self.runs
    }

    pub fn message(&mut self, run: usize, flow: Flow, from: Party, to: Party, what: impl Into<String>, wire_bytes: usize) {
        let step = self.next_step(run, flow);
        self.entries.push(Entry { run, flow, step, record: Record::Message { from, to, what: what.into(), wire_bytes } });
    }

    pub fn decision(&mut self, run: usize, flow: Flow, party: Party, what: impl Into<String>) {
        let step = self.next_step(run, flow);
        self.entries.push(Entry { run, flow, step, record: Record::Decision { party, what: what.into() } });
    }

    fn next_step(&self, run: usize, flow: Flow) -> usize {
        self.entries.iter().filter(|e| e.run == run && e.flow == flow).count() + 1
    }

    /// TCT bytes carried by messages of one run.
    pub fn wire_bytes(&self, run: usize) -> usize {
        self.entries
            .iter()
            .filter(|e| e.run == run)
            .map(|e| match e.record {
                Record::Message { wire_bytes, .. } => wire_bytes,
                Record::Decision { .. } => 0,
            })
            .sum()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }
}
