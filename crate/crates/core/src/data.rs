//! Sessions, datasets and the per-session text format.
//!
//! A session file looks like
//!
//! ```text
//! session s01 L=3 M=1 D=2 labels=1
//! t 0 0.5 -1.25 0
//! t 1 2.5 0.75 1
//! t 2 0.1 0.2 0
//! z 1.4
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const SESSION_EXT: &str = "session";

/// One recording: an instance sequence plus the noisy event timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    id: String,
    dim: usize,
    features: Vec<f64>,
    instance_times: Vec<f64>,
    event_times: Vec<f64>,
    true_labels: Option<Vec<u8>>,
}

impl Session {
    /// Builds a validated session. `features` is row-major, `L x D`.
    /// Event times are sorted ascending.
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        features: Vec<f64>,
        instance_times: Vec<f64>,
        mut event_times: Vec<f64>,
        true_labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let id = id.into();
        let bad = |msg: String| Error::InvalidSession {
            id: id.clone(),
            msg,
        };
        if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == '/' || c == '\\') {
            return Err(bad("session id must be non-empty without whitespace or slashes".into()));
        }
        if dim == 0 {
            return Err(bad("feature dimension must be at least 1".into()));
        }
        let len = instance_times.len();
        if len == 0 {
            return Err(bad("session needs at least one instance".into()));
        }
        if features.len() != len * dim {
            return Err(bad(format!(
                "feature matrix has {} values, expected L*D = {}",
                features.len(),
                len * dim
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(bad(format!("non-finite feature in instance {}", i / dim)));
        }
        if instance_times.iter().any(|t| !t.is_finite()) {
            return Err(bad("non-finite instance time".into()));
        }
        if let Some(i) = instance_times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(bad(format!(
                "instance_times not strictly increasing at instance {}",
                i + 1
            )));
        }
        if event_times.iter().any(|z| !z.is_finite()) {
            return Err(bad("non-finite event time".into()));
        }
        event_times.sort_by(f64::total_cmp);
        if let Some(labels) = &true_labels {
            if labels.len() != len {
                return Err(bad(format!(
                    "true_labels has length {}, expected {len}",
                    labels.len()
                )));
            }
            if labels.iter().any(|&y| y > 1) {
                return Err(bad("true_labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            id,
            dim,
            features,
            instance_times,
            event_times,
            true_labels,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of instances, `L`.
    pub fn len(&self) -> usize {
        self.instance_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_times.is_empty()
    }

    /// Number of events, `M`.
    pub fn num_events(&self) -> usize {
        self.event_times.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn instance_times(&self) -> &[f64] {
        &self.instance_times
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn true_labels(&self) -> Option<&[u8]> {
        self.true_labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[u8]> {
        self.true_labels()
            .ok_or_else(|| Error::MissingLabels(self.id.clone()))
    }

    /// Same instances, different events (sorted on the way in).
    pub fn with_events(&self, event_times: Vec<f64>) -> Result<Self> {
        Session::new(
            self.id.clone(),
            self.dim,
            self.features.clone(),
            self.instance_times.clone(),
            event_times,
            self.true_labels.clone(),
        )
    }

    pub fn without_labels(&self) -> Self {
        Self {
            true_labels: None,
            ..self.clone()
        }
    }

    /// Median gap between consecutive instance times; `1.0` for single-instance sessions.
    pub fn median_spacing(&self) -> f64 {
        let gaps: Vec<f64> = self
            .instance_times
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        crate::math::median(&gaps).unwrap_or(1.0)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let has_labels = self.true_labels.is_some();
        let _ = writeln!(
            out,
            "session {} L={} M={} D={} labels={}",
            self.id,
            self.len(),
            self.num_events(),
            self.dim,
            u8::from(has_labels)
        );
        for i in 0..self.len() {
            let _ = write!(out, "t {}", self.instance_times[i]);
            for v in self.feature(i) {
                let _ = write!(out, " {v}");
            }
            if let Some(labels) = &self.true_labels {
                let _ = write!(out, " {}", labels[i]);
            }
            out.push('\n');
        }
        for z in &self.event_times {
            let _ = writeln!(out, "z {z}");
        }
        out
    }

    /// Parses one session file. `file` is only used for error messages.
    pub fn parse(text: &str, file: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            file: file.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines.next().ok_or_else(|| err(1, "empty session file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("session") {
            return Err(err(hline, "expected header `session <id> L=.. M=.. D=.. labels=..`".into()));
        }
        let id = parts
            .next()
            .ok_or_else(|| err(hline, "missing session id".into()))?
            .to_string();
        let mut field = |name: &str| -> Result<usize> {
            let tok = parts
                .next()
                .ok_or_else(|| err(hline, format!("missing header field {name}")))?;
            let value = tok
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| err(hline, format!("expected {name}=<n>, found `{tok}`")))?;
            value
                .parse()
                .map_err(|_| err(hline, format!("bad value for {name}: `{value}`")))
        };
        let len = field("L")?;
        let events = field("M")?;
        let dim = field("D")?;
        let labels = field("labels")?;
        if labels > 1 {
            return Err(err(hline, "labels must be 0 or 1".into()));
        }
        if parts.next().is_some() {
            return Err(err(hline, "trailing tokens in header".into()));
        }
        let has_labels = labels == 1;

        let parse_num = |line: usize, tok: &str| -> Result<f64> {
            tok.parse::<f64>()
                .map_err(|_| err(line, format!("malformed number `{tok}`")))
        };

        let mut features = Vec::with_capacity(len * dim);
        let mut times = Vec::with_capacity(len);
        let mut truth = has_labels.then(|| Vec::with_capacity(len));
        for k in 0..len {
            let (ln, row) = lines
                .next()
                .ok_or_else(|| err(hline, format!("expected {len} instance rows, found {k}")))?;
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.first() != Some(&"t") {
                return Err(err(ln, "malformed row: expected instance row `t <time> <features..>`".into()));
            }
            let expected = 2 + dim + usize::from(has_labels);
            if toks.len() != expected {
                return Err(err(
                    ln,
                    format!("malformed row: {} fields, expected {expected}", toks.len()),
                ));
            }
            let t = parse_num(ln, toks[1])?;
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(err(ln, "instance_times not strictly increasing".into()));
                }
            }
            times.push(t);
            for tok in &toks[2..2 + dim] {
                features.push(parse_num(ln, tok)?);
            }
            if let Some(truth) = truth.as_mut() {
                match toks[2 + dim] {
                    "0" => truth.push(0),
                    "1" => truth.push(1),
                    other => return Err(err(ln, format!("label must be 0 or 1, found `{other}`"))),
                }
            }
        }
        let mut event_times = Vec::with_capacity(events);
        for k in 0..events {
            let (ln, row) = lines
                .next()
                .ok_or_else(|| err(hline, format!("expected {events} event rows, found {k}")))?;
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() != 2 || toks[0] != "z" {
                return Err(err(ln, "malformed row: expected event row `z <time>`".into()));
            }
            event_times.push(parse_num(ln, toks[1])?);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "unexpected content after the declared rows".into()));
        }
        Session::new(id, dim, features, times, event_times, truth).map_err(|e| match e {
            Error::InvalidSession { msg, .. } => err(hline, msg),
            other => other,
        })
    }
}

/// An ordered collection of sessions sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sessions: Vec<Session>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(sessions: Vec<Session>) -> Result<Self> {
        let first = sessions
            .first()
            .ok_or_else(|| Error::InvalidDataset("dataset has no sessions".into()))?;
        let feature_dim = first.dim();
        let mut seen = std::collections::HashSet::new();
        for s in &sessions {
            if s.dim() != feature_dim {
                return Err(Error::InvalidDataset(format!(
                    "session {} has D={}, expected D={feature_dim}",
                    s.id(),
                    s.dim()
                )));
            }
            if !seen.insert(s.id().to_string()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate session id {}",
                    s.id()
                )));
            }
        }
        Ok(Self {
            sessions,
            feature_dim,
        })
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn total_instances(&self) -> usize {
        self.sessions.iter().map(Session::len).sum()
    }

    pub fn total_events(&self) -> usize {
        self.sessions.iter().map(Session::num_events).sum()
    }

    /// `(positives, negatives)` over sessions that carry labels.
    pub fn label_counts(&self) -> (usize, usize) {
        let mut pos = 0;
        let mut total = 0;
        for labels in self.sessions.iter().filter_map(Session::true_labels) {
            pos += labels.iter().filter(|&&y| y == 1).count();
            total += labels.len();
        }
        (pos, total - pos)
    }

    pub fn has_labels(&self) -> bool {
        self.sessions.iter().all(|s| s.true_labels().is_some())
    }

    /// Sessions whose event count exceeds `L * c_max`.
    pub fn infeasible_sessions(&self, c_max: usize) -> Vec<&str> {
        self.sessions
            .iter()
            .filter(|s| s.num_events() > s.len() * c_max)
            .map(Session::id)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Dataset::new(indices.iter().map(|&i| self.sessions[i].clone()).collect())
    }

    /// Median of per-session median instance spacings.
    pub fn median_spacing(&self) -> f64 {
        let per: Vec<f64> = self.sessions.iter().map(Session::median_spacing).collect();
        crate::math::median(&per).unwrap_or(1.0)
    }

    pub fn map_sessions<F>(&self, f: F) -> Result<Self>
    where
        F: FnMut(&Session) -> Result<Session>,
    {
        Dataset::new(self.sessions.iter().map(f).collect::<Result<_>>()?)
    }
}

fn session_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == SESSION_EXT) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every `*.session` file in `dir`, ordered by file name.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let files = session_files(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "no .{SESSION_EXT} files in {}",
            dir.display()
        )));
    }
    let mut sessions = Vec::with_capacity(files.len());
    for path in &files {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        sessions.push(Session::parse(&text, path)?);
    }
    let dataset = Dataset::new(sessions).map_err(|e| match e {
        Error::InvalidDataset(msg) => Error::InvalidDataset(format!("{}: {msg}", dir.display())),
        other => other,
    })?;
    let infeasible = dataset.infeasible_sessions(1);
    if !infeasible.is_empty() {
        log::warn!(
            "sessions with more events than instances (infeasible for single-emission counts): {}",
            infeasible.join(", ")
        );
    }
    Ok(dataset)
}

/// Writes one file per session, named `<index>_<id>.session`, replacing any
/// session files already in `dir`.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for stale in session_files(dir)? {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    for (i, s) in dataset.sessions().iter().enumerate() {
        let path = dir.join(format!("{i:05}_{}.{SESSION_EXT}", s.id()));
        fs::write(&path, s.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
