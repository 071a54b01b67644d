//! Ingestion: normalisation, tokenisation, vocabulary, user filtering and
//! held-out splits.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use log::warn;
use rand::seq::index;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "@user";
pub const DEFAULT_MIN_COUNT: u64 = 5;
pub const DEFAULT_MIN_HISTORY: usize = 100;
pub const DEFAULT_HELDOUT_FRACTION: f64 = 0.1;

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:[a-z][a-z0-9+.\-]*://|www\.)\S*").unwrap());
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|\s)@\w+").unwrap());

/// A cohort label. The three clinical cohorts come first; `classN` labels
/// are accepted for synthetic corpora with more classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CohortLabel {
    Control,
    Depression,
    Ptsd,
    Synthetic(u16),
}

impl CohortLabel {
    /// Labels considered "afflicted" for binary F1.
    pub fn is_afflicted(self) -> bool {
        matches!(self, CohortLabel::Depression | CohortLabel::Ptsd)
    }

    /// The label used for the `i`-th planted class of a synthetic corpus.
    pub fn for_class_index(i: usize) -> CohortLabel {
        match i {
            0 => CohortLabel::Control,
            1 => CohortLabel::Depression,
            2 => CohortLabel::Ptsd,
            n => CohortLabel::Synthetic(n as u16),
        }
    }
}

impl fmt::Display for CohortLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CohortLabel::Control => f.write_str("control"),
            CohortLabel::Depression => f.write_str("depression"),
            CohortLabel::Ptsd => f.write_str("ptsd"),
            CohortLabel::Synthetic(n) => write!(f, "class{n}"),
        }
    }
}

impl FromStr for CohortLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "control" => Ok(CohortLabel::Control),
            "depression" => Ok(CohortLabel::Depression),
            "ptsd" => Ok(CohortLabel::Ptsd),
            other => other
                .strip_prefix("class")
                .and_then(|n| n.parse::<u16>().ok())
                .map(CohortLabel::Synthetic)
                .ok_or_else(|| Error::UnknownLabel(other.to_string())),
        }
    }
}

/// Sorted, de-duplicated label set of a dataset.
pub fn label_set(labels: &[CohortLabel]) -> Vec<CohortLabel> {
    let mut set: Vec<CohortLabel> = labels.to_vec();
    set.sort();
    set.dedup();
    set
}

/// Lowercases, replaces URLs and mentions with canonical tokens and caps
/// character runs at three.
pub fn normalize_text(raw: &str) -> String {
    let mut text = raw.to_lowercase();
    // Collapsing can expose a new URL or mention (and vice versa), so iterate
    // to a fixed point; in practice this takes one or two rounds.
    loop {
        let next = collapse_repeats(&MENTION_RE.replace_all(
            &URL_RE.replace_all(&text, URL_TOKEN),
            format!("${{1}}{USER_TOKEN}").as_str(),
        ));
        if next == text {
            return text;
        }
        text = next;
    }
}

fn collapse_repeats(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev = None;
    let mut run = 0;
    for c in s.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= 3 {
            out.push(c);
        }
    }
    out
}

/// Whitespace tokeniser that splits leading and trailing punctuation off
/// each piece, keeping `@user`, `<url>` and `#hashtags` whole.
pub fn tokenize(normalized: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in normalized.split_whitespace() {
        split_piece(piece, &mut out);
    }
    out
}

fn split_piece(piece: &str, out: &mut Vec<String>) {
    if piece.is_empty() {
        return;
    }
    if piece == URL_TOKEN || piece == USER_TOKEN {
        out.push(piece.to_string());
        return;
    }
    if let Some(pos) = piece.find(URL_TOKEN) {
        split_piece(&piece[..pos], out);
        out.push(URL_TOKEN.to_string());
        split_piece(&piece[pos + URL_TOKEN.len()..], out);
        return;
    }
    let Some(first) = piece.find(|c: char| c.is_alphanumeric()) else {
        out.extend(piece.chars().map(String::from));
        return;
    };
    let last = piece
        .char_indices()
        .filter(|(_, c)| c.is_alphanumeric())
        .map(|(i, c)| i + c.len_utf8())
        .next_back()
        .unwrap_or(piece.len());
    let mut start = first;
    let lead = &piece[..first];
    if lead.ends_with('#') || lead.ends_with('@') {
        start -= 1;
    }
    out.extend(piece[..start].chars().map(String::from));
    out.push(piece[start..last].to_string());
    out.extend(piece[last..].chars().map(String::from));
}

/// Token to dense id mapping with corpus counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from `(token, count)` pairs given in id order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut vocab = Vocabulary::default();
        for (token, count) in entries {
            if vocab.index.contains_key(&token) {
                return Err(Error::invalid(format!("duplicate token '{token}'")));
            }
            vocab.index.insert(token.clone(), vocab.tokens.len());
            vocab.tokens.push(token);
            vocab.counts.push(count);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }

    /// Writes `token<TAB>id<TAB>count` lines.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (id, (tok, count)) in self.tokens.iter().zip(&self.counts).enumerate() {
            writeln!(w, "{tok}\t{id}\t{count}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| Error::parse(path, i + 1, msg);
            if fields.len() != 3 {
                return Err(bad("expected token<TAB>id<TAB>count"));
            }
            let id: usize = fields[1].parse().map_err(|_| bad("bad id"))?;
            if id != entries.len() {
                return Err(bad("ids must be dense and in order"));
            }
            let count: u64 = fields[2].parse().map_err(|_| bad("bad count"))?;
            entries.push((fields[0].to_string(), count));
        }
        Vocabulary::from_entries(entries)
    }
}

/// Counts tokens and keeps those seen at least `min_count` times. Ids are
/// assigned by descending count, ties broken lexicographically.
pub fn build_vocabulary<'a, I, S>(corpus: I, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for seq in corpus {
        for tok in seq {
            *counts.entry(tok.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if kept.is_empty() {
        warn!("vocabulary is empty: no token occurs {min_count} or more times");
    }
    Vocabulary::from_entries(kept.into_iter().map(|(t, c)| (t.to_string(), c)).collect())
}

/// A user's tokenised (string) history, before vocabulary indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawUser {
    pub user_id: String,
    pub label: CohortLabel,
    pub posts: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawDataset {
    pub users: Vec<RawUser>,
}

impl RawDataset {
    pub fn token_sequences(&self) -> impl Iterator<Item = &[String]> {
        self.users.iter().flat_map(|u| u.posts.iter().map(|p| p.as_slice()))
    }

    pub fn build_vocabulary(&self, min_count: u64) -> Result<Vocabulary> {
        build_vocabulary(self.token_sequences(), min_count)
    }

    /// Encodes every post against `vocab`. Post counts are preserved even
    /// when a post loses all of its tokens.
    pub fn index(&self, vocab: Vocabulary) -> Dataset {
        let users = self
            .users
            .iter()
            .map(|u| UserHistory {
                user_id: u.user_id.clone(),
                label: u.label,
                posts: u.posts.iter().map(|p| vocab.encode(p)).collect(),
            })
            .collect();
        Dataset { vocab, users }
    }
}

/// One labelled user with token-id posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user_id: String,
    #[serde(with = "label_serde")]
    pub label: CohortLabel,
    pub posts: Vec<Vec<usize>>,
}

impl UserHistory {
    pub fn num_tokens(&self) -> usize {
        self.posts.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.posts.iter().flatten().copied()
    }
}

mod label_serde {
    use super::CohortLabel;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &CohortLabel, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(label)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CohortLabel, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Users with token-id histories plus the vocabulary they were encoded with.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub users: Vec<UserHistory>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<CohortLabel> {
        self.users.iter().map(|u| u.label).collect()
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.users.iter().map(|u| u.user_id.clone()).collect()
    }

    pub fn label_set(&self) -> Vec<CohortLabel> {
        label_set(&self.labels())
    }

    /// Writes one JSON object per user with token-id posts.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for u in &self.users {
            serde_json::to_writer(&mut w, u)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a processed dataset written by [`Dataset::write_jsonl`].
    pub fn read_jsonl(path: &Path, vocab: Vocabulary) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut users = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let user: UserHistory = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if let Some(&bad) = user.tokens().find(|&t| t >= vocab.len()).as_ref() {
                return Err(Error::parse(path, i + 1, format!("token id {bad} out of range")));
            }
            users.push(user);
        }
        Ok(Dataset { vocab, users })
    }
}

/// Keeps users with at least `min_history` posts.
pub fn filter_users(dataset: Dataset, min_history: usize) -> Dataset {
    let before = dataset.users.len();
    let users: Vec<UserHistory> = dataset
        .users
        .into_iter()
        .filter(|u| u.posts.len() >= min_history)
        .collect();
    if users.is_empty() {
        warn!("no user has {min_history} or more posts ({before} users dropped)");
    }
    Dataset {
        vocab: dataset.vocab,
        users,
    }
}

/// Post indices reserved for early stopping versus training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeldOutSplit {
    pub train_posts: Vec<usize>,
    pub heldout_posts: Vec<usize>,
    pub seed: u64,
}

/// Samples `round(fraction * n)` posts (at least one, at most `n - 1`)
/// uniformly without replacement, seeded by `(seed, user_id)`.
pub fn split_heldout(history: &UserHistory, fraction: f64, seed: u64) -> Result<HeldOutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("held-out fraction {fraction} not in (0, 1)")));
    }
    let n = history.posts.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "user '{}' has {n} posts; a held-out split needs at least 2",
            history.user_id
        )));
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = rng::stream_str(seed, "heldout", &history.user_id);
    let mut heldout = index::sample(&mut rng, n, k).into_vec();
    heldout.sort_unstable();
    let held: HashSet<usize> = heldout.iter().copied().collect();
    let train_posts = (0..n).filter(|i| !held.contains(i)).collect();
    Ok(HeldOutSplit {
        train_posts,
        heldout_posts: heldout,
        seed,
    })
}

#[derive(Deserialize)]
struct JsonUser {
    user_id: String,
    label: String,
    posts: Vec<String>,
}

/// Reads one `{"user_id", "label", "posts"}` object per line, normalising
/// and tokenising every post. Posts that are blank or tokenise to nothing
/// are dropped.
pub fn load_dataset(path: &Path) -> Result<RawDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut seen = HashSet::new();
    let mut users = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonUser =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let label: CohortLabel = rec
            .label
            .parse()
            .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
        if !seen.insert(rec.user_id.clone()) {
            return Err(Error::parse(
                path,
                i + 1,
                Error::DuplicateUser(rec.user_id).to_string(),
            ));
        }
        let posts = rec
            .posts
            .iter()
            .filter(|p| !p.trim().is_empty())
            .map(|p| tokenize(&normalize_text(p)))
            .filter(|toks| !toks.is_empty())
            .collect();
        users.push(RawUser {
            user_id: rec.user_id,
            label,
            posts,
        });
    }
    Ok(RawDataset { users })
}

/// Writes a raw dataset back as JSONL with posts re-joined by spaces.
pub fn write_raw_jsonl(users: &[(String, CohortLabel, Vec<String>)], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, label, posts) in users {
        let obj = serde_json::json!({ "user_id": id, "label": label.to_string(), "posts": posts });
        serde_json::to_writer(&mut w, &obj)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `user_id,label` rows.
pub fn write_labels_csv(path: &Path, ids: &[String], labels: &[CohortLabel]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "user_id,label")?;
    for (id, label) in ids.iter().zip(labels) {
        writeln!(w, "{id},{label}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<HashMap<String, CohortLabel>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, i + 1, "expected 'user_id,label'"))?;
        let label = label.trim().parse().map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
        if out.insert(id.to_string(), label).is_some() {
            return Err(Error::DuplicateUser(id.to_string()));
        }
    }
    Ok(out)
}
