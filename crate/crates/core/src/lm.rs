//! Word n-gram language models with interpolated Kneser-Ney smoothing,
//! stored in a hashed prefix trie and exchanged as ARPA text.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const UNK_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_DISCOUNT: f64 = 0.75;
/// log10 probability written for `<s>`, which is never predicted.
const BOS_LOGPROB: f64 = -99.0;

/// Word ids with `<unk>`, `<s>` and `</s>` pre-registered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmVocab {
    words: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for LmVocab {
    fn default() -> Self {
        let mut v = LmVocab {
            words: Vec::new(),
            ids: HashMap::new(),
        };
        for w in [UNK, BOS, EOS] {
            v.intern(w);
        }
        v
    }
}

impl LmVocab {
    pub fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(w.to_string());
        self.ids.insert(w.to_string(), id);
        id
    }

    /// Id of `w`, or [`UNK_ID`].
    pub fn id(&self, w: &str) -> u32 {
        self.ids.get(w).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, w: &str) -> bool {
        self.ids.contains_key(w)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 3
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// Raw n-gram counts of orders `1..=order` with sentence boundaries.
///
/// `<s>` is counted as a unigram so every n-gram's prefix is present, but
/// it is excluded from [`NGramCounts::total_unigrams`].
#[derive(Clone, Debug, PartialEq)]
pub struct NGramCounts {
    pub order: usize,
    pub vocab: LmVocab,
    /// `counts[n - 1]` holds the n-grams.
    pub counts: Vec<HashMap<Vec<u32>, u64>>,
}

impl NGramCounts {
    pub fn get(&self, ngram: &[&str]) -> u64 {
        let ids: Option<Vec<u32>> = ngram.iter().map(|w| self.vocab.ids.get(*w).copied()).collect();
        match ids {
            Some(ids) if !ids.is_empty() && ids.len() <= self.order => {
                self.counts[ids.len() - 1].get(&ids).copied().unwrap_or(0)
            }
            _ => 0,
        }
    }

    pub fn total_unigrams(&self) -> u64 {
        self.counts
            .first()
            .map_or(0, |m| m.iter().filter(|(k, _)| k[0] != BOS_ID).map(|(_, c)| c).sum())
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(HashMap::is_empty)
    }
}

pub fn count_ngrams<'a, S>(corpus: impl IntoIterator<Item = &'a S>, order: usize) -> Result<NGramCounts>
where
    S: AsRef<[String]> + 'a + ?Sized,
{
    if order < 1 {
        return Err(Error::validation("n-gram order must be at least 1"));
    }
    let mut vocab = LmVocab::default();
    let mut counts = vec![HashMap::new(); order];
    for sentence in corpus {
        let mut ids = vec![BOS_ID];
        ids.extend(sentence.as_ref().iter().map(|w| vocab.intern(w)));
        ids.push(EOS_ID);
        for n in 1..=order {
            for start in 0..ids.len().saturating_sub(n - 1) {
                let g = &ids[start..start + n];
                // a lone <s> is only recorded as a prefix, once per sentence
                *counts[n - 1].entry(g.to_vec()).or_insert(0) += 1;
            }
        }
    }
    Ok(NGramCounts { order, vocab, counts })
}

/// Count-of-counts discount estimate `n1 / (n1 + 2 n2)` per order over the
/// Kneser-Ney adjusted counts, clamped into [0.1, 0.9].
pub fn estimate_discounts(counts: &NGramCounts) -> Vec<f64> {
    adjusted_counts(counts)
        .iter()
        .map(|level| {
            let n1 = level.values().filter(|&&c| c == 1).count() as f64;
            let n2 = level.values().filter(|&&c| c == 2).count() as f64;
            if n1 + n2 == 0.0 {
                DEFAULT_DISCOUNT
            } else {
                (n1 / (n1 + 2.0 * n2)).clamp(0.1, 0.9)
            }
        })
        .collect()
}

/// Highest order and `<s>`-initial n-grams keep raw counts; the others are
/// replaced by their number of distinct left extensions.
fn adjusted_counts(counts: &NGramCounts) -> Vec<HashMap<Vec<u32>, u64>> {
    let order = counts.order;
    let mut adj: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    adj[order - 1] = counts.counts[order - 1].clone();
    for n in 1..order {
        let mut level: HashMap<Vec<u32>, u64> = HashMap::new();
        for g in counts.counts[n].keys() {
            *level.entry(g[1..].to_vec()).or_insert(0) += 1;
        }
        for (g, &c) in &counts.counts[n - 1] {
            if g[0] == BOS_ID {
                level.insert(g.clone(), c);
            }
        }
        adj[n - 1] = level;
    }
    adj[0].remove(&vec![BOS_ID]);
    adj
}

const ROOT: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    word: u32,
    parent: u32,
    logprob: f64,
    backoff: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Level {
    entries: Vec<Entry>,
    index: HashMap<(u32, u32), u32>,
}

impl Level {
    fn insert(&mut self, parent: u32, word: u32, logprob: f64) -> u32 {
        let id = self.entries.len() as u32;
        self.entries.push(Entry {
            word,
            parent,
            logprob,
            backoff: 0.0,
        });
        self.index.insert((parent, word), id);
        id
    }
}

/// Backoff n-gram model: conditional log10 probabilities per n-gram and
/// log10 backoff weights per context.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    pub order: usize,
    pub vocab: LmVocab,
    /// Discount used per order (empty for models loaded from ARPA).
    pub discounts: Vec<f64>,
    levels: Vec<Level>,
}

/// Interpolated Kneser-Ney estimation.
///
/// For an observed context `h`,
/// `P(w|h) = max(a(h,w) - D, 0) / a(h) + D N1+(h.) / a(h) * P(w|h')`
/// with `a` the adjusted counts. The unigram level interpolates with the
/// uniform distribution over the vocabulary plus `<unk>`, which is where
/// `<unk>` gets its mass.
pub fn estimate_kn(counts: &NGramCounts, discounts: &[f64]) -> Result<NGramModel> {
    let order = counts.order;
    if counts.is_empty() {
        return Err(Error::validation("cannot estimate a language model from empty counts"));
    }
    if discounts.len() != order {
        return Err(Error::validation(format!("need {order} discounts, got {}", discounts.len())));
    }
    if let Some(d) = discounts.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(Error::validation(format!("discount {d} outside (0, 1)")));
    }
    let adj = adjusted_counts(counts);

    // unigrams
    let d1 = discounts[0];
    let total: u64 = adj[0].values().sum();
    let types = adj[0].len();
    let uniform_size = (types + usize::from(!adj[0].contains_key(&vec![UNK_ID]))) as f64;
    let gamma1 = d1 * types as f64 / total as f64;
    let mut uni = vec![gamma1 / uniform_size; counts.vocab.len()];
    for (g, &a) in &adj[0] {
        uni[g[0] as usize] += (a as f64 - d1).max(0.0) / total as f64;
    }
    // interpolated probabilities per level, keyed by n-gram
    let mut probs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order];
    for (g, _) in counts.counts[0].iter() {
        probs[0].insert(g.clone(), if g[0] == BOS_ID { 0.0 } else { uni[g[0] as usize] });
    }
    probs[0].insert(vec![UNK_ID], uni[UNK_ID as usize]);
    let mut gammas: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order];

    let lower = |probs: &[HashMap<Vec<u32>, f64>], gammas: &[HashMap<Vec<u32>, f64>], g: &[u32]| -> f64 {
        backoff_prob(probs, gammas, &uni, g)
    };

    for n in 2..=order {
        let d = discounts[n - 1];
        let mut ctx: HashMap<&[u32], (u64, u64)> = HashMap::new();
        for (g, &a) in &adj[n - 1] {
            let e = ctx.entry(&g[..n - 1]).or_insert((0, 0));
            e.0 += a;
            e.1 += 1;
        }
        let mut level = HashMap::with_capacity(adj[n - 1].len());
        for (g, &a) in &adj[n - 1] {
            let (sum, types) = ctx[&g[..n - 1]];
            let gamma = d * types as f64 / sum as f64;
            let p = (a as f64 - d).max(0.0) / sum as f64 + gamma * lower(&probs, &gammas, &g[1..]);
            level.insert(g.clone(), p);
        }
        let gl: HashMap<Vec<u32>, f64> = ctx
            .into_iter()
            .map(|(h, (sum, types))| (h.to_vec(), d * types as f64 / sum as f64))
            .collect();
        gammas[n - 2] = gl;
        probs[n - 1] = level;
    }

    // build the trie, shortest n-grams first so parents exist
    let mut levels: Vec<Level> = vec![Level::default(); order];
    for n in 1..=order {
        let mut grams: Vec<(&Vec<u32>, &f64)> = probs[n - 1].iter().collect();
        grams.sort_by(|a, b| a.0.cmp(b.0));
        for (g, &p) in grams {
            let parent = if n == 1 {
                ROOT
            } else {
                find_in(&levels, &g[..n - 1]).expect("prefix present")
            };
            let lp = if n == 1 && g[0] == BOS_ID { BOS_LOGPROB } else { p.log10() };
            levels[n - 1].insert(parent, g[n - 1], lp);
        }
    }
    for n in 1..order {
        for (h, &gamma) in &gammas[n - 1] {
            let id = find_in(&levels, h).expect("context present");
            levels[n - 1].entries[id as usize].backoff = gamma.log10();
        }
    }
    Ok(NGramModel {
        order,
        vocab: counts.vocab.clone(),
        discounts: discounts.to_vec(),
        levels,
    })
}

/// Backoff evaluation over the intermediate maps used during estimation.
fn backoff_prob(probs: &[HashMap<Vec<u32>, f64>], gammas: &[HashMap<Vec<u32>, f64>], uni: &[f64], g: &[u32]) -> f64 {
    if g.len() == 1 {
        return uni[g[0] as usize];
    }
    if let Some(&p) = probs[g.len() - 1].get(g) {
        return p;
    }
    let h = &g[..g.len() - 1];
    let gamma = gammas[g.len() - 2].get(h).copied().unwrap_or(1.0);
    gamma * backoff_prob(probs, gammas, uni, &g[1..])
}

fn find_in(levels: &[Level], ngram: &[u32]) -> Option<u32> {
    let mut parent = ROOT;
    for (n, &w) in ngram.iter().enumerate() {
        parent = *levels.get(n)?.index.get(&(parent, w))?;
    }
    Some(parent)
}

impl NGramModel {
    fn find(&self, ngram: &[u32]) -> Option<&Entry> {
        let id = find_in(&self.levels, ngram)?;
        Some(&self.levels[ngram.len() - 1].entries[id as usize])
    }

    /// log10 P(word | context), backing off through shorter contexts.
    /// Only the last `order - 1` context words matter.
    pub fn score_ids(&self, context: &[u32], word: u32) -> f64 {
        let keep = context.len().min(self.order - 1);
        let context = &context[context.len() - keep..];
        let mut backoff = 0.0;
        let mut ngram: Vec<u32> = Vec::with_capacity(keep + 1);
        for start in 0..=keep {
            ngram.clear();
            ngram.extend_from_slice(&context[start..]);
            ngram.push(word);
            if let Some(e) = self.find(&ngram) {
                return backoff + e.logprob;
            }
            if let Some(h) = self.find(&context[start..]) {
                backoff += h.backoff;
            }
        }
        // word absent even as a unigram: score as <unk>
        backoff + self.find(&[UNK_ID]).map_or(-100.0, |e| e.logprob)
    }

    pub fn word_id(&self, w: &str) -> u32 {
        self.vocab.id(w)
    }

    /// P(word | context) for string tokens (not log).
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let ctx: Vec<u32> = context.iter().map(|w| self.vocab.id(w)).collect();
        10f64.powf(self.score_ids(&ctx, self.vocab.id(word)))
    }

    /// Words over which conditional distributions are normalized: the
    /// vocabulary without `<s>`, plus `<unk>`.
    pub fn predictable_words(&self) -> Vec<&str> {
        self.vocab.words().filter(|w| *w != BOS).collect()
    }

    /// Stored n-grams of order `n` as token strings.
    pub fn ngrams(&self, n: usize) -> Vec<Vec<&str>> {
        let level = &self.levels[n - 1];
        (0..level.entries.len()).map(|id| self.ngram_words(n, id as u32)).collect()
    }

    fn ngram_words(&self, n: usize, mut id: u32) -> Vec<&str> {
        let mut out = Vec::with_capacity(n);
        for k in (0..n).rev() {
            let e = &self.levels[k].entries[id as usize];
            out.push(self.vocab.word(e.word));
            id = e.parent;
        }
        out.reverse();
        out
    }

    /// log10 probability of a whole sentence, `</s>` included.
    pub fn logprob<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let mut ctx = vec![BOS_ID];
        let mut total = 0.0;
        for w in sentence.iter().map(|w| self.vocab.id(w.as_ref())).chain(std::iter::once(EOS_ID)) {
            total += self.score_ids(&ctx, w);
            ctx.push(w);
        }
        total
    }

    /// `10^(-logprob / N)` where N counts tokens plus one `</s>` per sentence.
    pub fn perplexity<S: AsRef<str>>(&self, corpus: &[Vec<S>]) -> f64 {
        let mut lp = 0.0;
        let mut n = 0usize;
        for s in corpus {
            lp += self.logprob(s);
            n += s.len() + 1;
        }
        10f64.powf(-lp / n.max(1) as f64)
    }

    pub fn num_ngrams(&self, n: usize) -> usize {
        self.levels[n - 1].entries.len()
    }

    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for n in 1..=self.order {
            writeln!(out, "ngram {}={}", n, self.num_ngrams(n)).unwrap();
        }
        for n in 1..=self.order {
            write!(out, "\n\\{n}-grams:\n").unwrap();
            let level = &self.levels[n - 1];
            let mut rows: Vec<(Vec<&str>, &Entry)> = level
                .entries
                .iter()
                .enumerate()
                .map(|(id, e)| (self.ngram_words(n, id as u32), e))
                .collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            for (words, e) in rows {
                if n < self.order {
                    writeln!(out, "{:.6}\t{}\t{:.6}", e.logprob, words.join(" "), e.backoff).unwrap();
                } else {
                    writeln!(out, "{:.6}\t{}", e.logprob, words.join(" ")).unwrap();
                }
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    pub fn from_arpa(text: &str) -> Result<Self> {
        let err = |line: usize, m: &str| Error::parse("arpa", line, m.to_string());
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        let mut declared: BTreeMap<usize, usize> = BTreeMap::new();
        // header
        loop {
            let (ln, l) = lines.next().ok_or_else(|| err(1, "missing \\data\\ header"))?;
            if l.is_empty() {
                continue;
            }
            if l != "\\data\\" {
                return Err(err(ln, "expected \\data\\"));
            }
            break;
        }
        let mut pending: Option<(usize, usize)> = None;
        for (ln, l) in lines.by_ref() {
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix("ngram ") {
                let (n, c) = rest.split_once('=').ok_or_else(|| err(ln, "bad ngram count line"))?;
                let n: usize = n.trim().parse().map_err(|_| err(ln, "bad order"))?;
                let c: usize = c.trim().parse().map_err(|_| err(ln, "bad count"))?;
                if n != declared.len() + 1 {
                    return Err(err(ln, "ngram orders must be consecutive from 1"));
                }
                declared.insert(n, c);
                continue;
            }
            pending = Some((ln, section_order(l).ok_or_else(|| err(ln, "expected \\1-grams:"))?));
            break;
        }
        let order = declared.len();
        if order == 0 {
            return Err(err(1, "no ngram counts declared"));
        }
        let mut vocab = LmVocab::default();
        let mut levels = vec![Level::default(); order];
        let mut current = pending.ok_or_else(|| err(text.lines().count(), "missing n-gram sections"))?;
        let mut seen_end = false;
        let mut seen_unk = false;
        loop {
            let (hdr_line, n) = current;
            if n != levels.iter().filter(|l| !l.entries.is_empty()).count() + 1 || n > order {
                return Err(err(hdr_line, "unexpected section header"));
            }
            let mut next = None;
            for (ln, l) in lines.by_ref() {
                if l.is_empty() {
                    continue;
                }
                if l == "\\end\\" {
                    seen_end = true;
                    break;
                }
                if l.starts_with('\\') {
                    next = Some((ln, section_order(l).ok_or_else(|| err(ln, "bad section header"))?));
                    break;
                }
                // tab-separated per the writer; plain whitespace is accepted too
                let fields: Vec<&str> = l.split_whitespace().collect();
                let (lp, words, bo) = if fields.len() == n + 1 {
                    (fields[0], &fields[1..], None)
                } else if fields.len() == n + 2 {
                    (fields[0], &fields[1..=n], Some(fields[n + 1]))
                } else {
                    return Err(err(ln, "malformed n-gram line"));
                };
                let lp: f64 = lp.trim().parse().map_err(|_| err(ln, "bad log probability"))?;
                let bo: f64 = match bo {
                    Some(b) => b.trim().parse().map_err(|_| err(ln, "bad backoff"))?,
                    None => 0.0,
                };
                let ids: Vec<u32> = words.iter().map(|w| vocab.intern(w)).collect();
                if n == 1 && ids[0] == UNK_ID {
                    seen_unk = true;
                }
                let parent = if n == 1 {
                    ROOT
                } else {
                    find_in(&levels, &ids[..n - 1]).ok_or_else(|| err(ln, "n-gram prefix missing from lower order"))?
                };
                if levels[n - 1].index.contains_key(&(parent, ids[n - 1])) {
                    return Err(err(ln, "duplicate n-gram"));
                }
                let id = levels[n - 1].insert(parent, ids[n - 1], lp);
                levels[n - 1].entries[id as usize].backoff = bo;
            }
            if levels[n - 1].entries.len() != declared[&n] {
                return Err(err(
                    hdr_line,
                    &format!("\\data\\ declares {} {n}-grams, section has {}", declared[&n], levels[n - 1].entries.len()),
                ));
            }
            match next {
                Some(nx) => current = nx,
                None => break,
            }
        }
        if !seen_end {
            return Err(err(text.lines().count(), "missing \\end\\"));
        }
        if levels.iter().any(|l| l.entries.is_empty()) {
            return Err(err(text.lines().count(), "missing n-gram section"));
        }
        if !seen_unk {
            levels[0].insert(ROOT, UNK_ID, -100.0);
        }
        Ok(NGramModel {
            order,
            vocab,
            discounts: Vec::new(),
            levels,
        })
    }

    pub fn save_arpa(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::cli::write_atomic(path.as_ref(), self.to_arpa().as_bytes())
    }

    pub fn load_arpa(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_arpa(&text)
    }
}

fn section_order(line: &str) -> Option<usize> {
    line.strip_prefix('\\')?.strip_suffix("-grams:")?.parse().ok()
}
