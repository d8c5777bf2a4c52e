//! Repair of untranslated words in decoder output: a medical dictionary
//! pass, then an external translation service for what remains.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::decoder::TranslationOutput;
use crate::{Error, Result};

pub const OOV_OPEN: char = '⟦';
pub const OOV_CLOSE: char = '⟧';
pub const DEFAULT_MAX_WINDOW: usize = 4;

fn fold(s: &str) -> String {
    s.to_lowercase()
}

/// Strips the `⟦…⟧` marker, if present.
pub fn unmark(token: &str) -> Option<&str> {
    token.strip_prefix(OOV_OPEN)?.strip_suffix(OOV_CLOSE)
}

/// Positions of untranslated tokens: the decoder's `oov_spans` plus any
/// token wrapped in `⟦…⟧`, sorted and deduplicated.
pub fn detect_oov(output: &TranslationOutput) -> Vec<usize> {
    let mut v: Vec<usize> = output
        .oov_spans
        .iter()
        .copied()
        .filter(|&i| i < output.tokens.len())
        .chain(output.tokens.iter().enumerate().filter(|(_, t)| unmark(t).is_some()).map(|(i, _)| i))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    /// Translations in priority order; the first one is used.
    pub translations: Vec<String>,
    pub note: String,
}

/// Source terms of one or more tokens (case-folded) to translations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MedicalDictionary {
    entries: BTreeMap<Vec<String>, DictionaryEntry>,
    max_key_len: usize,
}

impl MedicalDictionary {
    pub fn insert(&mut self, term: &str, translations: Vec<String>, note: &str) -> Result<()> {
        let key: Vec<String> = term.split_whitespace().map(fold).collect();
        if key.is_empty() {
            return Err(Error::validation("empty dictionary term"));
        }
        if translations.is_empty() || translations.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::validation(format!("dictionary term {term:?} has an empty translation")));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::validation(format!("duplicate dictionary term {term:?}")));
        }
        self.max_key_len = self.max_key_len.max(key.len());
        self.entries.insert(
            key,
            DictionaryEntry {
                translations,
                note: note.to_string(),
            },
        );
        Ok(())
    }

    pub fn get(&self, tokens: &[String]) -> Option<&DictionaryEntry> {
        let key: Vec<String> = tokens.iter().map(|t| fold(t)).collect();
        self.entries.get(&key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_key_len(&self) -> usize {
        self.max_key_len
    }

    /// `term<TAB>tr1;tr2;…<TAB>note`; the note column is optional.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut d = MedicalDictionary::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&cols.len()) {
                return Err(Error::parse("dictionary", n + 1, "expected term<TAB>translations[<TAB>note]"));
            }
            let translations = cols[1].split(';').map(|t| t.trim().to_string()).collect();
            d.insert(cols[0], translations, cols.get(2).copied().unwrap_or(""))
                .map_err(|e| Error::parse("dictionary", n + 1, e.to_string()))?;
        }
        Ok(d)
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|(k, e)| format!("{}\t{}\t{}\n", k.join(" "), e.translations.join(";"), e.note))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditSource {
    Dictionary,
    External,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    /// Position in the output the edit was applied to.
    pub position: usize,
    pub original: String,
    pub replacement: String,
    pub source: EditSource,
    /// All candidate translations considered (dictionary hits).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PostEditReport {
    pub edits: Vec<EditRecord>,
}

impl PostEditReport {
    /// Positions still unresolved.
    pub fn unresolved(&self) -> Vec<usize> {
        self.edits.iter().filter(|e| e.source == EditSource::None).map(|e| e.position).collect()
    }

    pub fn count(&self, source: EditSource) -> usize {
        self.edits.iter().filter(|e| e.source == source).count()
    }
}

/// Rebuilds `output` with `replacements` (start position, consumed token
/// count, new tokens, sorted by start). `still_oov` become the new
/// `oov_spans`. Also returns the old-to-new position map.
fn splice(output: &TranslationOutput, replacements: &[(usize, usize, Vec<String>)], still_oov: &[usize]) -> (TranslationOutput, Vec<usize>) {
    let mut tokens = Vec::with_capacity(output.tokens.len());
    let mut new_pos = vec![0usize; output.tokens.len() + 1];
    let mut r = replacements.iter().peekable();
    let mut i = 0;
    while i < output.tokens.len() {
        new_pos[i] = tokens.len();
        if let Some((start, len, repl)) = r.peek() {
            if *start == i {
                tokens.extend(repl.iter().cloned());
                for k in i + 1..i + len {
                    new_pos[k] = tokens.len();
                }
                i += len;
                r.next();
                continue;
            }
        }
        tokens.push(output.tokens[i].clone());
        i += 1;
    }
    new_pos[output.tokens.len()] = tokens.len();
    let mut oov_spans: Vec<usize> = still_oov.iter().map(|&p| new_pos[p]).collect();
    oov_spans.sort_unstable();
    (
        TranslationOutput {
            tokens,
            oov_spans,
            model_score: output.model_score,
            segmentation: output.segmentation.clone(),
        },
        new_pos,
    )
}

/// Replaces OOV tokens (or the longest run of consecutive OOV tokens, up to
/// `max_window`) by their first-priority dictionary translation. Non-OOV
/// tokens are never touched.
pub fn apply_dictionary(output: &TranslationOutput, dict: &MedicalDictionary, max_window: usize) -> (TranslationOutput, PostEditReport) {
    let oov = detect_oov(output);
    let is_oov: Vec<bool> = {
        let mut v = vec![false; output.tokens.len()];
        oov.iter().for_each(|&i| v[i] = true);
        v
    };
    let plain: Vec<String> = output.tokens.iter().map(|t| unmark(t).unwrap_or(t).to_string()).collect();
    let window = max_window.max(1).min(dict.max_key_len().max(1));
    let mut report = PostEditReport::default();
    let mut replacements = Vec::new();
    let mut remaining = Vec::new();
    let mut k = 0;
    while k < oov.len() {
        let start = oov[k];
        let mut run = 1;
        while run < window && start + run < is_oov.len() && is_oov[start + run] {
            run += 1;
        }
        let hit = (1..=run).rev().find_map(|len| dict.get(&plain[start..start + len]).map(|e| (len, e)));
        match hit {
            Some((len, entry)) => {
                let repl: Vec<String> = entry.translations[0].split_whitespace().map(str::to_string).collect();
                report.edits.push(EditRecord {
                    position: start,
                    original: plain[start..start + len].join(" "),
                    replacement: repl.join(" "),
                    source: EditSource::Dictionary,
                    alternatives: entry.translations.clone(),
                });
                replacements.push((start, len, repl));
                k += len;
            }
            None => {
                report.edits.push(EditRecord {
                    position: start,
                    original: plain[start].clone(),
                    replacement: plain[start].clone(),
                    source: EditSource::None,
                    alternatives: Vec::new(),
                });
                remaining.push(start);
                k += 1;
            }
        }
    }
    let (edited, new_pos) = splice(output, &replacements, &remaining);
    for e in &mut report.edits {
        e.position = new_pos[e.position];
    }
    (edited, report)
}

/// Source of translations for single terms.
pub trait ExternalTranslator: Send + Sync {
    /// `None` on any failure; implementations log the reason.
    fn translate(&self, term: &str, source_lang: &str, target_lang: &str) -> Option<String>;
}

/// Local map standing in for a live service; never touches the network.
#[derive(Clone, Debug, Default)]
pub struct OfflineStub {
    pub map: HashMap<String, String>,
}

impl OfflineStub {
    pub fn new<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        OfflineStub {
            map: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// `term<TAB>translation` lines.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("translator stub", n + 1, "expected term<TAB>translation"))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(OfflineStub { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_tsv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

impl ExternalTranslator for OfflineStub {
    fn translate(&self, term: &str, _: &str, _: &str) -> Option<String> {
        self.map.get(term).or_else(|| self.map.get(&fold(term))).cloned()
    }
}

/// HTTP client: POSTs `{q, source, target}` and reads `{translatedText}`.
pub struct LiveTranslator {
    pub endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl LiveTranslator {
    /// `token_env` names the environment variable holding a bearer token;
    /// it is read once here and never logged.
    pub fn new(endpoint: &str, token_env: &str, timeout: Duration) -> Self {
        LiveTranslator {
            endpoint: endpoint.to_string(),
            token: std::env::var(token_env).ok().filter(|t| !t.is_empty()),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct Response {
    #[serde(rename = "translatedText")]
    translated_text: String,
}

impl ExternalTranslator for LiveTranslator {
    fn translate(&self, term: &str, source_lang: &str, target_lang: &str) -> Option<String> {
        let mut req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let body = serde_json::to_string(&Request {
            q: term,
            source: source_lang,
            target: target_lang,
        })
        .ok()?;
        match req.send_string(&body) {
            Ok(resp) => match resp.into_string().map(|s| serde_json::from_str::<Response>(&s)) {
                Ok(Ok(r)) if !r.translated_text.trim().is_empty() => Some(r.translated_text),
                Ok(_) => {
                    log::warn!("translation service returned an unusable body for {term:?}");
                    None
                }
                Err(e) => {
                    log::warn!("reading translation response for {term:?}: {e}");
                    None
                }
            },
            Err(e) => {
                log::warn!("translation request for {term:?} failed: {e}");
                None
            }
        }
    }
}

/// Sends each OOV token at `positions` to `client`, one request per term,
/// replacing it on success.
pub fn resolve_with_external(
    output: &TranslationOutput,
    positions: &[usize],
    client: &dyn ExternalTranslator,
    langs: (&str, &str),
) -> (TranslationOutput, PostEditReport) {
    let (edited, report, _) = resolve(output, positions, client, langs);
    (edited, report)
}

fn resolve(
    output: &TranslationOutput,
    positions: &[usize],
    client: &dyn ExternalTranslator,
    langs: (&str, &str),
) -> (TranslationOutput, PostEditReport, Vec<usize>) {
    let mut positions: Vec<usize> = positions.iter().copied().filter(|&p| p < output.tokens.len()).collect();
    positions.sort_unstable();
    positions.dedup();
    let mut report = PostEditReport::default();
    let mut replacements = Vec::new();
    let mut remaining = Vec::new();
    for &p in &positions {
        let term = unmark(&output.tokens[p]).unwrap_or(&output.tokens[p]).to_string();
        match client.translate(&term, langs.0, langs.1) {
            Some(t) => {
                let repl: Vec<String> = t.split_whitespace().map(str::to_string).collect();
                report.edits.push(EditRecord {
                    position: p,
                    original: term,
                    replacement: repl.join(" "),
                    source: EditSource::External,
                    alternatives: Vec::new(),
                });
                replacements.push((p, 1, repl));
            }
            None => {
                report.edits.push(EditRecord {
                    position: p,
                    original: term.clone(),
                    replacement: term,
                    source: EditSource::None,
                    alternatives: Vec::new(),
                });
                remaining.push(p);
            }
        }
    }
    let untouched = output.oov_spans.iter().copied().filter(|p| !positions.contains(p));
    let keep: Vec<usize> = remaining.iter().copied().chain(untouched).collect();
    let (edited, new_pos) = splice(output, &replacements, &keep);
    for e in &mut report.edits {
        e.position = new_pos[e.position];
    }
    (edited, report, new_pos)
}

/// Which external client to use.
pub enum TranslatorMode {
    Offline(OfflineStub),
    Live(LiveTranslator),
}

impl TranslatorMode {
    pub fn client(&self) -> &dyn ExternalTranslator {
        match self {
            TranslatorMode::Offline(s) => s,
            TranslatorMode::Live(l) => l,
        }
    }
}

/// Dictionary pass, then external pass on what it left, per sentence.
/// Markers are stripped from the final tokens.
pub fn post_edit_pipeline(
    outputs: &[TranslationOutput],
    dict: &MedicalDictionary,
    client: &dyn ExternalTranslator,
    langs: (&str, &str),
    max_window: usize,
) -> (Vec<TranslationOutput>, Vec<PostEditReport>) {
    outputs
        .iter()
        .map(|out| {
            let (after_dict, mut report) = apply_dictionary(out, dict, max_window);
            let pending = report.unresolved();
            let (mut edited, ext, new_pos) = resolve(&after_dict, &pending, client, langs);
            let mut edits: Vec<EditRecord> = report.edits.drain(..).filter(|e| e.source == EditSource::Dictionary).collect();
            for e in &mut edits {
                e.position = new_pos[e.position];
            }
            edits.extend(ext.edits);
            edits.sort_by_key(|e| e.position);
            for t in &mut edited.tokens {
                if let Some(inner) = unmark(t) {
                    *t = inner.to_string();
                }
            }
            (edited, PostEditReport { edits })
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(tokens: &str, oov: &[usize]) -> TranslationOutput {
        TranslationOutput {
            tokens: tokens.split_whitespace().map(str::to_string).collect(),
            oov_spans: oov.to_vec(),
            model_score: 0.0,
            segmentation: Vec::new(),
        }
    }

    fn dict(rows: &[(&str, &str)]) -> MedicalDictionary {
        let mut d = MedicalDictionary::default();
        for (k, v) in rows {
            d.insert(k, v.split(';').map(str::to_string).collect(), "").unwrap();
        }
        d
    }

    #[test]
    fn detection() {
        assert_eq!(detect_oov(&out("a b c", &[2])), vec![2]);
        assert!(detect_oov(&out("a b", &[])).is_empty());
        assert_eq!(detect_oov(&out("⟦x⟧ b c d", &[3])), vec![0, 3]);
    }

    #[test]
    fn dictionary_replacement() {
        let d = dict(&[("paracetamol", "پاراسیتامۆل")]);
        let (e, r) = apply_dictionary(&out("بخۆ Paracetamol ڕۆژانە", &[1]), &d, 4);
        assert_eq!(e.tokens[1], "پاراسیتامۆل");
        assert_eq!(r.edits[0].source, EditSource::Dictionary);
        assert!(e.oov_spans.is_empty());

        let (e, r) = apply_dictionary(&out("a zzz", &[1]), &d, 4);
        assert_eq!(e.tokens, vec!["a", "zzz"]);
        assert_eq!(r.edits[0].source, EditSource::None);
        assert_eq!(e.oov_spans, vec![1]);
    }

    #[test]
    fn longest_match_wins() {
        let d = dict(&[("folic", "F"), ("folic acid", "ترشی فۆلیک"), ("acid", "A")]);
        let (e, r) = apply_dictionary(&out("x folic acid y zzz", &[1, 2, 4]), &d, 4);
        assert_eq!(e.tokens, vec!["x", "ترشی", "فۆلیک", "y", "zzz"]);
        assert_eq!(r.count(EditSource::Dictionary), 1);
        assert_eq!(e.oov_spans, vec![4]);
        assert_eq!(r.unresolved(), vec![4]);
    }

    #[test]
    fn external_stub() {
        let stub = OfflineStub::new([("xyz", "abc")]);
        let (e, r) = resolve_with_external(&out("q xyz", &[1]), &[1], &stub, ("en", "ckb"));
        assert_eq!(e.tokens, vec!["q", "abc"]);
        assert_eq!(r.edits[0].source, EditSource::External);
        let (e, r) = resolve_with_external(&out("q uvw", &[1]), &[1], &stub, ("en", "ckb"));
        assert_eq!(e.tokens, vec!["q", "uvw"]);
        assert_eq!(r.edits[0].source, EditSource::None);
    }

    struct Counting(std::sync::atomic::AtomicUsize);
    impl ExternalTranslator for Counting {
        fn translate(&self, _: &str, _: &str, _: &str) -> Option<String> {
            self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            None
        }
    }

    #[test]
    fn dictionary_first_then_external() {
        let d = dict(&[("aa", "AA")]);
        let client = Counting(Default::default());
        let (edited, _) = post_edit_pipeline(&[out("aa b aa", &[0, 2]), out("c d", &[])], &d, &client, ("en", "ckb"), 4);
        assert_eq!(client.0.load(std::sync::atomic::Ordering::SeqCst), 0);
        assert_eq!(edited[0].tokens, vec!["AA", "b", "AA"]);
        assert_eq!(edited[1], out("c d", &[]));
        let (_, reports) = post_edit_pipeline(&[out("aa zz", &[0, 1])], &d, &client, ("en", "ckb"), 4);
        assert_eq!(client.0.load(std::sync::atomic::Ordering::SeqCst), 1);
        assert_eq!(reports[0].edits.len(), 2);
    }

    #[test]
    fn dictionary_tsv() {
        let d = MedicalDictionary::from_tsv("Folic acid\tترشی فۆلیک;فۆلیک\tvitamin\nibuprofen\tئیبوپرۆفین\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(MedicalDictionary::from_tsv(&d.to_tsv()).unwrap(), d);
        assert!(MedicalDictionary::from_tsv("a\t\n").is_err());
        assert!(MedicalDictionary::from_tsv("A\tx\na\ty\n").is_err());
    }

    #[test]
    fn live_success_and_timeout() {
        use std::io::{Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut req = Vec::new();
            let mut buf = [0u8; 4096];
            while !String::from_utf8_lossy(&req).ends_with('}') {
                let n = s.read(&mut buf).unwrap();
                assert!(n > 0, "client closed early");
                req.extend_from_slice(&buf[..n]);
            }
            assert!(String::from_utf8_lossy(&req).contains("\"q\":\"xyz\""));
            let body = r#"{"translatedText":"abc"}"#;
            write!(s, "HTTP/1.1 200 OK\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{}", body.len(), body).unwrap();
        });
        let client = LiveTranslator::new(&format!("http://{addr}/translate"), "PBSMT_TEST_UNSET_TOKEN", Duration::from_millis(2000));
        assert_eq!(client.translate("xyz", "en", "ckb").as_deref(), Some("abc"));
        server.join().unwrap();

        // a service that accepts but never answers
        let silent = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = silent.local_addr().unwrap();
        let client = LiveTranslator::new(&format!("http://{addr}/translate"), "PBSMT_TEST_UNSET_TOKEN", Duration::from_millis(200));
        let (e, r) = resolve_with_external(&out("q xyz", &[1]), &[1], &client, ("en", "ckb"));
        assert_eq!(e.tokens, vec!["q", "xyz"]);
        assert_eq!(r.edits[0].source, EditSource::None);
        drop(silent);
    }
}
