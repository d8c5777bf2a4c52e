use std::collections::HashSet;
use std::fs;
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;

use super::{Brochure, ParallelCorpus, SentencePair};
use crate::{Error, Result};

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Encoding {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })
}

/// Splits on LF, tolerating a trailing newline and CRLF endings.
fn lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect()
}

/// Loads a pair of one-sentence-per-line files as a single-brochure corpus.
pub fn load_plaintext(src_path: impl AsRef<Path>, tgt_path: impl AsRef<Path>) -> Result<ParallelCorpus> {
    let src_path = src_path.as_ref();
    let tgt_path = tgt_path.as_ref();
    let src = read_utf8(src_path)?;
    let tgt = read_utf8(tgt_path)?;
    let (s, t) = (lines(&src), lines(&tgt));
    if s.len() != t.len() {
        return Err(Error::Alignment {
            source_lines: s.len(),
            target_lines: t.len(),
        });
    }
    if s.is_empty() {
        return Ok(ParallelCorpus::empty());
    }
    let id = src_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    Ok(ParallelCorpus::from_lines(&id, s.into_iter().zip(t)))
}

/// Writes the two sides of a corpus as plain-text files, LF terminated.
pub fn save_plaintext(corpus: &ParallelCorpus, src_path: impl AsRef<Path>, tgt_path: impl AsRef<Path>) -> Result<()> {
    let mut src = String::new();
    let mut tgt = String::new();
    for p in corpus.pairs() {
        src.push_str(&p.source);
        src.push('\n');
        tgt.push_str(&p.target);
        tgt.push('\n');
    }
    crate::cli::write_atomic(src_path.as_ref(), src.as_bytes())?;
    crate::cli::write_atomic(tgt_path.as_ref(), tgt.as_bytes())
}

pub(crate) fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Serializes to the brochure XML layout: one `<pair>` per line, one line
/// per brochure tag. A corpus of `B` brochures and `N` pairs yields exactly
/// `N + 2B + 2` lines.
pub fn to_brochure_xml(corpus: &ParallelCorpus) -> String {
    let mut out = String::from("<corpus>\n");
    for b in &corpus.brochures {
        out.push_str(&format!("<brochure id=\"{}\"", escape(&b.id)));
        if !b.category.is_empty() {
            out.push_str(&format!(" category=\"{}\"", escape(&b.category)));
        }
        out.push_str(">\n");
        for p in &b.pairs {
            out.push_str(&format!(
                "<pair><src>{}</src><tgt>{}</tgt></pair>\n",
                escape(&p.source),
                escape(&p.target)
            ));
        }
        out.push_str("</brochure>\n");
    }
    out.push_str("</corpus>\n");
    out
}

pub fn save_brochure_xml(corpus: &ParallelCorpus, path: impl AsRef<Path>) -> Result<()> {
    crate::cli::write_atomic(path.as_ref(), to_brochure_xml(corpus).as_bytes())
}

pub fn load_brochure_xml(path: impl AsRef<Path>) -> Result<ParallelCorpus> {
    let path = path.as_ref();
    parse_brochure_xml(&read_utf8(path)?)
}

fn line_of(text: &str, pos: usize) -> usize {
    let pos = pos.min(text.len());
    text.as_bytes()[..pos].iter().filter(|&&b| b == b'\n').count() + 1
}

fn attr(e: &quick_xml::events::BytesStart<'_>, name: &[u8]) -> std::result::Result<Option<String>, String> {
    for a in e.attributes() {
        let a = a.map_err(|e| e.to_string())?;
        if a.key.as_ref() == name {
            return a
                .unescape_value()
                .map(|v| Some(v.into_owned()))
                .map_err(|e| e.to_string());
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    None,
    Src,
    Tgt,
}

/// Parses brochure XML text (see [`to_brochure_xml`] for the layout).
pub fn parse_brochure_xml(text: &str) -> Result<ParallelCorpus> {
    let what = "brochure xml";
    let mut reader = Reader::from_str(text);
    let mut brochures: Vec<Brochure> = Vec::new();
    let mut ids = HashSet::new();
    let mut current: Option<(String, String, Vec<(String, String)>)> = None;
    let mut pair: Option<(String, String)> = None;
    let mut field = Field::None;
    let mut saw_root = false;

    loop {
        let pos = reader.buffer_position() as usize;
        let ev = reader
            .read_event()
            .map_err(|e| Error::parse(what, line_of(text, reader.error_position() as usize), e.to_string()))?;
        let bad = |msg: String| Error::parse(what, line_of(text, pos), msg);
        match ev {
            Event::Start(e) => match e.name().as_ref() {
                b"corpus" => saw_root = true,
                b"brochure" => {
                    if current.is_some() {
                        return Err(bad("nested <brochure>".into()));
                    }
                    let id = attr(&e, b"id")
                        .map_err(&bad)?
                        .ok_or_else(|| bad("<brochure> without id attribute".into()))?;
                    let category = attr(&e, b"category").map_err(&bad)?.unwrap_or_default();
                    current = Some((id, category, Vec::new()));
                }
                b"pair" => {
                    if current.is_none() {
                        return Err(bad("<pair> outside <brochure>".into()));
                    }
                    pair = Some((String::new(), String::new()));
                }
                b"src" => field = Field::Src,
                b"tgt" => field = Field::Tgt,
                other => return Err(bad(format!("unexpected element <{}>", String::from_utf8_lossy(other)))),
            },
            Event::Empty(e) => match e.name().as_ref() {
                b"src" | b"tgt" if pair.is_some() => {}
                b"brochure" => {
                    let id = attr(&e, b"id")
                        .map_err(&bad)?
                        .ok_or_else(|| bad("<brochure> without id attribute".into()))?;
                    let category = attr(&e, b"category").map_err(&bad)?.unwrap_or_default();
                    if !ids.insert(id.clone()) {
                        return Err(Error::validation(format!("duplicate brochure id {id:?}")));
                    }
                    brochures.push(Brochure::new(id, category, Vec::<(String, String)>::new()));
                }
                other => return Err(bad(format!("unexpected empty element <{}/>", String::from_utf8_lossy(other)))),
            },
            Event::Text(t) => {
                if field != Field::None {
                    let s = t.unescape().map_err(|e| bad(e.to_string()))?;
                    if let Some((src, tgt)) = pair.as_mut() {
                        match field {
                            Field::Src => src.push_str(&s),
                            Field::Tgt => tgt.push_str(&s),
                            Field::None => {}
                        }
                    }
                } else if !t.iter().all(u8::is_ascii_whitespace) {
                    return Err(bad("stray text outside <src>/<tgt>".into()));
                }
            }
            Event::CData(t) => {
                let s = String::from_utf8_lossy(&t).into_owned();
                if let Some((src, tgt)) = pair.as_mut() {
                    match field {
                        Field::Src => src.push_str(&s),
                        Field::Tgt => tgt.push_str(&s),
                        Field::None => return Err(bad("stray CDATA".into())),
                    }
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"src" | b"tgt" => field = Field::None,
                b"pair" => {
                    let p = pair.take().ok_or_else(|| bad("unbalanced </pair>".into()))?;
                    if let Some((_, _, pairs)) = current.as_mut() {
                        pairs.push(p);
                    }
                }
                b"brochure" => {
                    let (id, category, pairs) = current.take().ok_or_else(|| bad("unbalanced </brochure>".into()))?;
                    if !ids.insert(id.clone()) {
                        return Err(Error::validation(format!("duplicate brochure id {id:?}")));
                    }
                    brochures.push(Brochure::new(id, category, pairs));
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_root && !brochures.is_empty() {
        return Err(Error::parse(what, 1, "missing <corpus> root"));
    }
    if current.is_some() {
        return Err(Error::parse(what, line_of(text, text.len()), "unterminated <brochure>"));
    }
    for b in &brochures {
        for p in &b.pairs {
            check_single_line(p)?;
        }
    }
    Ok(ParallelCorpus::new(brochures))
}

fn check_single_line(p: &SentencePair) -> Result<()> {
    if p.source.contains('\n') || p.target.contains('\n') {
        return Err(Error::validation(format!(
            "brochure {:?} line {} contains a line break",
            p.origin_brochure, p.origin_line
        )));
    }
    Ok(())
}

pub fn load_tmx(path: impl AsRef<Path>) -> Result<ParallelCorpus> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tmx".to_string());
    parse_tmx(&read_utf8(path)?, &id)
}

/// Parses TMX 1.4: each `<tu>` contributes one pair. The variant whose
/// `xml:lang` matches the header `srclang` is the source; otherwise the
/// first variant is.
pub fn parse_tmx(text: &str, id: &str) -> Result<ParallelCorpus> {
    let what = "tmx";
    let mut reader = Reader::from_str(text);
    let mut srclang: Option<String> = None;
    let mut pairs = Vec::new();
    let mut tu: Option<Vec<(Option<String>, String)>> = None;
    let mut in_seg = false;

    loop {
        let pos = reader.buffer_position() as usize;
        let ev = reader
            .read_event()
            .map_err(|e| Error::parse(what, line_of(text, reader.error_position() as usize), e.to_string()))?;
        let bad = |msg: String| Error::parse(what, line_of(text, pos), msg);
        match ev {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"header" => {
                srclang = attr(&e, b"srclang").map_err(&bad)?;
            }
            Event::Start(e) => match e.name().as_ref() {
                b"tu" => tu = Some(Vec::new()),
                b"tuv" => {
                    let lang = match attr(&e, b"xml:lang").map_err(&bad)? {
                        Some(l) => Some(l),
                        None => attr(&e, b"lang").map_err(&bad)?,
                    };
                    tu.as_mut()
                        .ok_or_else(|| bad("<tuv> outside <tu>".into()))?
                        .push((lang, String::new()));
                }
                b"seg" => in_seg = true,
                _ => {}
            },
            Event::Empty(e) if e.name().as_ref() == b"tuv" => {
                let lang = attr(&e, b"xml:lang").map_err(&bad)?;
                if let Some(v) = tu.as_mut() {
                    v.push((lang, String::new()));
                }
            }
            Event::Text(t) if in_seg => {
                let s = t.unescape().map_err(|e| bad(e.to_string()))?;
                if let Some((_, seg)) = tu.as_mut().and_then(|v| v.last_mut()) {
                    seg.push_str(&s);
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"seg" => in_seg = false,
                b"tu" => {
                    let v = tu.take().ok_or_else(|| bad("unbalanced </tu>".into()))?;
                    if v.len() != 2 {
                        return Err(bad(format!("<tu> has {} variants, expected 2", v.len())));
                    }
                    let src_first = match (&srclang, &v[1].0) {
                        (Some(sl), Some(l1)) => !l1.eq_ignore_ascii_case(sl),
                        _ => true,
                    };
                    let mut it = v.into_iter().map(|(_, s)| s);
                    let (a, b) = (it.next().unwrap(), it.next().unwrap());
                    pairs.push(if src_first { (a, b) } else { (b, a) });
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    let corpus = if pairs.is_empty() {
        ParallelCorpus::empty()
    } else {
        ParallelCorpus::from_lines(id, pairs)
    };
    for p in corpus.pairs() {
        check_single_line(p)?;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Brochure;

    #[test]
    fn plaintext_loads_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("a.en"), dir.path().join("a.ckb"));
        fs::write(&s, "one\ntwo\nthree\n").unwrap();
        fs::write(&t, "یەک\nدوو\nسێ\n").unwrap();
        let c = load_plaintext(&s, &t).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.pairs().nth(2).unwrap().target, "سێ");
        c.validate().unwrap();
    }

    #[test]
    fn plaintext_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("a"), dir.path().join("b"));
        fs::write(&s, "").unwrap();
        fs::write(&t, "").unwrap();
        assert_eq!(load_plaintext(&s, &t).unwrap().len(), 0);
    }

    #[test]
    fn plaintext_mismatch_names_both_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("a"), dir.path().join("b"));
        fs::write(&s, "1\n2\n3\n").unwrap();
        fs::write(&t, "1\n2\n").unwrap();
        match load_plaintext(&s, &t) {
            Err(Error::Alignment { source_lines: 3, target_lines: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn plaintext_reports_encoding_offset() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("a"), dir.path().join("b"));
        fs::write(&s, b"ok\nab\xffc\n").unwrap();
        fs::write(&t, "1\n2\n").unwrap();
        match load_plaintext(&s, &t) {
            Err(Error::Encoding { offset: 5, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn xml_roundtrip_and_line_count() {
        let c = ParallelCorpus::new(vec![
            Brochure::new("b1", "analgesic", [("Take <2> & rest", "x"), ("b", "y")]),
            Brochure::new("b2", "", [("c", "z")]),
        ]);
        let xml = to_brochure_xml(&c);
        assert_eq!(xml.lines().count(), 3 + 2 * 2 + 2);
        let back = parse_brochure_xml(&xml).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn xml_single_pair() {
        let c = parse_brochure_xml(
            "<corpus>\n<brochure id=\"b1\">\n<pair><src>a</src><tgt>b</tgt></pair>\n</brochure>\n</corpus>\n",
        )
        .unwrap();
        assert_eq!(c.num_brochures(), 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c.brochures[0].category, "");
    }

    #[test]
    fn xml_duplicate_id_is_validation_error() {
        let text = "<corpus>\n<brochure id=\"b1\"><pair><src>a</src><tgt>b</tgt></pair></brochure>\n\
                    <brochure id=\"b1\"><pair><src>c</src><tgt>d</tgt></pair></brochure>\n</corpus>";
        assert!(matches!(parse_brochure_xml(text), Err(Error::Validation(_))));
    }

    #[test]
    fn xml_malformed_reports_line() {
        let text = "<corpus>\n<brochure id=\"b1\">\n<pair><src>a</tgt></pair>\n</brochure>\n</corpus>";
        match parse_brochure_xml(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tmx_respects_srclang() {
        let text = r#"<?xml version="1.0" encoding="UTF-8"?>
<tmx version="1.4"><header srclang="en" segtype="sentence"/>
<body>
<tu><tuv xml:lang="ckb"><seg>دوو</seg></tuv><tuv xml:lang="en"><seg>two</seg></tuv></tu>
<tu><tuv xml:lang="en"><seg>one</seg></tuv><tuv xml:lang="ckb"><seg>یەک</seg></tuv></tu>
</body></tmx>"#;
        let c = parse_tmx(text, "t").unwrap();
        let v: Vec<_> = c.pairs().map(|p| (p.source.as_str(), p.target.as_str())).collect();
        assert_eq!(v, vec![("two", "دوو"), ("one", "یەک")]);
    }
}
