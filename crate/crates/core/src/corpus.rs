//! Documents with annotated mention spans, the corpus text format, the
//! sliding neighbor window and the synthetic corpus generator.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kb::SyntheticKb;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub gold: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Builds a document from `(start, end, gold)` spans; surfaces come from the tokens.
    pub fn new(id: impl Into<String>, tokens: Vec<String>, spans: &[(usize, usize, Option<String>)]) -> Result<Self> {
        let id = id.into();
        let mentions = spans
            .iter()
            .map(|(s, e, g)| Mention {
                start: *s,
                end: *e,
                surface: if *s < *e && *e <= tokens.len() {
                    tokens[*s..*e].join(" ")
                } else {
                    String::new()
                },
                gold: g.clone(),
            })
            .collect();
        let doc = Document { id, tokens, mentions };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("document `{}`: {msg}", self.id)));
        let mut prev: Option<&Mention> = None;
        for m in &self.mentions {
            if m.end <= m.start {
                return bad(format!("empty span [{}, {})", m.start, m.end));
            }
            if m.end > self.tokens.len() {
                return bad(format!(
                    "span [{}, {}) exceeds {} tokens",
                    m.start,
                    m.end,
                    self.tokens.len()
                ));
            }
            if let Some(p) = prev {
                if m.start < p.end {
                    return bad(format!(
                        "spans [{}, {}) and [{}, {}) overlap or are out of order",
                        p.start, p.end, m.start, m.end
                    ));
                }
            }
            let joined = self.tokens[m.start..m.end].join(" ");
            if joined != m.surface {
                return bad(format!("surface `{}` does not match tokens `{joined}`", m.surface));
            }
            prev = Some(m);
        }
        Ok(())
    }
}

/// Mention indices within `q` positions of `i`, excluding `i`, in order.
pub fn neighbors(mention_count: usize, i: usize, q: usize) -> Vec<usize> {
    let lo = i.saturating_sub(q);
    let hi = (i + q).min(mention_count.saturating_sub(1));
    (lo..=hi).filter(|&j| j != i && j < mention_count).collect()
}

/// Positional window: slot `p < 2q` maps to mention `i - q + p` (left half)
/// or `i + 1 + p - q` (right half); `None` past the document boundary.
pub fn window_slots(mention_count: usize, i: usize, q: usize) -> Vec<Option<usize>> {
    (0..2 * q)
        .map(|p| {
            let j = if p < q {
                (i + p).checked_sub(q)
            } else {
                Some(i + 1 + p - q)
            };
            j.filter(|&j| j < mention_count)
        })
        .collect()
}

pub fn write_corpus(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        let _ = writeln!(out, "doc {}", d.id);
        let _ = writeln!(out, "text {}", d.tokens.join(" "));
        for m in &d.mentions {
            let _ = writeln!(out, "mention {} {} {}", m.start, m.end, m.gold.as_deref().unwrap_or("-"));
        }
        out.push('\n');
    }
    out
}

pub fn save_corpus(docs: &[Document], path: &Path) -> Result<()> {
    std::fs::write(path, write_corpus(docs)).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path)
}

pub fn parse_corpus(text: &str, origin: &Path) -> Result<Vec<Document>> {
    struct Pending {
        id: String,
        line: usize,
        tokens: Option<Vec<String>>,
        spans: Vec<(usize, usize, Option<String>)>,
    }
    let finish = |p: Pending| -> Result<Document> {
        let tokens = p
            .tokens
            .ok_or_else(|| Error::parse(origin, p.line, format!("document `{}` has no text line", p.id)))?;
        Document::new(p.id, tokens, &p.spans).map_err(|e| Error::parse(origin, p.line, e.to_string()))
    };

    let mut docs = Vec::new();
    let mut cur: Option<Pending> = None;
    for (lineno, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (kind, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match kind {
            "doc" => {
                if let Some(p) = cur.take() {
                    docs.push(finish(p)?);
                }
                let id = rest.trim();
                if id.is_empty() || id.contains(char::is_whitespace) {
                    return Err(Error::parse(origin, lineno, "document id must be one token"));
                }
                cur = Some(Pending {
                    id: id.to_string(),
                    line: lineno,
                    tokens: None,
                    spans: Vec::new(),
                });
            }
            "text" => {
                let p = cur
                    .as_mut()
                    .ok_or_else(|| Error::parse(origin, lineno, "`text` before `doc`"))?;
                if p.tokens.is_some() {
                    return Err(Error::parse(origin, lineno, "second `text` line in document"));
                }
                p.tokens = Some(rest.split_whitespace().map(str::to_string).collect());
            }
            "mention" => {
                let p = cur
                    .as_mut()
                    .ok_or_else(|| Error::parse(origin, lineno, "`mention` before `doc`"))?;
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(Error::parse(origin, lineno, "expected `mention <start> <end> <gold|->`"));
                }
                let num = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::parse(origin, lineno, format!("bad offset `{s}`")))
                };
                let gold = (f[2] != "-").then(|| f[2].to_string());
                p.spans.push((num(f[0])?, num(f[1])?, gold));
            }
            other => return Err(Error::parse(origin, lineno, format!("unknown record `{other}`"))),
        }
    }
    if let Some(p) = cur.take() {
        docs.push(finish(p)?);
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusConfig {
    pub docs: usize,
    pub mentions_per_doc: usize,
    /// Probability that a mention uses the surface on which its gold entity trails.
    pub distractor_prob: f64,
    /// Probability that a mention's gold entity comes from outside the document's topic.
    pub outlier_prob: f64,
    /// Tokens between consecutive mentions, drawn uniformly from this range.
    pub gap: (usize, usize),
    /// Per-token probability of a word from the topic of the nearest mention's gold entity.
    pub topic_word_prob: f64,
    /// Per-token probability of a word from some other topic.
    pub off_topic_word_prob: f64,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        SyntheticCorpusConfig {
            docs: 100,
            mentions_per_doc: 6,
            distractor_prob: 0.5,
            outlier_prob: 0.0,
            gap: (22, 30),
            topic_word_prob: 0.03,
            off_topic_word_prob: 0.03,
            seed: 7,
            id_prefix: "d".into(),
        }
    }
}

/// Generates documents whose gold entities share one topic, apart from
/// outlier mentions. Gap words follow the topic of the nearer mention.
pub fn generate_synthetic_corpus(kb: &SyntheticKb, config: &SyntheticCorpusConfig) -> Result<Vec<Document>> {
    let c = config;
    for (name, p) in [("distractor", c.distractor_prob), ("outlier", c.outlier_prob)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
        }
    }
    if c.gap.0 > c.gap.1 {
        return Err(Error::Config("gap range is empty".into()));
    }
    if c.topic_word_prob < 0.0 || c.off_topic_word_prob < 0.0 || c.topic_word_prob + c.off_topic_word_prob > 1.0 {
        return Err(Error::Config("word probabilities must be non-negative and sum to at most 1".into()));
    }
    let topics = kb.members.len();
    if topics == 0 || kb.members.iter().any(Vec::is_empty) {
        return Err(Error::Config("a topic has no entities".into()));
    }
    if c.outlier_prob > 0.0 && topics < 2 {
        return Err(Error::Config("outlier mentions need a second topic".into()));
    }
    if kb.fillers.is_empty() && c.topic_word_prob + c.off_topic_word_prob < 1.0 {
        return Err(Error::Config("synthetic KB has no filler words".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut docs = Vec::with_capacity(c.docs);
    for d in 0..c.docs {
        let topic = rng.gen_range(0..topics);
        let mut pool = kb.members[topic].clone();
        pool.shuffle(&mut rng);
        let mut golds = Vec::with_capacity(c.mentions_per_doc);
        for k in 0..c.mentions_per_doc {
            let gold = if c.outlier_prob > 0.0 && rng.gen_bool(c.outlier_prob) {
                let other = (topic + rng.gen_range(1..topics)) % topics;
                *kb.members[other].choose(&mut rng).expect("non-empty topic")
            } else {
                pool[k % pool.len()]
            };
            let trail = rng.gen_bool(c.distractor_prob);
            golds.push((gold, trail));
        }

        let mut tokens = Vec::new();
        let mut spans = Vec::with_capacity(c.mentions_per_doc);
        for k in 0..=c.mentions_per_doc {
            let len = rng.gen_range(c.gap.0..=c.gap.1);
            let before = k.checked_sub(1).map(|j| kb.topic_of[golds[j].0]);
            let after = golds.get(k).map(|g| kb.topic_of[g.0]);
            for t in 0..len {
                // first half of a gap belongs to the previous mention
                let near = if t < len / 2 { before.or(after) } else { after.or(before) };
                push_word(kb, c, near.unwrap_or(topic), &mut rng, &mut tokens);
            }
            if let Some(&(gold, trail)) = golds.get(k) {
                let surface = if trail {
                    &kb.trail_surface[gold]
                } else {
                    &kb.lead_surface[gold]
                };
                let start = tokens.len();
                tokens.extend(surface.split_whitespace().map(str::to_string));
                spans.push((start, tokens.len(), Some(kb.entity_ids[gold].clone())));
            }
        }
        docs.push(Document::new(format!("{}{d:05}", c.id_prefix), tokens, &spans)?);
    }
    Ok(docs)
}

fn push_word(kb: &SyntheticKb, c: &SyntheticCorpusConfig, topic: usize, rng: &mut ChaCha8Rng, tokens: &mut Vec<String>) {
    let topics = kb.topic_vocab.len();
    let u: f64 = rng.gen();
    let word = if u < c.topic_word_prob {
        kb.topic_vocab[topic].choose(rng)
    } else if u < c.topic_word_prob + c.off_topic_word_prob && topics > 1 {
        let other = (topic + rng.gen_range(1..topics)) % topics;
        kb.topic_vocab[other].choose(rng)
    } else {
        kb.fillers.choose(rng)
    };
    if let Some(w) = word {
        tokens.push(w.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{generate_synthetic_kb, SyntheticKbConfig};

    const FIXTURE: &str = "# one document\n\
        doc d1\n\
        text Hussain considered surplus to England 's requirements as Essex reached 372\n\
        mention 0 1 Nasser_Hussain\n\
        mention 4 5 England_cricket_team\n\
        mention 8 9 -\n";

    #[test]
    fn loads_fixture() {
        let docs = parse_corpus(FIXTURE, Path::new("c")).unwrap();
        assert_eq!(docs.len(), 1);
        let d = &docs[0];
        assert_eq!(d.mentions.len(), 3);
        assert_eq!(d.mentions[1].surface, "England");
        assert_eq!(d.mentions[2].gold, None);
        assert!(d.mentions.windows(2).all(|w| w[0].start < w[1].start));
    }

    #[test]
    fn overlapping_spans_are_rejected_with_both_spans() {
        let text = "doc x\ntext a b c d\nmention 0 2 A\nmention 1 3 B\n";
        let err = parse_corpus(text, Path::new("c")).unwrap_err().to_string();
        assert!(err.contains("[0, 2)") && err.contains("[1, 3)"), "{err}");
    }

    #[test]
    fn out_of_bounds_span_is_rejected() {
        let text = "doc x\ntext a b\nmention 1 3 A\n";
        assert!(parse_corpus(text, Path::new("c")).is_err());
    }

    #[test]
    fn round_trip() {
        let docs = parse_corpus(FIXTURE, Path::new("c")).unwrap();
        let again = parse_corpus(&write_corpus(&docs), Path::new("c")).unwrap();
        assert_eq!(docs, again);
    }

    #[test]
    fn neighbor_windows() {
        assert_eq!(neighbors(5, 2, 1), vec![1, 3]);
        assert_eq!(neighbors(5, 0, 3), vec![1, 2, 3]);
        assert!(neighbors(5, 2, 0).is_empty());
        assert_eq!(neighbors(1, 0, 3), Vec::<usize>::new());
        assert_eq!(window_slots(5, 0, 2), vec![None, None, Some(1), Some(2)]);
        assert_eq!(window_slots(5, 4, 1), vec![Some(3), None]);
    }

    #[test]
    fn synthetic_corpus_is_deterministic_and_coherent() {
        let kb = generate_synthetic_kb(&SyntheticKbConfig::default()).unwrap();
        let cfg = SyntheticCorpusConfig {
            docs: 20,
            ..Default::default()
        };
        let a = generate_synthetic_corpus(&kb, &cfg).unwrap();
        let b = generate_synthetic_corpus(&kb, &cfg).unwrap();
        assert_eq!(a, b);
        for d in &a {
            let topics: Vec<usize> = d
                .mentions
                .iter()
                .map(|m| {
                    let g = m.gold.as_ref().unwrap();
                    kb.topic_of[kb.entity_ids.iter().position(|e| e == g).unwrap()]
                })
                .collect();
            assert!(topics.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn outliers_leave_the_document_topic() {
        let kb = generate_synthetic_kb(&SyntheticKbConfig::default()).unwrap();
        let topic = |g: &str| kb.topic_of[kb.entity_ids.iter().position(|e| e == g).unwrap()];
        let all = generate_synthetic_corpus(
            &kb,
            &SyntheticCorpusConfig {
                docs: 50,
                outlier_prob: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        // with every mention an outlier, consecutive golds rarely share a topic
        let same = all
            .iter()
            .flat_map(|d| d.mentions.windows(2).map(|w| topic(w[0].gold.as_ref().unwrap()) == topic(w[1].gold.as_ref().unwrap())))
            .filter(|&b| b)
            .count();
        assert!(same < 60, "{same}");
        let bad = SyntheticCorpusConfig {
            outlier_prob: 1.5,
            ..Default::default()
        };
        assert!(generate_synthetic_corpus(&kb, &bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn neighbor_invariants(count in 1usize..30, i_frac in 0.0f64..1.0, q in 0usize..6) {
                let i = ((count as f64 - 1.0) * i_frac) as usize;
                let nb = neighbors(count, i, q);
                prop_assert!(!nb.contains(&i));
                prop_assert!(nb.len() <= 2 * q);
                prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
                if q <= i && i + q < count {
                    prop_assert_eq!(nb.len(), 2 * q);
                }
                let slots: Vec<usize> = window_slots(count, i, q).into_iter().flatten().collect();
                prop_assert_eq!(slots, nb);
            }
        }
    }
}
