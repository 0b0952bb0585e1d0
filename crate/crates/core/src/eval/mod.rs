//! Micro and macro precision, recall and F1, the prior-only baseline, the
//! prediction TSV format and the complexity benchmark.

mod bench;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::candidates::generate;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::kb::MentionDictionary;
use crate::model::{LinkResult, MentionLink};

pub use bench::{bench_complexity, fit_slope, write_bench_csv, BenchConfig, BenchReport, BenchRow};

/// Entity chosen for each mention of one document, `None` when unlinked.
#[derive(Debug, Clone, PartialEq)]
pub struct DocPredictions {
    pub doc_id: String,
    pub entities: Vec<Option<String>>,
    pub probabilities: Vec<f64>,
}

impl From<&LinkResult> for DocPredictions {
    fn from(r: &LinkResult) -> Self {
        DocPredictions {
            doc_id: r.doc_id.clone(),
            entities: r.mentions.iter().map(|m| m.entity.clone()).collect(),
            probabilities: r.mentions.iter().map(|m| m.probability).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(c: &Counts) -> Self {
        let precision = if c.linked == 0 { 0.0 } else { c.correct as f64 / c.linked as f64 };
        let recall = if c.mentions == 0 { 0.0 } else { c.correct as f64 / c.mentions as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

/// Counts over gold-bearing mentions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub mentions: usize,
    /// Mentions for which a link was produced.
    pub linked: usize,
    pub correct: usize,
    pub unlinkable: usize,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.mentions += o.mentions;
        self.linked += o.linked;
        self.correct += o.correct;
        self.unlinkable += o.unlinkable;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocScore {
    pub doc_id: String,
    pub counts: Counts,
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub micro: Prf,
    /// Means of the per-document values over documents with gold mentions.
    pub macro_: Prf,
    pub documents: Vec<DocScore>,
    pub counts: Counts,
}

/// Scores predictions against the gold entities of `gold`. Mentions without
/// gold are ignored; a document missing from `predictions` counts as unlinked.
pub fn score(predictions: &[DocPredictions], gold: &[Document]) -> Result<EvalReport> {
    let by_id: HashMap<&str, &DocPredictions> = predictions.iter().map(|p| (p.doc_id.as_str(), p)).collect();
    let mut documents = Vec::new();
    let mut total = Counts::default();
    for doc in gold {
        let pred = by_id.get(doc.id.as_str());
        if let Some(p) = pred {
            if p.entities.len() != doc.mentions.len() {
                return Err(Error::Data(format!(
                    "document {}: {} predictions for {} mentions",
                    doc.id,
                    p.entities.len(),
                    doc.mentions.len()
                )));
            }
        }
        let mut c = Counts::default();
        for (i, m) in doc.mentions.iter().enumerate() {
            let Some(g) = m.gold.as_deref() else { continue };
            c.mentions += 1;
            match pred.and_then(|p| p.entities[i].as_deref()) {
                Some(e) => {
                    c.linked += 1;
                    if e == g {
                        c.correct += 1;
                    }
                }
                None => c.unlinkable += 1,
            }
        }
        total.add(&c);
        if c.mentions > 0 {
            documents.push(DocScore {
                doc_id: doc.id.clone(),
                prf: Prf::from_counts(&c),
                counts: c,
            });
        }
    }
    if total.mentions == 0 {
        return Err(Error::Data("no gold mentions to score".into()));
    }
    let k = documents.len() as f64;
    let mean = |f: fn(&Prf) -> f64| documents.iter().map(|d| f(&d.prf)).sum::<f64>() / k;
    let macro_ = Prf {
        precision: mean(|p| p.precision),
        recall: mean(|p| p.recall),
        f1: mean(|p| p.f1),
    };
    Ok(EvalReport {
        micro: Prf::from_counts(&total),
        macro_,
        documents,
        counts: total,
    })
}

/// Share of selected gold mentions whose prediction equals gold.
/// `select(doc, mention_index)` picks the mentions; returns `None` if none are picked.
pub fn accuracy_where<F>(predictions: &[DocPredictions], gold: &[Document], mut select: F) -> Option<f64>
where
    F: FnMut(&Document, usize) -> bool,
{
    let by_id: HashMap<&str, &DocPredictions> = predictions.iter().map(|p| (p.doc_id.as_str(), p)).collect();
    let (mut hit, mut seen) = (0usize, 0usize);
    for doc in gold {
        for (i, m) in doc.mentions.iter().enumerate() {
            let Some(g) = m.gold.as_deref() else { continue };
            if !select(doc, i) {
                continue;
            }
            seen += 1;
            let p = by_id.get(doc.id.as_str()).and_then(|p| p.entities.get(i)).and_then(|e| e.as_deref());
            if p == Some(g) {
                hit += 1;
            }
        }
    }
    (seen > 0).then(|| hit as f64 / seen as f64)
}

/// Links every mention to its highest-prior candidate. Probabilities are the
/// priors of the top-`n` candidates renormalized to sum to one.
pub fn baseline_prior(documents: &[Document], dict: &MentionDictionary, n: usize) -> Vec<LinkResult> {
    documents
        .iter()
        .map(|doc| {
            let mentions = doc
                .mentions
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let set = generate(i, &m.surface, dict, n);
                    let z: f64 = set.valid().map(|c| c.prior).sum();
                    let probabilities: Vec<f64> = set
                        .slots()
                        .iter()
                        .map(|s| s.as_ref().map_or(0.0, |c| c.prior / z))
                        .collect();
                    let entity = set.slot(0).map(|c| c.entity.clone());
                    MentionLink {
                        surface_slot: i,
                        correct: m.gold.as_ref().map(|g| entity.as_ref() == Some(g)),
                        slot: entity.as_ref().map(|_| 0),
                        probability: if entity.is_some() { probabilities[0] } else { 0.0 },
                        entity,
                        probabilities,
                        loss: None,
                    }
                })
                .collect();
            LinkResult {
                doc_id: doc.id.clone(),
                mentions,
            }
        })
        .collect()
}

pub fn predictions(results: &[LinkResult]) -> Vec<DocPredictions> {
    results.iter().map(DocPredictions::from).collect()
}

/// Tab-separated `doc mention_index surface entity_id probability`, `-` for
/// unlinked mentions, preceded by `# ` header lines.
pub fn write_link_tsv(results: &[LinkResult], docs: &[Document], header: &[String]) -> Result<String> {
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for r in results {
        let doc = by_id
            .get(r.doc_id.as_str())
            .ok_or_else(|| Error::Data(format!("no document {}", r.doc_id)))?;
        for (i, m) in r.mentions.iter().enumerate() {
            let surface = &doc.mentions[i].surface;
            match &m.entity {
                Some(e) => {
                    let _ = writeln!(out, "{}\t{i}\t{surface}\t{e}\t{:.6}", r.doc_id, m.probability);
                }
                None => {
                    let _ = writeln!(out, "{}\t{i}\t{surface}\t-\t0", r.doc_id);
                }
            }
        }
    }
    Ok(out)
}

/// Reads the TSV written by [`write_link_tsv`]. Documents keep first-seen order.
pub fn parse_link_tsv(text: &str, origin: &Path) -> Result<Vec<DocPredictions>> {
    let mut out: Vec<DocPredictions> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::parse(origin, ln + 1, format!("expected 5 tab-separated fields, got {}", f.len())));
        }
        let mi: usize = f[1]
            .parse()
            .map_err(|_| Error::parse(origin, ln + 1, format!("bad mention index {:?}", f[1])))?;
        let prob: f64 = f[4]
            .parse()
            .map_err(|_| Error::parse(origin, ln + 1, format!("bad probability {:?}", f[4])))?;
        let slot = *index.entry(f[0].to_string()).or_insert_with(|| {
            out.push(DocPredictions {
                doc_id: f[0].to_string(),
                entities: Vec::new(),
                probabilities: Vec::new(),
            });
            out.len() - 1
        });
        let d = &mut out[slot];
        if mi != d.entities.len() {
            return Err(Error::parse(
                origin,
                ln + 1,
                format!("mention {mi} out of order, expected {}", d.entities.len()),
            ));
        }
        d.entities.push((f[3] != "-").then(|| f[3].to_string()));
        d.probabilities.push(prob);
    }
    Ok(out)
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}", "level", "P", "R", "F1");
        for (name, p) in [("micro", &self.micro), ("macro", &self.macro_)] {
            let _ = writeln!(s, "{name:<10}{:>10.4}{:>10.4}{:>10.4}", p.precision, p.recall, p.f1);
        }
        let c = &self.counts;
        let _ = writeln!(
            s,
            "mentions {}  linked {}  correct {}  unlinkable {}  documents {}",
            c.mentions,
            c.linked,
            c.correct,
            c.unlinkable,
            self.documents.len()
        );
        s
    }

    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            let _ = writeln!(s, "# {h}");
        }
        s.push_str("level,doc,precision,recall,f1,mentions,linked,correct,unlinkable\n");
        let row = |s: &mut String, level: &str, doc: &str, p: &Prf, c: Option<&Counts>| {
            let _ = write!(s, "{level},{doc},{:.6},{:.6},{:.6}", p.precision, p.recall, p.f1);
            match c {
                Some(c) => {
                    let _ = writeln!(s, ",{},{},{},{}", c.mentions, c.linked, c.correct, c.unlinkable);
                }
                None => s.push_str(",,,,\n"),
            }
        };
        row(&mut s, "micro", "-", &self.micro, Some(&self.counts));
        row(&mut s, "macro", "-", &self.macro_, None);
        for d in &self.documents {
            row(&mut s, "doc", &d.doc_id, &d.prf, Some(&d.counts));
        }
        s
    }
}
