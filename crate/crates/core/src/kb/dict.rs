use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub entity: String,
    pub prior: f64,
}

/// Surface form -> candidate entities with prior `p(e|m)`.
///
/// Each surface's list is kept sorted by prior descending, ties by entity id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MentionDictionary {
    entries: BTreeMap<String, Vec<Prior>>,
}

/// Lookup key for a surface form: outer whitespace trimmed, inner runs
/// collapsed to one space. Case is preserved.
pub fn normalize_surface(surface: &str) -> String {
    surface.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn canonical_order(a: &Prior, b: &Prior) -> std::cmp::Ordering {
    b.prior
        .total_cmp(&a.prior)
        .then_with(|| a.entity.cmp(&b.entity))
}

impl MentionDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a pair; a repeated (surface, entity) keeps the larger prior.
    pub fn insert(&mut self, surface: &str, entity: &str, prior: f64) -> Result<()> {
        if !(prior > 0.0 && prior <= 1.0) {
            return Err(Error::Data(format!(
                "prior for ({surface}, {entity}) must lie in (0, 1], got {prior}"
            )));
        }
        let key = normalize_surface(surface);
        if key.is_empty() {
            return Err(Error::Data("empty surface form".into()));
        }
        let list = self.entries.entry(key).or_default();
        match list.iter_mut().find(|p| p.entity == entity) {
            Some(existing) => existing.prior = existing.prior.max(prior),
            None => list.push(Prior {
                entity: entity.to_string(),
                prior,
            }),
        }
        list.sort_by(canonical_order);
        Ok(())
    }

    /// Candidates for `surface`, best first. Unknown surfaces give an empty slice.
    pub fn get(&self, surface: &str) -> &[Prior] {
        self.entries
            .get(&normalize_surface(surface))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Prior])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (surface, list) in &self.entries {
            for p in list {
                let _ = writeln!(out, "m {surface} {} {}", p.entity, p.prior);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut dict = MentionDictionary::new();
        for (lineno, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] != "m" || fields.len() < 4 {
                return Err(Error::parse(origin, lineno, "expected `m <surface> <entity_id> <prior>`"));
            }
            let n = fields.len();
            let prior: f64 = fields[n - 1]
                .parse()
                .map_err(|_| Error::parse(origin, lineno, "malformed prior"))?;
            let surface = fields[1..n - 2].join(" ");
            dict.insert(&surface, fields[n - 2], prior)
                .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        }
        Ok(dict)
    }
}

/// Union of several dictionaries, keeping the maximal prior of each pair.
pub fn merge_priors(sources: &[MentionDictionary]) -> MentionDictionary {
    let mut out = MentionDictionary::new();
    for src in sources {
        for (surface, list) in &src.entries {
            for p in list {
                // priors in a valid dictionary are already in (0, 1]
                out.insert(surface, &p.entity, p.prior)
                    .expect("source dictionary holds a valid prior");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn dict(pairs: &[(&str, &str, f64)]) -> MentionDictionary {
        let mut d = MentionDictionary::new();
        for (s, e, p) in pairs {
            d.insert(s, e, *p).unwrap();
        }
        d
    }

    #[test]
    fn max_semantics() {
        let m = merge_priors(&[dict(&[("England", "A", 0.6)]), dict(&[("England", "A", 0.3)])]);
        assert_eq!(m.get("England"), &[Prior { entity: "A".into(), prior: 0.6 }]);
    }

    #[test]
    fn disjoint_union() {
        let m = merge_priors(&[dict(&[("x", "A", 0.5)]), dict(&[("y", "B", 0.5)])]);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn three_sources_match_brute_force_max() {
        let a = [("E", "A", 0.6), ("E", "B", 0.2), ("F", "C", 0.9)];
        let b = [("E", "B", 0.5), ("F", "C", 0.1), ("G", "A", 0.3)];
        let c = [("E", "C", 0.2), ("E", "A", 0.1), ("G", "A", 0.7), ("F", "D", 0.9)];
        let merged = merge_priors(&[dict(&a), dict(&b), dict(&c)]);

        let mut oracle: HashMap<(&str, &str), f64> = HashMap::new();
        for (s, e, p) in a.iter().chain(&b).chain(&c) {
            let slot = oracle.entry((*s, *e)).or_insert(0.0);
            *slot = slot.max(*p);
        }
        let mut count = 0;
        for (s, list) in merged.iter() {
            for p in list {
                assert_eq!(oracle[&(s, p.entity.as_str())], p.prior);
                count += 1;
            }
        }
        assert_eq!(count, oracle.len());
        // ties broken by ascending entity id
        let f: Vec<_> = merged.get("F").iter().map(|p| p.entity.as_str()).collect();
        assert_eq!(f, ["C", "D"]);
    }

    #[test]
    fn parse_multi_token_surface_and_errors() {
        let d = MentionDictionary::parse("# c\nm New  York NYC 0.8\n", Path::new("d")).unwrap();
        assert_eq!(d.get(" New York ")[0].entity, "NYC");
        let err = MentionDictionary::parse("m a b 0.5\nm a b 1.5\n", Path::new("d"))
            .unwrap_err()
            .to_string();
        assert!(err.contains(":2:"), "{err}");
        assert!(MentionDictionary::parse("m a b x\n", Path::new("d")).is_err());
    }

    #[test]
    fn case_is_significant() {
        let d = dict(&[("US", "United_States", 0.9)]);
        assert!(d.get("us").is_empty());
    }

    #[test]
    fn text_round_trip() {
        let d = dict(&[("b", "X", 0.25), ("a b", "Y", 1.0), ("b", "Z", 0.5)]);
        let again = MentionDictionary::parse(&d.to_text(), Path::new("d")).unwrap();
        assert_eq!(again, d);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn source() -> impl Strategy<Value = MentionDictionary> {
            proptest::collection::vec(
                (prop::sample::select(vec!["s1", "s2", "s3"]), prop::sample::select(vec!["A", "B", "C", "D"]), 1u32..=20),
                0..8,
            )
            .prop_map(|pairs| {
                let mut d = MentionDictionary::new();
                for (s, e, p) in pairs {
                    d.insert(s, e, p as f64 / 20.0).unwrap();
                }
                d
            })
        }

        proptest! {
            #[test]
            fn merge_commutative_and_associative(a in source(), b in source(), c in source()) {
                let ab = merge_priors(&[a.clone(), b.clone()]);
                prop_assert_eq!(&ab, &merge_priors(&[b.clone(), a.clone()]));
                let left = merge_priors(&[ab, c.clone()]);
                let right = merge_priors(&[a, merge_priors(&[b, c])]);
                prop_assert_eq!(left, right);
            }
        }
    }
}
