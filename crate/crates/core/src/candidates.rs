use crate::kb::MentionDictionary;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub entity: String,
    pub prior: f64,
}

/// Top-`n` candidates of one mention, prefix-packed into `n` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub mention: usize,
    slots: Vec<Option<Candidate>>,
}

impl CandidateSet {
    pub fn empty(mention: usize, n: usize) -> Self {
        CandidateSet {
            mention,
            slots: vec![None; n],
        }
    }

    /// Packs `candidates` into the leading slots; errors when more than `n` are given.
    pub fn from_candidates(mention: usize, n: usize, candidates: Vec<Candidate>) -> crate::Result<Self> {
        if candidates.len() > n {
            return Err(crate::Error::Contract(format!("{} candidates exceed {n} slots", candidates.len())));
        }
        let mut slots: Vec<_> = candidates.into_iter().map(Some).collect();
        slots.resize(n, None);
        Ok(CandidateSet { mention, slots })
    }

    pub fn n(&self) -> usize {
        self.slots.len()
    }

    pub fn valid_count(&self) -> usize {
        self.slots.iter().take_while(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.valid_count() == 0
    }

    pub fn slot(&self, k: usize) -> Option<&Candidate> {
        self.slots.get(k).and_then(Option::as_ref)
    }

    pub fn slots(&self) -> &[Option<Candidate>] {
        &self.slots
    }

    pub fn valid(&self) -> impl Iterator<Item = &Candidate> {
        self.slots.iter().map_while(Option::as_ref)
    }

    pub fn mask(&self) -> Vec<bool> {
        self.slots.iter().map(Option::is_some).collect()
    }

    pub fn position(&self, entity: &str) -> Option<usize> {
        self.valid().position(|c| c.entity == entity)
    }

    /// Keeps the first `n` slots.
    pub fn truncate(&self, n: usize) -> CandidateSet {
        let mut slots: Vec<_> = self.slots.iter().take(n).cloned().collect();
        slots.resize(n, None);
        CandidateSet {
            mention: self.mention,
            slots,
        }
    }
}

/// Top-`n` entities by prior for `surface`; an unknown surface yields an empty set.
pub fn generate(mention: usize, surface: &str, dict: &MentionDictionary, n: usize) -> CandidateSet {
    assert!(n >= 1, "candidate count must be positive");
    let mut set = CandidateSet::empty(mention, n);
    for (slot, p) in set.slots.iter_mut().zip(dict.get(surface)) {
        *slot = Some(Candidate {
            entity: p.entity.clone(),
            prior: p.prior,
        });
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn england() -> MentionDictionary {
        let mut d = MentionDictionary::new();
        d.insert("England", "A", 0.6).unwrap();
        d.insert("England", "C", 0.1).unwrap();
        d.insert("England", "B", 0.3).unwrap();
        d
    }

    fn ids(s: &CandidateSet) -> Vec<&str> {
        s.valid().map(|c| c.entity.as_str()).collect()
    }

    #[test]
    fn ordered_by_prior() {
        let s = generate(0, "England", &england(), 10);
        assert_eq!(ids(&s), ["A", "B", "C"]);
        assert_eq!(s.valid_count(), 3);
        assert_eq!(s.mask()[..4], [true, true, true, false]);
    }

    #[test]
    fn truncation() {
        let s = generate(0, "England", &england(), 2);
        assert_eq!(ids(&s), ["A", "B"]);
        assert_eq!(s.n(), 2);
    }

    #[test]
    fn unseen_surface_is_empty() {
        let s = generate(3, "Atlantis", &england(), 5);
        assert!(s.is_empty());
        assert_eq!(s.mask(), vec![false; 5]);
    }

    #[test]
    fn lookup_trims_but_keeps_case() {
        assert_eq!(generate(0, "  England ", &england(), 3).valid_count(), 3);
        assert!(generate(0, "england", &england(), 3).is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn truncation_commutes(priors in proptest::collection::vec(1u32..=10, 1..15), n in 1usize..12) {
                let mut d = MentionDictionary::new();
                for (i, p) in priors.iter().enumerate() {
                    d.insert("m", &format!("e{i:02}"), *p as f64 / 10.0).unwrap();
                }
                let big = generate(0, "m", &d, 100);
                prop_assert_eq!(big.truncate(n), generate(0, "m", &d, n));
                let small = generate(0, "m", &d, n);
                let ps: Vec<f64> = small.valid().map(|c| c.prior).collect();
                prop_assert!(ps.windows(2).all(|w| w[0] >= w[1]));
                // gold recall: an entity ranked within n occupies a valid slot
                for (rank, c) in big.valid().enumerate() {
                    prop_assert_eq!(small.position(&c.entity).is_some(), rank < n);
                }
            }
        }
    }
}
