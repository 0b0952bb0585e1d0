//! Seeded, topic-clustered knowledge bases for desk-scale experiments.
//!
//! Entities are noisy copies of `topics` random centers on the unit sphere.
//! Every surface form is ambiguous between two entities from different
//! topics: the first holds the higher prior, the second trails it by
//! `prior_margin`. Each entity leads exactly one surface and trails exactly
//! one other, so a corpus generator can choose per mention whether the gold
//! entity is the prior favourite or a distracted pick.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{EmbeddingStore, MentionDictionary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticKbConfig {
    pub entities: usize,
    pub topics: usize,
    pub dim: usize,
    /// Norm of the Gaussian offset added to a topic center before renormalizing.
    pub entity_noise: f64,
    pub topic_words: usize,
    pub topic_word_noise: f64,
    pub filler_words: usize,
    /// Weight of the direction shared by all filler words.
    pub filler_common: f64,
    pub prior_margin: f64,
    /// Low-prior candidates added to every surface besides the ambiguous pair.
    pub extra_candidates: usize,
    pub extra_prior: f64,
    pub with_senses: bool,
    pub seed: u64,
}

impl Default for SyntheticKbConfig {
    fn default() -> Self {
        SyntheticKbConfig {
            entities: 200,
            topics: 8,
            dim: 32,
            entity_noise: 0.6,
            topic_words: 40,
            topic_word_noise: 0.7,
            filler_words: 400,
            filler_common: 0.5,
            prior_margin: 0.2,
            extra_candidates: 2,
            extra_prior: 0.05,
            with_senses: true,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticKb {
    pub store: EmbeddingStore,
    pub dict: MentionDictionary,
    pub config: SyntheticKbConfig,
    /// Entity ids in creation order.
    pub entity_ids: Vec<String>,
    /// Topic of each entity, indexed like `entity_ids`.
    pub topic_of: Vec<usize>,
    /// Entity indices per topic.
    pub members: Vec<Vec<usize>>,
    /// Surface on which the entity holds the highest prior.
    pub lead_surface: Vec<String>,
    /// Surface on which the entity trails a higher-prior entity of another topic.
    pub trail_surface: Vec<String>,
    pub topic_vocab: Vec<Vec<String>>,
    pub fillers: Vec<String>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f64> {
    let scale = norm / (dim as f64).sqrt();
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = crate::numerics::norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Lowercase letters encoding `i`, so surfaces share no characters with entity ids.
fn letters(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (i % 26) as u8);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

pub fn generate_synthetic_kb(config: &SyntheticKbConfig) -> Result<SyntheticKb> {
    let c = config;
    if c.topics < 2 {
        return Err(Error::Config("need at least two topics".into()));
    }
    if c.entities < 2 * c.topics {
        return Err(Error::Config(format!(
            "{} entities cannot fill {} topics with two members each",
            c.entities, c.topics
        )));
    }
    // smallest pool of entities outside two topics
    let per_topic_max = c.entities.div_ceil(c.topics);
    if c.extra_candidates > 0 && (c.topics < 3 || c.extra_candidates > c.entities - 2 * per_topic_max) {
        return Err(Error::Config(format!(
            "{} extra candidates per surface need more than {} entities in {} topics",
            c.extra_candidates, c.entities, c.topics
        )));
    }
    let rest = c.extra_candidates as f64 * c.extra_prior;
    let lead_prior = (1.0 - rest + c.prior_margin) / 2.0;
    let trail_prior = (1.0 - rest - c.prior_margin) / 2.0;
    let extras_ok = c.extra_candidates == 0 || (c.extra_prior > 0.0 && trail_prior > c.extra_prior);
    if !(trail_prior > 0.0 && lead_prior <= 1.0 && extras_ok) {
        return Err(Error::Config(format!(
            "prior margin {} with {} extras of {} leaves no valid prior split",
            c.prior_margin, c.extra_candidates, c.extra_prior
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut store = EmbeddingStore::new(c.dim)?;

    let centers: Vec<Vec<f64>> = (0..c.topics).map(|_| unit(gaussian(&mut rng, c.dim, 1.0))).collect();
    let common = unit(gaussian(&mut rng, c.dim, 1.0));

    let entity_ids: Vec<String> = (0..c.entities).map(|i| format!("E{i:04}")).collect();
    let topic_of: Vec<usize> = (0..c.entities).map(|i| i % c.topics).collect();
    let mut members = vec![Vec::new(); c.topics];
    for (i, &t) in topic_of.iter().enumerate() {
        members[t].push(i);
    }
    let mut entity_vecs = Vec::with_capacity(c.entities);
    for (id, &t) in entity_ids.iter().zip(&topic_of) {
        let v = unit(add(&centers[t], &gaussian(&mut rng, c.dim, c.entity_noise)));
        store.add_entity(id, v.clone())?;
        entity_vecs.push(v);
    }
    if c.with_senses {
        for (id, v) in entity_ids.iter().zip(&entity_vecs) {
            let s = unit(add(v, &gaussian(&mut rng, c.dim, 0.3)));
            store.add_sense(&format!("{id}#s"), id, s)?;
        }
    }

    // pair every entity with a trailing partner from another topic; `partner`
    // is a permutation so each entity trails exactly once
    let partner = cross_topic_permutation(&topic_of, &mut rng);
    let mut lead_surface = vec![String::new(); c.entities];
    let mut trail_surface = vec![String::new(); c.entities];
    let mut dict = MentionDictionary::new();
    for lead in 0..c.entities {
        let trail = partner[lead];
        let surface = format!("m{}", letters(lead));
        dict.insert(&surface, &entity_ids[lead], lead_prior)?;
        dict.insert(&surface, &entity_ids[trail], trail_prior)?;
        // extras come from topics other than both readings, so within a
        // document's topic at most one reading is coherent
        let mut pool: Vec<usize> = (0..c.entities)
            .filter(|&x| topic_of[x] != topic_of[lead] && topic_of[x] != topic_of[trail])
            .collect();
        pool.shuffle(&mut rng);
        for &x in pool.iter().take(c.extra_candidates) {
            dict.insert(&surface, &entity_ids[x], c.extra_prior)?;
        }
        // the surface's own word vector blends both readings
        let blend = unit(add(
            &add(&entity_vecs[lead], &entity_vecs[trail]),
            &gaussian(&mut rng, c.dim, 0.3),
        ));
        store.add_word(&surface, blend)?;
        lead_surface[lead] = surface.clone();
        trail_surface[trail] = surface;
    }

    let mut topic_vocab = Vec::with_capacity(c.topics);
    for (t, center) in centers.iter().enumerate() {
        let mut words = Vec::with_capacity(c.topic_words);
        for k in 0..c.topic_words {
            let w = format!("t{t}w{k}");
            let v = unit(add(
                &add(center, &gaussian(&mut rng, c.dim, c.topic_word_noise)),
                &common.iter().map(|x| x * c.filler_common * 0.5).collect::<Vec<_>>(),
            ));
            store.add_word(&w, v)?;
            words.push(w);
        }
        topic_vocab.push(words);
    }
    let mut fillers = Vec::with_capacity(c.filler_words);
    for k in 0..c.filler_words {
        let w = format!("f{k}");
        let v = unit(add(
            &gaussian(&mut rng, c.dim, 1.0),
            &common.iter().map(|x| x * c.filler_common).collect::<Vec<_>>(),
        ));
        store.add_word(&w, v)?;
        fillers.push(w);
    }

    Ok(SyntheticKb {
        store,
        dict,
        config: c.clone(),
        entity_ids,
        topic_of,
        members,
        lead_surface,
        trail_surface,
        topic_vocab,
        fillers,
    })
}

/// Random permutation `p` with `topic[p[i]] != topic[i]` for all `i`.
fn cross_topic_permutation(topic: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = topic.len();
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    // repair same-topic fixed points by swapping with a compatible position
    loop {
        let mut clean = true;
        for i in 0..n {
            if topic[p[i]] == topic[i] {
                clean = false;
                let j = rng.gen_range(0..n);
                if topic[p[j]] != topic[i] && topic[p[i]] != topic[j] {
                    p.swap(i, j);
                }
            }
        }
        if clean {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::cosine;

    #[test]
    fn shapes_and_pairing() {
        let kb = generate_synthetic_kb(&SyntheticKbConfig::default()).unwrap();
        let c = &kb.config;
        assert_eq!(kb.store.entity_count(), 200);
        assert_eq!(kb.dict.len(), 200);
        for i in 0..c.entities {
            let lead = kb.dict.get(&kb.lead_surface[i]);
            assert_eq!(lead[0].entity, kb.entity_ids[i]);
            assert_eq!(lead.len(), 2 + c.extra_candidates);
            let trail = kb.dict.get(&kb.trail_surface[i]);
            assert_eq!(trail[1].entity, kb.entity_ids[i]);
            assert!((trail[0].prior - trail[1].prior - c.prior_margin).abs() < 1e-12);
            let topic = |id: &str| kb.topic_of[kb.entity_ids.iter().position(|e| e == id).unwrap()];
            assert_ne!(topic(&trail[0].entity), kb.topic_of[i]);
            for extra in &lead[2..] {
                assert_ne!(topic(&extra.entity), topic(&lead[0].entity));
                assert_ne!(topic(&extra.entity), topic(&lead[1].entity));
            }
        }
    }

    #[test]
    fn topics_are_separable() {
        let kb = generate_synthetic_kb(&SyntheticKbConfig::default()).unwrap();
        let v = |i: usize| kb.store.entity(&kb.entity_ids[i]).unwrap();
        let (mut same, mut cross, mut ns, mut nc) = (0.0, 0.0, 0, 0);
        for i in 0..40 {
            for j in (i + 1)..40 {
                let s = cosine(v(i), v(j)).unwrap();
                if kb.topic_of[i] == kb.topic_of[j] {
                    same += s;
                    ns += 1;
                } else {
                    cross += s;
                    nc += 1;
                }
            }
        }
        assert!(same / ns as f64 > cross / nc as f64 + 0.4);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_kb(&SyntheticKbConfig::default()).unwrap();
        let b = generate_synthetic_kb(&SyntheticKbConfig::default()).unwrap();
        assert_eq!(a.store, b.store);
        assert_eq!(a.dict, b.dict);
        let c = generate_synthetic_kb(&SyntheticKbConfig { seed: 8, ..Default::default() }).unwrap();
        assert_ne!(a.store, c.store);
    }

    #[test]
    fn rejects_impossible_configs() {
        let too_many = SyntheticKbConfig {
            entities: 20,
            topics: 2,
            extra_candidates: 30,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic_kb(&too_many), Err(Error::Config(_))));
        let margin = SyntheticKbConfig {
            prior_margin: 0.95,
            ..Default::default()
        };
        assert!(generate_synthetic_kb(&margin).is_err());
    }

    #[test]
    fn surfaces_share_no_letters_with_titles() {
        assert_eq!(letters(0), "a");
        assert_eq!(letters(27), "bb");
    }
}
