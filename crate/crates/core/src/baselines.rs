//! Heuristic, retrieval and similarity baselines.

use serde::{Deserialize, Serialize};

use crate::data::{Sample, ViewKind};
use crate::error::{Error, Result};
use crate::model::{ModelInput, Prediction, SwitchModel};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    AllEgo,
    AllExo,
    Random,
    LastFrame,
    Pronoun,
    RetrievalF,
    RetrievalN,
    RetrievalNprime,
    VnSim,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 9] = [
        Self::AllEgo,
        Self::AllExo,
        Self::Random,
        Self::LastFrame,
        Self::Pronoun,
        Self::RetrievalF,
        Self::RetrievalN,
        Self::RetrievalNprime,
        Self::VnSim,
    ];

    /// The baselines that need neither an index nor candidate streams.
    pub const HEURISTIC: [BaselineKind; 5] = [Self::AllEgo, Self::AllExo, Self::Random, Self::LastFrame, Self::Pronoun];

    pub fn name(self) -> &'static str {
        match self {
            Self::AllEgo => "all_ego",
            Self::AllExo => "all_exo",
            Self::Random => "random",
            Self::LastFrame => "last_frame",
            Self::Pronoun => "pronoun",
            Self::RetrievalF => "retrieval_f",
            Self::RetrievalN => "retrieval_n",
            Self::RetrievalNprime => "retrieval_nprime",
            Self::VnSim => "vn_sim",
        }
    }

    pub fn is_retrieval(self) -> bool {
        matches!(self, Self::RetrievalF | Self::RetrievalN | Self::RetrievalNprime)
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        let key = match key.as_str() {
            "retrieval_n'" | "retrieval_n_prime" => "retrieval_nprime".to_string(),
            _ => key,
        };
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn default_pronouns() -> Vec<String> {
    ["i", "we", "my", "our", "i'm", "i'll", "we're"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub name: BaselineKind,
    #[serde(default)]
    pub rng_seed: u64,
    /// First-person lexicon of the pronoun baseline, lowercase.
    #[serde(default = "default_pronouns")]
    pub pronouns: Vec<String>,
}

impl BaselineSpec {
    pub fn new(name: BaselineKind) -> Self {
        Self {
            name,
            rng_seed: 0,
            pronouns: default_pronouns(),
        }
    }
}

/// True when any token of `text` is in `lexicon` (case-insensitive, whole words).
pub fn has_pronoun(text: &str, lexicon: &[String]) -> bool {
    tokenize(text).iter().any(|t| lexicon.iter().any(|p| p == t))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Key vectors with the view each one votes for.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalIndex {
    pub keys: Vec<Vec<f64>>,
    pub views: Vec<ViewKind>,
}

impl RetrievalIndex {
    pub fn push(&mut self, key: Vec<f64>, view: ViewKind) {
        self.keys.push(key);
        self.views.push(view);
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// View of the cosine-nearest key; the first one wins a tie.
    pub fn nearest(&self, query: &[f64]) -> Result<ViewKind> {
        let mut best: Option<(f64, usize)> = None;
        for (i, k) in self.keys.iter().enumerate() {
            let c = cosine(query, k);
            if best.map_or(true, |(b, _)| c > b) {
                best = Some((c, i));
            }
        }
        best.map(|(_, i)| self.views[i]).ok_or(Error::EmptyIndex)
    }
}

fn mean_rows(m: &crate::nn::Mat) -> Vec<f64> {
    m.mean_axis(ndarray::Axis(0)).map(|r| r.to_vec()).unwrap_or_default()
}

/// Retrieval key of one sample, or `None` when the input type is missing.
fn retrieval_key(kind: BaselineKind, encoder: &SwitchModel, s: &Sample) -> Result<Option<Vec<f64>>> {
    Ok(match kind {
        BaselineKind::RetrievalF => Some(mean_rows(&encoder.frame_embeddings(&s.past_frame_features)?)),
        BaselineKind::RetrievalN => {
            if s.past_narrations.is_empty() {
                None
            } else {
                let d = encoder.model_dim();
                let mut acc = vec![0.0; d];
                for p in &s.past_narrations {
                    for (a, v) in acc.iter_mut().zip(encoder.text_embedding(&p.segment.text)) {
                        *a += v;
                    }
                }
                let n = s.past_narrations.len() as f64;
                Some(acc.into_iter().map(|a| a / n).collect())
            }
        }
        BaselineKind::RetrievalNprime => {
            if s.next_narration.text.trim().is_empty() {
                None
            } else {
                Some(encoder.text_embedding(&s.next_narration.text))
            }
        }
        _ => None,
    })
}

/// Build the index of a retrieval baseline from labeled training samples.
pub fn build_index(kind: BaselineKind, encoder: &SwitchModel, train: &[&Sample]) -> Result<RetrievalIndex> {
    let mut idx = RetrievalIndex::default();
    for s in train {
        if let Some(k) = retrieval_key(kind, encoder, s)? {
            idx.push(k, s.target.kind);
        }
    }
    Ok(idx)
}

/// A ready-to-run baseline.
pub struct Baseline<'m> {
    pub spec: BaselineSpec,
    /// Encoders used by retrieval and similarity baselines.
    pub encoder: Option<&'m SwitchModel>,
    pub index: Option<RetrievalIndex>,
}

fn coin(seed: u64, video_id: &str, t: f64) -> bool {
    use rand::{Rng, SeedableRng};
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in video_id.bytes().chain(((t * 1000.0).round() as i64).to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    rand_chacha::ChaCha8Rng::seed_from_u64(h).gen_bool(0.5)
}

impl<'m> Baseline<'m> {
    pub fn simple(kind: BaselineKind) -> Self {
        Self {
            spec: BaselineSpec::new(kind),
            encoder: None,
            index: None,
        }
    }

    /// Any baseline; retrieval kinds index `train`, similarity kinds need only the encoder.
    pub fn build(spec: BaselineSpec, encoder: Option<&'m SwitchModel>, train: &[&Sample]) -> Result<Self> {
        let index = if spec.name.is_retrieval() {
            let enc = encoder.ok_or_else(|| Error::MissingInput("retrieval baselines need an encoder".into()))?;
            let idx = build_index(spec.name, enc, train)?;
            if idx.is_empty() {
                return Err(Error::EmptyIndex);
            }
            Some(idx)
        } else {
            None
        };
        Ok(Self { spec, encoder, index })
    }

    pub fn predict(&self, input: ModelInput<'_>) -> Result<Prediction> {
        let s = input.base();
        let hard = |k| Ok(Prediction::hard(k));
        match self.spec.name {
            BaselineKind::AllEgo => hard(ViewKind::Ego),
            BaselineKind::AllExo => hard(ViewKind::Exo),
            BaselineKind::Random => hard(if coin(self.spec.rng_seed, &s.video_id, s.t) {
                ViewKind::Ego
            } else {
                ViewKind::Exo
            }),
            BaselineKind::LastFrame => hard(s.last_view()),
            BaselineKind::Pronoun => hard(if has_pronoun(&s.next_narration.text, &self.spec.pronouns) {
                ViewKind::Exo
            } else {
                ViewKind::Ego
            }),
            kind @ (BaselineKind::RetrievalF | BaselineKind::RetrievalN | BaselineKind::RetrievalNprime) => {
                let index = self.index.as_ref().ok_or(Error::EmptyIndex)?;
                let enc = self.encoder.ok_or_else(|| Error::MissingInput("encoder".into()))?;
                match retrieval_key(kind, enc, s)? {
                    Some(q) => hard(index.nearest(&q)?),
                    // Missing input type: fall back to exo.
                    None => hard(ViewKind::Exo),
                }
            }
            BaselineKind::VnSim => {
                let ModelInput::Selector(sel) = input else {
                    return Err(Error::MissingInput("vn_sim needs candidate streams".into()));
                };
                let enc = self.encoder.ok_or_else(|| Error::MissingInput("encoder".into()))?;
                if s.next_narration.text.trim().is_empty() {
                    return hard(ViewKind::Exo);
                }
                let n = enc.text_embedding(&s.next_narration.text);
                let sim = |f| -> Result<f64> {
                    let e = enc.frame_embeddings(f)?;
                    let rows = e.nrows().max(1) as f64;
                    Ok(e.rows().into_iter().map(|r| cosine(r.as_slice().unwrap(), &n)).sum::<f64>() / rows)
                };
                let se = sim(&sel.ego_candidate_features)?;
                let sx = sim(&sel.exo_candidate_features)?;
                let p = Prediction::from_logits([se, sx]);
                // Exact ties go to exo.
                Ok(if se == sx { Prediction::hard(ViewKind::Exo) } else { p })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{extract_sample, extract_selector_sample};
    use crate::model::ModelConfig;
    use crate::testutil::{small_window, toy_record};

    #[test]
    fn pronoun_rule() {
        let lex = default_pronouns();
        assert!(has_pronoun("I will now trim the edge", &lex));
        assert!(has_pronoun("Now WE'RE done.", &lex));
        assert!(!has_pronoun("iron the hem", &lex));
        assert!(!has_pronoun("", &lex));
    }

    #[test]
    fn heuristics_on_a_sample() {
        let r = toy_record(4, 0);
        let mut s = extract_sample(&r, 7.0, &small_window()).unwrap();
        assert_eq!(s.last_view(), ViewKind::Ego);
        let p = |k| Baseline::simple(k).predict(ModelInput::Detector(&s)).unwrap().kind();
        assert_eq!(p(BaselineKind::LastFrame), ViewKind::Ego);
        assert_eq!(p(BaselineKind::AllExo), ViewKind::Exo);
        s.next_narration.text = "I will now trim the edge".into();
        let pr = Baseline::simple(BaselineKind::Pronoun).predict(ModelInput::Detector(&s)).unwrap();
        assert_eq!(pr.kind(), ViewKind::Exo);
        let a = Baseline::simple(BaselineKind::Random).predict(ModelInput::Detector(&s)).unwrap();
        let b = Baseline::simple(BaselineKind::Random).predict(ModelInput::Detector(&s)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn retrieval_returns_the_nearest_items_view() {
        let r = toy_record(4, 0);
        let enc = SwitchModel::new_detector(ModelConfig::tiny(4), crate::detector::build_vocab(std::slice::from_ref(&r))).unwrap();
        let w = small_window();
        let a = extract_sample(&r, 3.0, &w).unwrap();
        let b = extract_sample(&r, 8.0, &w).unwrap();
        assert_ne!(a.target.kind, b.target.kind);
        let base = Baseline::build(BaselineSpec::new(BaselineKind::RetrievalF), Some(&enc), &[&a, &b]).unwrap();
        for t in [2.0, 5.0, 9.0, 13.0, 16.0] {
            let q = extract_sample(&r, t, &w).unwrap();
            let key = |s: &Sample| mean_rows(&enc.frame_embeddings(&s.past_frame_features).unwrap());
            let (qa, qb) = (cosine(&key(&q), &key(&a)), cosine(&key(&q), &key(&b)));
            let want = if qb > qa { b.target.kind } else { a.target.kind };
            assert_eq!(base.predict(ModelInput::Detector(&q)).unwrap().kind(), want);
        }
        assert!(matches!(
            Baseline::build(BaselineSpec::new(BaselineKind::RetrievalF), Some(&enc), &[]),
            Err(Error::EmptyIndex)
        ));
    }

    #[test]
    fn vn_sim_needs_candidates() {
        let r = toy_record(4, 0);
        let enc = SwitchModel::new_detector(ModelConfig::tiny(4), crate::detector::build_vocab(std::slice::from_ref(&r))).unwrap();
        let w = small_window();
        let sel = extract_selector_sample(&r, 4.0, &w).unwrap();
        let b = Baseline::build(BaselineSpec::new(BaselineKind::VnSim), Some(&enc), &[]).unwrap();
        assert!(b.predict(ModelInput::Selector(&sel)).is_ok());
        assert!(matches!(b.predict(ModelInput::Detector(&sel.base)), Err(Error::MissingInput(_))));
        let mut quiet = sel.clone();
        quiet.base.next_narration.text.clear();
        assert_eq!(b.predict(ModelInput::Selector(&quiet)).unwrap().kind(), ViewKind::Exo);
    }

    proptest::proptest! {
        #[test]
        fn retrieval_ignores_key_scale(
            keys in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 1..8),
            q in proptest::collection::vec(-1.0f64..1.0, 3),
            c in 0.01f64..100.0,
        ) {
            let mut a = RetrievalIndex::default();
            let mut b = RetrievalIndex::default();
            for (i, k) in keys.iter().enumerate() {
                let v = if i % 2 == 0 { ViewKind::Ego } else { ViewKind::Exo };
                a.push(k.clone(), v);
                b.push(k.iter().map(|x| x * c).collect(), v);
            }
            proptest::prop_assert_eq!(a.nearest(&q).unwrap(), b.nearest(&q).unwrap());
        }
    }
}
