//! Conversation-level structural features: participation inequality,
//! turn-taking entropy, and responsivity rates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{speaking_time, Conversation};
use crate::error::{Error, Result};
use crate::linkspace::{LinkKind, LinkTable};
use crate::scalar::{Real, Scalar};

/// Gini coefficient `ΣΣ|xi − xj| / (2 n² x̄)`, evaluated through the sorted
/// form `Σ (2i − n − 1) x(i) / (n Σx)`. Zero for a single value or an
/// all-zero input.
pub fn gini<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Argument("gini of an empty distribution".into()));
    }
    if let Some(bad) = values.iter().find(|v| !(**v >= T::zero())) {
        return Err(Error::Argument(format!("gini of negative value {bad:?}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-negative values are ordered"));
    let n = T::from_count(sorted.len());
    let total = sorted.iter().fold(T::zero(), |acc, &v| acc + v);
    if sorted.len() == 1 || total == T::zero() {
        return Ok(T::zero());
    }
    let weighted = sorted.iter().enumerate().fold(T::zero(), |acc, (i, &v)| {
        let rank = T::from_count(2 * (i + 1));
        acc + (rank - n - T::one()) * v
    });
    Ok(weighted / (n * total))
}

/// Normalized first-order conditional entropy `Σ_s p(s) H(next | s)` over
/// observed `(state, next)` pairs, with empirical state weights, divided by
/// `ln(num_symbols)`. Zero when there are no pairs or fewer than two symbols.
pub fn conditional_entropy<T: Real, K: Ord>(pairs: &[(K, K)], num_symbols: usize) -> T {
    if pairs.is_empty() || num_symbols < 2 {
        return T::zero();
    }
    let mut counts: BTreeMap<&K, BTreeMap<&K, usize>> = BTreeMap::new();
    for (state, next) in pairs {
        *counts.entry(state).or_default().entry(next).or_default() += 1;
    }
    let total = T::from_count(pairs.len());
    let mut h = T::zero();
    for nexts in counts.values() {
        let row_total: usize = nexts.values().sum();
        let row = T::from_count(row_total);
        let mut row_h = T::zero();
        for &c in nexts.values() {
            let p = T::from_count(c) / row;
            row_h = row_h - p * p.ln();
        }
        h = h + row / total * row_h;
    }
    let normalized = h / T::from_count(num_symbols).ln();
    normalized.max(T::zero()).min(T::one())
}

/// Conditional entropy of a raw symbol sequence's bigrams, normalized by the
/// number of distinct symbols. Adjacent repeats are allowed here.
pub fn sequence_entropy<T: Real, K: Ord + Clone>(sequence: &[K]) -> Result<T> {
    if sequence.len() < 2 {
        return Err(Error::Argument("sequence entropy needs at least two symbols".into()));
    }
    let symbols: std::collections::BTreeSet<&K> = sequence.iter().collect();
    let pairs: Vec<(K, K)> = sequence
        .windows(2)
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect();
    Ok(conditional_entropy(&pairs, symbols.len()))
}

/// Unpredictability of the next speaker given the current one.
pub fn turn_sequence_entropy<T: Real>(conv: &Conversation) -> Result<T> {
    let speakers: Vec<&str> = conv.turns().iter().map(|t| t.speaker_id.as_str()).collect();
    sequence_entropy(&speakers)
}

/// Conditional entropy of the target speaker given the responding speaker
/// over substantive links, normalized by the observed speaker count.
pub fn responsivity_entropy<T: Real>(links: &LinkTable, conv: &Conversation) -> T {
    let turns = conv.turns();
    let pairs: Vec<(&str, &str)> = links
        .links()
        .filter(|l| l.kind == LinkKind::Substantive)
        .map(|l| {
            (
                turns[l.source].speaker_id.as_str(),
                turns[l.target].speaker_id.as_str(),
            )
        })
        .collect();
    conditional_entropy(&pairs, conv.speakers().len())
}

/// Which links and responders count toward a response rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RateFilter {
    /// nonself: ignore links to the responder's own turns.
    pub exclude_self_targets: bool,
    /// nonfac: ignore links to facilitator turns.
    pub exclude_facilitator_targets: bool,
    /// exclfac: drop facilitators from the responders.
    pub exclude_facilitator_responders: bool,
}

impl RateFilter {
    pub const NONE: RateFilter = RateFilter::new(false, false, false);
    pub const NONSELF: RateFilter = RateFilter::new(true, false, false);
    pub const NONFAC: RateFilter = RateFilter::new(false, true, false);
    pub const NONSELF_NONFAC: RateFilter = RateFilter::new(true, true, false);
    pub const NONSELF_EXCLFAC: RateFilter = RateFilter::new(true, false, true);
    pub const NONSELF_NONFAC_EXCLFAC: RateFilter = RateFilter::new(true, true, true);

    pub const fn new(nonself: bool, nonfac: bool, exclfac: bool) -> Self {
        RateFilter {
            exclude_self_targets: nonself,
            exclude_facilitator_targets: nonfac,
            exclude_facilitator_responders: exclfac,
        }
    }
}

/// Per speaker: the share of their turns carrying at least one qualifying
/// outgoing link of `kind`.
pub fn per_speaker_response_rate<T: Scalar>(
    conv: &Conversation,
    links: &LinkTable,
    kind: LinkKind,
    filter: RateFilter,
) -> BTreeMap<String, T> {
    let turns = conv.turns();
    let mut tallies: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for turn in turns {
        if filter.exclude_facilitator_responders && turn.is_facilitator() {
            continue;
        }
        let responds = links.links_from(turn.turn_id).any(|l| {
            let target = &turns[l.target];
            l.kind == kind
                && !(filter.exclude_self_targets && target.speaker_id == turn.speaker_id)
                && !(filter.exclude_facilitator_targets && target.is_facilitator())
        });
        let entry = tallies.entry(turn.speaker_id.as_str()).or_default();
        entry.0 += usize::from(responds);
        entry.1 += 1;
    }
    tallies
        .into_iter()
        .map(|(speaker, (hits, total))| {
            (speaker.to_string(), T::from_count(hits) / T::from_count(total))
        })
        .collect()
}

macro_rules! features {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// The conversation-level features, in canonical column order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Feature { $($variant),+ }

        impl Feature {
            pub const ALL: [Feature; 23] = [$(Feature::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $(Feature::$variant => $name),+ }
            }

            pub fn from_name(name: &str) -> Option<Feature> {
                match name { $($name => Some(Feature::$variant),)+ _ => None }
            }
        }
    };
}

features! {
    SpeakingTimeGini => "speaking_time_gini_coefficient",
    TurnDistributionGini => "turn_distribution_gini_coefficient",
    NonFacilitatorSpeakingGini => "non_facilitator_speaking_gini_coefficient",
    NonFacilitatorTurnGini => "non_facilitator_turn_gini_coefficient",
    GiniSubstNonself => "gini_subst_responded_rate_nonself",
    GiniSubstNonselfNonfac => "gini_subst_responded_rate_nonself_nonfac",
    GiniSubstNonselfExclfac => "gini_subst_responded_rate_nonself_exclfac",
    GiniSubstNonselfNonfacExclfac => "gini_subst_responded_rate_nonself_nonfac_exclfac",
    TurnSequenceEntropy => "turn_sequence_entropy",
    SubstantiveResponsivityEntropy => "substantive_responsivity_entropy",
    FacilitatorSpeakingPercentage => "facilitator_speaking_percentage",
    FacilitatorTurnsPercentage => "facilitator_turns_percentage",
    NumTurnsFacilitator => "num_turns_facilitator",
    NumObservedSpeakers => "num_observed_speakers",
    TotalTurns => "total_turns_in_conversation",
    TotalSpeakingTimeSeconds => "total_speaking_time_seconds",
    TurnCountVariance => "turn_count_variance",
    AvgSubstRate => "avg_subst_responded_rate",
    AvgMechRate => "avg_mech_responded_rate",
    AvgSubstRateNonself => "avg_subst_responded_rate_nonself",
    AvgSubstRateNonfac => "avg_subst_responded_rate_nonfac",
    AvgSubstRateNonselfExclfac => "avg_subst_responded_rate_nonself_exclfac",
    AvgSubstRateNonselfNonfacExclfac => "avg_subst_responded_rate_nonself_nonfac_exclfac",
}

impl Feature {
    /// The interpretable subset used for clustering by default.
    pub const REDUCED: [Feature; 12] = [
        Feature::NonFacilitatorSpeakingGini,
        Feature::GiniSubstNonself,
        Feature::TurnSequenceEntropy,
        Feature::SubstantiveResponsivityEntropy,
        Feature::FacilitatorSpeakingPercentage,
        Feature::FacilitatorTurnsPercentage,
        Feature::NumObservedSpeakers,
        Feature::TotalSpeakingTimeSeconds,
        Feature::AvgSubstRate,
        Feature::AvgMechRate,
        Feature::AvgSubstRateNonself,
        Feature::AvgSubstRateNonselfNonfacExclfac,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All features of one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub conversation_id: String,
    values: [T; 23],
}

impl<T: Copy> FeatureVector<T> {
    pub fn new(conversation_id: impl Into<String>, values: [T; 23]) -> Self {
        FeatureVector {
            conversation_id: conversation_id.into(),
            values,
        }
    }

    pub fn get(&self, feature: Feature) -> T {
        self.values[feature.index()]
    }

    pub fn values(&self) -> &[T; 23] {
        &self.values
    }

    /// Values of `features`, in the given order.
    pub fn project(&self, features: &[Feature]) -> Vec<T> {
        features.iter().map(|f| self.get(*f)).collect()
    }
}

fn mean<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let (sum, n) = values
        .into_iter()
        .fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        T::zero()
    } else {
        sum / T::from_count(n)
    }
}

fn gini_or_zero<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        Ok(T::zero())
    } else {
        gini(values)
    }
}

fn percent<T: Scalar>(part: T, whole: T) -> T {
    if whole == T::zero() {
        T::zero()
    } else {
        T::from_count(100) * part / whole
    }
}

/// Computes every feature for a conversation and its consolidated links.
pub fn compute_features<T: Real>(conv: &Conversation, links: &LinkTable) -> Result<FeatureVector<T>> {
    if links.conversation_id() != conv.id() || links.num_turns() != conv.len() {
        return Err(Error::Argument(format!(
            "links for {} do not match conversation {}",
            links.conversation_id(),
            conv.id()
        )));
    }
    let speakers = conv.speakers();
    let mut time: BTreeMap<&str, T> = BTreeMap::new();
    let mut turns: BTreeMap<&str, usize> = BTreeMap::new();
    for turn in conv.turns() {
        let secs = T::from_f64(speaking_time(turn))
            .ok_or_else(|| Error::Numeric("speaking time not representable".into()))?;
        let acc = time.entry(turn.speaker_id.as_str()).or_insert(T::zero());
        *acc = *acc + secs;
        *turns.entry(turn.speaker_id.as_str()).or_default() += 1;
    }
    let is_fac = |s: &str| conv.role_of(s).is_some_and(|r| r.is_facilitator());
    let all_time: Vec<T> = speakers.iter().map(|s| time[s]).collect();
    let all_turns: Vec<T> = speakers.iter().map(|s| T::from_count(turns[s])).collect();
    let part_time: Vec<T> = speakers.iter().filter(|s| !is_fac(s)).map(|s| time[s]).collect();
    let part_turns: Vec<T> = speakers
        .iter()
        .filter(|s| !is_fac(s))
        .map(|s| T::from_count(turns[s]))
        .collect();

    let total_time = all_time.iter().fold(T::zero(), |a, &b| a + b);
    let fac_time = speakers
        .iter()
        .filter(|s| is_fac(s))
        .fold(T::zero(), |a, s| a + time[s]);
    let fac_turns = conv.turns().iter().filter(|t| t.is_facilitator()).count();
    let n_turns = T::from_count(conv.len());

    let mean_turns = mean(all_turns.iter().copied());
    let variance = mean(all_turns.iter().map(|&c| (c - mean_turns) * (c - mean_turns)));

    let rates = |kind, filter| -> Vec<T> {
        per_speaker_response_rate::<T>(conv, links, kind, filter)
            .into_values()
            .collect()
    };
    let subst = |filter| rates(LinkKind::Substantive, filter);

    let seq_entropy = if conv.len() < 2 {
        T::zero()
    } else {
        turn_sequence_entropy(conv)?
    };

    use Feature::*;
    let mut values = [T::zero(); 23];
    let mut set = |f: Feature, v: T| values[f.index()] = v;
    set(SpeakingTimeGini, gini_or_zero(&all_time)?);
    set(TurnDistributionGini, gini_or_zero(&all_turns)?);
    set(NonFacilitatorSpeakingGini, gini_or_zero(&part_time)?);
    set(NonFacilitatorTurnGini, gini_or_zero(&part_turns)?);
    set(GiniSubstNonself, gini_or_zero(&subst(RateFilter::NONSELF))?);
    set(GiniSubstNonselfNonfac, gini_or_zero(&subst(RateFilter::NONSELF_NONFAC))?);
    set(GiniSubstNonselfExclfac, gini_or_zero(&subst(RateFilter::NONSELF_EXCLFAC))?);
    set(
        GiniSubstNonselfNonfacExclfac,
        gini_or_zero(&subst(RateFilter::NONSELF_NONFAC_EXCLFAC))?,
    );
    set(TurnSequenceEntropy, seq_entropy);
    set(SubstantiveResponsivityEntropy, responsivity_entropy(links, conv));
    set(FacilitatorSpeakingPercentage, percent(fac_time, total_time));
    set(FacilitatorTurnsPercentage, percent(T::from_count(fac_turns), n_turns));
    set(NumTurnsFacilitator, T::from_count(fac_turns));
    set(NumObservedSpeakers, T::from_count(speakers.len()));
    set(TotalTurns, n_turns);
    set(TotalSpeakingTimeSeconds, total_time);
    set(TurnCountVariance, variance);
    set(AvgSubstRate, mean(subst(RateFilter::NONE)));
    set(AvgMechRate, mean(rates(LinkKind::Mechanical, RateFilter::NONE)));
    set(AvgSubstRateNonself, mean(subst(RateFilter::NONSELF)));
    set(AvgSubstRateNonfac, mean(subst(RateFilter::NONFAC)));
    set(AvgSubstRateNonselfExclfac, mean(subst(RateFilter::NONSELF_EXCLFAC)));
    set(
        AvgSubstRateNonselfNonfacExclfac,
        mean(subst(RateFilter::NONSELF_NONFAC_EXCLFAC)),
    );
    Ok(FeatureVector::new(conv.id(), values))
}

/// Features CSV: `conversation_id` then one column per feature, 6 decimals.
pub fn features_to_csv<T: Real>(rows: &[FeatureVector<T>], columns: &[Feature]) -> String {
    let mut header = vec!["conversation_id"];
    header.extend(columns.iter().map(|f| f.name()));
    crate::csvio::write_table(
        &header,
        rows.iter().map(|row| {
            std::iter::once(row.conversation_id.clone())
                .chain(
                    columns
                        .iter()
                        .map(|f| format!("{:.6}", row.get(*f).to_f64().unwrap_or(f64::NAN))),
                )
                .collect()
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SpeakerRole, Turn, WindowConfig};
    use crate::linkspace::Link;
    use num_rational::Ratio;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(gini(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.25);
        assert_eq!(gini(&[0.0, 0.0, 0.0, 10.0]).unwrap(), 0.75);
        assert_eq!(gini(&[7.0]).unwrap(), 0.0);
        assert_eq!(gini(&[0.0, 0.0]).unwrap(), 0.0);
        let r = gini(&[Ratio::new(3, 1), Ratio::new(1, 1), Ratio::new(2, 1)]).unwrap();
        assert_eq!(r, Ratio::new(2, 9));
        assert!(gini(&[1.0f32, 2.0, 3.0, 4.0]).unwrap() - 0.25 < 1e-6);
    }

    #[test]
    fn gini_rejects_bad_input() {
        assert!(gini::<f64>(&[]).is_err());
        assert!(gini(&[1.0, -0.5]).is_err());
        assert!(gini(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sequence_entropy_examples() {
        let cyc: Vec<char> = "ABCABCABC".chars().collect();
        assert_eq!(sequence_entropy::<f64, _>(&cyc).unwrap(), 0.0);
        let alt: Vec<char> = "ABABAB".chars().collect();
        assert_eq!(sequence_entropy::<f64, _>(&alt).unwrap(), 0.0);
        let raw: Vec<char> = "ABBABBABB".chars().collect();
        let h: f64 = sequence_entropy(&raw).unwrap();
        assert!((h - 0.6069).abs() < 1e-3, "{h}");
        assert!(sequence_entropy::<f64, char>(&['A']).is_err());
    }

    fn turn(i: usize, speaker: &str, fac: bool, words: &str) -> Turn {
        Turn {
            turn_id: i,
            speaker_id: speaker.into(),
            role: if fac { SpeakerRole::Facilitator } else { SpeakerRole::Participant },
            words: words.into(),
            start_time: None,
            end_time: None,
            extra: Default::default(),
        }
    }

    #[test]
    fn responsivity_entropy_degenerate_cases() {
        let conv = Conversation::from_utterances(
            "c",
            Default::default(),
            vec![turn(0, "A", false, "x"), turn(1, "B", false, "y"), turn(2, "A", false, "z")],
        )
        .unwrap();
        let mut table = LinkTable::for_conversation(&conv, WindowConfig::default());
        assert_eq!(responsivity_entropy::<f64>(&table, &conv), 0.0);
        table.insert(Link::new(1, 0, LinkKind::Substantive)).unwrap();
        table.insert(Link::new(2, 1, LinkKind::Substantive)).unwrap();
        assert_eq!(responsivity_entropy::<f64>(&table, &conv), 0.0);
    }

    #[test]
    fn response_rate_basics() {
        // A has 4 turns, 2 with substantive links
        let conv = Conversation::from_utterances(
            "c",
            Default::default(),
            (0..8)
                .map(|i| turn(i, if i % 2 == 0 { "A" } else { "B" }, false, "w"))
                .collect(),
        )
        .unwrap();
        let mut table = LinkTable::for_conversation(&conv, WindowConfig::default());
        table.insert(Link::new(2, 1, LinkKind::Substantive)).unwrap();
        table.insert(Link::new(4, 2, LinkKind::Substantive)).unwrap();
        table.insert(Link::new(4, 3, LinkKind::Substantive)).unwrap();
        let r = per_speaker_response_rate::<Ratio<i64>>(&conv, &table, LinkKind::Substantive, RateFilter::NONE);
        assert_eq!(r["A"], Ratio::new(1, 2));
        assert_eq!(r["B"], Ratio::new(0, 1));

        // only self-targeted links remain zero under nonself
        let mut selfish = LinkTable::for_conversation(&conv, WindowConfig::default());
        selfish.insert(Link::new(2, 0, LinkKind::Substantive)).unwrap();
        selfish.insert(Link::new(5, 3, LinkKind::Substantive)).unwrap();
        let r = per_speaker_response_rate::<f64>(&conv, &selfish, LinkKind::Substantive, RateFilter::NONSELF);
        assert!(r.values().all(|v| *v == 0.0));
    }

    #[test]
    fn facilitator_share_and_variance() {
        let mut turns = vec![
            turn(0, "F", true, "w"),
            turn(1, "A", false, "w"),
            turn(2, "B", false, "w"),
            turn(3, "F", true, "w"),
            turn(4, "A", false, "w"),
            turn(5, "B", false, "w"),
        ];
        let spans = [(0.0, 10.0), (10.0, 40.0), (40.0, 70.0), (70.0, 90.0), (90.0, 110.0), (110.0, 120.0)];
        for (t, (s, e)) in turns.iter_mut().zip(spans) {
            t.start_time = Some(s);
            t.end_time = Some(e);
        }
        let conv = Conversation::from_utterances("c", Default::default(), turns).unwrap();
        let table = LinkTable::for_conversation(&conv, WindowConfig::default());
        let f: FeatureVector<f64> = compute_features(&conv, &table).unwrap();
        assert_eq!(f.get(Feature::FacilitatorSpeakingPercentage), 25.0);
        assert_eq!(f.get(Feature::TurnCountVariance), 0.0);
        assert_eq!(f.get(Feature::TotalSpeakingTimeSeconds), 120.0);
        assert_eq!(f.get(Feature::NumTurnsFacilitator), 2.0);
        assert_eq!(f.get(Feature::NumObservedSpeakers), 3.0);
        assert_eq!(f.get(Feature::TurnSequenceEntropy), 0.0);
    }

    #[test]
    fn feature_names_are_unique_and_reduced_is_subset() {
        let names: std::collections::BTreeSet<_> = Feature::ALL.iter().map(|f| f.name()).collect();
        assert_eq!(names.len(), 23);
        for f in Feature::ALL {
            assert_eq!(Feature::from_name(f.name()), Some(f));
            assert_eq!(Feature::ALL[f.index()], f);
        }
        let reduced: std::collections::BTreeSet<_> = Feature::REDUCED.iter().collect();
        assert_eq!(reduced.len(), 12);
    }

    #[test]
    fn single_turn_conversation_has_defined_features() {
        let conv = Conversation::from_utterances("c", Default::default(), vec![turn(0, "F", true, "hello all")]).unwrap();
        let table = LinkTable::for_conversation(&conv, WindowConfig::default());
        let f: FeatureVector<f64> = compute_features(&conv, &table).unwrap();
        assert!(f.values().iter().all(|v| v.is_finite()));
        assert_eq!(f.get(Feature::FacilitatorTurnsPercentage), 100.0);
    }
}
