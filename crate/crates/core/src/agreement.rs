//! Jaccard agreement between annotation sources and link-confusion tallies.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linkspace::{ConsolidatedAnnotation, LinkKind, LinkTable};
use crate::scalar::Scalar;

/// `|a ∩ b| / |a ∪ b|`, with two empty sets agreeing perfectly.
pub fn jaccard<T: Scalar>(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> T {
    let union = a.union(b).count();
    if union == 0 {
        return T::one();
    }
    T::from_count(a.intersection(b).count()) / T::from_count(union)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AgreementOptions {
    /// Leave turns where both sources are empty out of the mean.
    pub skip_empty_pairs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport<T> {
    pub conversation_id: String,
    pub sources: (String, String),
    pub per_turn_jaccard: BTreeMap<usize, T>,
    pub mean_jaccard: T,
    pub options: AgreementOptions,
}

fn check_frame(a: &LinkTable, b: &LinkTable) -> Result<()> {
    if a.conversation_id() != b.conversation_id() {
        return Err(Error::Argument(format!(
            "conversation mismatch: {} vs {}",
            a.conversation_id(),
            b.conversation_id()
        )));
    }
    if a.window() != b.window() || a.num_turns() != b.num_turns() {
        return Err(Error::Argument(format!(
            "window/turn mismatch on {}: ({}, {}) vs ({}, {})",
            a.conversation_id(),
            a.window().size,
            a.num_turns(),
            b.window().size,
            b.num_turns()
        )));
    }
    Ok(())
}

/// Per-turn Jaccard over target sets and its mean over turns that have at
/// least one candidate target (every turn after the first). A conversation
/// with no evaluable turns has mean 1.
pub fn conversation_agreement<T: Scalar>(
    a: &ConsolidatedAnnotation,
    b: &ConsolidatedAnnotation,
    options: AgreementOptions,
) -> Result<AgreementReport<T>> {
    check_frame(&a.table, &b.table)?;
    let mut per_turn = BTreeMap::new();
    for t in 1..a.table.num_turns() {
        let (ta, tb) = (a.table.targets(t), b.table.targets(t));
        if options.skip_empty_pairs && ta.is_empty() && tb.is_empty() {
            continue;
        }
        per_turn.insert(t, jaccard::<T>(&ta, &tb));
    }
    let mean = if per_turn.is_empty() {
        T::one()
    } else {
        per_turn.values().fold(T::zero(), |acc, &v| acc + v) / T::from_count(per_turn.len())
    };
    Ok(AgreementReport {
        conversation_id: a.table.conversation_id().to_string(),
        sources: (a.method_id.clone(), b.method_id.clone()),
        per_turn_jaccard: per_turn,
        mean_jaccard: mean,
        options,
    })
}

/// All annotations one method produced, keyed by conversation id.
#[derive(Debug, Clone)]
pub struct AnnotationSource {
    pub method_id: String,
    pub conversations: BTreeMap<String, ConsolidatedAnnotation>,
}

impl AnnotationSource {
    pub fn new(method_id: impl Into<String>, annotations: impl IntoIterator<Item = ConsolidatedAnnotation>) -> Self {
        AnnotationSource {
            method_id: method_id.into(),
            conversations: annotations
                .into_iter()
                .map(|a| (a.table.conversation_id().to_string(), a))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementMatrix<T> {
    pub method_ids: Vec<String>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar + ToPrimitive> AgreementMatrix<T> {
    /// Header row and column of method ids; cells to 4 decimals.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["method_id"];
        header.extend(self.method_ids.iter().map(String::as_str));
        crate::csvio::write_table(
            &header,
            self.method_ids.iter().zip(&self.values).map(|(id, row)| {
                std::iter::once(id.clone())
                    .chain(row.iter().map(|v| format!("{:.4}", v.to_f64().unwrap_or(f64::NAN))))
                    .collect()
            }),
        )
    }
}

/// Mean of per-conversation mean Jaccard for every pair of sources.
pub fn agreement_matrix<T: Scalar>(
    sources: &[AnnotationSource],
    options: AgreementOptions,
) -> Result<AgreementMatrix<T>> {
    if sources.len() < 2 {
        return Err(Error::Argument("agreement needs at least two sources".into()));
    }
    let keys: BTreeSet<&String> = sources[0].conversations.keys().collect();
    if keys.is_empty() {
        return Err(Error::Argument("sources cover no conversations".into()));
    }
    for s in &sources[1..] {
        if s.conversations.keys().collect::<BTreeSet<_>>() != keys {
            return Err(Error::Argument(format!(
                "source {} covers different conversations than {}",
                s.method_id, sources[0].method_id
            )));
        }
    }
    let n = sources.len();
    let mut values = vec![vec![T::one(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let mut sum = T::zero();
            for key in &keys {
                let report: AgreementReport<T> = conversation_agreement(
                    &sources[i].conversations[*key],
                    &sources[j].conversations[*key],
                    options,
                )?;
                sum = sum + report.mean_jaccard;
            }
            let mean = sum / T::from_count(keys.len());
            values[i][j] = mean;
            values[j][i] = mean;
        }
    }
    Ok(AgreementMatrix {
        method_ids: sources.iter().map(|s| s.method_id.clone()).collect(),
        values,
    })
}

/// Presence/absence cross-tabulation over every candidate (turn, target)
/// pair inside the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionTally {
    pub both_present: usize,
    pub a_only: usize,
    pub b_only: usize,
    pub both_absent: usize,
}

impl ConfusionTally {
    pub fn total(&self) -> usize {
        self.both_present + self.a_only + self.b_only + self.both_absent
    }

    /// Fraction of candidate pairs on which the sources agree.
    pub fn agreement_rate(&self) -> f64 {
        if self.total() == 0 {
            return 1.0;
        }
        (self.both_present + self.both_absent) as f64 / self.total() as f64
    }

    /// `[both_present, a_only, b_only, both_absent]` as percentages.
    pub fn percentages(&self) -> [f64; 4] {
        let total = self.total().max(1) as f64;
        [self.both_present, self.a_only, self.b_only, self.both_absent]
            .map(|c| 100.0 * c as f64 / total)
    }

    pub fn merge(&mut self, other: &ConfusionTally) {
        self.both_present += other.both_present;
        self.a_only += other.a_only;
        self.b_only += other.b_only;
        self.both_absent += other.both_absent;
    }
}

fn present(table: &LinkTable, s: usize, t: usize, kinds: Option<&[LinkKind]>) -> bool {
    match (table.get(s, t), kinds) {
        (None, _) => false,
        (Some(_), None) => true,
        (Some(link), Some(k)) => k.contains(&link.kind),
    }
}

/// Tallies link presence in `a` and `b`; with `kinds`, a link counts as
/// present only when its kind is listed.
pub fn link_confusion(
    a: &ConsolidatedAnnotation,
    b: &ConsolidatedAnnotation,
    kinds: Option<&[LinkKind]>,
) -> Result<ConfusionTally> {
    check_frame(&a.table, &b.table)?;
    let mut tally = ConfusionTally::default();
    let window = a.table.window();
    for s in 1..a.table.num_turns() {
        for t in window.candidate_targets(s) {
            match (present(&a.table, s, t, kinds), present(&b.table, s, t, kinds)) {
                (true, true) => tally.both_present += 1,
                (true, false) => tally.a_only += 1,
                (false, true) => tally.b_only += 1,
                (false, false) => tally.both_absent += 1,
            }
        }
    }
    Ok(tally)
}

/// Kind agreement restricted to links both sources contain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KindAgreement {
    pub both_present: usize,
    pub same_kind: usize,
    /// `(kind in a, kind in b)` → count.
    pub pairs: BTreeMap<String, usize>,
}

pub fn kind_agreement(a: &ConsolidatedAnnotation, b: &ConsolidatedAnnotation) -> Result<KindAgreement> {
    check_frame(&a.table, &b.table)?;
    let mut out = KindAgreement::default();
    for la in a.table.links() {
        if let Some(lb) = b.table.get(la.source, la.target) {
            out.both_present += 1;
            if la.kind == lb.kind {
                out.same_kind += 1;
            }
            *out.pairs.entry(format!("{}/{}", la.kind, lb.kind)).or_default() += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WindowConfig;
    use crate::linkspace::{AnnotationRun, Link};
    use num_rational::Ratio;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    fn ann(method: &str, n: usize, links: &[(usize, usize, LinkKind)]) -> ConsolidatedAnnotation {
        let mut table = LinkTable::new("c", WindowConfig::default(), n);
        for &(s, t, k) in links {
            table.insert(Link::new(s, t, k)).unwrap();
        }
        ConsolidatedAnnotation::from_run(AnnotationRun::new(method, 0, table))
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard::<f64>(&set(&[28]), &set(&[28])), 1.0);
        assert_eq!(jaccard::<f64>(&set(&[20, 28]), &set(&[28])), 0.5);
        assert_eq!(jaccard::<f64>(&set(&[]), &set(&[])), 1.0);
        assert_eq!(jaccard::<f64>(&set(&[1]), &set(&[2])), 0.0);
        assert_eq!(
            jaccard::<Ratio<i64>>(&set(&[1, 2, 3]), &set(&[2, 3, 4, 5])),
            Ratio::new(2, 5)
        );
    }

    #[test]
    fn identical_and_disjoint_conversations() {
        use LinkKind::Unclassified as U;
        let a = ann("a", 4, &[(1, 0, U), (2, 1, U), (3, 2, U)]);
        let r: AgreementReport<f64> = conversation_agreement(&a, &a, Default::default()).unwrap();
        assert_eq!(r.mean_jaccard, 1.0);
        let b = ann("b", 4, &[(2, 0, U), (3, 1, U)]);
        let c = ann("c", 4, &[(1, 0, U), (2, 1, U), (3, 0, U)]);
        let r: AgreementReport<f64> = conversation_agreement(&b, &c, Default::default()).unwrap();
        // turn 1: {} vs {0} -> 0; turn 2: {0} vs {1} -> 0; turn 3: {1} vs {0} -> 0
        assert_eq!(r.mean_jaccard, 0.0);
    }

    #[test]
    fn half_matching_fixture() {
        use LinkKind::Unclassified as U;
        // turns 1, 2 match exactly; turns 3, 4 are disjoint and nonempty
        let a = ann("a", 5, &[(1, 0, U), (2, 0, U), (2, 1, U), (3, 2, U), (4, 3, U)]);
        let b = ann("b", 5, &[(1, 0, U), (2, 0, U), (2, 1, U), (3, 1, U), (4, 0, U), (4, 2, U)]);
        let r: AgreementReport<Ratio<i64>> = conversation_agreement(&a, &b, Default::default()).unwrap();
        assert_eq!(r.mean_jaccard, Ratio::new(1, 2));
    }

    #[test]
    fn skip_empty_pairs_changes_denominator() {
        use LinkKind::Unclassified as U;
        let a = ann("a", 4, &[(3, 2, U)]);
        let b = ann("b", 4, &[(3, 1, U)]);
        let with: AgreementReport<Ratio<i64>> = conversation_agreement(&a, &b, Default::default()).unwrap();
        assert_eq!(with.mean_jaccard, Ratio::new(2, 3));
        let opts = AgreementOptions { skip_empty_pairs: true };
        let without: AgreementReport<Ratio<i64>> = conversation_agreement(&a, &b, opts).unwrap();
        assert_eq!(without.mean_jaccard, Ratio::new(0, 1));
    }

    #[test]
    fn mismatched_conversations_rejected() {
        let a = ann("a", 4, &[]);
        let b = ann("b", 5, &[]);
        assert!(conversation_agreement::<f64>(&a, &b, Default::default()).is_err());
        assert!(link_confusion(&a, &b, None).is_err());
    }

    #[test]
    fn matrix_shapes() {
        use LinkKind::Unclassified as U;
        let a = ann("a", 3, &[(1, 0, U), (2, 1, U)]);
        let disjoint = ann("d", 3, &[(2, 0, U)]);
        let src = |m: &str, x: &ConsolidatedAnnotation| AnnotationSource::new(m, [x.clone()]);
        let m: AgreementMatrix<f64> =
            agreement_matrix(&[src("a", &a), src("a2", &a)], Default::default()).unwrap();
        assert_eq!(m.values, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let m: AgreementMatrix<f64> = agreement_matrix(
            &[src("a", &a), src("a2", &a), src("d", &disjoint)],
            Default::default(),
        )
        .unwrap();
        assert_eq!(m.values[2], vec![0.0, 0.0, 1.0]);
        assert_eq!(m.values[0][2], 0.0);
        assert!(agreement_matrix::<f64>(&[src("a", &a)], Default::default()).is_err());
        assert_eq!(
            m.to_csv().lines().next().unwrap(),
            "method_id,a,a2,d"
        );
        assert_eq!(m.to_csv().lines().nth(3).unwrap(), "d,0.0000,0.0000,1.0000");
    }

    #[test]
    fn confusion_examples() {
        use LinkKind::*;
        let links = [(1, 0, Substantive), (3, 1, Mechanical), (5, 4, Unclassified)];
        let a = ann("a", 6, &links);
        // candidates: 1 + 2 + 3 + 4 + 5 = 15
        let t = link_confusion(&a, &a, None).unwrap();
        assert_eq!(t, ConfusionTally { both_present: 3, a_only: 0, b_only: 0, both_absent: 12 });
        let empty = ann("e", 6, &[]);
        let t = link_confusion(&empty, &a, None).unwrap();
        assert_eq!(t.b_only, 3);
        assert_eq!(t.total(), 15);
        let t = link_confusion(&a, &a, Some(&[Substantive])).unwrap();
        assert_eq!(t.both_present, 1);
        assert_eq!(t.both_absent, 14);
    }

    #[test]
    fn kind_agreement_counts_shared_links_only() {
        use LinkKind::*;
        let a = ann("a", 4, &[(1, 0, Substantive), (2, 1, Mechanical), (3, 2, Substantive)]);
        let b = ann("b", 4, &[(1, 0, Substantive), (2, 1, Substantive)]);
        let k = kind_agreement(&a, &b).unwrap();
        assert_eq!((k.both_present, k.same_kind), (2, 1));
        assert_eq!(k.pairs["mechanical/substantive"], 1);
    }
}
