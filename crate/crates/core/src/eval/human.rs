use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const SCORE_MIN: u8 = 1;
pub const SCORE_MAX: u8 = 4;

/// One rater's scores for one item, each on a 1 to 4 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRating {
    pub item_id: String,
    pub rater_id: String,
    pub constructiveness: u8,
    pub clarity: u8,
    pub knowledgeability: u8,
    pub overall: u8,
}

impl HumanRating {
    fn scores(&self) -> [(&'static str, u8); 4] {
        [
            ("constructiveness", self.constructiveness),
            ("clarity", self.clarity),
            ("knowledgeability", self.knowledgeability),
            ("overall", self.overall),
        ]
    }

    pub fn check(&self) -> Result<(), EvalError> {
        for (field, value) in self.scores() {
            if !(SCORE_MIN..=SCORE_MAX).contains(&value) {
                return Err(EvalError::ScoreRange {
                    item_id: self.item_id.clone(),
                    rater_id: self.rater_id.clone(),
                    field,
                    value: value.into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScoreSummary {
    pub constructiveness: f64,
    pub clarity: f64,
    pub knowledgeability: f64,
    pub overall: f64,
    pub n_ratings: usize,
    pub n_items: usize,
    pub n_raters: usize,
}

pub fn aggregate_human_scores(ratings: &[HumanRating]) -> Result<HumanScoreSummary, EvalError> {
    if ratings.is_empty() {
        return Err(EvalError::EmptyInput("ratings"));
    }
    for r in ratings {
        r.check()?;
    }
    let n = ratings.len() as f64;
    let mean = |f: fn(&HumanRating) -> u8| ratings.iter().map(|r| f(r) as f64).sum::<f64>() / n;
    let mut items: Vec<&str> = ratings.iter().map(|r| r.item_id.as_str()).collect();
    items.sort_unstable();
    items.dedup();
    let mut raters: Vec<&str> = ratings.iter().map(|r| r.rater_id.as_str()).collect();
    raters.sort_unstable();
    raters.dedup();
    Ok(HumanScoreSummary {
        constructiveness: mean(|r| r.constructiveness),
        clarity: mean(|r| r.clarity),
        knowledgeability: mean(|r| r.knowledgeability),
        overall: mean(|r| r.overall),
        n_ratings: ratings.len(),
        n_items: items.len(),
        n_raters: raters.len(),
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader)
}

fn is_header(record: &csv::StringRecord) -> bool {
    record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("item_id"))
}

/// Reads `item_id, rater_id, constructiveness, clarity, knowledgeability,
/// overall` rows. A leading header row is skipped.
pub fn read_human_ratings<R: Read>(reader: R) -> Result<Vec<HumanRating>, EvalError> {
    let mut out = Vec::new();
    for (i, row) in csv_reader(reader).records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| EvalError::Parse {
            line,
            message: e.to_string(),
        })?;
        if is_header(&row) {
            continue;
        }
        if row.len() != 6 {
            return Err(EvalError::Parse {
                line,
                message: format!("expected 6 fields, found {}", row.len()),
            });
        }
        let score = |k: usize| -> Result<u8, EvalError> {
            row[k].parse::<u8>().map_err(|_| EvalError::Parse {
                line,
                message: format!("score {:?} is not an integer in 1..=4", &row[k]),
            })
        };
        let rating = HumanRating {
            item_id: row[0].to_string(),
            rater_id: row[1].to_string(),
            constructiveness: score(2)?,
            clarity: score(3)?,
            knowledgeability: score(4)?,
            overall: score(5)?,
        };
        rating.check()?;
        out.push(rating);
    }
    Ok(out)
}

pub fn load_human_ratings(path: impl AsRef<Path>) -> Result<Vec<HumanRating>, EvalError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    read_human_ratings(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackErrorCategory {
    OverlyDivergentAdvice,
    ExcessiveCoaching,
    LimitedMedicalKnowledge,
    RoleMismatch,
    None,
}

impl FeedbackErrorCategory {
    /// The four failure categories, without `None`.
    pub const ERRORS: [FeedbackErrorCategory; 4] = [
        FeedbackErrorCategory::OverlyDivergentAdvice,
        FeedbackErrorCategory::ExcessiveCoaching,
        FeedbackErrorCategory::LimitedMedicalKnowledge,
        FeedbackErrorCategory::RoleMismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackErrorCategory::OverlyDivergentAdvice => "overly_divergent_advice",
            FeedbackErrorCategory::ExcessiveCoaching => "excessive_coaching",
            FeedbackErrorCategory::LimitedMedicalKnowledge => "limited_medical_knowledge",
            FeedbackErrorCategory::RoleMismatch => "role_mismatch",
            FeedbackErrorCategory::None => "none",
        }
    }
}

impl fmt::Display for FeedbackErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeedbackErrorCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeedbackErrorCategory::ERRORS
            .into_iter()
            .chain([FeedbackErrorCategory::None])
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown error category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCategoryLabel {
    pub item_id: String,
    pub category: FeedbackErrorCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRate {
    pub category: FeedbackErrorCategory,
    pub count: usize,
    pub rate_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTally {
    pub total: usize,
    pub rates: Vec<CategoryRate>,
}

impl ErrorTally {
    pub fn rate(&self, category: FeedbackErrorCategory) -> Option<f64> {
        self.rates.iter().find(|r| r.category == category).map(|r| r.rate_percent)
    }
}

/// Percentage of labels in each of the four failure categories.
pub fn tally_error_categories(labels: &[ErrorCategoryLabel]) -> Result<ErrorTally, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::EmptyInput("labels"));
    }
    let total = labels.len();
    let rates = FeedbackErrorCategory::ERRORS
        .into_iter()
        .map(|category| {
            let count = labels.iter().filter(|l| l.category == category).count();
            CategoryRate {
                category,
                count,
                rate_percent: 100.0 * count as f64 / total as f64,
            }
        })
        .collect();
    Ok(ErrorTally { total, rates })
}

/// Reads `item_id, category` rows. A leading header row is skipped.
pub fn read_error_labels<R: Read>(reader: R) -> Result<Vec<ErrorCategoryLabel>, EvalError> {
    let mut out = Vec::new();
    for (i, row) in csv_reader(reader).records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| EvalError::Parse {
            line,
            message: e.to_string(),
        })?;
        if is_header(&row) {
            continue;
        }
        if row.len() != 2 {
            return Err(EvalError::Parse {
                line,
                message: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let category = row[1].parse().map_err(|message| EvalError::Parse { line, message })?;
        out.push(ErrorCategoryLabel {
            item_id: row[0].to_string(),
            category,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(item: &str, c: u8, cl: u8, k: u8, o: u8) -> HumanRating {
        HumanRating {
            item_id: item.into(),
            rater_id: "r1".into(),
            constructiveness: c,
            clarity: cl,
            knowledgeability: k,
            overall: o,
        }
    }

    #[test]
    fn single_rating_means() {
        let s = aggregate_human_scores(&[rating("a", 2, 3, 2, 2)]).unwrap();
        assert_eq!(
            (s.constructiveness, s.clarity, s.knowledgeability, s.overall),
            (2.0, 3.0, 2.0, 2.0)
        );
    }

    #[test]
    fn overall_mean_of_two() {
        let s = aggregate_human_scores(&[rating("a", 1, 1, 1, 2), rating("b", 1, 1, 1, 3)]).unwrap();
        assert_eq!(s.overall, 2.5);
        assert_eq!(s.n_items, 2);
    }

    #[test]
    fn range_enforced() {
        assert!(matches!(
            aggregate_human_scores(&[rating("a", 2, 5, 2, 2)]),
            Err(EvalError::ScoreRange { field: "clarity", .. })
        ));
        assert!(aggregate_human_scores(&[]).is_err());
    }

    #[test]
    fn csv_round() {
        let text = "item_id,rater_id,constructiveness,clarity,knowledgeability,overall\nc1#1, r1, 3,4,2,3\n";
        let r = read_human_ratings(text.as_bytes()).unwrap();
        assert_eq!(r, vec![HumanRating { rater_id: "r1".into(), ..rating("c1#1", 3, 4, 2, 3) }]);
        let err = read_human_ratings("a,b,1,2,x,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EvalError::Parse { line: 1, .. }));
        assert!(read_human_ratings("a,b,1,2,3,9\n".as_bytes()).is_err());
    }

    fn labels(counts: &[(FeedbackErrorCategory, usize)]) -> Vec<ErrorCategoryLabel> {
        counts
            .iter()
            .flat_map(|(c, n)| {
                (0..*n).map(move |i| ErrorCategoryLabel {
                    item_id: format!("{c}-{i}"),
                    category: *c,
                })
            })
            .collect()
    }

    #[test]
    fn tally_rates() {
        let t = tally_error_categories(&labels(&[(FeedbackErrorCategory::None, 5)])).unwrap();
        assert!(t.rates.iter().all(|r| r.rate_percent == 0.0));
        assert_eq!(t.rates.len(), 4);

        let one_each: Vec<_> = FeedbackErrorCategory::ERRORS.iter().map(|c| (*c, 1)).collect();
        let t = tally_error_categories(&labels(&one_each)).unwrap();
        assert!(t.rates.iter().all(|r| r.rate_percent == 25.0));

        assert!(tally_error_categories(&[]).is_err());
    }

    #[test]
    fn label_csv() {
        let l = read_error_labels("item_id,category\nx,role_mismatch\ny,none\n".as_bytes()).unwrap();
        assert_eq!(l[0].category, FeedbackErrorCategory::RoleMismatch);
        assert!(read_error_labels("x,rude\n".as_bytes()).is_err());
    }
}
