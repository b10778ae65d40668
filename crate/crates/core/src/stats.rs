//! Dataset statistics in the testing-set table layout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ConversationRecord, ErrorCategory, Role};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub conversations: usize,
    pub distinct_diseases: usize,
    pub doctor_statements: usize,
    pub patient_responses: usize,
    pub coach_turns: usize,
    pub annotations: BTreeMap<ErrorCategory, usize>,
    /// Doctor turns carrying at least one annotation.
    pub correction_cases: usize,
    /// Coach turns that follow a doctor turn without annotations.
    pub nonlingual: usize,
}

impl DatasetStats {
    pub fn annotation_count(&self, category: ErrorCategory) -> usize {
        self.annotations.get(&category).copied().unwrap_or(0)
    }

    pub fn total_annotations(&self) -> usize {
        self.annotations.values().sum()
    }
}

pub fn dataset_stats(records: &[ConversationRecord]) -> DatasetStats {
    let mut stats = DatasetStats {
        conversations: records.len(),
        annotations: ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect(),
        ..Default::default()
    };
    let mut diseases = BTreeSet::new();
    for record in records {
        diseases.extend(record.scenario.disease_ids.iter().map(String::as_str));
        for a in &record.annotations {
            *stats.annotations.entry(a.category).or_default() += 1;
        }
        let annotated: BTreeSet<usize> = record.annotations.iter().map(|a| a.turn_index).collect();
        stats.correction_cases += annotated.len();

        let mut last_doctor: Option<usize> = None;
        for turn in &record.turns {
            match turn.role {
                Role::Learner | Role::DoctorAgent => {
                    stats.doctor_statements += 1;
                    last_doctor = Some(turn.index);
                }
                Role::Patient => stats.patient_responses += 1,
                Role::Coach => {
                    stats.coach_turns += 1;
                    if let Some(d) = last_doctor.take() {
                        if !annotated.contains(&d) {
                            stats.nonlingual += 1;
                        }
                    }
                }
            }
        }
    }
    stats.distinct_diseases = diseases.len();
    stats
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, usize); 10] = [
            ("Conversations", self.conversations),
            ("Diseases", self.distinct_diseases),
            ("Doctor statements", self.doctor_statements),
            ("Patient responses", self.patient_responses),
            ("Coach turns", self.coach_turns),
            ("Condition errors", self.annotation_count(ErrorCategory::Condition)),
            ("Medication errors", self.annotation_count(ErrorCategory::Medication)),
            ("Treatment errors", self.annotation_count(ErrorCategory::Treatment)),
            ("Correction cases", self.correction_cases),
            ("Nonlingual cases", self.nonlingual),
        ];
        for (label, value) in rows {
            writeln!(f, "{label:<20}{value:>8}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Annotation, PatientProfile, Scenario, Utterance};

    fn record(id: &str, roles: &[Role], annotated: &[(usize, ErrorCategory)]) -> ConversationRecord {
        ConversationRecord {
            conversation_id: id.into(),
            scenario: Scenario {
                scenario_id: id.into(),
                profile: PatientProfile {
                    profile_id: "p".into(),
                    age: 30,
                    persona: String::new(),
                    presenting_complaint: "x".into(),
                },
                disease_ids: vec!["flu".into(), id.into()],
            },
            turns: roles
                .iter()
                .enumerate()
                .map(|(i, r)| Utterance {
                    index: i,
                    role: *r,
                    text: "t".into(),
                    timestamp: 0,
                })
                .collect(),
            annotations: annotated
                .iter()
                .map(|(t, c)| Annotation {
                    turn_index: *t,
                    category: *c,
                    incorrect_term: "a".into(),
                    correct_term: "b".into(),
                    reference_feedback: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn empty_dataset_is_all_zero() {
        let s = dataset_stats(&[]);
        assert_eq!(s.conversations, 0);
        assert_eq!(s.total_annotations(), 0);
        assert_eq!(s.annotations.len(), 3);
    }

    #[test]
    fn counts_roles_and_nonlingual() {
        use Role::*;
        let a = record(
            "a",
            &[Patient, DoctorAgent, Coach, Patient, DoctorAgent, Coach],
            &[(1, ErrorCategory::Medication), (1, ErrorCategory::Condition)],
        );
        let b = record("b", &[Learner, Patient, Coach], &[]);
        let s = dataset_stats(&[a, b]);
        assert_eq!(s.conversations, 2);
        assert_eq!(s.distinct_diseases, 3);
        assert_eq!(s.doctor_statements, 3);
        assert_eq!(s.patient_responses, 3);
        assert_eq!(s.coach_turns, 3);
        assert_eq!(s.correction_cases, 1);
        assert_eq!(s.total_annotations(), 2);
        assert_eq!(s.nonlingual, 2);
        assert!(s.to_string().contains("Nonlingual cases"));
    }
}
