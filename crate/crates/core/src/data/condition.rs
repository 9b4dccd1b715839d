//! Condition keys: (subject, session, class) plus the unconditional token.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Stimulus class of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Target,
    NonTarget,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Target, ClassLabel::NonTarget];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Target => "target",
            ClassLabel::NonTarget => "nontarget",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(ClassLabel::Target),
            "nontarget" | "non-target" => Ok(ClassLabel::NonTarget),
            other => Err(CoreError::Format(format!(
                "unknown class label {other:?} (expected \"target\" or \"nontarget\")"
            ))),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// (subject, session, class) triple, or the reserved unconditional token used
/// for guidance dropout. The token carries no ids by construction, so the
/// "null fields" invariant cannot be violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionKey {
    Unconditional,
    Real {
        subject: u32,
        session: u32,
        class: ClassLabel,
    },
}

impl ConditionKey {
    pub fn real(subject: u32, session: u32, class: ClassLabel) -> Self {
        ConditionKey::Real {
            subject,
            session,
            class,
        }
    }

    pub fn is_unconditional(self) -> bool {
        matches!(self, ConditionKey::Unconditional)
    }

    pub fn subject(self) -> Option<u32> {
        match self {
            ConditionKey::Real { subject, .. } => Some(subject),
            ConditionKey::Unconditional => None,
        }
    }

    pub fn session(self) -> Option<u32> {
        match self {
            ConditionKey::Real { session, .. } => Some(session),
            ConditionKey::Unconditional => None,
        }
    }

    pub fn class(self) -> Option<ClassLabel> {
        match self {
            ConditionKey::Real { class, .. } => Some(class),
            ConditionKey::Unconditional => None,
        }
    }
}

impl fmt::Display for ConditionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionKey::Unconditional => f.write_str("unconditional"),
            ConditionKey::Real {
                subject,
                session,
                class,
            } => write!(f, "s{subject:02}/sess{session}/{class}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_label_roundtrip() {
        assert_eq!(ClassLabel::parse("target").unwrap(), ClassLabel::Target);
        assert_eq!(
            ClassLabel::parse("nontarget").unwrap(),
            ClassLabel::NonTarget
        );
        assert_eq!(
            ClassLabel::parse("non-target").unwrap(),
            ClassLabel::NonTarget
        );
        assert!(ClassLabel::parse("bogus").is_err());
    }

    #[test]
    fn unconditional_has_no_ids() {
        let c = ConditionKey::Unconditional;
        assert!(c.is_unconditional());
        assert_eq!(c.subject(), None);
        assert_eq!(c.session(), None);
        assert_eq!(c.class(), None);
    }
}
