use std::fmt;

use serde::{Deserialize, Serialize};

/// A classification target or decision: a known class index, or the
/// open-set `Unknown` marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Known(usize),
    Unknown,
}

impl Label {
    pub fn is_unknown(self) -> bool {
        matches!(self, Label::Unknown)
    }

    pub fn class(self) -> Option<usize> {
        match self {
            Label::Known(c) => Some(c),
            Label::Unknown => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Known(c) => write!(f, "{c}"),
            Label::Unknown => f.write_str("unknown"),
        }
    }
}
