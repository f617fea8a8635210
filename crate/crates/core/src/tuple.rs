//! Training tuples: latent pairs and their symbolic counterparts.

use serde::{Deserialize, Serialize};

use crate::action::ActionSpec;
use crate::error::{Error, Result};
use crate::latent::LatentPoint;

/// Configuration label of a box-stacking state (index into the enumeration).
pub type ClassLabel = usize;

/// A latent training tuple `(z1, z2, a, u)`. The action indicator `a` is
/// `action.is_some()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatentRecord", into = "LatentRecord")]
pub struct TransitionTuple {
    pub z1: LatentPoint,
    pub z2: LatentPoint,
    pub action: Option<ActionSpec>,
    pub class1: Option<ClassLabel>,
    pub class2: Option<ClassLabel>,
}

impl TransitionTuple {
    pub fn new(z1: LatentPoint, z2: LatentPoint, action: Option<ActionSpec>) -> Result<Self> {
        if z1.dim() != z2.dim() {
            return Err(Error::DimensionMismatch {
                expected: z1.dim(),
                actual: z2.dim(),
            });
        }
        Ok(Self {
            z1,
            z2,
            action,
            class1: None,
            class2: None,
        })
    }

    pub fn with_classes(mut self, class1: ClassLabel, class2: ClassLabel) -> Self {
        self.class1 = Some(class1);
        self.class2 = Some(class2);
        self
    }

    pub fn is_action(&self) -> bool {
        self.action.is_some()
    }
}

/// A tuple over configuration labels, before embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SymbolicRecord", into = "SymbolicRecord")]
pub struct SymbolicTuple {
    pub class1: ClassLabel,
    pub class2: ClassLabel,
    pub action: Option<ActionSpec>,
}

impl SymbolicTuple {
    pub fn is_action(&self) -> bool {
        self.action.is_some()
    }
}

fn check_indicator(a: u8, u: &Option<ActionSpec>) -> Result<()> {
    match (a, u) {
        (1, Some(_)) | (0, None) => Ok(()),
        (1, None) => Err(Error::InvalidRecord("a = 1 but u is missing".into())),
        (0, Some(_)) => Err(Error::InvalidRecord("a = 0 but u is present".into())),
        (other, _) => Err(Error::InvalidRecord(format!(
            "action indicator must be 0 or 1, got {other}"
        ))),
    }
}

#[derive(Serialize, Deserialize)]
struct LatentRecord {
    z1: LatentPoint,
    z2: LatentPoint,
    a: u8,
    u: Option<ActionSpec>,
    class1: Option<ClassLabel>,
    class2: Option<ClassLabel>,
}

impl TryFrom<LatentRecord> for TransitionTuple {
    type Error = Error;

    fn try_from(r: LatentRecord) -> Result<Self> {
        check_indicator(r.a, &r.u)?;
        let mut t = TransitionTuple::new(r.z1, r.z2, r.u)?;
        t.class1 = r.class1;
        t.class2 = r.class2;
        Ok(t)
    }
}

impl From<TransitionTuple> for LatentRecord {
    fn from(t: TransitionTuple) -> Self {
        LatentRecord {
            z1: t.z1,
            z2: t.z2,
            a: t.action.is_some() as u8,
            u: t.action,
            class1: t.class1,
            class2: t.class2,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SymbolicRecord {
    a: u8,
    u: Option<ActionSpec>,
    class1: ClassLabel,
    class2: ClassLabel,
}

impl TryFrom<SymbolicRecord> for SymbolicTuple {
    type Error = Error;

    fn try_from(r: SymbolicRecord) -> Result<Self> {
        check_indicator(r.a, &r.u)?;
        Ok(SymbolicTuple {
            class1: r.class1,
            class2: r.class2,
            action: r.u,
        })
    }
}

impl From<SymbolicTuple> for SymbolicRecord {
    fn from(t: SymbolicTuple) -> Self {
        SymbolicRecord {
            a: t.action.is_some() as u8,
            u: t.action,
            class1: t.class1,
            class2: t.class2,
        }
    }
}
